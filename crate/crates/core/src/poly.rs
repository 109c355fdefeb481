//! Dense multivariate polynomials over `f64`.
//!
//! A polynomial in `n` variables with degree bound `d` stores one coefficient
//! for every exponent in `Ω(n,d) = {α ∈ ℕⁿ : |α| ≤ d}`, so the coefficient
//! vector always has length `C(n+d, n)`. Exponents are ordered
//! lexicographically with the first coordinate most significant:
//!
//! ```text
//! Ω(2,6) = (0,0), (0,1), …, (0,6), (1,0), …, (1,5), …, (5,0), (5,1), (6,0)
//! ```
//!
//! For a single variable this is the ascending power basis, so `t²` is stored
//! as `[0, 0, 1]`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Binomial coefficient `C(n, k)`.
///
/// Panics if the value does not fit in `usize`; the index sets used here
/// are far below that limit.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    usize::try_from(acc).expect("binomial coefficient overflows usize")
}

/// `|Ω(n,d)| = C(n+d, n)`.
pub fn omega_len(n: usize, d: usize) -> usize {
    binomial(n + d, n)
}

/// Position of `alpha` in the lex enumeration of `Ω(alpha.len(), d)`.
pub fn lex_rank(alpha: &[u32], d: usize) -> Result<usize> {
    if alpha.is_empty() {
        return domain("exponent must have at least one coordinate");
    }
    let total: usize = alpha.iter().map(|&a| a as usize).sum();
    if total > d {
        return domain(format!("exponent {alpha:?} has degree {total} > {d}"));
    }
    Ok(rank_unchecked(alpha, d))
}

// Every exponent whose first coordinate is smaller than α₁ precedes α; there
// are C(n+d, n) − C(n+d−α₁, n) of them. Recurse on the tail with the
// remaining degree budget.
#[inline]
fn rank_unchecked(alpha: &[u32], d: usize) -> usize {
    let mut rank = 0;
    let mut budget = d;
    let n = alpha.len();
    for (k, &a) in alpha.iter().enumerate() {
        let a = a as usize;
        let vars = n - k;
        rank += omega_len(vars, budget) - omega_len(vars, budget - a);
        budget -= a;
    }
    rank
}

/// Inverse of [`lex_rank`].
pub fn lex_unrank(index: usize, n: usize, d: usize) -> Result<Vec<u32>> {
    if n == 0 {
        return domain("number of variables must be positive");
    }
    let len = omega_len(n, d);
    if index >= len {
        return domain(format!("index {index} out of range for Ω({n},{d}) of size {len}"));
    }
    let mut alpha = vec![0u32; n];
    let mut rest = index;
    let mut budget = d;
    for (k, slot) in alpha.iter_mut().enumerate() {
        let vars = n - k;
        if vars == 1 {
            *slot = rest as u32;
            break;
        }
        // Blocks with first coordinate v have size |Ω(vars-1, budget-v)|.
        let mut v = 0;
        loop {
            let block = omega_len(vars - 1, budget - v);
            if rest < block {
                break;
            }
            rest -= block;
            v += 1;
        }
        *slot = v as u32;
        budget -= v;
    }
    Ok(alpha)
}

/// All exponents of `Ω(n,d)` in lex order.
pub fn monomials(n: usize, d: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::with_capacity(omega_len(n, d));
    let mut current = vec![0u32; n];
    fill_monomials(&mut current, 0, d, &mut out);
    out
}

fn fill_monomials(current: &mut Vec<u32>, pos: usize, budget: usize, out: &mut Vec<Vec<u32>>) {
    if pos == current.len() {
        out.push(current.clone());
        return;
    }
    if pos + 1 == current.len() {
        for v in 0..=budget {
            current[pos] = v as u32;
            out.push(current.clone());
        }
        current[pos] = 0;
        return;
    }
    for v in 0..=budget {
        current[pos] = v as u32;
        fill_monomials(current, pos + 1, budget - v, out);
    }
    current[pos] = 0;
}

/// Dense polynomial in `n` variables with degree bound `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolynomial")]
pub struct Polynomial {
    n: usize,
    d: usize,
    coeffs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawPolynomial {
    n: usize,
    d: usize,
    coeffs: Vec<f64>,
}

impl TryFrom<RawPolynomial> for Polynomial {
    type Error = Error;

    fn try_from(raw: RawPolynomial) -> Result<Self> {
        Polynomial::new(raw.n, raw.d, raw.coeffs)
    }
}

impl Polynomial {
    /// Builds a polynomial from its full lex-ordered coefficient vector.
    pub fn new(n: usize, d: usize, coeffs: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return domain("polynomial: n must be positive");
        }
        let expected = omega_len(n, d);
        if coeffs.len() != expected {
            return domain(format!(
                "polynomial: coeffs has length {} but C(n+d,n) = {} for n={n}, d={d}",
                coeffs.len(),
                expected
            ));
        }
        if let Some(bad) = coeffs.iter().position(|c| !c.is_finite()) {
            return domain(format!("polynomial: coefficient {bad} is not finite"));
        }
        Ok(Self { n, d, coeffs })
    }

    pub fn zero(n: usize) -> Self {
        Self::constant(n, 0.0)
    }

    pub fn one(n: usize) -> Self {
        Self::constant(n, 1.0)
    }

    pub fn constant(n: usize, c: f64) -> Self {
        assert!(n > 0, "polynomial needs at least one variable");
        Self { n, d: 0, coeffs: vec![c] }
    }

    /// The coordinate function `x_i` (0-based).
    pub fn var(n: usize, i: usize) -> Self {
        let mut alpha = vec![0u32; n];
        alpha[i] = 1;
        Self::monomial(&alpha, 1.0)
    }

    pub fn monomial(alpha: &[u32], c: f64) -> Self {
        let n = alpha.len();
        let d = alpha.iter().map(|&a| a as usize).sum();
        let mut coeffs = vec![0.0; omega_len(n, d)];
        coeffs[rank_unchecked(alpha, d)] = c;
        Self { n, d, coeffs }
    }

    /// Univariate polynomial from ascending coefficients `[p0, p1, …]`.
    pub fn univariate(coeffs: &[f64]) -> Self {
        if coeffs.is_empty() {
            return Self::zero(1);
        }
        Self { n: 1, d: coeffs.len() - 1, coeffs: coeffs.to_vec() }
    }

    /// Sum of `c · x^α` terms; repeated exponents accumulate.
    pub fn from_terms(n: usize, terms: &[(Vec<u32>, f64)]) -> Result<Self> {
        if n == 0 {
            return domain("polynomial: n must be positive");
        }
        let mut d = 0;
        for (alpha, _) in terms {
            if alpha.len() != n {
                return domain(format!("term exponent {alpha:?} does not have {n} coordinates"));
            }
            d = d.max(alpha.iter().map(|&a| a as usize).sum());
        }
        let mut coeffs = vec![0.0; omega_len(n, d)];
        for (alpha, c) in terms {
            coeffs[rank_unchecked(alpha, d)] += c;
        }
        Ok(Self { n, d, coeffs })
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    /// Declared degree bound (the `d` of the storage index set).
    pub fn degree_bound(&self) -> usize {
        self.d
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Largest `|α|` carrying a nonzero coefficient; 0 for the zero polynomial.
    pub fn degree(&self) -> usize {
        if self.n == 1 {
            return self.coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0);
        }
        self.terms().iter().map(|(a, _)| a.iter().map(|&v| v as usize).sum()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn maxabs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn coeff(&self, alpha: &[u32]) -> f64 {
        if alpha.len() != self.n {
            return 0.0;
        }
        let deg: usize = alpha.iter().map(|&a| a as usize).sum();
        if deg > self.d {
            return 0.0;
        }
        self.coeffs[rank_unchecked(alpha, self.d)]
    }

    /// Nonzero terms in lex order.
    pub fn terms(&self) -> Vec<(Vec<u32>, f64)> {
        if self.n == 1 {
            return self
                .coeffs
                .iter()
                .enumerate()
                .filter(|(_, &c)| c != 0.0)
                .map(|(i, &c)| (vec![i as u32], c))
                .collect();
        }
        monomials(self.n, self.d)
            .into_iter()
            .zip(&self.coeffs)
            .filter(|(_, &c)| c != 0.0)
            .map(|(a, &c)| (a, c))
            .collect()
    }

    /// Re-embeds the coefficients into `Ω(n, d)`. Fails if a nonzero term
    /// would not fit.
    pub fn with_degree_bound(&self, d: usize) -> Result<Self> {
        if d == self.d {
            return Ok(self.clone());
        }
        if self.degree() > d && !self.is_zero() {
            return domain(format!("cannot embed degree {} polynomial into bound {d}", self.degree()));
        }
        if self.n == 1 {
            let mut coeffs = self.coeffs.clone();
            coeffs.resize(d + 1, 0.0);
            return Ok(Self { n: 1, d, coeffs });
        }
        let mut coeffs = vec![0.0; omega_len(self.n, d)];
        for (alpha, c) in self.terms() {
            coeffs[rank_unchecked(&alpha, d)] = c;
        }
        Ok(Self { n: self.n, d, coeffs })
    }

    fn expect_same_vars(&self, other: &Self, op: &str) -> Result<()> {
        if self.n != other.n {
            return domain(format!("{op}: variable counts differ ({} vs {})", self.n, other.n));
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.expect_same_vars(other, "add")?;
        Ok(self.combine(other, 1.0))
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.expect_same_vars(other, "sub")?;
        Ok(self.combine(other, -1.0))
    }

    fn combine(&self, other: &Self, sign: f64) -> Self {
        let d = self.d.max(other.d);
        let mut out = self.with_degree_bound(d).expect("bound grows");
        let rhs = other.with_degree_bound(d).expect("bound grows");
        for (a, b) in out.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += sign * b;
        }
        out
    }

    /// Product; the degree bound of the result is `d_f + d_g`.
    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        self.expect_same_vars(other, "mul")?;
        let d = self.d + other.d;
        if self.n == 1 {
            let mut coeffs = vec![0.0; d + 1];
            for (i, &a) in self.coeffs.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (j, &b) in other.coeffs.iter().enumerate() {
                    coeffs[i + j] += a * b;
                }
            }
            return Ok(Self { n: 1, d, coeffs });
        }
        let mut coeffs = vec![0.0; omega_len(self.n, d)];
        let lhs = self.terms();
        let rhs = other.terms();
        let mut gamma = vec![0u32; self.n];
        for (alpha, a) in &lhs {
            for (beta, b) in &rhs {
                for k in 0..self.n {
                    gamma[k] = alpha[k] + beta[k];
                }
                coeffs[rank_unchecked(&gamma, d)] += a * b;
            }
        }
        Ok(Self { n: self.n, d, coeffs })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { n: self.n, d: self.d, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn square(&self) -> Self {
        self * self
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one(self.n);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Evaluates the polynomial at `point`.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.n {
            return domain(format!("eval: point has {} coordinates, expected {}", point.len(), self.n));
        }
        Ok(self.eval_unchecked(point))
    }

    pub(crate) fn eval_unchecked(&self, point: &[f64]) -> f64 {
        if self.n == 1 {
            return self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * point[0] + c);
        }
        // powers[k][e] = point[k]^e
        let powers: Vec<Vec<f64>> = point
            .iter()
            .map(|&x| {
                let mut p = Vec::with_capacity(self.d + 1);
                let mut v = 1.0;
                for _ in 0..=self.d {
                    p.push(v);
                    v *= x;
                }
                p
            })
            .collect();
        monomials(self.n, self.d)
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, &c)| c != 0.0)
            .map(|(alpha, &c)| c * alpha.iter().enumerate().map(|(k, &e)| powers[k][e as usize]).product::<f64>())
            .sum()
    }

    /// Zeroes coefficients with `|c| ≤ tol · maxabs` and shrinks the degree
    /// bound to the effective degree.
    pub fn trim(&self, tol: f64) -> Result<Self> {
        if !(tol >= 0.0) {
            return domain(format!("trim: tolerance must be nonnegative, got {tol}"));
        }
        let threshold = tol * self.maxabs();
        let mut out = self.clone();
        for c in &mut out.coeffs {
            if c.abs() <= threshold {
                *c = 0.0;
            }
        }
        let deg = out.degree();
        out.with_degree_bound(deg)
    }

    /// Substitutes `x_var ↦ shift + scale · x_var`.
    pub fn affine_substitute(&self, var: usize, shift: f64, scale: f64) -> Self {
        assert!(var < self.n, "variable index out of range");
        let mut image = Self::var(self.n, var).scale(scale);
        image = &image + &Self::constant(self.n, shift);
        let mut powers = vec![Self::one(self.n)];
        for _ in 0..self.d {
            let next = powers.last().unwrap() * &image;
            powers.push(next);
        }
        let mut out = Self::zero(self.n);
        for (alpha, c) in self.terms() {
            let mut rest = alpha.clone();
            rest[var] = 0;
            let term = &Self::monomial(&rest, c) * &powers[alpha[var] as usize];
            out = &out + &term;
        }
        out.with_degree_bound(self.d).expect("affine substitution preserves degree")
    }

    /// `p(x) ↦ p(x²)` for univariate `p`.
    pub fn stretch_square(&self) -> Self {
        debug_assert_eq!(self.n, 1);
        let mut coeffs = vec![0.0; 2 * self.d + 1];
        for (i, &c) in self.coeffs.iter().enumerate() {
            coeffs[2 * i] = c;
        }
        Self::univariate(&coeffs)
    }

    /// Quotient `q` with `self ≈ q·divisor`, as the least-squares solution
    /// of the convolution system; `None` if the remainder exceeds
    /// `tol·maxabs(self)`.
    pub fn exact_div(&self, divisor: &Self, tol: f64) -> Option<Self> {
        if self.n != divisor.n || divisor.is_zero() {
            return None;
        }
        let scale = self.maxabs();
        if scale == 0.0 {
            return Some(Self::zero(self.n));
        }
        let (ds, dd) = (self.degree(), divisor.degree());
        if dd > ds {
            return None;
        }
        let qmons = monomials(self.n, ds - dd);
        let dterms = divisor.terms();
        let mut m = DMatrix::zeros(omega_len(self.n, ds), qmons.len());
        for (c, g) in qmons.iter().enumerate() {
            for (beta, v) in &dterms {
                let key: Vec<u32> = g.iter().zip(beta).map(|(a, b)| a + b).collect();
                m[(rank_unchecked(&key, ds), c)] += v;
            }
        }
        let rhs = DVector::from_column_slice(self.with_degree_bound(ds).ok()?.coeffs());
        let svd = m.svd(true, true);
        let cut = f64::EPSILON * svd.singular_values.max();
        let sol = svd.solve(&rhs, cut).ok()?;
        let q = Self::new(self.n, ds - dd, sol.iter().copied().collect()).ok()?;
        ((self - &(&q * divisor)).maxabs() <= tol * scale).then_some(q)
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.checked_add(rhs).expect("polynomial add")
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.checked_sub(rhs).expect("polynomial sub")
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.checked_mul(rhs).expect("polynomial mul")
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms = self.terms();
        if terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (alpha, c)) in terms.iter().enumerate() {
            let mono: Vec<String> = alpha
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| {
                    let name = if self.n == 1 { "x".to_string() } else { format!("x{}", i + 1) };
                    if e == 1 { name } else { format!("{name}^{e}") }
                })
                .collect();
            let sign = if *c < 0.0 { "-" } else { "+" };
            if k == 0 {
                if *c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let mag = c.abs();
            if mono.is_empty() {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{}", mono.join("*"))?;
            } else {
                write!(f, "{mag}*{}", mono.join("*"))?;
            }
        }
        Ok(())
    }
}
