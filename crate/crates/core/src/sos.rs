//! Sums-of-squares decompositions of the diagonal entries and assembly of
//! matrix certificates `b²F = Σ_k w_k·A_kᵀA_k`.
//!
//! Univariate pieces use root pairing (two squares on ℝ, `p² + x·q²` on the
//! half-line, and a Möbius transfer for intervals). Multivariate and strip
//! pieces go through the Gram rank staircase.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Complex, DMatrix, Schur};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, Error, Result};
use crate::gram::{gram_constraints, gram_constraints_weighted, rank_staircase, GramProblem};
use crate::lm::{lm_minimize, LmOptions, ScalingMode};
use crate::poly::{monomials, Polynomial};
use crate::polymat::PolyMatrix;
use crate::schmudgen::{diagonalize, factor_diagonal, grid_points, FactoredEntry};

type C64 = Complex<f64>;

/// Relative tolerance of the numeric nonnegativity gates.
pub const GATE_TOL: f64 = 1e-9;
/// Coefficientwise reconstruction tolerance of the univariate decompositions.
pub const UNIVARIATE_TOL: f64 = 1e-8;
/// Reconstruction tolerance of Gram-based decompositions.
pub const GRAM_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    Rn,
    RealLine,
    HalfLine,
    Interval(f64, f64),
    Strip(f64, f64),
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Rn => write!(f, "rn"),
            Domain::RealLine => write!(f, "rline"),
            Domain::HalfLine => write!(f, "halfline"),
            Domain::Interval(a, b) => write!(f, "interval:{a}:{b}"),
            Domain::Strip(a, b) => write!(f, "strip:{a}:{b}"),
        }
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bounds = |parts: &[&str]| -> Result<(f64, f64)> {
            let [a, b] = parts else {
                return domain(format!("domain '{s}': expected two bounds"));
            };
            let a: f64 = a.parse().map_err(|_| Error::Domain(format!("domain '{s}': bad bound '{a}'")))?;
            let b: f64 = b.parse().map_err(|_| Error::Domain(format!("domain '{s}': bad bound '{b}'")))?;
            if !(a.is_finite() && b.is_finite() && a < b) {
                return domain(format!("domain '{s}': need finite a < b"));
            }
            Ok((a, b))
        };
        match parts.as_slice() {
            ["rn"] => Ok(Domain::Rn),
            ["rline"] => Ok(Domain::RealLine),
            ["halfline"] => Ok(Domain::HalfLine),
            ["interval", rest @ ..] => bounds(rest).map(|(a, b)| Domain::Interval(a, b)),
            ["strip", rest @ ..] => bounds(rest).map(|(a, b)| Domain::Strip(a, b)),
            _ => domain(format!("unknown domain '{s}' (expected rn, rline, halfline, interval:a:b or strip:a:b)")),
        }
    }
}

impl Serialize for Domain {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Domain {
    /// Number of variables the domain lives in, if fixed.
    pub fn nvars(&self) -> Option<usize> {
        match self {
            Domain::Rn => None,
            Domain::RealLine | Domain::HalfLine | Domain::Interval(..) => Some(1),
            Domain::Strip(..) => Some(2),
        }
    }

    /// The weights a certificate over this domain may use, in `n` variables.
    pub fn allowed_weights(&self, n: usize) -> Vec<Polynomial> {
        let one = Polynomial::one(n);
        match *self {
            Domain::Rn | Domain::RealLine => vec![one],
            Domain::HalfLine => vec![one, Polynomial::var(n, 0)],
            Domain::Interval(a, b) => {
                let (xa, bx) = interval_factors(a, b);
                let both = &xa * &bx;
                vec![one, xa, bx, both]
            }
            Domain::Strip(a, b) => {
                let (xa, bx) = interval_factors_in(n, a, b);
                vec![one, &xa * &bx]
            }
        }
    }

    fn check_nvars(&self, n: usize) -> Result<()> {
        match self.nvars() {
            Some(k) if k != n => domain(format!("domain {self} needs {k} variable(s), input has {n}")),
            _ => Ok(()),
        }
    }
}

fn interval_factors(a: f64, b: f64) -> (Polynomial, Polynomial) {
    interval_factors_in(1, a, b)
}

// (x₁ − a, b − x₁) in n variables
fn interval_factors_in(n: usize, a: f64, b: f64) -> (Polynomial, Polynomial) {
    let x = Polynomial::var(n, 0);
    (&x - &Polynomial::constant(n, a), &Polynomial::constant(n, b) - &x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertTerm {
    pub weight: Polynomial,
    pub matrix: PolyMatrix,
}

/// Asserts `b²F = Σ_k w_k·A_kᵀA_k` with `b` the multiplier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub domain: Domain,
    pub multiplier: Polynomial,
    pub terms: Vec<CertTerm>,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SosOptions {
    pub lm: LmOptions,
    /// Largest exponent `N` of the multiplier `(1 + Σxᵢ²)^N` tried on ℝⁿ.
    pub n_max: u32,
    /// Largest Gram rank tried; `None` means the basis size.
    pub r_max: Option<usize>,
    pub restarts: usize,
    pub seed: u64,
    /// Total degree bound for strip certificates; `None` means `deg d + 2`.
    pub strip_degree_bound: Option<usize>,
}

impl Default for SosOptions {
    fn default() -> Self {
        Self { lm: LmOptions::default(), n_max: 3, r_max: None, restarts: 3, seed: 0, strip_degree_bound: None }
    }
}

// ---------------------------------------------------------------------------
// nonnegativity gates

/// Radius `1 + max(1, ρ)` of the sampling box, with `ρ` a Fujiwara-type
/// bound comparing each coefficient against the top-degree part; capped at 1e3.
pub fn sample_radius(f: &Polynomial) -> f64 {
    let deg = f.degree();
    let terms = f.terms();
    let top = terms
        .iter()
        .filter(|(a, _)| a.iter().sum::<u32>() as usize == deg)
        .fold(0.0_f64, |m, (_, c)| m.max(c.abs()));
    let mut rho = 0.0_f64;
    if top > 0.0 {
        for (alpha, c) in &terms {
            let k = deg - alpha.iter().sum::<u32>() as usize;
            if k > 0 {
                rho = rho.max(2.0 * (c.abs() / top).powf(1.0 / k as f64));
            }
        }
    }
    (1.0 + rho.max(1.0)).min(1e3)
}

fn matrix_sample_radius(f: &PolyMatrix) -> f64 {
    f.entries().map(sample_radius).fold(2.0, f64::max)
}

/// Sample points covering the domain: a box `[−B, B]ⁿ` for ℝⁿ, `[0, B]` for
/// the half-line, Chebyshev–Lobatto nodes for an interval, and
/// `[a, b] × [−B, B]` for a strip.
pub fn domain_points(domain: &Domain, n: usize, radius: f64) -> Vec<Vec<f64>> {
    match *domain {
        Domain::Rn | Domain::RealLine => {
            let per_axis = ((20_000f64).powf(1.0 / n as f64).floor() as usize).clamp(5, 2001);
            grid_points(n, -radius, radius, per_axis)
        }
        Domain::HalfLine => grid_points(1, 0.0, radius, 2001),
        Domain::Interval(a, b) => chebyshev_nodes(a, b, 1001).into_iter().map(|x| vec![x]).collect(),
        Domain::Strip(a, b) => {
            let mut pts = Vec::new();
            for x1 in chebyshev_nodes(a, b, 61) {
                for p in grid_points(1, -radius, radius, 121) {
                    pts.push(vec![x1, p[0]]);
                }
            }
            pts
        }
    }
}

fn chebyshev_nodes(a: f64, b: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| {
            let c = (std::f64::consts::PI * i as f64 / (k - 1) as f64).cos();
            (0.5 * (a + b) + 0.5 * (b - a) * c).clamp(a, b)
        })
        .collect()
}

// Σ |c_α|·|x^α|, the scale against which roundoff in f(x) is measured.
fn abs_eval(f: &Polynomial, x: &[f64]) -> f64 {
    let abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    f.terms()
        .iter()
        .map(|(alpha, c)| c.abs() * alpha.iter().zip(&abs).map(|(&e, v)| v.powi(e as i32)).product::<f64>())
        .sum()
}

/// Fails with [`Error::NotPsd`] if `f(x) < −1e-9·max(maxabs f, Σ|c_α x^α|)`
/// at some sample point.
pub fn nonnegativity_gate(f: &Polynomial, points: &[Vec<f64>]) -> Result<()> {
    let scale = f.maxabs();
    let mut worst: Option<(f64, &Vec<f64>)> = None;
    for p in points {
        let v = f.eval(p)?;
        let tol = GATE_TOL * scale.max(abs_eval(f, p));
        if v < -tol && worst.is_none_or(|(w, _)| v < w) {
            worst = Some((v, p));
        }
    }
    match worst {
        Some((value, point)) => Err(Error::NotPsd { point: point.clone(), value }),
        None => Ok(()),
    }
}

/// Matrix version of [`nonnegativity_gate`]: minimum eigenvalue of `F(x)`
/// against `1e-9·max(1, maxabs F(x))`.
pub fn matrix_gate(f: &PolyMatrix, points: &[Vec<f64>]) -> Result<()> {
    let mut worst: Option<(f64, &Vec<f64>)> = None;
    for p in points {
        let v = f.eval_mat(p)?;
        let sym = (&v + v.transpose()) * 0.5;
        let lam = sym.symmetric_eigenvalues().min();
        let tol = GATE_TOL * v.amax().max(1.0);
        if lam < -tol && worst.is_none_or(|(w, _)| lam < w) {
            worst = Some((lam, p));
        }
    }
    match worst {
        Some((value, point)) => Err(Error::NotPsd { point: point.clone(), value }),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// univariate helpers

fn require_univariate(f: &Polynomial, op: &str) -> Result<()> {
    if f.nvars() != 1 {
        return domain(format!("{op}: expected a univariate polynomial, got {} variables", f.nvars()));
    }
    Ok(())
}

// ascending coefficients up to the effective degree
fn coeffs_of(f: &Polynomial) -> Vec<f64> {
    f.coeffs()[..=f.degree()].to_vec()
}

fn roots(c: &[f64]) -> Vec<C64> {
    let d = c.len() - 1;
    if d == 0 {
        return Vec::new();
    }
    let lc = c[d];
    let comp = DMatrix::from_fn(d, d, |i, j| {
        if j == d - 1 {
            -c[i] / lc
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    // QR can stall on unitary-like companion matrices (e.g. for t⁴ + 1)
    match Schur::try_new(comp, f64::EPSILON, 100 * d) {
        Some(schur) => schur.complex_eigenvalues().iter().copied().collect(),
        None => aberth(c),
    }
}

// Aberth–Ehrlich simultaneous iteration
fn aberth(c: &[f64]) -> Vec<C64> {
    let d = c.len() - 1;
    let lc = c[d];
    let radius = (0..d).map(|k| (c[k] / lc).abs().powf(1.0 / (d - k) as f64)).fold(0.0_f64, f64::max).max(1e-3);
    let mut z: Vec<C64> =
        (0..d).map(|k| C64::from_polar(radius, 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / d as f64)).collect();
    let eval = |x: C64| -> (C64, C64) {
        let mut p = C64::new(c[d], 0.0);
        let mut dp = C64::new(0.0, 0.0);
        for k in (0..d).rev() {
            dp = dp * x + p;
            p = p * x + c[k];
        }
        (p, dp)
    };
    for _ in 0..1000 {
        let mut moved = 0.0_f64;
        for i in 0..d {
            let (p, dp) = eval(z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: C64 = (0..d).filter(|&j| j != i).map(|j| C64::new(1.0, 0.0) / (z[i] - z[j])).sum();
            let step = ratio / (C64::new(1.0, 0.0) - ratio * repulsion);
            if step.is_finite() {
                z[i] -= step;
                moved = moved.max(step.norm() / z[i].norm().max(1.0));
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

fn cpoly_from_roots(lead: C64, rts: &[C64]) -> Vec<C64> {
    let mut p = vec![lead];
    for &z in rts {
        let mut next = vec![C64::new(0.0, 0.0); p.len() + 1];
        for (i, &c) in p.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * z;
        }
        p = next;
    }
    p
}

// relative radii at which nearby roots are merged into one multiple root
const CLUSTER_TOLS: [f64; 5] = [1e-9, 1e-6, 1e-4, 1e-3, 1e-2];

// single-linkage clusters as (centroid, multiplicity)
fn clusters(rts: &[C64], tol: f64) -> Vec<(C64, usize)> {
    let n = rts.len();
    let mut label: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..i {
            if (rts[i] - rts[j]).norm() <= tol * rts[i].norm().max(1.0) {
                let (a, b) = (label[i], label[j]);
                label.iter_mut().filter(|l| **l == a).for_each(|l| *l = b);
            }
        }
    }
    let mut out = Vec::new();
    for l in 0..n {
        let members: Vec<C64> = (0..n).filter(|&i| label[i] == l).map(|i| rts[i]).collect();
        if !members.is_empty() {
            let k = members.len();
            out.push((members.iter().sum::<C64>() / k as f64, k));
        }
    }
    out
}

/// Candidates for `q = √lc·Π(t − z)` with `f = |q|²` on ℝ, one per cluster
/// radius. Clusters are replaced by their centroids, which are far more
/// accurate than the individual roots of a multiple root. A real cluster of
/// even size contributes half its roots; leftover odd real roots are paired
/// in sorted order. A complex cluster of size k in the upper half-plane
/// contributes z and z̄ alternately, so perfect squares come out with v = 0.
fn half_factors(c: &[f64]) -> Vec<Vec<C64>> {
    let d = c.len() - 1;
    let lc = c[d];
    if d % 2 == 1 || lc <= 0.0 {
        return Vec::new();
    }
    let rts = roots(c);
    let mut out: Vec<Vec<C64>> = Vec::new();
    for tol in CLUSTER_TOLS {
        let mut chosen = Vec::new();
        let mut odd_real = Vec::new();
        let (mut upper, mut lower) = (0, 0);
        for (z, k) in clusters(&rts, tol) {
            let im_tol = (1e-7_f64).max(tol) * z.norm().max(1.0);
            if z.im.abs() <= im_tol {
                chosen.extend(std::iter::repeat_n(C64::new(z.re, 0.0), k / 2));
                if k % 2 == 1 {
                    odd_real.push(z.re);
                }
            } else if z.im > 0.0 {
                upper += k;
                chosen.extend((0..k).map(|i| if i % 2 == 0 { z } else { z.conj() }));
            } else {
                lower += k;
            }
        }
        if upper != lower || odd_real.len() % 2 == 1 {
            continue;
        }
        odd_real.sort_by(f64::total_cmp);
        chosen.extend(odd_real.chunks(2).map(|pair| C64::new(0.5 * (pair[0] + pair[1]), 0.0)));
        let q = cpoly_from_roots(C64::new(lc.sqrt(), 0.0), &chosen);
        if !out.contains(&q) {
            out.push(q);
        }
    }
    out
}

// among candidates ordered by cluster radius: the coarsest one that is about
// as accurate as the best, so repeated roots stay merged
fn pick_candidate(errors: Vec<f64>) -> Option<usize> {
    let least = errors.iter().copied().fold(f64::INFINITY, f64::min);
    errors.iter().rposition(|&e| e <= (2.0 * least).max(1e-13))
}

fn conv(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn reconstruct(parts: &[(&[f64], &[f64])], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (w, p) in parts {
        for (i, v) in conv(w, &conv(p, p)).into_iter().enumerate() {
            if i < len {
                out[i] += v;
            } else if v != 0.0 {
                return vec![f64::INFINITY; len];
            }
        }
    }
    out
}

fn rel_error(target: &[f64], parts: &[(&[f64], &[f64])]) -> f64 {
    let rec = reconstruct(parts, target.len());
    let scale = target.iter().fold(0.0_f64, |m, c| m.max(c.abs())).max(f64::MIN_POSITIVE);
    target.iter().zip(&rec).fold(0.0_f64, |m, (t, r)| m.max((t - r).abs())) / scale
}

/// Least-squares polish of `target = Σ_k w_k·p_k²` over the coefficients of
/// the `p_k`, keeping the input when it does not improve.
fn polish(target: &[f64], weights: &[Vec<f64>], init: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let sizes: Vec<usize> = init.iter().map(Vec::len).collect();
    let unpack = |x: &[f64]| -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        let mut at = 0;
        for &s in &sizes {
            out.push(x[at..at + s].to_vec());
            at += s;
        }
        out
    };
    let residual = |x: &[f64]| -> Vec<f64> {
        let ps = unpack(x);
        let parts: Vec<(&[f64], &[f64])> = weights.iter().map(Vec::as_slice).zip(ps.iter().map(Vec::as_slice)).collect();
        let rec = reconstruct(&parts, target.len());
        rec.iter().zip(target).map(|(r, t)| r - t).collect()
    };
    let jacobian = |x: &[f64]| -> DMatrix<f64> {
        let ps = unpack(x);
        let mut jac = DMatrix::zeros(target.len(), x.len());
        let mut col = 0;
        for (w, p) in weights.iter().zip(&ps) {
            let wp = conv(w, p);
            for i in 0..p.len() {
                for (k, v) in wp.iter().enumerate() {
                    if i + k < target.len() {
                        jac[(i + k, col)] += 2.0 * v;
                    }
                }
                col += 1;
            }
        }
        jac
    };
    let x0: Vec<f64> = init.concat();
    if x0.is_empty() {
        return init;
    }
    let before = residual(&x0).iter().map(|v| v * v).sum::<f64>();
    let scale = target.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    // column-norm scaling degenerates when one of the squares is ≈ 0
    let opts = LmOptions { residual_tol: 1e-15 * scale.max(1e-300), step_tol: 1e-15, max_iters: 200, scaling_mode: ScalingMode::Identity, ..LmOptions::default() };
    match lm_minimize(residual, jacobian, &x0, &opts) {
        Ok(run) if run.residual_norm.powi(2) < before => unpack(&run.x),
        _ => init,
    }
}

// rank-≤2 Gram search for f = u² + v², used when root pairing breaks down
fn two_squares_by_gram(c: &[f64], opts: &LmOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let f = Polynomial::univariate(c);
    let k = (c.len() - 1) / 2;
    let basis: Vec<Vec<u32>> = (0..=k as u32).map(|i| vec![i]).collect();
    let prob = gram_constraints(&f, &basis)?;
    let r_max = 2.min(prob.dim());
    let sol = rank_staircase(&prob, opts, r_max, 5, 0)?;
    let col = |j: usize| -> Vec<f64> {
        if j < sol.factor.ncols() { sol.factor.column(j).iter().copied().collect() } else { vec![0.0; k + 1] }
    };
    Ok((col(0), col(1)))
}

// one square per weight, `target = Σ w_k·p_k²` with deg p_k < lens[k], by a
// rank-1 search on the two-block Gram problem; polished afterwards
fn single_squares_by_gram(target: &[f64], weights: &[Vec<f64>], lens: &[usize]) -> Option<Vec<Vec<f64>>> {
    let f = Polynomial::univariate(target);
    let size = f.maxabs();
    if size == 0.0 {
        return None;
    }
    let blocks: Vec<(Polynomial, Vec<Vec<u32>>)> = weights
        .iter()
        .zip(lens)
        .map(|(w, &l)| (Polynomial::univariate(w), (0..l as u32).map(|i| vec![i]).collect()))
        .collect();
    let prob = gram_constraints_weighted(&f.scale(1.0 / size), &blocks).ok()?;
    let sol = rank_staircase(&prob, &LmOptions::default(), 1, 8, 0).ok()?;
    let squares = prob.squares(&sol.factor).ok()?;
    let init: Vec<Vec<f64>> = squares
        .iter()
        .zip(lens)
        .map(|(sq, &l)| {
            let mut v: Vec<f64> = sq[0].coeffs().iter().map(|c| c * size.sqrt()).collect();
            v.resize(l, 0.0);
            v
        })
        .collect();
    Some(polish(target, weights, init))
}

fn trim_tail(mut v: Vec<f64>) -> Vec<f64> {
    while v.len() > 1 && v.last() == Some(&0.0) {
        v.pop();
    }
    v
}

// two squares of a nonnegative coefficient vector, without gating
fn two_squares_coeffs(c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = c.len() - 1;
    if c.iter().all(|&v| v == 0.0) {
        return Ok((vec![0.0], vec![0.0]));
    }
    if d == 0 {
        if c[0] < 0.0 {
            return Err(Error::NotPsd { point: vec![0.0], value: c[0] });
        }
        return Ok((vec![c[0].sqrt()], vec![0.0]));
    }
    let one = vec![1.0];
    let err_of = |u: &[f64], v: &[f64]| rel_error(c, &[(&one, u), (&one, v)]);
    let cands: Vec<(Vec<f64>, Vec<f64>)> =
        half_factors(c).iter().map(|q| (q.iter().map(|z| z.re).collect(), q.iter().map(|z| z.im).collect())).collect();
    let pick = pick_candidate(cands.iter().map(|(u, v)| err_of(u, v)).collect());
    let mut best = pick.map_or_else(|| (vec![0.0; d / 2 + 1], vec![0.0; d / 2 + 1]), |i| cands[i].clone());
    if rel_error(c, &[(&one, &best.0), (&one, &best.1)]) > 1e-14 {
        let p = polish(c, &[one.clone(), one.clone()], vec![best.0.clone(), best.1.clone()]);
        best = (p[0].clone(), p[1].clone());
    }
    if rel_error(c, &[(&one, &best.0), (&one, &best.1)]) > UNIVARIATE_TOL {
        let gram = two_squares_by_gram(c, &LmOptions::default())?;
        if rel_error(c, &[(&one, &gram.0), (&one, &gram.1)]) < rel_error(c, &[(&one, &best.0), (&one, &best.1)]) {
            best = gram;
        }
    }
    let err = rel_error(c, &[(&one, &best.0), (&one, &best.1)]);
    if err > UNIVARIATE_TOL {
        return Err(Error::NoCertificate(format!("two-squares reconstruction error {err:e}")));
    }
    Ok((trim_tail(best.0), trim_tail(best.1)))
}

/// `f = u² + v²` for `f ≥ 0` on ℝ.
pub fn sos_univariate_two_squares(f: &Polynomial) -> Result<(Polynomial, Polynomial)> {
    require_univariate(f, "sos_univariate_two_squares")?;
    let radius = sample_radius(f);
    nonnegativity_gate(f, &grid_points(1, -radius, radius, 2001))?;
    let (u, v) = two_squares_coeffs(&coeffs_of(f))?;
    Ok((Polynomial::univariate(&u), Polynomial::univariate(&v)))
}

// p² + x·q² without gating
fn halfline_coeffs(c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = c.len() - 1;
    if c.iter().all(|&v| v == 0.0) {
        return Ok((vec![0.0], vec![0.0]));
    }
    if d == 0 {
        if c[0] < 0.0 {
            return Err(Error::NotPsd { point: vec![0.0], value: c[0] });
        }
        return Ok((vec![c[0].sqrt()], vec![0.0]));
    }
    // g(s) = f(s²) is nonnegative on ℝ; its half factor Q has real even and
    // imaginary odd coefficients (after multiplying by i when deg Q is odd).
    let mut g = vec![0.0; 2 * d + 1];
    for (i, &v) in c.iter().enumerate() {
        g[2 * i] = v;
    }
    let np = d / 2 + 1;
    let nq = d.div_ceil(2);
    let one = vec![1.0];
    let x = vec![0.0, 1.0];
    let mut cands = Vec::new();
    for mut big_q in half_factors(&g) {
        if (big_q.len() - 1) % 2 == 1 {
            for z in &mut big_q {
                *z *= C64::new(0.0, 1.0);
            }
        }
        let (mut cp, mut cq) = (vec![0.0; np], vec![0.0; nq.max(1)]);
        for (k, z) in big_q.iter().enumerate() {
            if k % 2 == 0 && k / 2 < np {
                cp[k / 2] = z.re;
            } else if k % 2 == 1 && k / 2 < cq.len() {
                cq[k / 2] = z.im;
            }
        }
        cands.push((cp, cq));
    }
    let pick = pick_candidate(cands.iter().map(|(cp, cq)| rel_error(c, &[(&one, cp), (&x, cq)])).collect());
    let (mut p, mut q) = pick.map_or_else(|| (vec![0.0; np], vec![0.0; nq.max(1)]), |i| cands[i].clone());
    if rel_error(c, &[(&one, &p), (&x, &q)]) > 1e-14 {
        let polished = polish(c, &[one.clone(), x.clone()], vec![p.clone(), q.clone()]);
        if rel_error(c, &[(&one, &polished[0]), (&x, &polished[1])]) < rel_error(c, &[(&one, &p), (&x, &q)]) {
            p = polished[0].clone();
            q = polished[1].clone();
        }
    }
    if rel_error(c, &[(&one, &p), (&x, &q)]) > 1e-12 {
        if let Some(g) = single_squares_by_gram(c, &[one.clone(), x.clone()], &[np, nq.max(1)]) {
            if rel_error(c, &[(&one, &g[0]), (&x, &g[1])]) < rel_error(c, &[(&one, &p), (&x, &q)]) {
                (p, q) = (g[0].clone(), g[1].clone());
            }
        }
    }
    let err = rel_error(c, &[(&one, &p), (&x, &q)]);
    if err > UNIVARIATE_TOL {
        return Err(Error::NoCertificate(format!("half-line reconstruction error {err:e}")));
    }
    Ok((trim_tail(p), trim_tail(q)))
}

/// `f = p² + x·q²` for `f ≥ 0` on `[0, ∞)`.
pub fn sos_halfline(f: &Polynomial) -> Result<(Polynomial, Polynomial)> {
    require_univariate(f, "sos_halfline")?;
    nonnegativity_gate(f, &grid_points(1, 0.0, sample_radius(f), 2001))?;
    let (p, q) = halfline_coeffs(&coeffs_of(f))?;
    Ok((Polynomial::univariate(&p), Polynomial::univariate(&q)))
}

// Σ_j c_j (x−a)^j (b−x)^{k−j}
fn bernstein_like(c: &[f64], k: usize, a: f64, b: f64) -> Polynomial {
    let (xa, bx) = interval_factors(a, b);
    let mut out = Polynomial::zero(1);
    for (j, &cj) in c.iter().enumerate() {
        if cj != 0.0 && j <= k {
            out = &out + &(&xa.pow(j as u32) * &bx.pow((k - j) as u32)).scale(cj);
        }
    }
    out
}

// weighted squares on [a, b]: solve on [0, 1] in u = (x − a)/(b − a), then
// substitute back and polish against f
fn interval_parts(f: &Polynomial, a: f64, b: f64) -> Result<Vec<(Polynomial, Vec<Polynomial>)>> {
    if (a, b) == (0.0, 1.0) {
        return unit_interval_parts(f, a, b);
    }
    let width = b - a;
    let (xa, bx) = interval_factors(a, b);
    let unit = unit_interval_parts(&f.affine_substitute(0, a, width), 0.0, 1.0)?;
    let back = |g: &Polynomial, s: f64| g.affine_substitute(0, -a / width, 1.0 / width).scale(s);
    let c = coeffs_of(f);
    let d = c.len() - 1;
    // u = (x−a)/w, 1 − u = (b−x)/w
    let weights = if d % 2 == 0 { [(Polynomial::one(1), 1.0), (&xa * &bx, 1.0 / width)] } else { [(xa, width.sqrt().recip()), (bx, width.sqrt().recip())] };
    let parts: Vec<(Polynomial, Vec<Polynomial>)> =
        unit.into_iter().zip(weights).map(|((_, sq), (w, s))| (w, sq.iter().map(|g| back(g, s)).collect())).collect();
    if d == 0 || f.is_zero() {
        return Ok(parts);
    }
    let k = d / 2;
    let lens = if d % 2 == 0 { [k + 1, k.max(1)] } else { [k + 1, k + 1] };
    Ok(refine(&c, parts, &lens))
}

// transfer x = (a + b·t)/(1 + t) to the half-line
fn unit_interval_parts(f: &Polynomial, a: f64, b: f64) -> Result<Vec<(Polynomial, Vec<Polynomial>)>> {
    let c = coeffs_of(f);
    let d = c.len() - 1;
    let (xa, bx) = interval_factors(a, b);
    if d == 0 || f.is_zero() {
        let root = if c[0] > 0.0 { c[0].sqrt() } else { 0.0 };
        return Ok(vec![(Polynomial::one(1), vec![Polynomial::constant(1, root)]), (&xa * &bx, vec![Polynomial::zero(1)])]);
    }
    // h(t) = (1+t)^d f((a+bt)/(1+t)) = Σ f_j (a+bt)^j (1+t)^{d−j}
    let mut h = vec![0.0; d + 1];
    let ab = [a, b];
    let one_t = [1.0, 1.0];
    for (j, &fj) in c.iter().enumerate() {
        if fj == 0.0 {
            continue;
        }
        let mut term = vec![fj];
        for _ in 0..j {
            term = conv(&term, &ab);
        }
        for _ in j..d {
            term = conv(&term, &one_t);
        }
        for (i, v) in term.into_iter().enumerate() {
            h[i] += v;
        }
    }
    let h = trim_tail(h.into_iter().map(|v| if v.abs() <= 1e-15 * f.maxabs() { 0.0 } else { v }).collect());
    let (p, q) = halfline_coeffs(&h)?;
    let width = b - a;
    if d % 2 == 0 {
        let k = d / 2;
        let s = width.powi(k as i32);
        let p1 = bernstein_like(&p, k, a, b).scale(1.0 / s);
        let p2 = if k == 0 { Polynomial::zero(1) } else { bernstein_like(&q, k - 1, a, b).scale(1.0 / s) };
        Ok(refine(&c, vec![(Polynomial::one(1), vec![p1]), (&xa * &bx, vec![p2])], &[k + 1, k.max(1)]))
    } else {
        let k = (d - 1) / 2;
        let s = width.powf(k as f64 + 0.5);
        let on_xa = bernstein_like(&q, k, a, b).scale(1.0 / s);
        let on_bx = bernstein_like(&p, k, a, b).scale(1.0 / s);
        Ok(refine(&c, vec![(xa, vec![on_xa]), (bx, vec![on_bx])], &[k + 1, k + 1]))
    }
}

// polish single-square parts against the coefficients `c` of f itself; the
// transfer back from the half-line loses digits on short intervals
fn refine(c: &[f64], parts: Vec<(Polynomial, Vec<Polynomial>)>, lens: &[usize]) -> Vec<(Polynomial, Vec<Polynomial>)> {
    let weights: Vec<Vec<f64>> = parts.iter().map(|(w, _)| coeffs_of(w)).collect();
    let init: Vec<Vec<f64>> = parts
        .iter()
        .zip(lens)
        .map(|((_, sq), &l)| {
            let mut v = sq[0].coeffs().to_vec();
            v.resize(l, 0.0);
            v
        })
        .collect();
    let err = |ps: &[Vec<f64>]| {
        let pairs: Vec<(&[f64], &[f64])> = weights.iter().zip(ps).map(|(w, p)| (w.as_slice(), p.as_slice())).collect();
        rel_error(c, &pairs)
    };
    if err(&init) <= 1e-14 {
        return parts;
    }
    let mut best = polish(c, &weights, init.clone());
    if err(&best) > 1e-12 {
        if let Some(g) = single_squares_by_gram(c, &weights, lens) {
            if err(&g) < err(&best) {
                best = g;
            }
        }
    }
    if err(&best) >= err(&init) {
        return parts;
    }
    parts.into_iter().zip(best).map(|((w, _), p)| (w, vec![Polynomial::univariate(&p)])).collect()
}

/// Weighted squares of the entries of `parts` as a scalar certificate.
fn scalar_certificate(domain: Domain, multiplier: Polynomial, parts: Vec<(Polynomial, Vec<Polynomial>)>) -> Result<Certificate> {
    let terms = parts
        .into_iter()
        .map(|(weight, squares)| {
            let n = weight.nvars();
            let rows = if squares.is_empty() { vec![vec![Polynomial::zero(n)]] } else { squares.into_iter().map(|g| vec![g]).collect() };
            Ok(CertTerm { weight, matrix: PolyMatrix::from_rows(rows)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Certificate { domain, multiplier, terms, residual: f64::NAN })
}

/// Certificate `f = p₁² + (x−a)(b−x)·p₂²` (even degree) or
/// `f = (x−a)·p₁² + (b−x)·p₂²` (odd degree) for `f ≥ 0` on `[a, b]`.
pub fn sos_interval(f: &Polynomial, a: f64, b: f64) -> Result<Certificate> {
    require_univariate(f, "sos_interval")?;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return domain(format!("sos_interval: need finite a < b, got [{a}, {b}]"));
    }
    nonnegativity_gate(f, &domain_points(&Domain::Interval(a, b), 1, 0.0))?;
    let parts = interval_parts(f, a, b)?;
    let fm = PolyMatrix::from_rows(vec![vec![f.clone()]])?;
    let mut cert = scalar_certificate(Domain::Interval(a, b), Polynomial::one(1), parts)?;
    cert.residual = verify_certificate(&fm, &cert)?;
    if cert.residual > UNIVARIATE_TOL {
        return Err(Error::NoCertificate(format!("interval reconstruction error {:e}", cert.residual)));
    }
    Ok(cert)
}

// ---------------------------------------------------------------------------
// Gram-based decompositions

/// Half-degree basis of `f` with monomials removed by diagonal consistency:
/// `x^α` goes when `x^{2α}` is absent from `f` and no other pair of basis
/// elements reaches `2α` (the Gram diagonal entry is then forced to zero).
/// Returns `None` when a negative coefficient can only come from a diagonal
/// entry, which rules out any Gram matrix.
pub fn pruned_basis(f: &Polynomial) -> Option<Vec<Vec<u32>>> {
    let n = f.nvars();
    let k = f.degree().div_ceil(2);
    let tol = 1e-14 * f.maxabs();
    let mut basis = monomials(n, k);
    let coeff = |g: &[u32]| -> f64 {
        let c = f.coeff(g);
        if c.abs() <= tol { 0.0 } else { c }
    };
    loop {
        let mut keep = Vec::with_capacity(basis.len());
        for (i, alpha) in basis.iter().enumerate() {
            let twice: Vec<u32> = alpha.iter().map(|a| 2 * a).collect();
            let c = coeff(&twice);
            let shared = basis.iter().enumerate().any(|(j, beta)| {
                j != i && beta.iter().zip(&twice).all(|(b, t)| b <= t) && {
                    let gamma: Vec<u32> = twice.iter().zip(beta).map(|(t, b)| t - b).collect();
                    gamma != *alpha && basis.contains(&gamma)
                }
            });
            if !shared && c < 0.0 {
                return None;
            }
            if c > 0.0 || shared {
                keep.push(alpha.clone());
            }
        }
        if keep.len() == basis.len() {
            return Some(basis);
        }
        basis = keep;
    }
}

/// `(1 + Σxᵢ²)`.
pub fn reznick_base(n: usize) -> Polynomial {
    let mut q = Polynomial::one(n);
    for i in 0..n {
        q = &q + &Polynomial::var(n, i).square();
    }
    q
}

/// Best attempt at a given multiplier exponent, for error reporting.
#[derive(Clone, Debug)]
struct Attempt {
    n: u32,
    residual: f64,
}

fn squares_sum(squares: &[Polynomial], n: usize) -> Polynomial {
    squares.iter().fold(Polynomial::zero(n), |acc, g| &acc + &g.square())
}

fn rel_poly_error(target: &Polynomial, approx: &Polynomial) -> f64 {
    (target - approx).maxabs() / target.maxabs().max(f64::MIN_POSITIVE)
}

/// Smallest `N ≤ n_max` with `(1 + Σxᵢ²)^N·f` a sum of at most `r_max`
/// squares found by the rank staircase; returns `N` and the squares.
pub fn sosrf_multivariate(f: &Polynomial, n_max: u32, r_max: Option<usize>, opts: &SosOptions) -> Result<(u32, Vec<Polynomial>)> {
    let n = f.nvars();
    let radius = sample_radius(f);
    nonnegativity_gate(f, &domain_points(&Domain::Rn, n, radius))?;
    if f.is_zero() {
        return Ok((0, Vec::new()));
    }
    let q = reznick_base(n);
    let mut attempts = Vec::new();
    let mut g = f.clone();
    for big_n in 0..=n_max {
        if big_n > 0 {
            g = &g * &q;
        }
        if g.degree() % 2 == 1 {
            attempts.push(Attempt { n: big_n, residual: f64::INFINITY });
            continue;
        }
        let Some(basis) = pruned_basis(&g) else {
            attempts.push(Attempt { n: big_n, residual: f64::INFINITY });
            continue;
        };
        // unit-size target, so that τ acts as a relative tolerance
        let size = g.maxabs();
        let prob = match gram_constraints(&g.scale(1.0 / size), &basis) {
            Ok(p) => p,
            Err(_) => {
                attempts.push(Attempt { n: big_n, residual: f64::INFINITY });
                continue;
            }
        };
        let r = r_max.unwrap_or(prob.dim()).clamp(1, prob.dim());
        let sol = rank_staircase(&prob, &opts.lm, r, opts.restarts, opts.seed)?;
        let squares: Vec<Polynomial> = prob.squares(&sol.factor)?.swap_remove(0).iter().map(|p| p.scale(size.sqrt())).collect();
        if rel_poly_error(&g, &squares_sum(&squares, n)) <= GRAM_TOL {
            return Ok((big_n, squares));
        }
        attempts.push(Attempt { n: big_n, residual: sol.residual });
    }
    let summary: Vec<String> = attempts.iter().map(|a| format!("N={}: residual {:e}", a.n, a.residual)).collect();
    Err(Error::NoCertificate(format!("no multiplier exponent up to {n_max} worked ({})", summary.join(", "))))
}

// σ and τ squares for the normalized strip problem, mapped back to x₁
fn strip_parts(d: &Polynomial, a: f64, b: f64, degree_bound: usize, opts: &SosOptions) -> Result<Vec<(Polynomial, Vec<Polynomial>)>> {
    let width = b - a;
    let (xa, bx) = interval_factors_in(2, a, b);
    let weight = &xa * &bx;
    if d.is_zero() {
        return Ok(vec![(Polynomial::one(2), Vec::new()), (weight, Vec::new())]);
    }
    // d̃(s, x₂) = d(a + (b−a)s, x₂)
    let dn = d.affine_substitute(0, a, width);
    let s = Polynomial::var(2, 0);
    let s1s = &s * &(&Polynomial::one(2) - &s);
    let mut blocks = vec![(Polynomial::one(2), monomials(2, degree_bound / 2))];
    if degree_bound >= 2 {
        blocks.push((s1s, monomials(2, (degree_bound - 2) / 2)));
    }
    let size = dn.maxabs();
    let prob: GramProblem = gram_constraints_weighted(&dn.scale(1.0 / size), &blocks)
        .map_err(|e| Error::NoCertificate(format!("degree bound {degree_bound} too small: {e}")))?;
    let r = opts.r_max.unwrap_or(prob.dim()).clamp(1, prob.dim());
    let sol = rank_staircase(&prob, &opts.lm, r, opts.restarts, opts.seed)?;
    // a run that missed τ is still usable when the certificate tolerance holds
    if !sol.success && sol.residual > GRAM_TOL {
        return Err(Error::NoCertificate(format!(
            "no strip certificate at degree bound {degree_bound} (best residual {:e} at rank {})",
            sol.residual, sol.rank
        )));
    }
    let blocks = prob.squares(&sol.factor)?;
    let root = size.sqrt();
    let back = |g: &Polynomial| g.affine_substitute(0, -a / width, 1.0 / width).scale(root);
    let sigma: Vec<Polynomial> = blocks[0].iter().map(back).collect();
    let tau: Vec<Polynomial> = blocks.get(1).map_or_else(Vec::new, |t| t.iter().map(|g| back(g).scale(1.0 / width)).collect());
    Ok(vec![(Polynomial::one(2), sigma), (weight, tau)])
}

/// Certificate `d = σ + (x₁−a)(b−x₁)·τ` with `σ`, `τ` sums of squares of
/// total degree at most `degree_bound`, for `d ≥ 0` on `[a, b] × ℝ`.
pub fn sos_strip(d: &Polynomial, a: f64, b: f64, degree_bound: usize, opts: &SosOptions) -> Result<Certificate> {
    if d.nvars() != 2 {
        return domain("sos_strip: expected a polynomial in 2 variables");
    }
    if !(a.is_finite() && b.is_finite() && a < b) {
        return domain(format!("sos_strip: need finite a < b, got [{a}, {b}]"));
    }
    let dom = Domain::Strip(a, b);
    nonnegativity_gate(d, &domain_points(&dom, 2, sample_radius(d)))?;
    let parts = strip_parts(d, a, b, degree_bound, opts)?;
    let fm = PolyMatrix::from_rows(vec![vec![d.clone()]])?;
    let mut cert = scalar_certificate(dom, Polynomial::one(2), parts)?;
    cert.residual = verify_certificate(&fm, &cert)?;
    if cert.residual > GRAM_TOL {
        return Err(Error::NoCertificate(format!("strip reconstruction error {:e}", cert.residual)));
    }
    Ok(cert)
}

// ---------------------------------------------------------------------------
// matrix certificates

fn weight_position(weights: &[Polynomial], w: &Polynomial) -> usize {
    weights.iter().position(|x| x == w).expect("weight drawn from the allowed set")
}

/// Builds one term per weight: the stacked `[A_1; …; A_T]·X₊ᵀ` with
/// `A_t = diag(s_{1,t}, …, s_{m,t})`, where `d_j`'s share of that weight is
/// `Σ_t s_{j,t}²`.
fn assemble(
    domain: Domain,
    multiplier: Polynomial,
    x_plus: &PolyMatrix,
    per_diag: Vec<Vec<(Polynomial, Vec<Polynomial>)>>,
) -> Result<Certificate> {
    let m = x_plus.rows();
    let n = x_plus.nvars();
    let weights = domain.allowed_weights(n);
    let mut grouped: Vec<Vec<Vec<Polynomial>>> = vec![vec![Vec::new(); m]; weights.len()];
    for (j, parts) in per_diag.into_iter().enumerate() {
        for (w, squares) in parts {
            let idx = weight_position(&weights, &w);
            grouped[idx][j].extend(squares.into_iter().filter(|g| !g.is_zero()));
        }
    }
    let x_plus_t = x_plus.transpose();
    let mut terms = Vec::new();
    for (w, per_j) in weights.into_iter().zip(grouped) {
        let depth = per_j.iter().map(Vec::len).max().unwrap_or(0);
        if depth == 0 {
            continue;
        }
        let mut stacked = PolyMatrix::zeros(depth * m, m, n);
        for (j, squares) in per_j.iter().enumerate() {
            for (t, g) in squares.iter().enumerate() {
                stacked.set(t * m + j, j, g.clone());
            }
        }
        terms.push(CertTerm { weight: w, matrix: stacked.mat_mul(&x_plus_t)? });
    }
    Ok(Certificate { domain, multiplier, terms, residual: f64::NAN })
}

fn name_failure(j: usize, e: Error) -> Error {
    match e {
        Error::NoCertificate(msg) => Error::NoCertificate(format!("diagonal entry d_{}: {msg}", j + 1)),
        other => other,
    }
}

type Parts = Vec<(Polynomial, Vec<Polynomial>)>;

// multiplier exponent (ℝⁿ only) and weighted squares of one scalar entry
fn entry_parts(domain: Domain, dj: &Polynomial, opts: &SosOptions) -> Result<(u32, Parts)> {
    let n = dj.nvars();
    let one = Polynomial::one(n);
    if dj.degree() == 0 && dj.coeffs()[0] >= 0.0 {
        return Ok((0, vec![(one, vec![Polynomial::constant(n, dj.coeffs()[0].sqrt())])]));
    }
    match domain {
        Domain::Rn => {
            let (k, squares) = sosrf_multivariate(dj, opts.n_max, opts.r_max, opts)?;
            Ok((k, vec![(one, squares)]))
        }
        Domain::RealLine => {
            let (u, v) = sos_univariate_two_squares(dj)?;
            Ok((0, vec![(one, vec![u, v])]))
        }
        Domain::HalfLine => {
            let (p, q) = sos_halfline(dj)?;
            Ok((0, vec![(one, vec![p]), (Polynomial::var(1, 0), vec![q])]))
        }
        Domain::Interval(a, b) => {
            nonnegativity_gate(dj, &domain_points(&domain, 1, 0.0))?;
            Ok((0, interval_parts(dj, a, b)?))
        }
        Domain::Strip(a, b) => {
            nonnegativity_gate(dj, &domain_points(&domain, 2, sample_radius(dj)))?;
            let bound = opts.strip_degree_bound.unwrap_or(dj.degree() + 2);
            Ok((0, strip_parts(dj, a, b, bound, opts)?))
        }
    }
}

// w₁·w₂ = w·h² with w and h both allowed weights
fn weight_product(weights: &[Polynomial], w1: &Polynomial, w2: &Polynomial) -> Option<(Polynomial, Polynomial)> {
    let p = w1 * w2;
    weights.iter().flat_map(|w| weights.iter().map(move |h| (w, h))).find_map(|(w, h)| {
        let close = (&p - &(w * &h.square())).maxabs() <= 1e-12 * p.maxabs();
        close.then(|| (w.clone(), h.clone()))
    })
}

fn multiply_parts(weights: &[Polynomial], a: &Parts, b: &Parts) -> Result<Parts> {
    let mut out: Parts = weights.iter().map(|w| (w.clone(), Vec::new())).collect();
    for (w1, g1) in a {
        for (w2, g2) in b {
            let (w, h) = weight_product(weights, w1, w2)
                .ok_or_else(|| Error::NoCertificate("weight product outside the allowed set".into()))?;
            let slot = &mut out[weight_position(weights, &w)].1;
            for p in g1 {
                for q in g2 {
                    slot.push(&(&h * p) * q);
                }
            }
        }
    }
    Ok(out.into_iter().filter(|(_, g)| !g.is_empty()).collect())
}

// decomposes the odd factors one by one and multiplies the pieces back
fn factored_parts(domain: Domain, fe: &FactoredEntry, dj: &Polynomial, opts: &SosOptions) -> Option<(u32, Parts)> {
    let n = dj.nvars();
    let weights = domain.allowed_weights(n);
    let mut big_n = 0;
    let mut acc: Parts = vec![(Polynomial::one(n), vec![fe.square.clone()])];
    for p in &fe.odd {
        let (k, mut parts) = entry_parts(domain, p, opts).ok()?;
        if n == 1 && p.degree() > 0 {
            parts = polish_parts(&coeffs_of(p), &parts);
        }
        big_n += k;
        acc = multiply_parts(&weights, &acc, &parts).ok()?;
    }
    let target = dj * &reznick_base(n).pow(big_n);
    let error = |parts: &Parts| {
        let sum = parts.iter().fold(Polynomial::zero(n), |s, (w, g)| &s + &(w * &squares_sum(g, n)));
        rel_poly_error(&target, &sum)
    };
    let tol = if matches!(domain, Domain::Rn | Domain::Strip(..)) { GRAM_TOL } else { UNIVARIATE_TOL };
    if n == 1 && error(&acc) > 1e-14 {
        // products of accurate factors can still cancel badly
        let polished = polish_parts(&coeffs_of(dj), &acc);
        if error(&polished) < error(&acc) {
            acc = polished;
        }
    }
    (error(&acc) <= tol).then_some((big_n, acc))
}

// polish of every square in `parts` against the coefficients `c`
fn polish_parts(c: &[f64], parts: &Parts) -> Parts {
    let deg = c.len() - 1;
    let mut weights = Vec::new();
    let mut init = Vec::new();
    for (w, squares) in parts {
        let len = deg.saturating_sub(w.degree()) / 2 + 1;
        for g in squares {
            let mut v = g.coeffs().to_vec();
            v.resize(len, 0.0);
            weights.push(coeffs_of(w));
            init.push(v);
        }
    }
    let mut best = polish(c, &weights, init).into_iter();
    parts
        .iter()
        .map(|(w, squares)| (w.clone(), squares.iter().map(|_| Polynomial::univariate(&best.next().unwrap_or_default())).collect()))
        .collect()
}

/// Diagonalizes `F`, decomposes each diagonal entry over `domain` and
/// assembles a matrix certificate. Entries are split along the pivots
/// first, so only the low-degree odd factors need a decomposition; the
/// whole entry is the fallback.
pub fn certify_matrix(f: &PolyMatrix, domain: Domain, opts: &SosOptions) -> Result<Certificate> {
    f.require_symmetric()?;
    let n = f.nvars();
    domain.check_nvars(n)?;
    matrix_gate(f, &domain_points(&domain, n, matrix_sample_radius(f)))?;
    if f.is_zero() {
        let cert = Certificate { domain, multiplier: Polynomial::one(n), terms: Vec::new(), residual: 0.0 };
        return Ok(cert);
    }
    let diag = diagonalize(f)?;
    let factored = factor_diagonal(&diag);
    let d: Vec<Polynomial> = diag.d.iter().map(|p| p.trim(0.0)).collect::<Result<_>>()?;

    let mut found = Vec::with_capacity(d.len());
    for (j, dj) in d.iter().enumerate() {
        let structured = factored[j].as_ref().and_then(|fe| factored_parts(domain, fe, dj, opts));
        let entry = match structured {
            Some(e) => e,
            None => entry_parts(domain, dj, opts).map_err(|e| name_failure(j, e))?,
        };
        found.push(entry);
    }

    let mut cert = if matches!(domain, Domain::Rn) {
        let total: u32 = found.iter().map(|(nj, _)| nj).sum();
        let q = reznick_base(n);
        let coords: Vec<Polynomial> =
            std::iter::once(Polynomial::one(n)).chain((0..n).map(|i| Polynomial::var(n, i))).collect();
        // q^{2M}·d_j = (q^h)²·q^o·Σg² with 2M − N_j = 2h + o, and q = Σ xᵢ² (x₀ = 1)
        let per_diag = found
            .into_iter()
            .map(|(nj, parts)| {
                let squares: Vec<Polynomial> = parts.into_iter().flat_map(|(_, g)| g).collect();
                let e = 2 * total - nj;
                let qh = q.pow(e / 2);
                let lifted: Vec<Polynomial> = if e % 2 == 0 {
                    squares.iter().map(|g| &qh * g).collect()
                } else {
                    squares.iter().flat_map(|g| coords.iter().map(|x| &(&qh * x) * g).collect::<Vec<_>>()).collect()
                };
                vec![(Polynomial::one(n), lifted)]
            })
            .collect();
        assemble(domain, &diag.b * &q.pow(total), &diag.x_plus, per_diag)?
    } else {
        let per_diag = found.into_iter().map(|(_, parts)| parts).collect();
        assemble(domain, diag.b.clone(), &diag.x_plus, per_diag)?
    };
    cert.residual = verify_certificate(f, &cert)?;
    let tol = match domain {
        Domain::RealLine | Domain::HalfLine | Domain::Interval(..) => UNIVARIATE_TOL,
        Domain::Rn | Domain::Strip(..) => GRAM_TOL,
    };
    if cert.residual > tol {
        return Err(Error::NoCertificate(format!("assembled certificate has residual {:e}", cert.residual)));
    }
    Ok(cert)
}

/// Whether `w` is a positive multiple of an allowed weight.
fn weight_allowed(w: &Polynomial, allowed: &[Polynomial]) -> bool {
    allowed.iter().any(|a| {
        let (Ok(w), Ok(a)) = (w.trim(0.0), a.trim(0.0)) else { return false };
        if w.degree_bound() != a.degree_bound() || w.is_zero() {
            return false;
        }
        let k = w.coeffs().iter().zip(a.coeffs()).find(|(_, y)| **y != 0.0).map(|(x, y)| x / y);
        match k {
            Some(k) if k > 0.0 => {
                let diff = w.coeffs().iter().zip(a.coeffs()).fold(0.0_f64, |m, (x, y)| m.max((x - k * y).abs()));
                diff <= 1e-12 * w.maxabs()
            }
            _ => false,
        }
    })
}

/// Relative max-abs coefficient of `b²F − Σ w_k A_kᵀA_k`, normalized by
/// `1 + maxabs(b²F)`.
pub fn verify_certificate(f: &PolyMatrix, cert: &Certificate) -> Result<f64> {
    let n = f.nvars();
    let m = f.rows();
    if !f.is_square() {
        return domain("verify_certificate: F must be square");
    }
    if cert.multiplier.nvars() != n {
        return domain("verify_certificate: multiplier has the wrong number of variables");
    }
    cert.domain.check_nvars(n)?;
    if cert.multiplier.is_zero() {
        return Err(Error::InvalidCertificate("multiplier is the zero polynomial".into()));
    }
    let allowed = cert.domain.allowed_weights(n);
    let lhs = f.scale_poly(&cert.multiplier.square());
    let mut rhs = PolyMatrix::zeros(m, m, n);
    for (k, term) in cert.terms.iter().enumerate() {
        if term.weight.nvars() != n || term.matrix.nvars() != n || term.matrix.cols() != m {
            return domain(format!("verify_certificate: term {k} does not match F in shape"));
        }
        if !weight_allowed(&term.weight, &allowed) {
            return Err(Error::InvalidCertificate(format!(
                "term {k}: weight {} is not allowed on {}",
                term.weight, cert.domain
            )));
        }
        let gram = term.matrix.transpose().mat_mul(&term.matrix)?;
        rhs = rhs.checked_add(&gram.scale_poly(&term.weight))?;
    }
    Ok(lhs.checked_sub(&rhs)?.maxabs() / (1.0 + lhs.maxabs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uni(c: &[f64]) -> Polynomial {
        Polynomial::univariate(c)
    }

    fn close(p: &Polynomial, q: &Polynomial, tol: f64) -> bool {
        (p - q).maxabs() <= tol
    }

    fn two_var(terms: &[([u32; 2], f64)]) -> Polynomial {
        let t: Vec<(Vec<u32>, f64)> = terms.iter().map(|(a, c)| (a.to_vec(), *c)).collect();
        Polynomial::from_terms(2, &t).unwrap()
    }

    #[test]
    fn domain_strings() {
        for s in ["rn", "rline", "halfline", "interval:0:1", "strip:-1:2.5"] {
            let d: Domain = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert!("interval:1:0".parse::<Domain>().is_err());
        assert!("disk".parse::<Domain>().is_err());
        assert!("strip:0".parse::<Domain>().is_err());
    }

    #[test]
    fn two_squares_examples() {
        let (u, v) = sos_univariate_two_squares(&uni(&[0.0, 0.0, 1.0])).unwrap();
        assert!(close(&(&u.square() + &v.square()), &uni(&[0.0, 0.0, 1.0]), 1e-12));
        assert!(v.maxabs() < 1e-8 && (u.coeff(&[1]).abs() - 1.0).abs() < 1e-8);

        // t⁴ + 1 = (t² − 1)² + 2t², up to the signs of u and v
        let f = uni(&[1.0, 0.0, 0.0, 0.0, 1.0]);
        let (u, v) = sos_univariate_two_squares(&f).unwrap();
        assert!(close(&(&u.square() + &v.square()), &f, 1e-12));
        let mut pieces = [u.coeffs().to_vec(), v.coeffs().to_vec()];
        pieces.iter_mut().for_each(|c| c.resize(3, 0.0));
        let expect_u = [-1.0, 0.0, 1.0];
        let expect_v = [0.0, 2f64.sqrt(), 0.0];
        let matches = |c: &[f64], e: &[f64]| c.iter().zip(e).all(|(x, y)| (x.abs() - y.abs()).abs() < 1e-10);
        assert!(matches(&pieces[0], &expect_u) && matches(&pieces[1], &expect_v), "{pieces:?}");

        let f = uni(&[1.0, 0.0, 2.0, 0.0, 1.0]);
        let (u, v) = sos_univariate_two_squares(&f).unwrap();
        assert!(close(&(&u.square() + &v.square()), &f, 1e-10));
        assert!(v.maxabs() < 1e-6);
    }

    #[test]
    fn two_squares_rejects_negative() {
        let err = sos_univariate_two_squares(&uni(&[-1.0, 0.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::NotPsd { .. }));
    }

    #[test]
    fn halfline_examples() {
        let (p, q) = sos_halfline(&uni(&[1.0, 1.0])).unwrap();
        assert!(close(&p.square(), &uni(&[1.0]), 1e-12) && close(&q.square(), &uni(&[1.0]), 1e-12));
        let (p, q) = sos_halfline(&uni(&[0.0, 1.0])).unwrap();
        assert!(p.maxabs() < 1e-12 && close(&q.square(), &uni(&[1.0]), 1e-12));

        // oracle: f(s²) is even and nonnegative on ℝ, so it is u² + v²; the
        // halfline pieces must reproduce f.
        let f = uni(&[1.0, 1.0, 1.0, 1.0]);
        let (p, q) = sos_halfline(&f).unwrap();
        let x = uni(&[0.0, 1.0]);
        assert!(close(&(&p.square() + &(&x * &q.square())), &f, 1e-10));
        let g = f.stretch_square();
        let (u, v) = sos_univariate_two_squares(&g).unwrap();
        assert!(close(&(&u.square() + &v.square()), &g, 1e-10));
        assert!(p.degree() <= 1 && q.degree() <= 1);

        assert!(matches!(sos_halfline(&uni(&[-1.0, 1.0])), Err(Error::NotPsd { .. })));
    }

    fn check_interval(f: &Polynomial, a: f64, b: f64) -> Certificate {
        let cert = sos_interval(f, a, b).unwrap();
        let fm = PolyMatrix::from_rows(vec![vec![f.clone()]]).unwrap();
        assert!(verify_certificate(&fm, &cert).unwrap() <= 1e-8);
        cert
    }

    #[test]
    fn weight_products_close_up() {
        let dom = Domain::Interval(-1.0, 2.0);
        let w = dom.allowed_weights(1);
        let (xa, bx) = interval_factors(-1.0, 2.0);
        // (x+1)·(x+1)(2−x) = (2−x)·(x+1)²
        let (k, h) = weight_product(&w, &w[1], &w[3]).unwrap();
        assert_eq!((k, h), (bx.clone(), xa.clone()));
        let (k, h) = weight_product(&w, &w[2], &w[2]).unwrap();
        assert_eq!((k, h), (Polynomial::one(1), bx));
        let x = Polynomial::var(1, 0);
        let a: Parts = vec![(Polynomial::one(1), vec![uni(&[1.0, 1.0])]), (x.clone(), vec![uni(&[2.0])])];
        let b: Parts = vec![(x.clone(), vec![uni(&[0.0, 3.0])])];
        let wh = Domain::HalfLine.allowed_weights(1);
        let prod = multiply_parts(&wh, &a, &b).unwrap();
        let sum = prod.iter().fold(Polynomial::zero(1), |s, (w, g)| &s + &(w * &squares_sum(g, 1)));
        let expect = &(&uni(&[1.0, 2.0, 1.0]) + &uni(&[0.0, 4.0])) * &uni(&[0.0, 0.0, 0.0, 9.0]);
        assert!((&sum - &expect).maxabs() < 1e-12);
        assert!(prod.iter().all(|(w, _)| wh.contains(w)));
    }

    #[test]
    fn interval_examples() {
        let (xa, bx) = interval_factors(0.0, 1.0);
        let cert = check_interval(&uni(&[0.0, 1.0, -1.0]), 0.0, 1.0);
        assert_eq!(cert.terms[1].weight, &xa * &bx);
        assert!(cert.terms[0].matrix.maxabs() < 1e-12);
        assert!((cert.terms[1].matrix.get(0, 0).coeff(&[0]).abs() - 1.0).abs() < 1e-10);

        let cert = check_interval(&uni(&[1.0]), 0.0, 1.0);
        assert_eq!(cert.terms[0].weight, Polynomial::one(1));
        assert!((cert.terms[0].matrix.get(0, 0).coeff(&[0]).abs() - 1.0).abs() < 1e-12);

        let cert = check_interval(&uni(&[0.0, 1.0]), 0.0, 1.0);
        assert_eq!(cert.terms[0].weight, xa);
        assert!((cert.terms[0].matrix.get(0, 0).coeff(&[0]).abs() - 1.0).abs() < 1e-10);
        assert!(cert.terms[1].matrix.maxabs() < 1e-10);
    }

    #[test]
    fn interval_parity_and_shift() {
        // (x − 2)²(3 − x) + 1 on [−1, 4]: odd degree
        let f = &(&uni(&[-2.0, 1.0]).square() * &uni(&[3.0, -1.0])) + &uni(&[6.0]);
        let cert = check_interval(&f, -1.0, 4.0);
        let (xa, bx) = interval_factors(-1.0, 4.0);
        assert_eq!(cert.terms.iter().map(|t| t.weight.clone()).collect::<Vec<_>>(), vec![xa, bx]);
        let g = &f * &uni(&[1.0, 1.0]);
        let cert = check_interval(&g, -1.0, 4.0);
        assert_eq!(cert.terms[0].weight, Polynomial::one(1));
        assert!(matches!(sos_interval(&uni(&[-1.0, 1.0]), 0.0, 2.0), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn pruning_motzkin() {
        let m = two_var(&[([0, 0], 1.0), ([2, 4], 1.0), ([4, 2], 1.0), ([2, 2], -3.0)]);
        assert!(pruned_basis(&m).is_none());
        let sos = two_var(&[([2, 2], 1.0), ([0, 0], 1.0)]);
        let basis = pruned_basis(&sos).unwrap();
        assert!(basis.contains(&vec![1, 1]) && basis.contains(&vec![0, 0]));
        assert!(!basis.contains(&vec![2, 0]));
    }

    #[test]
    fn multivariate_sos_needs_no_multiplier() {
        let f = two_var(&[([2, 2], 1.0), ([0, 0], 1.0)]);
        let (big_n, squares) = sosrf_multivariate(&f, 2, None, &SosOptions::default()).unwrap();
        assert_eq!(big_n, 0);
        assert!(close(&squares_sum(&squares, 2), &f, 1e-8));
    }

    fn in_xy(c: &[f64]) -> Polynomial {
        let terms: Vec<(Vec<u32>, f64)> = c.iter().enumerate().map(|(k, &v)| (vec![k as u32, k as u32], v)).collect();
        Polynomial::from_terms(2, &terms).unwrap()
    }

    fn det_coupled() -> Polynomial {
        two_var(&[([0, 0], 1.0), ([4, 2], 1.0), ([2, 4], 1.0), ([6, 6], 1.0), ([2, 2], -1.0)])
    }

    #[test]
    fn det_coupled_is_plain_sos() {
        // oracle: det = (x²y)² + (xy²)² + h(xy) with h(u) = 1 − u² + u⁶ ≥ 0
        let det = det_coupled();
        let (u, v) = sos_univariate_two_squares(&uni(&[1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0])).unwrap();
        let oracle = [two_var(&[([2, 1], 1.0)]), two_var(&[([1, 2], 1.0)]), in_xy(u.coeffs()), in_xy(v.coeffs())];
        assert!(close(&squares_sum(&oracle, 2), &det, 1e-10));

        let (big_n, squares) = sosrf_multivariate(&det, 2, None, &SosOptions::default()).unwrap();
        assert_eq!(big_n, 0);
        assert!(rel_poly_error(&det, &squares_sum(&squares, 2)) <= 1e-8);
    }

    #[test]
    fn multiplied_det_identity() {
        let lhs = &two_var(&[([0, 0], 1.0), ([2, 0], 1.0), ([0, 2], 1.0)]) * &det_coupled();
        let monos = |t: &[[u32; 2]]| t.iter().map(|a| two_var(&[(*a, 1.0)]).square()).fold(Polynomial::zero(2), |s, p| &s + &p);
        let rest = monos(&[[0, 1], [1, 0], [1, 3], [3, 1], [3, 3], [3, 4], [4, 3]]);
        let r2 = 2f64.sqrt();
        let fixed = &(&rest + &two_var(&[([2, 2], r2), ([0, 0], -1.0 / (2.0 * r2))]).square()) + &Polynomial::constant(2, 7.0 / 8.0);
        assert!(close(&fixed, &lhs, 1e-12));
        // with (√2x²y² − 1)² in place of the square above, the constant and
        // the x²y² coefficient are off
        let loose = &(&rest + &two_var(&[([2, 2], r2), ([0, 0], -1.0)]).square()) + &Polynomial::constant(2, 7.0 / 8.0);
        let diff = &loose - &lhs;
        assert!((diff.coeff(&[0, 0]) - 0.875).abs() < 1e-12);
        assert!((diff.coeff(&[2, 2]) - (1.0 - 2.0 * r2)).abs() < 1e-12);
    }

    #[test]
    fn strip_examples() {
        let opts = SosOptions::default();
        // normalized [0,1] strip
        let s1s = two_var(&[([1, 0], 1.0), ([2, 0], -1.0)]);
        let d = &Polynomial::one(2) + &(&s1s * &two_var(&[([0, 2], 1.0)]));
        let cert = sos_strip(&d, 0.0, 1.0, 4, &opts).unwrap();
        assert!(cert.residual <= 1e-6);
        let cert = sos_strip(&s1s, 0.0, 1.0, 2, &opts).unwrap();
        assert!(cert.residual <= 1e-6);
        let planted = &two_var(&[([1, 1], 1.0), ([0, 1], -0.5)]).square() + &s1s;
        let cert = sos_strip(&planted, 0.0, 1.0, 4, &opts).unwrap();
        assert!(cert.residual <= 1e-8, "{}", cert.residual);
    }

    fn outer_t() -> PolyMatrix {
        let off = uni(&[0.0, 1.0, 1.0]);
        PolyMatrix::from_rows(vec![vec![uni(&[0.0, 0.0, 1.0]), off.clone()], vec![off, uni(&[1.0, 2.0, 1.0])]]).unwrap()
    }

    #[test]
    fn outer_t_on_real_line() {
        let f = outer_t();
        let cert = certify_matrix(&f, Domain::RealLine, &SosOptions::default()).unwrap();
        assert_eq!(cert.multiplier, uni(&[0.0, 0.0, 0.0, 0.0, 1.0]));
        assert!(cert.residual <= 1e-12);
        assert_eq!(cert.terms.len(), 1);
    }

    #[test]
    fn diagonal_on_halfline() {
        let f = PolyMatrix::diagonal(&[uni(&[0.0, 1.0]), uni(&[1.0])]);
        let cert = certify_matrix(&f, Domain::HalfLine, &SosOptions::default()).unwrap();
        assert!(cert.residual <= 1e-8);
        let ws: Vec<_> = cert.terms.iter().map(|t| t.weight.clone()).collect();
        assert!(ws.iter().all(|w| Domain::HalfLine.allowed_weights(1).contains(w)));
        assert!(matches!(certify_matrix(&f, Domain::RealLine, &SosOptions::default()), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn verify_flags_bad_weights_and_corruption() {
        let f = outer_t();
        let mut cert = certify_matrix(&f, Domain::RealLine, &SosOptions::default()).unwrap();
        let good = cert.clone();
        cert.terms[0].weight = uni(&[0.0, 1.0]);
        assert!(matches!(verify_certificate(&f, &cert), Err(Error::InvalidCertificate(_))));
        cert.terms[0].weight = uni(&[3.0]);
        assert!(verify_certificate(&f, &cert).is_ok());

        let mut bad = good.clone();
        let g = bad.terms[0].matrix.get(0, 0).clone();
        let mut c = g.coeffs().to_vec();
        c[0] += 1.0;
        bad.terms[0].matrix.set(0, 0, Polynomial::new(1, g.degree_bound(), c).unwrap());
        assert!(verify_certificate(&f, &bad).unwrap() >= 0.01);
    }

    #[test]
    fn certificate_json_roundtrip() {
        let cert = certify_matrix(&outer_t(), Domain::RealLine, &SosOptions::default()).unwrap();
        let s = serde_json::to_string(&cert).unwrap();
        assert!(s.contains("\"domain\":\"rline\""));
        let back: Certificate = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cert);
    }
}
