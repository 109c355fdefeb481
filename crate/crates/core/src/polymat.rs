//! Matrices with polynomial entries.

use nalgebra::DMatrix;
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::poly::{omega_len, Polynomial};

/// Name of the generator behind [`PolyMatrix::random_symmetric`], echoed in
/// benchmark output.
pub const PRNG_NAME: &str = "ChaCha8Rng";

/// Row-major grid of polynomials sharing one variable count.
///
/// Most matrices are square; rectangular shapes are allowed so certificate
/// factors can be stacked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolyMatrix", into = "RawPolyMatrix")]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    n: usize,
    entries: Vec<Polynomial>,
}

#[derive(Serialize, Deserialize)]
struct RawPolyMatrix {
    m: usize,
    n: usize,
    entries: Vec<Vec<Polynomial>>,
}

impl TryFrom<RawPolyMatrix> for PolyMatrix {
    type Error = Error;

    fn try_from(raw: RawPolyMatrix) -> Result<Self> {
        if raw.entries.len() != raw.m {
            return domain(format!("matrix: m = {} but entries has {} rows", raw.m, raw.entries.len()));
        }
        let mat = PolyMatrix::from_rows(raw.entries)?;
        if mat.n != raw.n {
            return domain(format!("matrix: n = {} but entries use {} variables", raw.n, mat.n));
        }
        Ok(mat)
    }
}

impl From<PolyMatrix> for RawPolyMatrix {
    fn from(mat: PolyMatrix) -> Self {
        let cols = mat.cols;
        let mut rows = Vec::with_capacity(mat.rows);
        let mut it = mat.entries.into_iter();
        for _ in 0..mat.rows {
            rows.push(it.by_ref().take(cols).collect());
        }
        RawPolyMatrix { m: mat.rows, n: mat.n, entries: rows }
    }
}

impl PolyMatrix {
    pub fn from_rows(rows: Vec<Vec<Polynomial>>) -> Result<Self> {
        let nrows = rows.len();
        if nrows == 0 {
            return domain("matrix: at least one row is required");
        }
        let ncols = rows[0].len();
        if ncols == 0 {
            return domain("matrix: rows must be nonempty");
        }
        let n = rows[0][0].nvars();
        let mut entries = Vec::with_capacity(nrows * ncols);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != ncols {
                return domain(format!("matrix: row {i} has {} entries, expected {ncols}", row.len()));
            }
            for (j, p) in row.into_iter().enumerate() {
                if p.nvars() != n {
                    return domain(format!("matrix: entry ({i},{j}) has {} variables, expected {n}", p.nvars()));
                }
                entries.push(p);
            }
        }
        Ok(Self { rows: nrows, cols: ncols, n, entries })
    }

    pub fn zeros(rows: usize, cols: usize, n: usize) -> Self {
        Self { rows, cols, n, entries: vec![Polynomial::zero(n); rows * cols] }
    }

    pub fn identity(m: usize, n: usize) -> Self {
        let mut out = Self::zeros(m, m, n);
        for i in 0..m {
            out.set(i, i, Polynomial::one(n));
        }
        out
    }

    pub fn diagonal(diag: &[Polynomial]) -> Self {
        let m = diag.len();
        let n = diag[0].nvars();
        let mut out = Self::zeros(m, m, n);
        for (i, p) in diag.iter().enumerate() {
            out.set(i, i, p.clone());
        }
        out
    }

    /// Embeds a constant real matrix.
    pub fn from_constant(t: &DMatrix<f64>, n: usize) -> Self {
        let mut out = Self::zeros(t.nrows(), t.ncols(), n);
        for i in 0..t.nrows() {
            for j in 0..t.ncols() {
                out.set(i, j, Polynomial::constant(n, t[(i, j)]));
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Size of a square matrix.
    pub fn size(&self) -> usize {
        debug_assert!(self.is_square());
        self.rows
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Polynomial {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Polynomial) {
        debug_assert_eq!(p.nvars(), self.n);
        self.entries[i * self.cols + j] = p;
    }

    pub fn entries(&self) -> impl Iterator<Item = &Polynomial> {
        self.entries.iter()
    }

    /// Exact coefficientwise symmetry.
    pub fn is_symmetric(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let a = self.get(i, j);
                let b = self.get(j, i);
                let d = a.degree_bound().max(b.degree_bound());
                let a = a.with_degree_bound(d).expect("grow");
                let b = b.with_degree_bound(d).expect("grow");
                if a.coeffs() != b.coeffs() {
                    return false;
                }
            }
        }
        true
    }

    pub fn require_symmetric(&self) -> Result<()> {
        if !self.is_square() {
            return domain(format!("matrix is {}x{}, expected square", self.rows, self.cols));
        }
        if !self.is_symmetric() {
            return domain("matrix is not symmetric");
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Polynomial::is_zero)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows, self.n);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j).clone());
            }
        }
        out
    }

    /// Cell multiplication: `(AB)[i][k] = Σ_j A[i][j]·B[j][k]`.
    pub fn mat_mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return domain(format!(
                "mat_mul: inner dimensions differ ({}x{} times {}x{})",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        if self.n != other.n {
            return domain(format!("mat_mul: variable counts differ ({} vs {})", self.n, other.n));
        }
        let mut out = Self::zeros(self.rows, other.cols, self.n);
        for i in 0..self.rows {
            for k in 0..other.cols {
                let mut acc = Polynomial::zero(self.n);
                for j in 0..self.cols {
                    let a = self.get(i, j);
                    let b = other.get(j, k);
                    if a.is_zero() || b.is_zero() {
                        continue;
                    }
                    acc = &acc + &(a * b);
                }
                out.set(i, k, acc);
            }
        }
        Ok(out)
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, op: &str, f: impl Fn(&Polynomial, &Polynomial) -> Polynomial) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols || self.n != other.n {
            return domain(format!(
                "{op}: shapes differ ({}x{} in {} vars vs {}x{} in {} vars)",
                self.rows, self.cols, self.n, other.rows, other.cols, other.n
            ));
        }
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| f(a, b)).collect();
        Ok(Self { rows: self.rows, cols: self.cols, n: self.n, entries })
    }

    /// Multiplies every entry by the scalar polynomial `p`.
    pub fn scale_poly(&self, p: &Polynomial) -> Self {
        let entries = self.entries.iter().map(|e| e * p).collect();
        Self { rows: self.rows, cols: self.cols, n: self.n, entries }
    }

    /// `T · F · Tᵀ` for a constant real matrix `T`.
    pub fn congruence(&self, t: &DMatrix<f64>) -> Result<Self> {
        if t.ncols() != self.rows || !self.is_square() {
            return domain("congruence: shape mismatch");
        }
        let tp = Self::from_constant(t, self.n);
        tp.mat_mul(self)?.mat_mul(&tp.transpose())
    }

    /// Entrywise evaluation.
    pub fn eval_mat(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        if point.len() != self.n {
            return domain(format!("eval_mat: point has {} coordinates, expected {}", point.len(), self.n));
        }
        Ok(DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval_unchecked(point)))
    }

    /// Largest absolute coefficient over all entries.
    pub fn maxabs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, p| m.max(p.maxabs()))
    }

    pub fn trim(&self, tol: f64) -> Result<Self> {
        let entries = self.entries.iter().map(|p| p.trim(tol)).collect::<Result<Vec<_>>>()?;
        Ok(Self { rows: self.rows, cols: self.cols, n: self.n, entries })
    }

    /// Symmetric `m×m` matrix whose upper-triangle entries have all
    /// `C(n+d, n)` coefficients drawn uniformly from `(0,1)`.
    pub fn random_symmetric(m: usize, n: usize, d: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return domain("random_symmetric: m must be positive");
        }
        if n == 0 {
            return domain("random_symmetric: n must be positive");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = omega_len(n, d);
        let mut out = Self::zeros(m, m, n);
        for i in 0..m {
            for j in i..m {
                let coeffs: Vec<f64> = (0..len).map(|_| rng.sample(Open01)).collect();
                let p = Polynomial::new(n, d, coeffs)?;
                out.set(i, j, p.clone());
                out.set(j, i, p);
            }
        }
        Ok(out)
    }
}

/// Maximum absolute coefficient of `a − b`.
pub fn max_coeff_diff(a: &PolyMatrix, b: &PolyMatrix) -> Result<f64> {
    Ok(a.checked_sub(b)?.maxabs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(c: &[f64]) -> Polynomial {
        Polynomial::univariate(c)
    }

    fn outer_t() -> PolyMatrix {
        // [[t², t(t+1)], [t(t+1), (t+1)²]]
        PolyMatrix::from_rows(vec![
            vec![t(&[0.0, 0.0, 1.0]), t(&[0.0, 1.0, 1.0])],
            vec![t(&[0.0, 1.0, 1.0]), t(&[1.0, 2.0, 1.0])],
        ])
        .unwrap()
    }

    #[test]
    fn identity_is_neutral() {
        let b = PolyMatrix::random_symmetric(3, 1, 2, 1).unwrap();
        assert_eq!(PolyMatrix::identity(3, 1).mat_mul(&b).unwrap(), b);
    }

    #[test]
    fn outer_t_congruence_reproduces_t8_f() {
        let xp = PolyMatrix::from_rows(vec![
            vec![t(&[0.0, 0.0, 1.0]), Polynomial::zero(1)],
            vec![t(&[0.0, 1.0, 1.0]), t(&[0.0, 0.0, 1.0])],
        ])
        .unwrap();
        let d = PolyMatrix::diagonal(&[Polynomial::monomial(&[6], 1.0), Polynomial::zero(1)]);
        let lhs = xp.mat_mul(&d.mat_mul(&xp.transpose()).unwrap()).unwrap();
        let rhs = outer_t().scale_poly(&Polynomial::monomial(&[8], 1.0));
        assert_eq!(max_coeff_diff(&lhs, &rhs).unwrap(), 0.0);
    }

    #[test]
    fn transpose_examples() {
        let f = outer_t();
        assert_eq!(f.transpose(), f);
        let a = PolyMatrix::from_rows(vec![
            vec![Polynomial::zero(1), t(&[0.0, 1.0])],
            vec![Polynomial::zero(1), Polynomial::zero(1)],
        ])
        .unwrap();
        let at = a.transpose();
        assert_eq!(at.get(1, 0), &t(&[0.0, 1.0]));
        assert!(at.get(0, 1).is_zero());
    }

    #[test]
    fn eval_examples() {
        let f = outer_t().eval_mat(&[1.0]).unwrap();
        assert_eq!(f, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        let eig = f.symmetric_eigenvalues();
        let mut ev: Vec<f64> = eig.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-12 && (ev[1] - 5.0).abs() < 1e-12);

        let z = PolyMatrix::zeros(2, 2, 2).eval_mat(&[0.3, 4.0]).unwrap();
        assert_eq!(z, DMatrix::zeros(2, 2));
        assert!(outer_t().eval_mat(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn random_symmetric_contract() {
        let f = PolyMatrix::random_symmetric(3, 1, 2, 42).unwrap();
        assert!(f.is_symmetric());
        for p in f.entries() {
            assert_eq!(p.coeffs().len(), 3);
            assert!(p.coeffs().iter().all(|&c| c > 0.0 && c < 1.0));
        }
        assert_eq!(f.get(2, 1), f.get(1, 2));
        assert_eq!(f, PolyMatrix::random_symmetric(3, 1, 2, 42).unwrap());
        assert_ne!(f, PolyMatrix::random_symmetric(3, 1, 2, 43).unwrap());
        let one = PolyMatrix::random_symmetric(1, 2, 3, 0).unwrap();
        assert!(one.is_symmetric() && one.rows() == 1);
        assert!(PolyMatrix::random_symmetric(0, 1, 2, 0).is_err());
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = PolyMatrix::zeros(2, 3, 1);
        assert!(a.mat_mul(&a).is_err());
        assert!(PolyMatrix::zeros(2, 2, 1).mat_mul(&PolyMatrix::zeros(2, 2, 2)).is_err());
        assert!(!a.is_symmetric());
    }

    #[test]
    fn json_layout() {
        let f = outer_t();
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.starts_with(r#"{"m":2,"n":1,"entries":[["#));
        let back: PolyMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        let bad = r#"{"m":2,"n":1,"entries":[[{"n":1,"d":0,"coeffs":[1]}]]}"#;
        assert!(serde_json::from_str::<PolyMatrix>(bad).is_err());
    }
}
