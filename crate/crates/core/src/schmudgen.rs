//! Diagonalization of symmetric polynomial matrices by repeated congruence.
//!
//! One step takes a symmetric block
//!
//! ```text
//!     F = [ α   β ]        X± = [  α    0  ]
//!         [ βᵀ  C ]             [ ±βᵀ  αI  ]
//! ```
//!
//! and produces `F̃ = diag(α³, B)` with `B = α²C − αβᵀβ`, where
//! `X₊X₋ = X₋X₊ = α²I`, `α⁴F = X₊F̃X₊ᵀ` and `F̃ = X₋FX₋ᵀ`. Iterating on the
//! trailing block `B` and folding every step into running full-size factors
//! yields `b`, `X±` and `D = diag(d₁,…,d_m)` with
//!
//! ```text
//!     X₊X₋ = X₋X₊ = b·I,   b²F = X₊DX₊ᵀ,   D = X₋FX₋ᵀ.
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::poly::Polynomial;
use crate::polymat::PolyMatrix;

/// Relative size below which an entry produced by cancellation is treated
/// as the zero polynomial.
pub const CANCELLATION_TOL: f64 = 1e-12;

/// One congruence step on a symmetric block.
#[derive(Clone, Debug)]
pub struct SchmudgenStep {
    pub alpha: Polynomial,
    pub x_plus: PolyMatrix,
    pub x_minus: PolyMatrix,
    /// Trailing block `α²C − αβᵀβ`.
    pub b_next: PolyMatrix,
}

/// Output of [`diagonalize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagonalization {
    pub b: Polynomial,
    pub x_plus: PolyMatrix,
    pub x_minus: PolyMatrix,
    pub d: Vec<Polynomial>,
    pub pivots: Vec<Polynomial>,
}

/// Diagonalization together with its relation residuals, as written to disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagonalizationFile {
    #[serde(flatten)]
    pub diagonalization: Diagonalization,
    pub residuals: [f64; 3],
}

struct StepParts {
    alpha: Polynomial,
    beta: Vec<Polynomial>,
    b_next: PolyMatrix,
}

fn step_parts(block: &PolyMatrix) -> Result<StepParts> {
    let s = block.size();
    let n = block.nvars();
    let alpha = block.get(0, 0).clone();
    if alpha.is_zero() {
        return Err(Error::PivotRequired);
    }
    let beta: Vec<Polynomial> = (1..s).map(|j| block.get(0, j).clone()).collect();
    let alpha_sq = alpha.square();
    let mut b_next = PolyMatrix::zeros(s - 1, s - 1, n);
    for j in 0..s - 1 {
        let alpha_beta_j = &alpha * &beta[j];
        for k in j..s - 1 {
            let lead = &alpha_sq * block.get(j + 1, k + 1);
            let cross = &alpha_beta_j * &beta[k];
            let mut entry = &lead - &cross;
            let scale = lead.maxabs().max(cross.maxabs());
            if entry.maxabs() <= CANCELLATION_TOL * scale {
                entry = Polynomial::zero(n);
            }
            if j != k {
                b_next.set(k, j, entry.clone());
            }
            b_next.set(j, k, entry);
        }
    }
    Ok(StepParts { alpha, beta, b_next })
}

/// One Schmüdgen congruence step on a symmetric block of size ≥ 2.
pub fn schmudgen_step(block: &PolyMatrix) -> Result<SchmudgenStep> {
    block.require_symmetric()?;
    let s = block.size();
    if s < 2 {
        return domain("schmudgen_step: block must be at least 2x2");
    }
    let parts = step_parts(block)?;
    let n = block.nvars();
    let mut x_plus = PolyMatrix::zeros(s, s, n);
    let mut x_minus = PolyMatrix::zeros(s, s, n);
    for i in 0..s {
        x_plus.set(i, i, parts.alpha.clone());
        x_minus.set(i, i, parts.alpha.clone());
    }
    for (j, b) in parts.beta.iter().enumerate() {
        x_plus.set(j + 1, 0, b.clone());
        x_minus.set(j + 1, 0, -b);
    }
    Ok(SchmudgenStep { alpha: parts.alpha, x_plus, x_minus, b_next: parts.b_next })
}

/// Finds a constant orthogonal `T` such that `(T·F·Tᵀ)[0][0]` is not the
/// zero polynomial, and returns `T` with the transformed block.
///
/// A nonzero diagonal entry is swapped to the front; otherwise a 45° Givens
/// rotation in the plane of a nonzero off-diagonal entry `F[j][k]` puts
/// `F[j][k]` itself on the diagonal first.
pub fn pivot_fix(block: &PolyMatrix) -> Result<(DMatrix<f64>, PolyMatrix)> {
    block.require_symmetric()?;
    let s = block.size();
    if block.is_zero() {
        return Err(Error::ZeroBlock);
    }
    let mut t = DMatrix::<f64>::identity(s, s);
    let target = match (0..s).find(|&j| !block.get(j, j).is_zero()) {
        Some(j) => j,
        None => {
            let (j, k) = (0..s)
                .flat_map(|j| ((j + 1)..s).map(move |k| (j, k)))
                .find(|&(j, k)| !block.get(j, k).is_zero())
                .expect("nonzero symmetric matrix with zero diagonal has a nonzero off-diagonal entry");
            let h = std::f64::consts::FRAC_1_SQRT_2;
            t[(j, j)] = h;
            t[(j, k)] = h;
            t[(k, j)] = -h;
            t[(k, k)] = h;
            j
        }
    };
    if target != 0 {
        t.swap_rows(0, target);
    }
    let fixed = block.congruence(&t)?;
    Ok((t, fixed))
}

/// Runs the full diagonalization of a nonzero symmetric matrix.
///
/// A 1×1 input passes through with `b = 1` and `X± = I`.
pub fn diagonalize(f: &PolyMatrix) -> Result<Diagonalization> {
    f.require_symmetric()?;
    if f.is_zero() {
        return domain("diagonalize: input matrix is identically zero");
    }
    let m = f.size();
    let n = f.nvars();
    let mut b = Polynomial::one(n);
    let mut x_plus = PolyMatrix::identity(m, n);
    let mut x_minus = PolyMatrix::identity(m, n);
    let mut d: Vec<Polynomial> = Vec::with_capacity(m);
    let mut pivots = Vec::new();
    let mut block = f.clone();

    loop {
        let k = d.len();
        if block.size() == 1 {
            let last = block.get(0, 0).clone();
            if !last.is_zero() {
                pivots.push(last.clone());
            }
            d.push(last);
            break;
        }
        if block.is_zero() {
            d.extend(std::iter::repeat_n(Polynomial::zero(n), m - k));
            break;
        }
        if block.get(0, 0).is_zero() {
            let (t, fixed) = pivot_fix(&block)?;
            absorb_orthogonal(&mut x_plus, &mut x_minus, k, &t);
            block = fixed;
        }
        let StepParts { alpha, beta, b_next } = step_parts(&block)?;
        let alpha_sq = alpha.square();
        b = &b * &alpha_sq;
        fold_plus(&mut x_plus, k, &alpha, &beta);
        fold_minus(&mut x_minus, k, &alpha, &beta);
        for dj in d.iter_mut() {
            *dj = &*dj * &alpha_sq;
        }
        d.push(&alpha_sq * &alpha);
        pivots.push(alpha);
        block = b_next;
    }

    Ok(Diagonalization { b, x_plus, x_minus, d, pivots })
}

// X₊ ← X₊ · diag(α·I_k, X_{i+})
fn fold_plus(xp: &mut PolyMatrix, k: usize, alpha: &Polynomial, beta: &[Polynomial]) {
    let m = xp.rows();
    for r in 0..m {
        let mut lead = xp.get(r, k) * alpha;
        for (j, bj) in beta.iter().enumerate() {
            let e = xp.get(r, k + 1 + j);
            if !e.is_zero() && !bj.is_zero() {
                lead = &lead + &(e * bj);
            }
        }
        for c in (0..k).chain(k + 1..m) {
            let scaled = xp.get(r, c) * alpha;
            xp.set(r, c, scaled);
        }
        xp.set(r, k, lead);
    }
}

// X₋ ← diag(α·I_k, X_{i−}) · X₋
fn fold_minus(xm: &mut PolyMatrix, k: usize, alpha: &Polynomial, beta: &[Polynomial]) {
    let m = xm.rows();
    let pivot_row: Vec<Polynomial> = (0..m).map(|c| xm.get(k, c).clone()).collect();
    for r in (0..k).chain(std::iter::once(k)) {
        for c in 0..m {
            let scaled = xm.get(r, c) * alpha;
            xm.set(r, c, scaled);
        }
    }
    for (j, bj) in beta.iter().enumerate() {
        let r = k + 1 + j;
        for c in 0..m {
            let mut e = xm.get(r, c) * alpha;
            if !bj.is_zero() && !pivot_row[c].is_zero() {
                e = &e - &(bj * &pivot_row[c]);
            }
            xm.set(r, c, e);
        }
    }
}

// With E = diag(I_k, T): X₋ ← E·X₋ and X₊ ← X₊·Eᵀ.
fn absorb_orthogonal(xp: &mut PolyMatrix, xm: &mut PolyMatrix, k: usize, t: &DMatrix<f64>) {
    let m = xp.rows();
    let n = xp.nvars();
    let s = t.nrows();
    let combine = |parts: Vec<(&Polynomial, f64)>| {
        parts.into_iter().filter(|(_, w)| *w != 0.0).fold(Polynomial::zero(n), |acc, (p, w)| &acc + &p.scale(w))
    };
    let old_xm = xm.clone();
    for a in 0..s {
        for c in 0..m {
            let e = combine((0..s).map(|r| (old_xm.get(k + r, c), t[(a, r)])).collect());
            xm.set(k + a, c, e);
        }
    }
    let old_xp = xp.clone();
    for r in 0..m {
        for a in 0..s {
            let e = combine((0..s).map(|q| (old_xp.get(r, k + q), t[(a, q)])).collect());
            xp.set(r, k + a, e);
        }
    }
}

/// Relative tolerance of the exact divisions in [`factor_diagonal`].
pub const FACTOR_TOL: f64 = 1e-9;

/// A diagonal entry split as `d = square²·Π odd`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactoredEntry {
    pub square: Polynomial,
    pub odd: Vec<Polynomial>,
}

/// Splits every diagonal entry along the pivots. Each step leaves a block
/// `B = α(αC − ββᵀ)`, so a pivot divides all later ones and `d_j` is
/// `α_j³·Π_{k>j} α_k²` up to the trailing entry. The pivots are reduced by
/// repeated exact division into factors `ψ`, nonnegative wherever `F` is
/// PSD, and `d_j` is rebuilt from them. An entry whose rebuild misses
/// `d_j` by more than [`FACTOR_TOL`] comes back as `None`.
pub fn factor_diagonal(diag: &Diagonalization) -> Vec<Option<FactoredEntry>> {
    let m = diag.d.len();
    let n = diag.b.nvars();
    let mut psi: Vec<Polynomial> = Vec::new();
    let mut expo: Vec<Vec<u32>> = Vec::new();
    for alpha in &diag.pivots {
        let mut rest = alpha.clone();
        let mut e = vec![0u32; psi.len()];
        for (k, p) in psi.iter().enumerate() {
            if p.degree() == 0 {
                continue;
            }
            while p.degree() <= rest.degree() {
                match rest.exact_div(p, FACTOR_TOL) {
                    Some(q) => {
                        rest = q;
                        e[k] += 1;
                    }
                    None => break,
                }
            }
        }
        psi.push(rest);
        e.push(1);
        expo.push(e);
    }
    let k = psi.len();
    let pad = |e: &[u32]| {
        let mut v = e.to_vec();
        v.resize(k, 0);
        v
    };
    let steps = diag.pivots.len().min(m.saturating_sub(1));
    (0..m)
        .map(|j| {
            let e: Vec<u32> = if j < steps {
                let mut e: Vec<u32> = pad(&expo[j]).iter().map(|v| 3 * v).collect();
                for later in &expo[j + 1..steps] {
                    for (a, b) in e.iter_mut().zip(pad(later)) {
                        *a += 2 * b;
                    }
                }
                e
            } else if j < diag.pivots.len() {
                pad(&expo[j])
            } else {
                return None;
            };
            let mut square = Polynomial::one(n);
            let mut odd = Vec::new();
            for (p, &ek) in psi.iter().zip(&e) {
                if ek >= 2 {
                    square = &square * &p.pow(ek / 2);
                }
                if ek % 2 == 1 {
                    odd.push(p.clone());
                }
            }
            let rebuilt = odd.iter().fold(square.square(), |acc, p| &acc * p);
            let dj = &diag.d[j];
            let ok = (dj - &rebuilt).maxabs() <= FACTOR_TOL * dj.maxabs();
            ok.then_some(FactoredEntry { square, odd })
        })
        .collect()
}

/// Relative residuals of `X₊X₋ − bI`, `X₋FX₋ᵀ − D` and `X₊DX₊ᵀ − b²F`,
/// each divided by `1 + maxabs` of the subtracted term.
pub fn verify_diagonalization(f: &PolyMatrix, diag: &Diagonalization) -> Result<[f64; 3]> {
    let m = f.rows();
    let shapes_ok = f.is_square()
        && diag.x_plus.rows() == m
        && diag.x_plus.cols() == m
        && diag.x_minus.rows() == m
        && diag.x_minus.cols() == m
        && diag.d.len() == m;
    if !shapes_ok {
        return domain("verify_diagonalization: shapes of F and the diagonalization disagree");
    }
    let n = f.nvars();
    let b_eye = PolyMatrix::identity(m, n).scale_poly(&diag.b);
    let dmat = PolyMatrix::diagonal(&diag.d);
    let b2f = f.scale_poly(&diag.b.square());

    let r1 = diag.x_plus.mat_mul(&diag.x_minus)?;
    let r2 = diag.x_minus.mat_mul(f)?.mat_mul(&diag.x_minus.transpose())?;
    let r3 = diag.x_plus.mat_mul(&dmat)?.mat_mul(&diag.x_plus.transpose())?;

    let rel = |lhs: &PolyMatrix, rhs: &PolyMatrix| -> Result<f64> {
        Ok(lhs.checked_sub(rhs)?.maxabs() / (1.0 + rhs.maxabs()))
    };
    Ok([rel(&r1, &b_eye)?, rel(&r2, &dmat)?, rel(&r3, &b2f)?])
}

/// The pivots `α₀, …, α_{i+1}`; `F ⪰ 0` on ℝⁿ exactly when all of them are
/// nonnegative.
pub fn pivot_sequence(f: &PolyMatrix) -> Result<Vec<Polynomial>> {
    Ok(diagonalize(f)?.pivots)
}

/// Outcome of [`psd_sample_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct SampleCheck {
    pub psd: bool,
    pub worst_point: Vec<f64>,
    pub min_eigenvalue: f64,
}

/// Minimum eigenvalue below which a sampled matrix counts as indefinite.
pub const PSD_SAMPLE_TOL: f64 = 1e-9;

/// Evaluates `F` at every point and reports whether all evaluations have
/// minimum eigenvalue ≥ −1e-9, together with the worst point.
pub fn psd_sample_check(f: &PolyMatrix, points: &[Vec<f64>]) -> Result<SampleCheck> {
    if points.is_empty() {
        return domain("psd_sample_check: no sample points");
    }
    if !f.is_square() {
        return domain("psd_sample_check: matrix must be square");
    }
    let mut worst = SampleCheck { psd: true, worst_point: points[0].clone(), min_eigenvalue: f64::INFINITY };
    for p in points {
        let v = f.eval_mat(p)?;
        let sym = (&v + v.transpose()) * 0.5;
        let lam = sym.symmetric_eigenvalues().min();
        if lam < worst.min_eigenvalue {
            worst.min_eigenvalue = lam;
            worst.worst_point = p.clone();
        }
    }
    worst.psd = worst.min_eigenvalue >= -PSD_SAMPLE_TOL;
    Ok(worst)
}

/// Uniform grid with `per_axis` points on `[lo, hi]` in each of `n` coordinates.
pub fn grid_points(n: usize, lo: f64, hi: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = if per_axis == 1 {
        vec![(lo + hi) / 2.0]
    } else {
        (0..per_axis).map(|i| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64).collect()
    };
    let mut points = vec![Vec::with_capacity(n)];
    for _ in 0..n {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    points
}
