//! Low-rank Gram matrices through a Cholesky-factor least-squares problem.
//!
//! A polynomial `f` is a sum of `r` squares iff `f = πᵀGπ` for a PSD Gram
//! matrix `G` of rank `r`. Writing `G = YYᵀ` with `Y ∈ ℝ^{e×r}` turns the
//! semidefinite constraint into the unconstrained system `ℓ(YYᵀ) = u`, solved
//! for increasing `r` by Levenberg–Marquardt.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::lm::{lm_minimize, LmOptions};
use crate::poly::Polynomial;

/// Symmetric constraint matrix `Aᵢ`.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintMatrix {
    Dense(DMatrix<f64>),
    /// Entries `(row, col, value)`; both triangles are listed explicitly.
    Sparse { dim: usize, entries: Vec<(usize, usize, f64)> },
}

impl ConstraintMatrix {
    pub fn dim(&self) -> usize {
        match self {
            Self::Dense(a) => a.nrows(),
            Self::Sparse { dim, .. } => *dim,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Self::Dense(a) => a.clone(),
            Self::Sparse { dim, entries } => {
                let mut a = DMatrix::zeros(*dim, *dim);
                for &(i, j, v) in entries {
                    a[(i, j)] += v;
                }
                a
            }
        }
    }

    /// `Tr(AᵀX)`.
    pub fn trace_with(&self, x: &DMatrix<f64>) -> f64 {
        match self {
            Self::Dense(a) => a.component_mul(x).sum(),
            Self::Sparse { entries, .. } => entries.iter().map(|&(i, j, v)| v * x[(i, j)]).sum(),
        }
    }

    /// `A·Y`.
    pub fn mul(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Self::Dense(a) => a * y,
            Self::Sparse { dim, entries } => {
                let mut out = DMatrix::zeros(*dim, y.ncols());
                for &(i, j, v) in entries {
                    for k in 0..y.ncols() {
                        out[(i, k)] += v * y[(j, k)];
                    }
                }
                out
            }
        }
    }
}

/// A diagonal block of the Gram matrix: rows `start..start+len` of `Y`
/// square into polynomials that get multiplied by `weight`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramBlock {
    pub weight: Polynomial,
    pub start: usize,
    pub len: usize,
}

/// The system `ℓ(X) = u` with `ℓ(X)ᵢ = Tr(AᵢᵀX)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramProblem {
    /// Monomial vector `π`, concatenated over blocks. Empty for abstract problems.
    pub basis: Vec<Vec<u32>>,
    pub blocks: Vec<GramBlock>,
    pub constraint_mats: Vec<ConstraintMatrix>,
    pub target: Vec<f64>,
    /// Exponent `γ` of each constraint, parallel to `target`.
    pub monomials: Vec<Vec<u32>>,
    dim: usize,
}

/// Builds the single-block problem `f = πᵀGπ`.
pub fn gram_constraints(f: &Polynomial, basis: &[Vec<u32>]) -> Result<GramProblem> {
    gram_constraints_weighted(f, &[(Polynomial::one(f.nvars()), basis.to_vec())])
}

/// Builds `f = Σ_k w_k·π_kᵀG_kπ_k` with one PSD block per `(w_k, π_k)`.
pub fn gram_constraints_weighted(f: &Polynomial, blocks: &[(Polynomial, Vec<Vec<u32>>)]) -> Result<GramProblem> {
    let n = f.nvars();
    if blocks.is_empty() {
        return domain("gram_constraints: no basis blocks");
    }
    let mut basis = Vec::new();
    let mut gram_blocks = Vec::new();
    let mut cells: BTreeMap<Vec<u32>, Vec<(usize, usize, f64)>> = BTreeMap::new();
    for (weight, block_basis) in blocks {
        if weight.nvars() != n {
            return domain("gram_constraints: weight has the wrong number of variables");
        }
        if let Some(bad) = block_basis.iter().find(|b| b.len() != n) {
            return domain(format!("gram_constraints: basis monomial {bad:?} has the wrong length"));
        }
        let start = basis.len();
        let weight_terms = weight.terms();
        for (i, bi) in block_basis.iter().enumerate() {
            for (j, bj) in block_basis.iter().enumerate() {
                for (delta, c) in &weight_terms {
                    let gamma: Vec<u32> = (0..n).map(|v| bi[v] + bj[v] + delta[v]).collect();
                    cells.entry(gamma).or_default().push((start + i, start + j, *c));
                }
            }
        }
        basis.extend(block_basis.iter().cloned());
        gram_blocks.push(GramBlock { weight: weight.clone(), start, len: block_basis.len() });
    }
    let outside: Vec<Vec<u32>> =
        f.terms().into_iter().map(|(a, _)| a).filter(|a| !cells.contains_key(a)).collect();
    if !outside.is_empty() {
        return domain(format!("gram_constraints: monomials {outside:?} of f are not reachable from the basis"));
    }
    let dim = basis.len();
    let mut monomials = Vec::with_capacity(cells.len());
    let mut constraint_mats = Vec::with_capacity(cells.len());
    let mut target = Vec::with_capacity(cells.len());
    for (gamma, entries) in cells {
        target.push(f.coeff(&gamma));
        monomials.push(gamma);
        constraint_mats.push(ConstraintMatrix::Sparse { dim, entries });
    }
    Ok(GramProblem { basis, blocks: gram_blocks, constraint_mats, target, monomials, dim })
}

impl GramProblem {
    /// Abstract problem from explicit matrices.
    pub fn from_matrices(constraint_mats: Vec<ConstraintMatrix>, target: Vec<f64>) -> Result<Self> {
        let Some(first) = constraint_mats.first() else {
            return domain("GramProblem: no constraints");
        };
        let dim = first.dim();
        if constraint_mats.iter().any(|a| a.dim() != dim) || target.len() != constraint_mats.len() {
            return domain("GramProblem: constraint matrices and target disagree in shape");
        }
        Ok(Self { basis: Vec::new(), blocks: Vec::new(), constraint_mats, target, monomials: Vec::new(), dim })
    }

    /// `e`, the side length of the Gram matrix.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    /// `ℓ(X)`.
    pub fn apply(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.constraint_mats.iter().map(|a| a.trace_with(x)).collect()
    }

    /// The polynomials whose weighted squares make up `πᵀYYᵀπ`, one list per
    /// block: column `k` of the block rows of `Y` gives `Σᵢ Y[i,k]·x^{πᵢ}`.
    pub fn squares(&self, y: &DMatrix<f64>) -> Result<Vec<Vec<Polynomial>>> {
        if y.nrows() != self.dim || self.basis.len() != self.dim {
            return domain("GramProblem::squares: factor does not match the basis");
        }
        let n = self.basis.first().map_or(1, Vec::len);
        self.blocks
            .iter()
            .map(|blk| {
                (0..y.ncols())
                    .map(|k| {
                        let terms: Vec<(Vec<u32>, f64)> =
                            (0..blk.len).map(|i| (self.basis[blk.start + i].clone(), y[(blk.start + i, k)])).collect();
                        Polynomial::from_terms(n, &terms)
                    })
                    .collect()
            })
            .collect()
    }
}

/// `F(Y) = ℓ(YYᵀ) − u` and its Jacobian with respect to `vec(Y)`.
pub fn residual_and_jacobian(y: &DMatrix<f64>, prob: &GramProblem) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if y.nrows() != prob.dim {
        return domain(format!("residual_and_jacobian: Y has {} rows, expected {}", y.nrows(), prob.dim));
    }
    let e = y.nrows();
    let r = y.ncols();
    let mut f = Vec::with_capacity(prob.len());
    let mut jac = DMatrix::zeros(prob.len(), e * r);
    for (i, (a, u)) in prob.constraint_mats.iter().zip(&prob.target).enumerate() {
        let ay = a.mul(y);
        f.push(ay.component_mul(y).sum() - u);
        for (k, v) in ay.iter().enumerate() {
            jac[(i, k)] = 2.0 * v;
        }
    }
    Ok((f, jac))
}

fn residual_only(y: &DMatrix<f64>, prob: &GramProblem) -> Vec<f64> {
    prob.constraint_mats.iter().zip(&prob.target).map(|(a, u)| a.mul(y).component_mul(y).sum() - u).collect()
}

/// Result of [`rank_staircase`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramSolution {
    #[serde(with = "matrix_rows")]
    pub factor: DMatrix<f64>,
    pub rank: usize,
    pub residual: f64,
    /// LM iterations of the reported run at each rank level tried.
    #[serde(rename = "iters")]
    pub iterations_per_rank: Vec<usize>,
    pub success: bool,
}

/// Runs `restarts` seeded LM solves for each rank `1..=r_max` and returns
/// the first run with `‖F‖₂ < τ`. Without success, returns the attempt with
/// the smallest residual and `success = false`.
pub fn rank_staircase(
    prob: &GramProblem,
    opts: &LmOptions,
    r_max: usize,
    restarts: usize,
    seed: u64,
) -> Result<GramSolution> {
    opts.validate()?;
    let e = prob.dim;
    if r_max == 0 || r_max > e {
        return domain(format!("rank_staircase: r_max must be in 1..={e}"));
    }
    if restarts == 0 {
        return domain("rank_staircase: restarts must be at least 1");
    }
    if prob.is_empty() {
        return domain("rank_staircase: problem has no constraints");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut iterations_per_rank = Vec::new();
    let mut best: Option<GramSolution> = None;
    for r in 1..=r_max {
        let scale = 1.0 / ((e * r) as f64).sqrt();
        let mut level_best: Option<(f64, usize, DMatrix<f64>)> = None;
        for _ in 0..restarts {
            let y0: Vec<f64> = (0..e * r).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
            let run = lm_minimize(
                |x| residual_only(&DMatrix::from_column_slice(e, r, x), prob),
                |x| residual_and_jacobian(&DMatrix::from_column_slice(e, r, x), prob).expect("shape checked").1,
                &y0,
                opts,
            )?;
            let y = DMatrix::from_column_slice(e, r, &run.x);
            if run.residual_norm < opts.residual_tol {
                iterations_per_rank.push(run.iterations);
                return Ok(GramSolution {
                    factor: y,
                    rank: r,
                    residual: run.residual_norm,
                    iterations_per_rank,
                    success: true,
                });
            }
            if level_best.as_ref().is_none_or(|(res, _, _)| run.residual_norm < *res) {
                level_best = Some((run.residual_norm, run.iterations, y));
            }
        }
        let (res, iters, y) = level_best.expect("restarts >= 1");
        iterations_per_rank.push(iters);
        if best.as_ref().is_none_or(|b| res < b.residual) {
            best = Some(GramSolution { factor: y, rank: r, residual: res, iterations_per_rank: Vec::new(), success: false });
        }
    }
    let mut out = best.expect("r_max >= 1");
    out.iterations_per_rank = iterations_per_rank;
    Ok(out)
}

/// `YYᵀ`.
pub fn gram_from_factor(y: &DMatrix<f64>) -> DMatrix<f64> {
    y * y.transpose()
}

/// Random instance with a planted rank-`rank` solution: symmetric `Aᵢ` and
/// `Y*` with iid uniform(0,1) entries, `u = ℓ(Y*Y*ᵀ)`.
pub fn planted_problem(e: usize, l: usize, rank: usize, seed: u64) -> Result<(GramProblem, DMatrix<f64>)> {
    if e == 0 || l == 0 || rank == 0 {
        return domain("planted_problem: sizes must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mats: Vec<ConstraintMatrix> = (0..l)
        .map(|_| {
            let mut a = DMatrix::zeros(e, e);
            for j in 0..e {
                for i in 0..=j {
                    let v: f64 = rng.random();
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
            ConstraintMatrix::Dense(a)
        })
        .collect();
    let ystar = DMatrix::from_fn(e, rank, |_, _| rng.random::<f64>());
    let g = gram_from_factor(&ystar);
    let target = mats.iter().map(|a| a.trace_with(&g)).collect();
    Ok((GramProblem::from_matrices(mats, target)?, ystar))
}

pub(crate) mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix"));
        }
        Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}
