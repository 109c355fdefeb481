//! Levenberg–Marquardt trust-region solver for nonlinear least squares.
//!
//! Minimizes `‖F(x)‖₂²` for a residual map `F: ℝᴺ → ℝˡ` with a caller-supplied
//! Jacobian. Each iteration minimizes the linear model `‖F + J·p‖` over the
//! ellipsoid `‖D·p‖ ≤ Δ`, where `D` holds the largest Jacobian column norms
//! seen so far. The subproblem is solved through an SVD of the scaled
//! Jacobian, which makes the secular equation for the damping parameter a
//! scalar root find.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalingMode {
    Identity,
    ColumnNorm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmOptions {
    /// Relative decrease of `‖F‖²` on an accepted step below which the run stops.
    pub step_tol: f64,
    /// Absolute `‖F‖₂` below which the run stops with success.
    pub residual_tol: f64,
    pub max_iters: usize,
    /// Initial trust radius as a multiple of the scaled length of the first
    /// Gauss–Newton step, so `1.0` makes the first trial a full Gauss–Newton step.
    pub initial_radius: f64,
    pub scaling_mode: ScalingMode,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            step_tol: 1e-12,
            residual_tol: 1e-9,
            max_iters: 200,
            initial_radius: 1.0,
            scaling_mode: ScalingMode::ColumnNorm,
        }
    }
}

impl LmOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_tol > 0.0) || !(self.residual_tol > 0.0) {
            return domain("lm options: tolerances must be positive");
        }
        if self.max_iters == 0 {
            return domain("lm options: max_iters must be at least 1");
        }
        if !(self.initial_radius > 0.0) {
            return domain("lm options: initial_radius must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmStatus {
    ResidualConverged,
    StepConverged,
    MaxIters,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub residual_norm: f64,
    pub radius: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug)]
pub struct LmResult {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub status: LmStatus,
    pub trace: Vec<TraceRow>,
}

impl LmResult {
    /// Iteration trace as CSV: `iter,residual_norm,radius,accepted`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,residual_norm,radius,accepted\n");
        for row in &self.trace {
            let _ = writeln!(out, "{},{:e},{:e},{}", row.iter, row.residual_norm, row.radius, row.accepted);
        }
        out
    }
}

// gain-ratio thresholds and radius factors
const SHRINK_BELOW: f64 = 0.25;
const GROW_ABOVE: f64 = 0.75;
const SHRINK_FACTOR: f64 = 0.5;
const GROW_FACTOR: f64 = 2.0;
const ACCEPT_RATIO: f64 = 1e-4;

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Runs Levenberg–Marquardt from `x0`.
pub fn lm_minimize<R, J>(mut residual: R, mut jacobian: J, x0: &[f64], opts: &LmOptions) -> Result<LmResult>
where
    R: FnMut(&[f64]) -> Vec<f64>,
    J: FnMut(&[f64]) -> DMatrix<f64>,
{
    opts.validate()?;
    let nvar = x0.len();
    let mut x = x0.to_vec();
    let mut fx = residual(&x);
    let l = fx.len();
    if fx.iter().any(|v| !v.is_finite()) {
        return domain("lm_minimize: residual is not finite at the starting point");
    }
    let mut fnorm_sq = norm_sq(&fx);
    let mut trace = vec![TraceRow { iter: 0, residual_norm: fnorm_sq.sqrt(), radius: f64::NAN, accepted: true }];
    let finish = |x: Vec<f64>, fnorm_sq: f64, iterations, status, trace| LmResult {
        x,
        residual_norm: fnorm_sq.sqrt(),
        iterations,
        status,
        trace,
    };
    if fnorm_sq.sqrt() < opts.residual_tol {
        return Ok(finish(x, fnorm_sq, 0, LmStatus::ResidualConverged, trace));
    }

    let mut scale = vec![0.0_f64; nvar];
    let mut radius = f64::NAN;
    let mut jac = jacobian(&x);
    if jac.nrows() != l || jac.ncols() != nvar {
        return domain(format!(
            "lm_minimize: jacobian is {}x{}, expected {l}x{nvar}",
            jac.nrows(),
            jac.ncols()
        ));
    }

    for iter in 1..=opts.max_iters {
        for (j, s) in scale.iter_mut().enumerate() {
            let col = jac.column(j).norm();
            *s = match opts.scaling_mode {
                ScalingMode::Identity => 1.0,
                ScalingMode::ColumnNorm => s.max(col),
            };
        }
        let dscale: Vec<f64> = scale.iter().map(|&s| if s > 0.0 { s } else { 1.0 }).collect();

        let mut scaled = jac.clone();
        for (j, &s) in dscale.iter().enumerate() {
            scaled.column_mut(j).scale_mut(1.0 / s);
        }
        let fvec = DVector::from_column_slice(&fx);
        let gradient = scaled.transpose() * &fvec;
        if gradient.norm() == 0.0 {
            return Ok(finish(x, fnorm_sq, iter - 1, LmStatus::StepConverged, trace));
        }

        let sub = Subproblem::new(&scaled, &fvec);
        if radius.is_nan() {
            radius = opts.initial_radius * sub.gauss_newton().norm();
        }
        let q = sub.step(radius);
        let qnorm = q.norm();
        let step: Vec<f64> = q.iter().zip(&dscale).map(|(v, s)| v / s).collect();
        let model = &fvec + &jac * DVector::from_column_slice(&step);
        let predicted = fnorm_sq - model.norm_squared();

        let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        let ftrial = residual(&trial);
        let trial_ok = ftrial.len() == l && ftrial.iter().all(|v| v.is_finite());
        let trial_sq = if trial_ok { norm_sq(&ftrial) } else { f64::INFINITY };
        let actual = fnorm_sq - trial_sq;
        let ratio = if predicted > 0.0 && trial_ok { actual / predicted } else { -1.0 };

        if ratio < SHRINK_BELOW {
            radius = SHRINK_FACTOR * radius.min(qnorm);
        } else if ratio > GROW_ABOVE {
            radius = radius.max(GROW_FACTOR * qnorm);
        }

        let accepted = ratio > ACCEPT_RATIO && actual > 0.0;
        if accepted {
            let previous = fnorm_sq;
            x = trial;
            fx = ftrial;
            fnorm_sq = trial_sq;
            trace.push(TraceRow { iter, residual_norm: fnorm_sq.sqrt(), radius, accepted });
            if fnorm_sq.sqrt() < opts.residual_tol {
                return Ok(finish(x, fnorm_sq, iter, LmStatus::ResidualConverged, trace));
            }
            if ((fnorm_sq - previous) / previous).abs() <= opts.step_tol {
                return Ok(finish(x, fnorm_sq, iter, LmStatus::StepConverged, trace));
            }
            jac = jacobian(&x);
        } else {
            trace.push(TraceRow { iter, residual_norm: fnorm_sq.sqrt(), radius, accepted });
            let xnorm = x.iter().zip(&dscale).map(|(a, b)| (a * b).powi(2)).sum::<f64>().sqrt();
            if radius <= f64::EPSILON * xnorm.max(f64::MIN_POSITIVE) {
                return Ok(finish(x, fnorm_sq, iter, LmStatus::StepConverged, trace));
            }
        }
    }
    let iterations = opts.max_iters;
    Ok(finish(x, fnorm_sq, iterations, LmStatus::MaxIters, trace))
}

/// Trust-region subproblem `min ‖f + A·q‖` s.t. `‖q‖ ≤ Δ`, diagonalized by
/// an SVD of `A`.
struct Subproblem {
    sigma: DVector<f64>,
    /// `Uᵀf`
    g: DVector<f64>,
    vt: DMatrix<f64>,
    cutoff: f64,
}

impl Subproblem {
    fn new(a: &DMatrix<f64>, f: &DVector<f64>) -> Self {
        let svd = a.clone().svd(true, true);
        let u = svd.u.expect("u requested");
        let vt = svd.v_t.expect("v requested");
        let sigma = svd.singular_values;
        let g = u.transpose() * f;
        let cutoff = sigma.max() * 1e-14 * (a.nrows().max(a.ncols()) as f64);
        Self { sigma, g, vt, cutoff }
    }

    // coordinates of q(λ) in the right singular basis
    fn coords(&self, lambda: f64) -> DVector<f64> {
        DVector::from_fn(self.sigma.len(), |i, _| {
            let s = self.sigma[i];
            if lambda == 0.0 {
                if s > self.cutoff { -self.g[i] / s } else { 0.0 }
            } else {
                -s * self.g[i] / (s * s + lambda)
            }
        })
    }

    fn gauss_newton(&self) -> DVector<f64> {
        self.coords(0.0)
    }

    fn step(&self, radius: f64) -> DVector<f64> {
        let gauss_newton = self.gauss_newton();
        if gauss_newton.norm() <= radius {
            return self.vt.transpose() * gauss_newton;
        }
        // ‖q(λ)‖ decreases monotonically in λ; bracket and bisect on log λ.
        let grad_norm = self.sigma.component_mul(&self.g).norm();
        let mut hi = (grad_norm / radius).max(f64::MIN_POSITIVE);
        while self.coords(hi).norm() > radius {
            hi *= 2.0;
        }
        let mut lo = hi;
        while lo > f64::MIN_POSITIVE && self.coords(lo).norm() <= radius {
            lo *= 1e-3;
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if self.coords(mid).norm() > radius {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo < 1.0 + 1e-10 {
                break;
            }
        }
        self.vt.transpose() * self.coords(hi)
    }
}

/// Largest entrywise deviation `|J − J_fd| / (1 + |J|)` between the analytic
/// Jacobian and central differences with step `h`.
pub fn check_jacobian<R, J>(mut residual: R, mut jacobian: J, x: &[f64], h: f64) -> Result<f64>
where
    R: FnMut(&[f64]) -> Vec<f64>,
    J: FnMut(&[f64]) -> DMatrix<f64>,
{
    if !(h > 0.0) {
        return domain("check_jacobian: step must be positive");
    }
    let analytic = jacobian(x);
    if analytic.iter().any(|v| !v.is_finite()) {
        return domain("check_jacobian: analytic jacobian is not finite");
    }
    let l = residual(x).len();
    if analytic.nrows() != l || analytic.ncols() != x.len() {
        return domain("check_jacobian: jacobian shape does not match residual");
    }
    let mut worst: f64 = 0.0;
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let plus = residual(&probe);
        probe[j] = x[j] - h;
        let minus = residual(&probe);
        probe[j] = x[j];
        for i in 0..l {
            let fd = (plus[i] - minus[i]) / (2.0 * h);
            if !fd.is_finite() {
                return domain("check_jacobian: residual is not finite near x");
            }
            let a = analytic[(i, j)];
            worst = worst.max((a - fd).abs() / (1.0 + a.abs()));
        }
    }
    Ok(worst)
}
