//! Benchmark harnesses for the diagonalization and the Gram rank search.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Result};
use crate::gram::{planted_problem, rank_staircase};
use crate::lm::LmOptions;
use crate::polymat::{PolyMatrix, PRNG_NAME};
use crate::schmudgen::{diagonalize, verify_diagonalization};

/// Rank of the solutions planted by [`bench_gram`].
pub const PLANTED_RANK: usize = 2;

/// One line of a benchmark table, aggregated over the trials of one
/// parameter tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub params: Vec<(&'static str, usize)>,
    /// Worst value over the trials of each residual column.
    pub residuals: Vec<f64>,
    /// Largest rank over the trials.
    pub rank: Option<usize>,
    /// Largest iteration count over the trials.
    pub iterations: Option<usize>,
    /// Mean wall-clock seconds per trial.
    pub seconds: f64,
    /// Trials that met the success criterion.
    pub solved: usize,
    pub trials: usize,
}

fn check_lists(lists: &[(&str, &[usize])]) -> Result<()> {
    for (name, list) in lists {
        if list.is_empty() {
            return domain(format!("benchmark: empty {name} list"));
        }
    }
    Ok(())
}

/// Random univariate `m×m` instances of degree `d`: worst residuals of the
/// three diagonalization relations and mean time per instance.
pub fn bench_diag(m_list: &[usize], d_list: &[usize], trials: usize, seed: u64) -> Result<Vec<BenchRow>> {
    check_lists(&[("m", m_list), ("d", d_list)])?;
    if trials == 0 {
        return domain("bench-diag: trials must be at least 1");
    }
    if let Some(m) = m_list.iter().find(|&&m| m < 2) {
        return domain(format!("bench-diag: m = {m}, need m ≥ 2"));
    }
    if let Some(d) = d_list.iter().find(|&&d| d < 1) {
        return domain(format!("bench-diag: d = {d}, need d ≥ 1"));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for &m in m_list {
        for &d in d_list {
            let mut worst = [0.0_f64; 3];
            let mut seconds = 0.0;
            let mut solved = 0;
            for _ in 0..trials {
                let f = PolyMatrix::random_symmetric(m, 1, d, master.next_u64())?;
                let start = Instant::now();
                let diag = diagonalize(&f)?;
                seconds += start.elapsed().as_secs_f64();
                let r = verify_diagonalization(&f, &diag)?;
                for (w, v) in worst.iter_mut().zip(r) {
                    *w = w.max(v);
                }
                if r.iter().all(|&v| v <= 1e-12) {
                    solved += 1;
                }
            }
            rows.push(BenchRow {
                params: vec![("m", m), ("d", d)],
                residuals: worst.to_vec(),
                rank: None,
                iterations: None,
                seconds: seconds / trials as f64,
                solved,
                trials,
            });
        }
    }
    Ok(rows)
}

/// Planted rank-2 problems with `n×n` constraint matrices and `k`
/// constraints, solved by the rank staircase.
pub fn bench_gram(
    n_list: &[usize],
    k_list: &[usize],
    trials: usize,
    seed: u64,
    opts: &LmOptions,
    r_max: usize,
    restarts: usize,
) -> Result<Vec<BenchRow>> {
    check_lists(&[("n", n_list), ("k", k_list)])?;
    if trials == 0 {
        return domain("bench-gram: trials must be at least 1");
    }
    for &n in n_list {
        for &k in k_list {
            if k == 0 || k > n * (n + 1) / 2 {
                return domain(format!("bench-gram: k = {k} must lie in 1..=n(n+1)/2 for n = {n}"));
            }
            if r_max > n {
                return domain(format!("bench-gram: rank-max {r_max} exceeds n = {n}"));
            }
        }
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for &n in n_list {
        for &k in k_list {
            let mut backward = 0.0_f64;
            let mut rank = 0;
            let mut iterations = 0;
            let mut seconds = 0.0;
            let mut solved = 0;
            for _ in 0..trials {
                let instance_seed = master.next_u64();
                let (prob, _) = planted_problem(n, k, PLANTED_RANK, instance_seed)?;
                let start = Instant::now();
                let sol = rank_staircase(&prob, opts, r_max, restarts, instance_seed)?;
                seconds += start.elapsed().as_secs_f64();
                backward = backward.max(sol.residual);
                rank = rank.max(sol.rank);
                iterations = iterations.max(sol.iterations_per_rank.last().copied().unwrap_or(0));
                if sol.success {
                    solved += 1;
                }
            }
            rows.push(BenchRow {
                params: vec![("n", n), ("k", k)],
                residuals: vec![backward],
                rank: Some(rank),
                iterations: Some(iterations),
                seconds: seconds / trials as f64,
                solved,
                trials,
            });
        }
    }
    Ok(rows)
}

fn seconds_cell(row: &BenchRow, timing: bool) -> String {
    if timing { format!("{:.6}", row.seconds) } else { "NA".into() }
}

/// CSV of the diagonalization benchmark. With `timing = false` the seconds column
/// reads `NA`, which makes the output a pure function of the seed.
pub fn diag_csv(rows: &[BenchRow], timing: bool) -> String {
    let mut out = String::from("m,d,trials,err_XpXm_bI,err_XmFXmT_D,err_XpDXpT_b2F,seconds,prng\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.1e},{:.1e},{:.1e},{},{}",
            row.params[0].1,
            row.params[1].1,
            row.trials,
            row.residuals[0],
            row.residuals[1],
            row.residuals[2],
            seconds_cell(row, timing),
            PRNG_NAME
        );
    }
    out
}

/// CSV of the Gram benchmark, including the planted rank and success count.
pub fn gram_csv(rows: &[BenchRow], timing: bool) -> String {
    let mut out = String::from("n,k,trials,solved,planted_rank,rank,iters,backward_err,seconds,prng\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.1e},{},{}",
            row.params[0].1,
            row.params[1].1,
            row.trials,
            row.solved,
            PLANTED_RANK,
            row.rank.unwrap_or(0),
            row.iterations.unwrap_or(0),
            row.residuals[0],
            seconds_cell(row, timing),
            PRNG_NAME
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diag_small() {
        let rows = bench_diag(&[2], &[1, 3], 3, 9).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert!(row.residuals.iter().all(|&r| (0.0..=1e-13).contains(&r)), "{row:?}");
            assert!(row.seconds >= 0.0);
            assert_eq!(row.solved, 3);
        }
        let csv = diag_csv(&rows, false);
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv, diag_csv(&bench_diag(&[2], &[1, 3], 3, 9).unwrap(), false));
    }

    #[test]
    fn gram_small() {
        let opts = LmOptions { residual_tol: 1e-10, ..LmOptions::default() };
        let rows = bench_gram(&[10], &[5], 2, 1, &opts, 3, 3).unwrap();
        let row = &rows[0];
        assert!(row.rank.unwrap() <= PLANTED_RANK);
        assert!(row.residuals[0] <= 1e-10);
        assert!(gram_csv(&rows, true).starts_with("n,k,trials,solved,planted_rank"));
    }

    #[test]
    fn validation() {
        assert!(bench_diag(&[1], &[3], 1, 0).is_err());
        assert!(bench_diag(&[2], &[0], 1, 0).is_err());
        assert!(bench_gram(&[3], &[7], 1, 0, &LmOptions::default(), 2, 1).is_err());
    }
}
