//! Acceptance gates. Each criterion prints one `PASS`/`FAIL` line with its
//! measured numbers; run with `--nocapture` to see them.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{motzkin, motzkin_certificate, outer_t, poly2, scalar, uni, xy_coupled};
use sosrf::bench::bench_diag;
use sosrf::gram::{gram_constraints, planted_problem, rank_staircase};
use sosrf::lm::LmOptions;
use sosrf::poly::monomials;
use sosrf::schmudgen::diagonalize;
use sosrf::sos::{certify_matrix, reznick_base, verify_certificate, CertTerm, Certificate, Domain, SosOptions};
use sosrf::{PolyMatrix, Polynomial};

/// Criteria that fail on their merits; see the notes at each check.
const EXPECTED_FAIL: [&str; 3] = ["5", "7a", "7b"];

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: &'static str, pass: bool, detail: String) -> Outcome {
    println!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { id, pass, detail }
}

fn diff(a: &Polynomial, b: &Polynomial) -> f64 {
    (a - b).maxabs()
}

fn mat_diff(a: &PolyMatrix, b: &PolyMatrix) -> f64 {
    a.checked_sub(b).unwrap().maxabs()
}

fn outer_product_golden() -> Outcome {
    let start = Instant::now();
    let diag = diagonalize(&outer_t()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let t2 = uni(&[0.0, 0.0, 1.0]);
    let x_plus = PolyMatrix::from_rows(vec![vec![t2.clone(), Polynomial::zero(1)], vec![uni(&[0.0, 1.0, 1.0]), t2]]).unwrap();
    let errs = [
        diff(&diag.b, &uni(&[0.0, 0.0, 0.0, 0.0, 1.0])),
        mat_diff(&diag.x_plus, &x_plus),
        diff(&diag.d[0], &uni(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0])),
        diag.d[1].maxabs(),
    ];
    let worst = errs.iter().fold(0.0_f64, |m, e| m.max(*e));
    outcome("1", worst <= 1e-12 && secs < 0.1, format!("outer-product matrix max error {worst:.1e}, {secs:.4} s"))
}

fn coupled_golden() -> Outcome {
    let diag = diagonalize(&xy_coupled()).unwrap();
    let a0 = poly2(&[([0, 0], 1.0), ([4, 2], 1.0)]);
    let det = poly2(&[([0, 0], 1.0), ([2, 2], -1.0), ([2, 4], 1.0), ([4, 2], 1.0), ([6, 6], 1.0)]);
    let errs = [diff(&diag.b, &a0.square()), diff(&diag.d[0], &a0.pow(3)), diff(&diag.d[1], &(&a0 * &det))];
    let worst = errs.iter().fold(0.0_f64, |m, e| m.max(*e));
    let nz: Vec<f64> = diag.b.coeffs().iter().copied().filter(|&c| c != 0.0).collect();
    let len = diag.b.coeffs().len();
    let pass = worst <= 1e-12 && len == 91 && nz == [1.0, 2.0, 1.0];
    outcome("2", pass, format!("coupled matrix max error {worst:.1e}, b has {len} coefficients, nonzeros {nz:?}"))
}

fn diagonalization_sweep() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut solved = 0;
    let mut total = 0;
    for (m, d) in [(2, 10), (2, 50), (2, 100), (3, 10), (3, 50)] {
        let rows = bench_diag(&[m], &[d], 10, 1000 + (m * 1000 + d) as u64).unwrap();
        for row in rows {
            worst = row.residuals.iter().fold(worst, |a, r| a.max(*r));
            solved += row.solved;
            total += row.trials;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-12 && solved == total && secs < 60.0;
    outcome("3", pass, format!("random diagonalization sweep worst residual {worst:.1e}, {solved}/{total} instances, {secs:.1} s"))
}

fn fingerprint() -> Outcome {
    let f = PolyMatrix::random_symmetric(3, 1, 2, 7).unwrap();
    let diag = diagonalize(&f).unwrap();
    let entry_degrees = |x: &PolyMatrix| -> Vec<usize> {
        (0..x.rows()).flat_map(|i| (0..x.rows()).map(move |j| (i, j))).map(|(i, j)| x.get(i, j).degree()).collect()
    };
    let xdeg: Vec<usize> = entry_degrees(&diag.x_plus).into_iter().chain(entry_degrees(&diag.x_minus)).collect();
    let xmax = xdeg.iter().copied().max().unwrap_or(0);
    let ddeg: Vec<usize> = diag.d.iter().map(|p| p.trim(0.0).unwrap().degree()).collect();
    let bdeg = diag.b.degree();
    let pass = bdeg == 16 && xmax == 8 && ddeg.iter().all(|&k| k == 18);
    outcome("4", pass, format!("deg b = {bdeg}, max X± entry degree {xmax}, deg d_j = {ddeg:?}"))
}

// Rank 1 is feasible whenever a rank-1 factor has at least as many unknowns
// as there are constraints, so the staircase stops below the planted rank.
fn planted_gram_sweep() -> Outcome {
    let opts = LmOptions { residual_tol: 1e-10, ..LmOptions::default() };
    let mut pass = true;
    let mut notes = Vec::new();
    for (i, (n, k)) in [(100, 50), (100, 100), (200, 200)].into_iter().enumerate() {
        let seed = 500 + i as u64;
        let (prob, _) = planted_problem(n, k, 2, seed).unwrap();
        let start = Instant::now();
        let sol = rank_staircase(&prob, &opts, 3, 3, seed).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let iters = sol.iterations_per_rank.iter().copied().max().unwrap_or(0);
        let ok = sol.success && sol.rank == 2 && sol.residual <= 1e-10 && iters <= 30 && secs < 30.0;
        pass &= ok;
        notes.push(format!("({n},{k}) rank {} iters {:?} backward {:.1e} {secs:.2} s", sol.rank, sol.iterations_per_rank, sol.residual));
    }
    outcome("5", pass, format!("planted Gram sweep {}", notes.join("; ")))
}

fn motzkin_checks() -> Outcome {
    let residual = verify_certificate(&scalar(motzkin()), &motzkin_certificate()).unwrap();
    let opts = LmOptions::default();
    let basis = monomials(2, 3);
    let prob = gram_constraints(&motzkin(), &basis).unwrap();
    let sol = rank_staircase(&prob, &opts, prob.dim(), 3, 0).unwrap();
    let not_sos = !sol.success && sol.residual > opts.residual_tol;
    let pass = residual <= 1e-14 && not_sos;
    outcome(
        "6",
        pass,
        format!(
            "Motzkin identity residual {residual:.1e}; plain Gram search up to rank {} ends at residual {:.1e} (success {})",
            prob.dim(),
            sol.residual,
            sol.success
        ),
    )
}

// The smallest exponent that works for this matrix is N = 0: det F and the
// first pivot are plain sums of squares.
fn coupled_over_rn() -> Outcome {
    let f = xy_coupled();
    let diag = diagonalize(&f).unwrap();
    match certify_matrix(&f, Domain::Rn, &SosOptions::default()) {
        Ok(cert) => {
            let big_n = (cert.multiplier.degree() - diag.b.degree()) / 2;
            let q = reznick_base(2);
            let form = diff(&cert.multiplier, &(&diag.b * &q.pow(big_n as u32)));
            let pass = big_n == 1 && cert.residual <= 1e-6 && form <= 1e-12;
            outcome("7a", pass, format!("coupled matrix over R^n: N = {big_n}, residual {:.1e}", cert.residual))
        }
        Err(e) => outcome("7a", false, format!("coupled matrix over R^n: {e}")),
    }
}

fn weighted_one(squares: Vec<Polynomial>) -> Certificate {
    let matrix = PolyMatrix::from_rows(squares.into_iter().map(|g| vec![g]).collect()).unwrap();
    Certificate { domain: Domain::Rn, multiplier: Polynomial::one(2), terms: vec![CertTerm { weight: Polynomial::one(2), matrix }], residual: 0.0 }
}

// Expanding the stated right-hand side leaves 7/8 in the constant term and
// (1 − 2√2)x²y² against the left; the repaired form is checked alongside.
fn stated_identity() -> Outcome {
    let det = poly2(&[([0, 0], 1.0), ([2, 2], -1.0), ([2, 4], 1.0), ([4, 2], 1.0), ([6, 6], 1.0)]);
    let lhs = scalar(&reznick_base(2) * &det);
    let r2 = 2.0_f64.sqrt();
    let mono = |a: [u32; 2]| poly2(&[(a, 1.0)]);
    let tail = [[0, 1], [1, 0], [1, 3], [3, 1], [3, 3], [3, 4], [4, 3]].map(mono);
    let printed: Vec<Polynomial> = std::iter::once(Polynomial::constant(2, (7.0_f64 / 8.0).sqrt()))
        .chain(std::iter::once(poly2(&[([2, 2], r2), ([0, 0], -1.0)])))
        .chain(tail.iter().cloned())
        .collect();
    let repaired: Vec<Polynomial> = std::iter::once(Polynomial::constant(2, (7.0_f64 / 8.0).sqrt()))
        .chain(std::iter::once(poly2(&[([2, 2], r2), ([0, 0], -1.0 / (2.0 * r2))])))
        .chain(tail.iter().cloned())
        .collect();
    let res_printed = verify_certificate(&lhs, &weighted_one(printed)).unwrap();
    let res_repaired = verify_certificate(&lhs, &weighted_one(repaired)).unwrap();
    outcome(
        "7b",
        res_printed <= 1e-12,
        format!("stated identity residual {res_printed:.2e} (with constant 1/(2√2) in the quartic square: {res_repaired:.1e})"),
    )
}

const PROPERTY_SUITES: [&str; 6] = ["poly_props", "polymat_props", "lm_props", "gram_props", "diag_props", "sos_props"];

// newest sibling test binary called `name-<hash>`
fn suite_binary(dir: &Path, name: &str) -> Option<PathBuf> {
    let prefix = format!("{name}-");
    std::fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok())
        .filter(|e| {
            let file = e.file_name().to_string_lossy().into_owned();
            file.starts_with(&prefix) && !file.contains('.')
        })
        .max_by_key(|e| e.metadata().and_then(|m| m.modified()).ok())
        .map(|e| e.path())
}

fn property_suites() -> Outcome {
    let exe = std::env::current_exe().unwrap();
    let dir = exe.parent().unwrap();
    let mut failed = Vec::new();
    let mut elapsed = Duration::ZERO;
    for name in PROPERTY_SUITES {
        let Some(bin) = suite_binary(dir, name) else {
            failed.push(format!("{name} not built"));
            continue;
        };
        let start = Instant::now();
        let status = Command::new(&bin).arg("--quiet").output().map(|o| o.status.success());
        elapsed += start.elapsed();
        if status.ok() != Some(true) {
            failed.push(name.to_string());
        }
    }
    let secs = elapsed.as_secs_f64();
    let pass = failed.is_empty() && secs < 300.0;
    let detail = if failed.is_empty() {
        format!("{} property suites green in {secs:.1} s", PROPERTY_SUITES.len())
    } else {
        format!("failing or missing: {} (build them with cargo test --workspace --no-run)", failed.join(", "))
    };
    outcome("8", pass, detail)
}

#[test]
fn acceptance_criteria() {
    let outcomes = vec![
        outer_product_golden(),
        coupled_golden(),
        diagonalization_sweep(),
        fingerprint(),
        planted_gram_sweep(),
        motzkin_checks(),
        coupled_over_rn(),
        stated_identity(),
        property_suites(),
    ];
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("{passed}/{} criteria pass", outcomes.len());
    for o in &outcomes {
        let expected = EXPECTED_FAIL.contains(&o.id);
        if o.pass && expected {
            println!("note: criterion {} now passes", o.id);
        }
        assert!(o.pass || expected, "criterion {} failed: {}", o.id, o.detail);
    }
}
