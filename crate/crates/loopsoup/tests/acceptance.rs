//! Acceptance checklist: every criterion the library promises, one test per
//! criterion, run under the pinned default configs (`RunConfig::default_for`).
//! Each test prints its own `criterion NN <experiment>: PASS/FAIL` line (use
//! `cargo test --test acceptance -- --nocapture` to see them stream) and
//! enforces the runtime budget the criterion is specified under.

use std::time::{Duration, Instant};

use loopsoup::harness::{run_experiment, RunConfig, StatReport};

fn run(criterion: u8, experiment: &str, budget: Duration) -> StatReport {
    let cfg = RunConfig::default_for(experiment).expect("pinned config");
    let start = Instant::now();
    let report = run_experiment(&cfg, 0).expect("experiment ran");
    let elapsed = start.elapsed();
    println!(
        "criterion {criterion:02} {experiment}: {} ({} rows, {:.1}s)",
        if report.passed { "PASS" } else { "FAIL" },
        report.criteria.len(),
        elapsed.as_secs_f64()
    );
    for c in report.criteria.iter().filter(|c| c.asserted && !c.pass) {
        println!(
            "  failed row: {}  est {:+.6e}  target {:+.6e}  tol {:.3e}",
            c.name, c.estimate, c.target, c.tolerance
        );
    }
    assert!(
        report.recheck(),
        "stored pass flags must agree with re-evaluation"
    );
    assert!(
        elapsed <= budget,
        "{experiment} took {elapsed:?}, budget {budget:?}"
    );
    assert!(report.passed, "criterion {criterion} ({experiment}) failed");
    report
}

#[test]
fn criterion_01_measure_oracle() {
    run(1, "measure-oracle", Duration::from_secs(10));
}

#[test]
fn criterion_02_determinant_identity() {
    run(2, "determinant-identity", Duration::from_secs(10));
}

#[test]
fn criterion_03_poisson_sampling() {
    run(3, "poisson-sampling", Duration::from_secs(60));
}

#[test]
fn criterion_04_massive_thinning() {
    run(4, "massive-thinning", Duration::from_secs(60));
}

#[test]
fn criterion_05_laplace_identity() {
    run(5, "laplace-identity", Duration::from_secs(300));
}

#[test]
fn criterion_06_iso_covariance() {
    run(6, "iso-covariance", Duration::from_secs(600));
}

#[test]
fn criterion_07_sign_exactness() {
    run(7, "sign-exactness", Duration::from_secs(300));
}

#[test]
fn criterion_08_perturbation_coupling() {
    run(8, "perturbation-coupling", Duration::from_secs(600));
}

#[test]
fn criterion_09_brownian_sanity() {
    run(9, "brownian-sanity", Duration::from_secs(300));
}

#[test]
fn criterion_10_geometry() {
    run(10, "geometry", Duration::from_secs(3600));
}

#[test]
fn criterion_11_near_critical() {
    run(11, "near-critical", Duration::from_secs(3600));
}

#[test]
fn criterion_12_determinism() {
    // The probe itself re-runs registered experiments at 1 and 3 workers and
    // compares canonical bytes; on top of that, the whole determinism report
    // must be byte-stable across immediate re-runs.
    let report = run(12, "determinism", Duration::from_secs(3600));
    let cfg = RunConfig::default_for("determinism").expect("pinned config");
    let again = run_experiment(&cfg, 2).expect("re-run");
    assert_eq!(
        report.canonical_json().unwrap(),
        again.canonical_json().unwrap(),
        "same config and seed must give byte-identical reports"
    );
}
