//! Experiment harness: configuration, the replica pool, report artifacts, and
//! a registry of the named verification experiments the CLI and the
//! acceptance suite dispatch through.

pub mod config;
pub mod determinism;
pub mod field;
pub mod oracle;
pub mod plane;
pub mod pool;
pub mod report;
pub mod scaling;

pub use config::{Cutoffs, RunConfig, CONFIG_VERSION};
pub use pool::run_replicas;
pub use report::{Check, CriterionReport, StatReport, REPORT_VERSION};
pub use scaling::{dichotomy_experiment, scaling_comparison};

use crate::error::{Error, Result};
use std::time::Instant;

/// A named verification experiment. `criterion` is its index in the
/// acceptance checklist (`tests/acceptance.rs`); the registry covers each
/// index exactly once.
#[derive(Debug)]
pub struct Experiment {
    pub name: &'static str,
    pub criterion: u8,
    pub about: &'static str,
    pub runner: fn(&RunConfig, usize) -> Result<StatReport>,
}

pub static EXPERIMENTS: &[Experiment] = &[
    Experiment {
        name: "measure-oracle",
        criterion: 1,
        about: "enumerated unrooted weights equal rooted rotation sums and the return-probability table",
        runner: oracle::measure_oracle,
    },
    Experiment {
        name: "determinant-identity",
        criterion: 2,
        about: "total loop mass equals -ln det(I-P); truncation plus tail bound brackets it",
        runner: oracle::determinant_identity,
    },
    Experiment {
        name: "poisson-sampling",
        criterion: 3,
        about: "two-step loop counts are Poisson with the tabulated intensity",
        runner: oracle::poisson_sampling,
    },
    Experiment {
        name: "massive-thinning",
        criterion: 4,
        about: "mark-thinned critical soup matches the direct massive soup in law",
        runner: oracle::massive_thinning,
    },
    Experiment {
        name: "laplace-identity",
        criterion: 5,
        about: "occupation-field Laplace transform matches the determinant ratio",
        runner: field::laplace_identity,
    },
    Experiment {
        name: "iso-covariance",
        criterion: 6,
        about: "signed square-root field has free-field covariance and square 2L",
        runner: field::iso_covariance,
    },
    Experiment {
        name: "sign-exactness",
        criterion: 7,
        about: "sign-chain marginals match exhaustive enumeration in total variation",
        runner: field::sign_exactness,
    },
    Experiment {
        name: "perturbation-coupling",
        criterion: 8,
        about: "field disagreement across a domain change equals the flagged-loop probability",
        runner: field::perturbation_experiment,
    },
    Experiment {
        name: "brownian-sanity",
        criterion: 9,
        about: "plane-soup counts, duration law, and covariance under z -> 2z",
        runner: plane::brownian_sanity,
    },
    Experiment {
        name: "geometry",
        criterion: 10,
        about: "carpet dimension, cluster-diameter tails, vacant crossings",
        runner: plane::geometry_experiment,
    },
    Experiment {
        name: "near-critical",
        criterion: 11,
        about: "walk-vs-Brownian scaling comparison and the mass-sequence survival dichotomy",
        runner: scaling::near_critical,
    },
    Experiment {
        name: "determinism",
        criterion: 12,
        about: "byte-identical reports across worker counts and re-runs",
        runner: determinism::determinism_probe,
    },
];

pub fn experiment_names() -> Vec<&'static str> {
    EXPERIMENTS.iter().map(|e| e.name).collect()
}

pub fn lookup_experiment(name: &str) -> Result<&'static Experiment> {
    EXPERIMENTS
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownExperiment {
            name: name.to_owned(),
            known: experiment_names().join(", "),
        })
}

/// Validate, dispatch, stamp the wall-clock time, and persist artifacts when
/// the config names an output directory.
pub fn run_experiment(cfg: &RunConfig, workers: usize) -> Result<StatReport> {
    cfg.validate()?;
    let exp = lookup_experiment(&cfg.experiment)?;
    let start = Instant::now();
    let mut report = (exp.runner)(cfg, workers)?;
    report
        .timings
        .push(("total".to_owned(), start.elapsed().as_secs_f64()));
    if let Some(dir) = &cfg.out {
        report.write(dir)?;
    }
    Ok(report)
}
