//! Worker-count and re-run determinism probe: the same config and seed must
//! produce byte-identical reports no matter how the replica pool is sized.

use crate::error::Result;
use crate::harness::config::RunConfig;
use crate::harness::report::{Check, CriterionReport, StatReport};

/// Runs a lattice experiment and a plane experiment three times each — one
/// worker, three workers, three workers again — and compares the canonical
/// report bytes. Replica counts are scaled down from the targets' defaults;
/// determinism does not need their full statistical weight.
pub fn determinism_probe(cfg: &RunConfig, _workers: usize) -> Result<StatReport> {
    let targets: [(&str, u64); 2] = [
        ("poisson-sampling", cfg.replicas.max(1)),
        ("brownian-sanity", (cfg.replicas / 20).max(100)),
    ];
    let mut rows = Vec::new();
    for (name, reps) in targets {
        let exp = crate::harness::lookup_experiment(name)?;
        let mut sub = RunConfig::default_for(name)?;
        sub.replicas = reps;
        sub.seed = cfg.seed;
        sub.out = None;
        let one = (exp.runner)(&sub, 1)?.canonical_json()?;
        let three = (exp.runner)(&sub, 3)?.canonical_json()?;
        let again = (exp.runner)(&sub, 3)?.canonical_json()?;
        let identical = one == three && three == again;
        rows.push(
            CriterionReport::new(
                &format!("bytes-identical-{name}"),
                if identical { 1.0 } else { 0.0 },
                1.0,
                0.0,
                Check::AbsWithin,
            )
            .replicas(reps)
            .cutoff("workers_a", 1.0)
            .cutoff("workers_b", 3.0),
        );
    }
    Ok(StatReport::new(cfg, rows))
}
