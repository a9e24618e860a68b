//! Exact-oracle experiments: loop-measure identities, determinant identities,
//! Poisson count statistics, and the massive-thinning law.

use crate::error::Result;
use crate::harness::config::RunConfig;
use crate::harness::pool::run_replicas;
use crate::harness::report::{Check, CriterionReport, StatReport};
use crate::lattice::{killing_from_mass, transition_kernel, Domain, DomainSpec, Killing};
use crate::loop_measure::{
    enumerate_loops, return_probabilities, total_mass, truncated_mass, truncation_tail,
};
use crate::rng::StreamKey;
use crate::soup::{sample_soup, thin_to_massive};
use crate::stats::{binomial_stderr, poisson_gof};

fn two_site() -> Result<Domain> {
    Domain::from_spec(&DomainSpec::Sites {
        sites: vec![(0, 0), (1, 0)],
    })
}

/// Enumeration vs closed forms: every unrooted class weight must equal its
/// rotation-sum of rooted weights, and rooted (root, length) totals must equal
/// the return-probability table.
pub fn measure_oracle(cfg: &RunConfig, _workers: usize) -> Result<StatReport> {
    let maxlen = cfg.cutoffs.maxlen;
    let mut rows = Vec::new();
    for (label, domain) in [
        ("2site", two_site()?),
        ("3x3", Domain::from_spec(cfg.domain.as_ref().unwrap())?),
    ] {
        let killing = Killing::critical(domain.len());
        let enumeration = enumerate_loops(&domain, &killing, maxlen, None)?;
        let p = transition_kernel(&domain, &killing)?;
        let table = return_probabilities(&p, maxlen)?;

        let mut rot_dev = 0.0f64;
        for class in &enumeration.classes {
            rot_dev = rot_dev.max((class.unrooted_weight - class.rooted_sum).abs());
        }
        rows.push(
            CriterionReport::new(
                &format!("rotation-sum-{label}"),
                rot_dev,
                0.0,
                1e-12,
                Check::AbsWithin,
            )
            .cutoff("maxlen", maxlen as f64),
        );

        let mut table_dev = 0.0f64;
        for (x, by_len) in enumeration.rooted_by_root_len.iter().enumerate() {
            for (ni, &rooted) in by_len.iter().enumerate() {
                let len = 2 * (ni + 1);
                let expect = table.q(len, x) / len as f64;
                table_dev = table_dev.max((rooted - expect).abs());
            }
        }
        rows.push(
            CriterionReport::new(
                &format!("root-length-table-{label}"),
                table_dev,
                0.0,
                1e-12,
                Check::AbsWithin,
            )
            .cutoff("maxlen", maxlen as f64),
        );
    }
    Ok(StatReport::new(cfg, rows))
}

/// Total loop mass against the log-determinant, and the truncated-mass
/// bracket truncated ≤ total ≤ truncated + tail.
pub fn determinant_identity(cfg: &RunConfig, _workers: usize) -> Result<StatReport> {
    let maxlen = cfg.cutoffs.maxlen;
    let mut rows = Vec::new();

    let two = two_site()?;
    let p2 = transition_kernel(&two, &Killing::critical(two.len()))?;
    rows.push(CriterionReport::new(
        "two-site-log-det",
        total_mass(&p2)?,
        (16.0f64 / 15.0).ln(),
        1e-12,
        Check::AbsWithin,
    ));

    let domain = Domain::from_spec(cfg.domain.as_ref().unwrap())?;
    let p = transition_kernel(&domain, &Killing::critical(domain.len()))?;
    let total = total_mass(&p)?;
    let truncated = truncated_mass(&p, maxlen)?;
    let tail = truncation_tail(&p, maxlen)?;
    rows.push(
        CriterionReport::new(
            "truncated-below-total",
            total - truncated,
            0.0,
            1e-12,
            Check::AtLeast,
        )
        .cutoff("maxlen", maxlen as f64)
        .bias("truncation_tail", tail),
    );
    rows.push(
        CriterionReport::new(
            "tail-bound-covers-total",
            truncated + tail - total,
            0.0,
            1e-12,
            Check::AtLeast,
        )
        .cutoff("maxlen", maxlen as f64)
        .bias("truncation_tail", tail),
    );
    Ok(StatReport::new(cfg, rows))
}

/// Loop counts in repeated soups are Poisson with the measure's intensity:
/// counts of the 2-step class on the two-site domain vs Poisson(λ/16).
pub fn poisson_sampling(cfg: &RunConfig, workers: usize) -> Result<StatReport> {
    let domain = Domain::from_spec(cfg.domain.as_ref().unwrap())?;
    let killing = Killing::critical(domain.len());
    let maxlen = cfg.cutoffs.maxlen;
    let p = transition_kernel(&domain, &killing)?;
    let table = return_probabilities(&p, maxlen)?;
    // total unrooted intensity at length 2 = λ Σ_x q(2,x)/2
    let mean2: f64 = cfg.lambda
        * (0..domain.len())
            .map(|x| table.q(2, x) / 2.0)
            .sum::<f64>();

    let root = StreamKey::root(cfg.seed).child("poisson-sampling");
    let counts: Vec<u64> = run_replicas(cfg.replicas, workers, |r| {
        let soup = sample_soup(
            &domain,
            &killing,
            cfg.lambda,
            maxlen,
            root.child("replica").index(r),
        )?;
        Ok(soup.count_len(2) as u64)
    })?;

    let gof = poisson_gof(&counts, mean2)?;
    let mean_emp = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
    let se_mean = (mean2 / counts.len() as f64).sqrt();
    let rows = vec![
        CriterionReport::new("count-gof-p", gof.p_value, 0.01, 0.0, Check::AtLeast)
            .replicas(cfg.replicas)
            .cutoff("maxlen", maxlen as f64),
        CriterionReport::new("count-mean", mean_emp, mean2, 4.0 * se_mean, Check::AbsWithin)
            .stderr(se_mean)
            .replicas(cfg.replicas),
    ];
    Ok(StatReport::new(cfg, rows))
}

/// The e^{-R} thinning law. Analytically the thinned critical intensity table
/// must equal the direct massive table with k = 4(e^{m²}−1); empirically,
/// 2-step loops at m² ≡ 0.5 survive with probability e^{-1}.
pub fn massive_thinning(cfg: &RunConfig, workers: usize) -> Result<StatReport> {
    let mass = cfg.mass_field()?;
    let maxlen = cfg.cutoffs.maxlen;
    let mut rows = Vec::new();

    // analytic: on the configured domain, q_massive(len,x) = q_critical(len,x)·e^{−m²·len}
    let domain = Domain::from_spec(cfg.domain.as_ref().unwrap())?;
    let crit = Killing::critical(domain.len());
    let killed = killing_from_mass(&domain, &mass)?;
    let t_crit = return_probabilities(&transition_kernel(&domain, &crit)?, maxlen)?;
    let t_mass = return_probabilities(&transition_kernel(&domain, &killed)?, maxlen)?;
    let s0 = domain.site(0);
    let msq = mass.sq((s0.x as f64, s0.y as f64))?; // constant by construction of the default config
    let mut dev = 0.0f64;
    for x in 0..domain.len() {
        for n in 1..=maxlen / 2 {
            let len = 2 * n;
            let thinned = t_crit.q(len, x) * (-msq * len as f64).exp();
            dev = dev.max((t_mass.q(len, x) - thinned).abs());
        }
    }
    rows.push(
        CriterionReport::new("thinned-vs-massive-table", dev, 0.0, 1e-12, Check::AbsWithin)
            .cutoff("maxlen", maxlen as f64),
    );

    // empirical: two-site survival of 2-step loops
    let two = two_site()?;
    let crit2 = Killing::critical(two.len());
    let root = StreamKey::root(cfg.seed).child("massive-thinning");
    let pairs: Vec<(u64, u64)> = run_replicas(cfg.replicas, workers, |r| {
        let soup = sample_soup(
            &two,
            &crit2,
            cfg.lambda,
            maxlen,
            root.child("replica").index(r),
        )?;
        let total = soup.count_len(2) as u64;
        let thinned = thin_to_massive(&two, &soup, &mass)?;
        Ok((thinned.count_len(2) as u64, total))
    })?;
    let kept: u64 = pairs.iter().map(|p| p.0).sum();
    let total: u64 = pairs.iter().map(|p| p.1).sum();
    let survival = kept as f64 / total as f64;
    let expect = (-msq * 2.0).exp();
    let se = binomial_stderr(expect, total as usize);
    rows.push(
        CriterionReport::new("two-step-survival", survival, expect, 4.0 * se, Check::AbsWithin)
            .stderr(se)
            .replicas(cfg.replicas)
            .cutoff("maxlen", maxlen as f64),
    );
    Ok(StatReport::new(cfg, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_oracle_passes_quickly() {
        let cfg = RunConfig::default_for("measure-oracle").unwrap();
        let rep = measure_oracle(&cfg, 1).unwrap();
        assert!(rep.passed, "{:#?}", rep.criteria);
        assert_eq!(rep.criteria.len(), 4);
    }

    #[test]
    fn determinant_identity_passes() {
        let cfg = RunConfig::default_for("determinant-identity").unwrap();
        let rep = determinant_identity(&cfg, 1).unwrap();
        assert!(rep.passed, "{:#?}", rep.criteria);
    }

    #[test]
    fn thinning_table_identity_holds_on_small_run() {
        let mut cfg = RunConfig::default_for("massive-thinning").unwrap();
        cfg.replicas = 3_000;
        let rep = massive_thinning(&cfg, 2).unwrap();
        let table_row = &rep.criteria[0];
        assert!(table_row.pass, "{table_row:#?}");
        assert!(table_row.estimate < 1e-12);
    }
}
