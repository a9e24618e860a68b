//! Continuum experiments: Brownian soup sanity checks and the geometric
//! observables (carpet dimension, cluster-diameter tails, vacant crossings).

use crate::brownian::{
    conformal_transport, mass_transport, sample_brownian_soup, thin_to_massive_brownian,
    BrownianSoupConfig, PlaneDomain,
};
use crate::conformal::ConformalMap;
use crate::error::{Error, Result};
use crate::geometry::{
    build_clusters, carpet_box_count, carpet_dimension, cluster_diameter_tail, crossing_event,
    hausdorff_prediction, CarpetCount, Pt,
};
use crate::harness::config::RunConfig;
use crate::harness::pool::run_replicas;
use crate::harness::report::{Check, CriterionReport, StatReport};
use crate::mass::MassField;
use crate::rng::StreamKey;
use crate::stats::{binomial_stderr, bootstrap_stderr, mean_stderr, two_sample_ks};

fn plane_domain(cfg: &RunConfig) -> Result<PlaneDomain> {
    cfg.plane.ok_or_else(|| {
        Error::Config(format!(
            "experiment '{}' needs a [plane] domain in the config",
            cfg.experiment
        ))
    })
}

/// Loop counts, the duration law, and conformal covariance of the soup.
pub fn brownian_sanity(cfg: &RunConfig, workers: usize) -> Result<StatReport> {
    let domain = plane_domain(cfg)?;
    let t0 = cfg.cutoffs.t0;
    let h = cfg.cutoffs.spatial_step;
    let root = StreamKey::root(cfg.seed).child("brownian-sanity");
    let mut rows = Vec::new();

    // --- counts and durations under the bare intensity ---------------------
    let soup_cfg = BrownianSoupConfig {
        domain,
        lambda: cfg.lambda,
        t0,
        spatial_step: h,
    };
    soup_cfg.validate()?;
    let base: Vec<(u64, Vec<f64>)> = run_replicas(cfg.replicas, workers, |r| {
        let s = sample_brownian_soup(&soup_cfg, root.child("base").index(r))?;
        Ok((s.pre_count, s.pre_durations))
    })?;
    let counts: Vec<f64> = base.iter().map(|b| b.0 as f64).collect();
    let (mean_count, se_count) = mean_stderr(&counts)?;
    let expect_count = cfg.lambda * domain.bbox_area() / (2.0 * std::f64::consts::PI * t0);
    rows.push(
        CriterionReport::new(
            "count-mean",
            mean_count,
            expect_count,
            4.0 * se_count,
            Check::AbsWithin,
        )
        .stderr(se_count)
        .replicas(cfg.replicas)
        .cutoff("t0", t0),
    );

    let mut durations: Vec<f64> = base.iter().flat_map(|b| b.1.iter().copied()).collect();
    if durations.len() < 30 {
        return Err(Error::TooFewSamples {
            got: durations.len(),
            need: 30,
            what: "loop durations",
        });
    }
    durations.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = durations[durations.len() / 2];
    // Sample-median se 1/(2 f(med) √n) with density f(t) = t0/t² at t = 2t0.
    let se_med = 2.0 * t0 / (durations.len() as f64).sqrt();
    rows.push(
        CriterionReport::new("duration-median", median, 2.0 * t0, 4.0 * se_med, Check::AbsWithin)
            .stderr(se_med)
            .replicas(durations.len() as u64)
            .cutoff("t0", t0),
    );

    // --- covariance under f(z) = 2z ----------------------------------------
    // A massive soup on the unit square pushed through f must match a soup
    // sampled directly on the image with transported mass; durations scale by
    // |f'|² = 4, so the direct cutoff is 4·t0 and the step doubles.
    let conf_t0 = 0.02;
    let n_conf = (cfg.replicas / 2).max(200);
    let mass = cfg.mass_field()?;
    let f = ConformalMap::scale(2.0);
    let small_cfg = BrownianSoupConfig {
        domain: PlaneDomain::unit_square(),
        lambda: cfg.lambda,
        t0: conf_t0,
        spatial_step: h,
    };
    let transported: Vec<(f64, f64)> = run_replicas(n_conf, workers, |r| {
        let s = sample_brownian_soup(&small_cfg, root.child("push").index(r))?;
        let kept = thin_to_massive_brownian(&s.loops, &mass)?;
        let mut out = Vec::with_capacity(kept.len());
        for l in &kept {
            let t = conformal_transport(l, &f)?;
            out.push((t.duration, t.diameter()));
        }
        Ok(out)
    })?
    .into_iter()
    .flatten()
    .collect();

    let image_cfg = BrownianSoupConfig {
        domain: PlaneDomain::Rect {
            x0: 0.0,
            y0: 0.0,
            x1: 2.0,
            y1: 2.0,
        },
        lambda: cfg.lambda,
        t0: 4.0 * conf_t0,
        spatial_step: 2.0 * h,
    };
    let image_mass = mass_transport(mass, f);
    let direct: Vec<(f64, f64)> = run_replicas(n_conf, workers, |r| {
        let s = sample_brownian_soup(&image_cfg, root.child("direct").index(r))?;
        let kept = thin_to_massive_brownian(&s.loops, &image_mass)?;
        Ok(kept
            .iter()
            .map(|l| (l.duration, l.diameter()))
            .collect::<Vec<_>>())
    })?
    .into_iter()
    .flatten()
    .collect();

    let t_push: Vec<f64> = transported.iter().map(|p| p.0).collect();
    let t_dir: Vec<f64> = direct.iter().map(|p| p.0).collect();
    let ks_t = two_sample_ks(&t_push, &t_dir)?;
    rows.push(
        CriterionReport::new("conformal-duration-ks-p", ks_t.p_value, 0.01, 0.0, Check::AtLeast)
            .replicas((t_push.len() + t_dir.len()) as u64)
            .cutoff("t0", conf_t0)
            .cutoff("spatial_step", h),
    );
    let d_push: Vec<f64> = transported.iter().map(|p| p.1).collect();
    let d_dir: Vec<f64> = direct.iter().map(|p| p.1).collect();
    let ks_d = two_sample_ks(&d_push, &d_dir)?;
    rows.push(
        CriterionReport::new("conformal-diameter-ks-p", ks_d.p_value, 0.01, 0.0, Check::AtLeast)
            .replicas((d_push.len() + d_dir.len()) as u64)
            .cutoff("t0", conf_t0)
            .cutoff("spatial_step", h),
    );
    Ok(StatReport::new(cfg, rows))
}

fn soup_paths(
    domain: &PlaneDomain,
    lambda: f64,
    t0: f64,
    h: f64,
    mass: Option<&MassField>,
    key: StreamKey,
) -> Result<Vec<Vec<Pt>>> {
    let cfg = BrownianSoupConfig {
        domain: *domain,
        lambda,
        t0,
        spatial_step: h,
    };
    let soup = sample_brownian_soup(&cfg, key)?;
    let loops = match mass {
        Some(m) => thin_to_massive_brownian(&soup.loops, m)?,
        None => soup.loops,
    };
    Ok(loops.into_iter().map(|l| l.path).collect())
}

fn prediction_rows() -> Result<Vec<CriterionReport>> {
    let mut rows = Vec::new();
    for (name, l, expect) in [
        ("prediction-h0", 0.0, 2.0),
        ("prediction-h1", 1.0, 15.0 / 8.0),
        ("prediction-h-half", 0.5, 187.0 / 96.0),
    ] {
        rows.push(CriterionReport::new(
            name,
            hausdorff_prediction(l)?,
            expect,
            1e-15,
            Check::AbsWithin,
        ));
    }
    Ok(rows)
}

/// Box-count regression of the soup's vacant carpet against the predicted
/// dimension, for the critical soup and its m≡1 thinning.
fn carpet_rows(cfg: &RunConfig, workers: usize) -> Result<Vec<CriterionReport>> {
    let root = StreamKey::root(cfg.seed).child("geometry");
    let mut rows = Vec::new();
    let t0 = cfg.cutoffs.t0;
    let h = cfg.cutoffs.spatial_step;
    let window = (0.0, 0.0, 1.0, 1.0);
    let unit = PlaneDomain::unit_square();
    let eps_list = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
    let mass = cfg.mass_field()?;
    for (label, thin) in [("critical", None), ("massive", Some(&mass))] {
        let case = root.child("carpet").child(label);
        let counts: Vec<Vec<CarpetCount>> = run_replicas(cfg.replicas, workers, |r| {
            let paths = soup_paths(&unit, cfg.lambda, t0, h, thin, case.index(r))?;
            eps_list
                .iter()
                .map(|&eps| carpet_box_count(&paths, window, eps))
                .collect()
        })?;
        let pooled: Vec<CarpetCount> = counts.into_iter().flatten().collect();
        let fit = carpet_dimension(&pooled)?;
        rows.push(
            CriterionReport::new(
                &format!("carpet-slope-{label}"),
                fit.fit.slope,
                187.0 / 96.0,
                0.15,
                Check::AbsWithin,
            )
            .stderr(fit.fit.slope_stderr)
            .replicas(cfg.replicas)
            .cutoff("t0", t0)
            .cutoff("eps_min", *eps_list.last().unwrap())
            .bias("degenerate_rasters", fit.excluded_degenerate as f64),
        );
    }
    Ok(rows)
}

/// Cluster-diameter log-survival tails under masses 1 and 2: monotone,
/// finite fitted decay length, and the heavier mass decays faster.
fn tail_rows(cfg: &RunConfig, workers: usize) -> Result<Vec<CriterionReport>> {
    let root = StreamKey::root(cfg.seed).child("geometry");
    let mut rows = Vec::new();
    let h = cfg.cutoffs.spatial_step;
    let tail_reps = cfg.replicas * 5;
    let tail_window = PlaneDomain::Rect {
        x0: -3.0,
        y0: -3.0,
        x1: 3.0,
        y1: 3.0,
    };
    let tail_t0 = 0.01;
    let tail_h = h.max(0.02);
    let cluster_eps = 0.05;
    let mut xi = Vec::new();
    let mut xi_se = Vec::new();
    for (label, m) in [("m1", 1.0), ("m2", 2.0)] {
        let case = root.child("tail").child(label);
        let mfield = MassField::constant(m)?;
        let diameters: Vec<f64> = run_replicas(tail_reps, workers, |r| {
            let paths = soup_paths(
                &tail_window,
                cfg.lambda,
                tail_t0,
                tail_h,
                Some(&mfield),
                case.index(r),
            )?;
            let clusters = build_clusters(&paths, cluster_eps)?;
            Ok(clusters
                .clusters
                .iter()
                .map(|c| c.diameter)
                .collect::<Vec<_>>())
        })?
        .into_iter()
        .flatten()
        .collect();
        let tail = cluster_diameter_tail(&diameters)?;

        let mut worst_rise = f64::NEG_INFINITY;
        for w in tail.log_survival.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
        rows.push(
            CriterionReport::new(
                &format!("tail-monotone-{label}"),
                worst_rise,
                0.0,
                0.0,
                Check::AtMost,
            )
            .replicas(diameters.len() as u64)
            .cutoff("t0", tail_t0)
            .cutoff("eps", cluster_eps),
        );
        let x = tail.xi.unwrap_or(f64::NAN);
        rows.push(
            CriterionReport::new(&format!("xi-finite-{label}"), x, 0.0, 0.0, Check::AtLeast)
                .replicas(diameters.len() as u64)
                .cutoff("t0", tail_t0),
        );
        let se = bootstrap_stderr(&diameters, 200, case.child("boot"), |xs| {
            cluster_diameter_tail(xs)
                .ok()
                .and_then(|t| t.xi)
                .unwrap_or(f64::NAN)
        })?;
        xi.push(x);
        xi_se.push(se);
    }
    let contrast_se = (xi_se[0].powi(2) + xi_se[1].powi(2)).sqrt();
    rows.push(
        CriterionReport::new(
            "xi-contrast-m1-above-m2",
            xi[0] - xi[1],
            3.0 * contrast_se,
            0.0,
            Check::AtLeast,
        )
        .stderr(contrast_se)
        .replicas(tail_reps * 2)
        .cutoff("t0", tail_t0),
    );
    Ok(rows)
}

/// Left-right vacant crossings of 3l×l frames: probability rises with the
/// frame scale at fixed cutoff and falls with the soup intensity.
fn crossing_rows(cfg: &RunConfig, workers: usize) -> Result<Vec<CriterionReport>> {
    let root = StreamKey::root(cfg.seed).child("geometry");
    let mut rows = Vec::new();
    let h = cfg.cutoffs.spatial_step;
    let mass = cfg.mass_field()?;
    let cross_reps = cfg.replicas * 24;
    // The rise of p with the frame scale needs both knobs: the mass thinning
    // retires loops beyond its correlation length, so ever-larger frames see
    // relatively smaller obstacles (massless soups are scale-invariant above
    // the cutoff and give a flat p), while t0 sets the small-loop coverage
    // that keeps the l=1 frame off the p≈1 ceiling.
    let cross_t0 = 0.005;
    let cross_eps = 0.05;
    let cross_h = h.max(0.02);
    let (lam_lo, lam_hi) = (0.5, 1.5);
    let ls = [1.0, 3.0, 9.0];
    let mut p_at = std::collections::BTreeMap::new();
    for (tag, lambda) in [("sparse", lam_lo), ("dense", lam_hi)] {
        for &l in &ls {
            let case = root.child("crossing").child(tag).index(l as u64);
            let dom = PlaneDomain::Rect {
                x0: 0.0,
                y0: 0.0,
                x1: 3.0 * l,
                y1: l,
            };
            let hits: Vec<bool> = run_replicas(cross_reps, workers, |r| {
                let paths =
                    soup_paths(&dom, lambda, cross_t0, cross_h, Some(&mass), case.index(r))?;
                crossing_event(&paths, l, cross_eps)
            })?;
            let p = hits.iter().filter(|&&b| b).count() as f64 / hits.len() as f64;
            p_at.insert((lambda.to_bits(), l.to_bits()), p);
            rows.push(
                CriterionReport::new(
                    &format!("crossing-p-lambda{lambda}-l{l}"),
                    p,
                    0.5,
                    0.5,
                    Check::AbsWithin,
                )
                .stderr(binomial_stderr(p, hits.len()))
                .replicas(cross_reps)
                .cutoff("t0", cross_t0)
                .cutoff("eps", cross_eps)
                .reported_only(),
            );
        }
    }
    let p = |lambda: f64, l: f64| p_at[&(lambda.to_bits(), l.to_bits())];
    let se_b = |v: f64| binomial_stderr(v, cross_reps as usize);
    let trend = p(lam_lo, 9.0) - p(lam_lo, 1.0);
    let trend_se = (se_b(p(lam_lo, 9.0)).powi(2) + se_b(p(lam_lo, 1.0)).powi(2)).sqrt();
    rows.push(
        CriterionReport::new(
            "crossing-increasing-in-l",
            trend,
            3.0 * trend_se,
            0.0,
            Check::AtLeast,
        )
        .stderr(trend_se)
        .replicas(2 * cross_reps)
        .cutoff("t0", cross_t0),
    );
    let gap = p(lam_lo, 3.0) - p(lam_hi, 3.0);
    let gap_se = (se_b(p(lam_lo, 3.0)).powi(2) + se_b(p(lam_hi, 3.0)).powi(2)).sqrt();
    rows.push(
        CriterionReport::new("crossing-denser-is-rarer", gap, 3.0 * gap_se, 0.0, Check::AtLeast)
            .stderr(gap_se)
            .replicas(2 * cross_reps)
            .cutoff("t0", cross_t0),
    );
    Ok(rows)
}

/// Carpet box-counting dimension, cluster-diameter tails, and vacant
/// crossings. Replica counts derive from the configured count: `replicas` for
/// the carpet, 5× for the tails, 24× per crossing cell.
pub fn geometry_experiment(cfg: &RunConfig, workers: usize) -> Result<StatReport> {
    let mut rows = prediction_rows()?;
    rows.extend(carpet_rows(cfg, workers)?);
    rows.extend(tail_rows(cfg, workers)?);
    rows.extend(crossing_rows(cfg, workers)?);
    Ok(StatReport::new(cfg, rows))
}

/// The dimension predictions plus the carpet regression alone.
pub fn carpet_experiment(cfg: &RunConfig, workers: usize) -> Result<StatReport> {
    let mut rows = prediction_rows()?;
    rows.extend(carpet_rows(cfg, workers)?);
    Ok(StatReport::new(cfg, rows))
}

/// The vacant-crossing scan alone.
pub fn crossing_experiment(cfg: &RunConfig, workers: usize) -> Result<StatReport> {
    Ok(StatReport::new(cfg, crossing_rows(cfg, workers)?))
}
