//! Shared statistical machinery for the verification experiments.
//!
//! Every test here states its formula so a reviewer can recompute the numbers
//! in the reports: Kolmogorov–Smirnov with the asymptotic Kolmogorov p-value
//! Q(λ) = 2 Σ_{j≥1} (−1)^{j−1} exp(−2 j² λ²) at λ = (√n_e + 0.12 + 0.11/√n_e)·D,
//! Pearson chi-square goodness of fit against a fixed Poisson mean, ordinary
//! least squares with residual-based slope error, and seeded bootstrap
//! resampling for statistics without a closed-form error.

use crate::error::{Error, Result};
use crate::rng::StreamKey;
use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Minimum sample size the hypothesis-test helpers accept; below this the
/// asymptotic p-values are junk.
pub const MIN_TEST_SAMPLES: usize = 30;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub m: usize,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GofResult {
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

/// Sample mean and its standard error s/√n.
pub fn mean_stderr(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.len() < 2 {
        return Err(Error::TooFewSamples {
            got: xs.len(),
            need: 2,
            what: "mean_stderr",
        });
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Standard error of a binomial proportion estimate.
pub fn binomial_stderr(p_hat: f64, n: usize) -> f64 {
    (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

/// Two-sample Kolmogorov–Smirnov. Inputs need not be sorted.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.len() < MIN_TEST_SAMPLES || b.len() < MIN_TEST_SAMPLES {
        return Err(Error::TooFewSamples {
            got: a.len().min(b.len()),
            need: MIN_TEST_SAMPLES,
            what: "two_sample_ks",
        });
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let xa = a[i];
        let xb = b[j];
        if xa <= xb {
            i += 1;
        }
        if xb <= xa {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    Ok(KsResult {
        statistic: d,
        p_value: ks_p(d, ne),
        n,
        m,
    })
}

/// One-sample Kolmogorov–Smirnov against a reference CDF.
pub fn one_sample_ks(xs: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if xs.len() < MIN_TEST_SAMPLES {
        return Err(Error::TooFewSamples {
            got: xs.len(),
            need: MIN_TEST_SAMPLES,
            what: "one_sample_ks",
        });
    }
    let mut xs = xs.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p(d, n),
        n: xs.len(),
        m: 0,
    })
}

/// Pearson chi-square test of observed counts against Poisson(mean).
/// Cells are consecutive count values merged greedily until each expected
/// count is ≥ 5; the last cell absorbs the upper tail. df = cells − 1
/// (the mean is specified, not fitted).
pub fn poisson_gof(counts: &[u64], mean: f64) -> Result<GofResult> {
    if counts.len() < MIN_TEST_SAMPLES {
        return Err(Error::TooFewSamples {
            got: counts.len(),
            need: MIN_TEST_SAMPLES,
            what: "poisson_gof",
        });
    }
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "poisson_gof needs a positive finite mean, got {mean}"
        )));
    }
    let n = counts.len() as f64;
    let kmax = *counts.iter().max().unwrap() as usize;
    // histogram of observations
    let mut obs = vec![0.0f64; kmax + 1];
    for &c in counts {
        obs[c as usize] += 1.0;
    }
    // Poisson pmf by recurrence, plus the tail beyond kmax in the last slot
    let mut pmf = vec![0.0f64; kmax + 1];
    pmf[0] = (-mean).exp();
    for k in 1..=kmax {
        pmf[k] = pmf[k - 1] * mean / k as f64;
    }
    let tail = 1.0 - pmf.iter().sum::<f64>();
    // greedy merge left-to-right to expected >= 5
    let mut cells: Vec<(f64, f64)> = Vec::new(); // (observed, expected)
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for k in 0..=kmax {
        o_acc += obs[k];
        e_acc += n * pmf[k];
        if e_acc >= 5.0 {
            cells.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    // leftover + tail merge into the final cell
    e_acc += n * tail.max(0.0);
    if let Some(last) = cells.last_mut() {
        last.0 += o_acc;
        last.1 += e_acc;
    } else {
        return Err(Error::InvalidArgument(
            "poisson_gof: expected counts too small to form any cell".into(),
        ));
    }
    if cells.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "poisson_gof: only {} cell(s) after merging; mean {mean} too small for this sample",
            cells.len()
        )));
    }
    let chi2: f64 = cells
        .iter()
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let df = cells.len() - 1;
    let p = ChiSquared::new(df as f64).unwrap().sf(chi2);
    Ok(GofResult {
        chi2,
        df,
        p_value: p,
    })
}

/// Ordinary least squares y = a + b·x with the usual residual-based standard
/// error on the slope.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::TooFewSamples {
            got: xs.len().min(ys.len()),
            need: 3,
            what: "fit_line",
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument("fit_line: degenerate x values".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let slope_stderr = if xs.len() > 2 {
        (ss_res / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr,
    })
}

/// Draw a bootstrap resample (same length, with replacement).
pub fn bootstrap_resample(xs: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    (0..xs.len()).map(|_| xs[rng.random_range(0..xs.len())]).collect()
}

/// Bootstrap standard error of `stat` over `reps` resamples, deterministically
/// seeded from `key`.
pub fn bootstrap_stderr(
    xs: &[f64],
    reps: usize,
    key: StreamKey,
    stat: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    if xs.len() < MIN_TEST_SAMPLES {
        return Err(Error::TooFewSamples {
            got: xs.len(),
            need: MIN_TEST_SAMPLES,
            what: "bootstrap_stderr",
        });
    }
    let mut vals = Vec::with_capacity(reps);
    for b in 0..reps {
        let mut rng = key.index(b as u64).rng();
        vals.push(stat(&bootstrap_resample(xs, &mut rng)));
    }
    let (_, se_of_mean) = mean_stderr(&vals)?;
    // stderr of the statistic = sd of the bootstrap replicates
    Ok(se_of_mean * (vals.len() as f64).sqrt())
}

/// Empirical survival P(X > l) on a grid.
pub fn empirical_survival(xs: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    grid.iter()
        .map(|&l| xs.iter().filter(|&&x| x > l).count() as f64 / n)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::Distribution;

    #[test]
    fn ks_accepts_same_distribution_rejects_shifted() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let norm = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let a: Vec<f64> = (0..2000).map(|_| norm.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..2000).map(|_| norm.sample(&mut rng)).collect();
        let c: Vec<f64> = (0..2000).map(|_| norm.sample(&mut rng) + 0.25).collect();
        assert!(two_sample_ks(&a, &b).unwrap().p_value > 0.01);
        assert!(two_sample_ks(&a, &c).unwrap().p_value < 1e-6);
        let one = one_sample_ks(&a, |x| {
            statrs::distribution::ContinuousCDF::cdf(
                &statrs::distribution::Normal::new(0.0, 1.0).unwrap(),
                x,
            )
        })
        .unwrap();
        assert!(one.p_value > 0.01);
    }

    #[test]
    fn ks_needs_samples() {
        assert!(matches!(
            two_sample_ks(&[1.0; 10], &[2.0; 100]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn poisson_gof_sane() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pois = rand_distr::Poisson::new(3.0f64).unwrap();
        let good: Vec<u64> = (0..3000).map(|_| pois.sample(&mut rng) as u64).collect();
        let r = poisson_gof(&good, 3.0).unwrap();
        assert!(r.p_value > 0.01, "p={}", r.p_value);
        // wrong mean should be flagged
        let r = poisson_gof(&good, 3.6).unwrap();
        assert!(r.p_value < 1e-4, "p={}", r.p_value);
    }

    #[test]
    fn line_fit_recovers_slope() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 3.0 * x).collect();
        let fit = fit_line(&xs, &ys).unwrap();
        assert!((fit.slope + 3.0).abs() < 1e-12);
        assert!((fit.intercept - 2.0).abs() < 1e-12);
        assert!(fit.slope_stderr < 1e-10);
    }

    #[test]
    fn bootstrap_matches_closed_form_for_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let norm = rand_distr::Normal::new(1.0, 2.0).unwrap();
        let xs: Vec<f64> = (0..2000).map(|_| norm.sample(&mut rng)).collect();
        let key = crate::rng::StreamKey::root(9).child("boot");
        let se = bootstrap_stderr(&xs, 200, key, |s| s.iter().sum::<f64>() / s.len() as f64)
            .unwrap();
        let (_, closed) = mean_stderr(&xs).unwrap();
        assert!((se - closed).abs() / closed < 0.25, "{se} vs {closed}");
    }
}
