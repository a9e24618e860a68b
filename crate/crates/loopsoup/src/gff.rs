//! Discrete Gaussian free field, the random-coupling sign field, the
//! isomorphism ψ = √(2L)·S, and the domain-perturbation coupling.
//!
//! The sign field S is drawn from the ferromagnetic Ising-type law
//! (1/Z)·exp(Σ_{x,y: x~y} √(L_x L_y) σ_x σ_y), the sum running over ordered
//! adjacent pairs — per unordered edge the coupling strength is 2√(L_x L_y).
//! Domains of at most 16 sites get an exact sampler by exhaustive
//! enumeration (the oracle); larger domains use Swendsen–Wang cluster moves,
//! which remain valid for arbitrary nonnegative couplings.

use crate::error::{Error, Result};
use crate::lattice::{killing_from_mass, transition_kernel, Domain, Site};
use crate::loop_measure::return_probabilities;
use crate::mass::MassField;
use crate::occupation::{occupation_field, OccupationField};
use crate::rng::StreamKey;
use crate::soup::{sample_soup_with_table, LoopSoup, SoupLoop};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Debug)]
pub struct GffSample {
    pub phi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignField {
    /// Strictly ±1 entries.
    pub s: Vec<i8>,
}

/// Gaussian sampler with a cached symmetric factorization of the covariance.
pub struct GffSampler {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    n: usize,
}

impl GffSampler {
    pub fn new(g: &DMatrix<f64>) -> Result<Self> {
        if g.nrows() != g.ncols() {
            return Err(Error::InvalidArgument(format!(
                "covariance must be square, got {}×{}",
                g.nrows(),
                g.ncols()
            )));
        }
        let chol = nalgebra::Cholesky::new(g.clone()).ok_or(Error::NotPositiveDefinite {
            hint: Some("covariance matrix is not positive definite".into()),
        })?;
        Ok(GffSampler {
            chol,
            n: g.nrows(),
        })
    }

    pub fn sample(&self, key: StreamKey) -> GffSample {
        let mut rng = key.rng();
        self.sample_with(&mut rng)
    }

    pub fn sample_with(&self, rng: &mut impl Rng) -> GffSample {
        let z = nalgebra::DVector::from_fn(self.n, |_, _| {
            let v: f64 = StandardNormal.sample(rng);
            v
        });
        let phi = self.chol.l() * z;
        GffSample {
            phi: phi.iter().copied().collect(),
        }
    }
}

/// One-shot mean-zero Gaussian vector with covariance G.
pub fn sample_gff(g: &DMatrix<f64>, key: StreamKey) -> Result<GffSample> {
    Ok(GffSampler::new(g)?.sample(key))
}

fn undirected_edges(domain: &Domain) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for x in 0..domain.len() {
        for nb in domain.neighbors(x).iter().flatten() {
            let y = *nb as usize;
            if y > x {
                edges.push((x, y));
            }
        }
    }
    edges
}

fn check_field_positive(l: &[f64]) -> Result<()> {
    if let Some((i, &v)) = l.iter().enumerate().find(|(_, &v)| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "occupation field must be strictly positive and finite; site {i} has {v}"
        )));
    }
    Ok(())
}

/// Exact sign sampler by exhaustive enumeration of all 2^n configurations.
/// The oracle for small domains; also provides exact marginals by direct
/// summation.
pub struct ExactSignSampler {
    n: usize,
    /// Normalized probability of each configuration (bit i of the mask set ⇔
    /// σ_i = +1).
    probs: Vec<f64>,
    cum: Vec<f64>,
}

pub const EXACT_SIGN_LIMIT: usize = 16;

impl ExactSignSampler {
    pub fn new(domain: &Domain, l: &[f64]) -> Result<Self> {
        let n = domain.len();
        if n > EXACT_SIGN_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "exact enumeration limited to {EXACT_SIGN_LIMIT} sites, domain has {n}"
            )));
        }
        if l.len() != n {
            return Err(Error::InvalidArgument(format!(
                "field has {} entries for a {n}-site domain",
                l.len()
            )));
        }
        check_field_positive(l)?;
        let edges = undirected_edges(domain);
        let couplings: Vec<f64> = edges
            .iter()
            .map(|&(x, y)| 2.0 * (l[x] * l[y]).sqrt())
            .collect();
        let m = 1usize << n;
        let mut logw = Vec::with_capacity(m);
        let mut max = f64::NEG_INFINITY;
        for mask in 0..m {
            let mut e = 0.0;
            for (ei, &(x, y)) in edges.iter().enumerate() {
                let sx = if mask >> x & 1 == 1 { 1.0 } else { -1.0 };
                let sy = if mask >> y & 1 == 1 { 1.0 } else { -1.0 };
                e += couplings[ei] * sx * sy;
            }
            if e > max {
                max = e;
            }
            logw.push(e);
        }
        let mut probs: Vec<f64> = logw.iter().map(|&e| (e - max).exp()).collect();
        let z: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= z;
        }
        let mut cum = Vec::with_capacity(m);
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cum.push(acc);
        }
        Ok(ExactSignSampler { n, probs, cum })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    fn mask_to_field(&self, mask: usize) -> SignField {
        SignField {
            s: (0..self.n)
                .map(|i| if mask >> i & 1 == 1 { 1 } else { -1 })
                .collect(),
        }
    }

    pub fn sample_with(&self, rng: &mut impl Rng) -> SignField {
        let u: f64 = rng.random();
        let mask = self.cum.partition_point(|&c| c < u).min(self.probs.len() - 1);
        self.mask_to_field(mask)
    }

    pub fn sample(&self, key: StreamKey) -> SignField {
        self.sample_with(&mut key.rng())
    }

    /// Sample conditioned on σ_site = sign.
    pub fn sample_conditioned_with(
        &self,
        site: usize,
        sign: i8,
        rng: &mut impl Rng,
    ) -> Result<SignField> {
        if site >= self.n || (sign != 1 && sign != -1) {
            return Err(Error::InvalidArgument(format!(
                "bad conditioning: site {site} of {}, sign {sign}",
                self.n
            )));
        }
        let want = sign == 1;
        let total: f64 = self
            .probs
            .iter()
            .enumerate()
            .filter(|(m, _)| (m >> site & 1 == 1) == want)
            .map(|(_, &p)| p)
            .sum();
        let mut u: f64 = rng.random::<f64>() * total;
        let mut chosen = None;
        for (m, &p) in self.probs.iter().enumerate() {
            if (m >> site & 1 == 1) == want {
                u -= p;
                if u < 0.0 {
                    chosen = Some(m);
                    break;
                }
            }
        }
        let mask = chosen.unwrap_or_else(|| {
            // rounding spill: last admissible mask
            (0..self.probs.len())
                .rev()
                .find(|m| (m >> site & 1 == 1) == want)
                .unwrap()
        });
        Ok(self.mask_to_field(mask))
    }

    /// Exact P(σ_x = σ_y) by direct summation.
    pub fn align_probability(&self, x: usize, y: usize) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(m, _)| (m >> x & 1) == (m >> y & 1))
            .map(|(_, &p)| p)
            .sum()
    }

    /// Exact P(σ_x = +1).
    pub fn plus_probability(&self, x: usize) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(m, _)| m >> x & 1 == 1)
            .map(|(_, &p)| p)
            .sum()
    }
}

/// Swendsen–Wang sampler for the sign law on arbitrary domains. Bond between
/// aligned neighbours opens with probability 1 − e^{−4√(L_x L_y)} (twice the
/// per-ordered-pair coupling, as the percolation identity requires).
pub struct SignSampler {
    edges: Vec<(usize, usize)>,
    bond_prob: Vec<f64>,
    n: usize,
}

impl SignSampler {
    pub fn new(domain: &Domain, l: &[f64]) -> Result<Self> {
        if l.len() != domain.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} entries for a {}-site domain",
                l.len(),
                domain.len()
            )));
        }
        check_field_positive(l)?;
        let edges = undirected_edges(domain);
        let bond_prob = edges
            .iter()
            .map(|&(x, y)| 1.0 - (-4.0 * (l[x] * l[y]).sqrt()).exp())
            .collect();
        Ok(SignSampler {
            edges,
            bond_prob,
            n: domain.len(),
        })
    }

    fn sweep(&self, state: &mut [i8], frozen: Option<(usize, i8)>, rng: &mut impl Rng) {
        // open bonds between aligned neighbours
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (ei, &(x, y)) in self.edges.iter().enumerate() {
            if state[x] == state[y] && rng.random::<f64>() < self.bond_prob[ei] {
                let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
                if rx != ry {
                    parent[rx] = ry;
                }
            }
        }
        // fresh uniform sign per cluster; a frozen site pins its cluster
        let mut cluster_sign: Vec<i8> = vec![0; self.n];
        let frozen_root = frozen.map(|(site, sign)| (find(&mut parent, site), sign));
        for x in 0..self.n {
            let r = find(&mut parent, x);
            if cluster_sign[r] == 0 {
                cluster_sign[r] = match frozen_root {
                    Some((fr, sign)) if fr == r => sign,
                    _ => {
                        if rng.random::<bool>() {
                            1
                        } else {
                            -1
                        }
                    }
                };
            }
            state[x] = cluster_sign[r];
        }
    }

    pub fn run(
        &self,
        sweeps: usize,
        frozen: Option<(usize, i8)>,
        rng: &mut impl Rng,
    ) -> SignField {
        let mut state: Vec<i8> = (0..self.n)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        if let Some((site, sign)) = frozen {
            state[site] = sign;
        }
        for _ in 0..sweeps {
            self.sweep(&mut state, frozen, rng);
        }
        SignField { s: state }
    }

    /// Two-chain convergence diagnostic: chains started all-plus and
    /// all-minus are run until their edge-alignment averages agree within
    /// half a pooled standard deviation; returns the sweep count at which
    /// they did (doubling from 16, capped at 4096).
    pub fn auto_sweeps(&self, key: StreamKey) -> usize {
        let align = |state: &[i8]| -> f64 {
            self.edges
                .iter()
                .map(|&(x, y)| (state[x] * state[y]) as f64)
                .sum()
        };
        let mut budget = 16usize;
        loop {
            let mut rng_a = key.child("diag-a").index(budget as u64).rng();
            let mut rng_b = key.child("diag-b").index(budget as u64).rng();
            let mut a: Vec<i8> = vec![1; self.n];
            let mut b: Vec<i8> = vec![-1; self.n];
            let mut ta = Vec::new();
            let mut tb = Vec::new();
            for s in 0..budget {
                self.sweep(&mut a, None, &mut rng_a);
                self.sweep(&mut b, None, &mut rng_b);
                if s >= budget / 2 {
                    ta.push(align(&a));
                    tb.push(align(&b));
                }
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let var = |v: &[f64], m: f64| {
                v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len().max(1) as f64
            };
            let (ma, mb) = (mean(&ta), mean(&tb));
            let sd = (0.5 * (var(&ta, ma) + var(&tb, mb))).sqrt().max(1e-9);
            if (ma - mb).abs() <= 0.5 * sd || budget >= 4096 {
                return budget;
            }
            budget *= 2;
        }
    }
}

/// Draw a sign field for the given occupation field: exact enumeration when
/// the domain allows it, Swendsen–Wang with the automated burn-in otherwise.
pub fn sample_signs(
    domain: &Domain,
    l: &OccupationField,
    key: StreamKey,
    sweeps: Option<usize>,
) -> Result<SignField> {
    if domain.len() <= EXACT_SIGN_LIMIT {
        let s = ExactSignSampler::new(domain, &l.l)?;
        Ok(s.sample(key))
    } else {
        let s = SignSampler::new(domain, &l.l)?;
        let sweeps = match sweeps {
            Some(s) => s,
            None => 2 * s.auto_sweeps(key.child("burnin")),
        };
        Ok(s.run(sweeps, None, &mut key.child("chain").rng()))
    }
}

/// ψ_x = √(2 L_x)·S_x.
pub fn isomorphism_field(l: &OccupationField, s: &SignField) -> Result<Vec<f64>> {
    if l.l.len() != s.s.len() {
        return Err(Error::InvalidArgument(format!(
            "field has {} sites, signs have {}",
            l.l.len(),
            s.s.len()
        )));
    }
    check_field_positive(&l.l)?;
    Ok(l
        .l
        .iter()
        .zip(&s.s)
        .map(|(&lx, &sx)| (2.0 * lx).sqrt() * sx as f64)
        .collect())
}

/// Empirical covariance matrix of replica vectors.
pub fn empirical_covariance(samples: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: 2,
            what: "covariance replicas",
        });
    }
    let n = samples[0].len();
    let reps = samples.len() as f64;
    let mut mean = vec![0.0; n];
    for s in samples {
        for (m, &v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= reps;
    }
    let mut cov = DMatrix::zeros(n, n);
    for s in samples {
        for i in 0..n {
            for j in 0..n {
                cov[(i, j)] += (s[i] - mean[i]) * (s[j] - mean[j]);
            }
        }
    }
    cov /= reps - 1.0;
    Ok(cov)
}

/// Largest covariance deviation from `target`, in absolute value and in
/// per-entry standard-error units (stderr of each product moment estimated
/// from the replicas).
pub fn covariance_max_dev(
    samples: &[Vec<f64>],
    target: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    let n = target.nrows();
    if samples.is_empty() || samples[0].len() != n {
        return Err(Error::InvalidArgument(
            "sample shape does not match target covariance".into(),
        ));
    }
    let reps = samples.len();
    let mut max_abs = 0.0f64;
    let mut max_se = 0.0f64;
    let mut prods = vec![0.0; reps];
    for i in 0..n {
        for j in i..n {
            for (r, s) in samples.iter().enumerate() {
                prods[r] = s[i] * s[j];
            }
            let (mean, se) = crate::stats::mean_stderr(&prods)?;
            let dev = mean - target[(i, j)];
            if dev.abs() > max_abs {
                max_abs = dev.abs();
            }
            if se > 0.0 && dev.abs() / se > max_se {
                max_se = dev.abs() / se;
            }
        }
    }
    Ok((max_abs, max_se))
}

/// Result of one perturbation-coupling replica.
#[derive(Clone, Debug)]
pub struct PerturbationOutcome {
    /// ψ on the large domain, indexed by its sites.
    pub psi: Vec<f64>,
    /// ψ' on the subdomain, indexed by the subdomain's sites.
    pub psi_prime: Vec<f64>,
    /// Some loop through x0 meets D\D'.
    pub flag: bool,
}

/// Does this loop pass through `x0` (a D-site index) and meet D\D'?
fn loop_through_meeting(l: &SoupLoop, x0: usize, in_sub: &[bool]) -> bool {
    let mut through = false;
    let mut meets = false;
    for &s in l.class.canonical() {
        if s as usize == x0 {
            through = true;
        }
        if !in_sub[s as usize] {
            meets = true;
        }
        if through && meets {
            return true;
        }
    }
    through && meets
}

/// The coupled construction behind the perturbation statement: one soup on D
/// at λ = 1/2 with mass m serves both domains — its restriction to loops
/// inside D' is a massive soup on D'; occupation dressing is keyed by loop
/// identity and base terms by site coordinates, so the two fields share every
/// addend they have in common; and when no loop through x0 leaves D', the
/// sign at x0 is conditioned to agree, making ψ'_{x0} = ψ_{x0} exact (bitwise
/// equality of the stored values, not approximate agreement).
pub fn perturbation_coupling(
    domain: &Domain,
    sub: &Domain,
    x0: Site,
    mass: &MassField,
    maxlen: usize,
    key: StreamKey,
) -> Result<PerturbationOutcome> {
    let x0_big = domain.index_of(x0).ok_or_else(|| {
        Error::InvalidArgument(format!("x0 = ({}, {}) is not in the domain", x0.x, x0.y))
    })?;
    let x0_sub = sub.index_of(x0).ok_or_else(|| {
        Error::InvalidArgument(format!("x0 = ({}, {}) is not in the subdomain", x0.x, x0.y))
    })?;
    // subdomain must be contained in the domain
    let mut in_sub = vec![false; domain.len()];
    for s in sub.sites() {
        match domain.index_of(*s) {
            Some(i) => in_sub[i] = true,
            None => {
                return Err(Error::InvalidDomain(format!(
                    "subdomain site ({}, {}) is not in the domain",
                    s.x, s.y
                )))
            }
        }
    }
    let killing = killing_from_mass(domain, mass)?;
    let p = transition_kernel(domain, &killing)?;
    let table = return_probabilities(&p, maxlen)?;
    let soup = sample_soup_with_table(domain, &table, 0.5, maxlen, key.child("soup"), 0)?;

    let flag = soup
        .loops
        .iter()
        .any(|l| loop_through_meeting(l, x0_big, &in_sub));

    // restriction: loops entirely inside D'
    let restricted = LoopSoup {
        lambda: soup.lambda,
        maxlen: soup.maxlen,
        loops: soup
            .loops
            .iter()
            .filter(|l| l.class.canonical().iter().all(|&s| in_sub[s as usize]))
            .cloned()
            .collect(),
    };

    let occ_key = key.child("occ");
    let l_big = occupation_field(domain, &soup, &killing, occ_key)?;
    // dress the restricted soup with the SAME streams (loop ids and site
    // coordinates are unchanged), still indexed by D, then project onto D'
    let l_restricted_on_big = occupation_field(domain, &restricted, &killing, occ_key)?;
    let killing_sub = killing_from_mass(sub, mass)?;
    let mut l_sub = Vec::with_capacity(sub.len());
    for s in sub.sites() {
        let i = domain.index_of(*s).unwrap();
        l_sub.push(l_restricted_on_big.l[i]);
    }
    // same mass at the same coordinates ⇒ same scale factors; the projection
    // is a pure re-indexing
    debug_assert!(sub
        .sites()
        .iter()
        .enumerate()
        .all(|(i, s)| killing_sub.k[i] == killing.k[domain.index_of(*s).unwrap()]));
    let l_sub = OccupationField { l: l_sub };

    // signs: exact when small, Swendsen–Wang otherwise; the subdomain draw is
    // conditioned at x0 when the coupling event allows it
    let sign_key = key.child("signs");
    let s_big = sample_signs(domain, &l_big, sign_key.child("big"), None)?;
    let s_sub = if !flag {
        let pin = s_big.s[x0_big];
        sample_conditioned(sub, &l_sub, x0_sub, pin, sign_key.child("sub"))?
    } else {
        sample_signs(sub, &l_sub, sign_key.child("sub"), None)?
    };

    let psi = isomorphism_field(&l_big, &s_big)?;
    let psi_prime = isomorphism_field(&l_sub, &s_sub)?;
    Ok(PerturbationOutcome {
        psi,
        psi_prime,
        flag,
    })
}

fn sample_conditioned(
    domain: &Domain,
    l: &OccupationField,
    site: usize,
    sign: i8,
    key: StreamKey,
) -> Result<SignField> {
    if domain.len() <= EXACT_SIGN_LIMIT {
        let s = ExactSignSampler::new(domain, &l.l)?;
        s.sample_conditioned_with(site, sign, &mut key.rng())
    } else {
        let s = SignSampler::new(domain, &l.l)?;
        let sweeps = 2 * s.auto_sweeps(key.child("burnin"));
        Ok(s.run(sweeps, Some((site, sign)), &mut key.child("chain").rng()))
    }
}

/// Soup-only estimator of the coupling event: does any loop of an
/// independently sampled soup pass through x0 and meet D\D'?
pub fn perturbation_flag_only(
    domain: &Domain,
    sub: &Domain,
    x0: Site,
    mass: &MassField,
    maxlen: usize,
    key: StreamKey,
) -> Result<bool> {
    let x0_big = domain.index_of(x0).ok_or_else(|| {
        Error::InvalidArgument(format!("x0 = ({}, {}) is not in the domain", x0.x, x0.y))
    })?;
    if sub.index_of(x0).is_none() {
        return Err(Error::InvalidArgument(format!(
            "x0 = ({}, {}) is not in the subdomain",
            x0.x, x0.y
        )));
    }
    let mut in_sub = vec![false; domain.len()];
    for s in sub.sites() {
        if let Some(i) = domain.index_of(*s) {
            in_sub[i] = true;
        }
    }
    let killing = killing_from_mass(domain, mass)?;
    let p = transition_kernel(domain, &killing)?;
    let table = return_probabilities(&p, maxlen)?;
    let soup = sample_soup_with_table(domain, &table, 0.5, maxlen, key.child("soup"), 0)?;
    Ok(soup
        .loops
        .iter()
        .any(|l| loop_through_meeting(l, x0_big, &in_sub)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{green_function, DomainSpec, Killing};
    use crate::soup::sample_critical_soup;
    use approx::assert_relative_eq;

    fn two_site() -> Domain {
        Domain::from_spec(&DomainSpec::Sites {
            sites: vec![(0, 0), (1, 0)],
        })
        .unwrap()
    }

    #[test]
    fn gff_single_site_variance() {
        let d = Domain::from_spec(&DomainSpec::Sites {
            sites: vec![(0, 0)],
        })
        .unwrap();
        let a = crate::lattice::precision_matrix(&d, &Killing::critical(1)).unwrap();
        let g = green_function(&a).unwrap();
        let sampler = GffSampler::new(&g).unwrap();
        let mut rng = StreamKey::root(61).child("gff1").rng();
        let reps = 100_000usize;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..reps {
            let phi = sampler.sample_with(&mut rng).phi[0];
            sum += phi;
            sq += phi * phi;
        }
        let mean = sum / reps as f64;
        let var = sq / reps as f64 - mean * mean;
        // Var = G = 1/4; se(var) ≈ √2·var/√n, se(mean) = sd/√n
        let se_mean = 0.5 / (reps as f64).sqrt();
        let se_var = 2.0f64.sqrt() * 0.25 / (reps as f64).sqrt();
        assert!(mean.abs() < 4.0 * se_mean, "mean {mean}");
        assert!((var - 0.25).abs() < 4.0 * se_var, "var {var}");
    }

    #[test]
    fn gff_two_site_covariance() {
        let d = two_site();
        let a = crate::lattice::precision_matrix(&d, &Killing::critical(2)).unwrap();
        let g = green_function(&a).unwrap();
        let sampler = GffSampler::new(&g).unwrap();
        let mut rng = StreamKey::root(62).child("gff2").rng();
        let reps = 100_000usize;
        let mut prods = Vec::with_capacity(reps);
        for _ in 0..reps {
            let phi = sampler.sample_with(&mut rng).phi;
            prods.push(phi[0] * phi[1]);
        }
        let (mean, se) = crate::stats::mean_stderr(&prods).unwrap();
        assert!(
            (mean - 1.0 / 15.0).abs() < 4.0 * se,
            "cov {mean} vs {} (se {se})",
            1.0 / 15.0
        );
        // non-PD covariance rejected
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GffSampler::new(&bad).is_err());
    }

    #[test]
    fn exact_signs_single_site() {
        let d = Domain::from_spec(&DomainSpec::Sites {
            sites: vec![(0, 0)],
        })
        .unwrap();
        let s = ExactSignSampler::new(&d, &[1.0]).unwrap();
        assert_relative_eq!(s.plus_probability(0), 0.5);
        assert_eq!(s.probabilities().len(), 2);
    }

    #[test]
    fn exact_signs_two_site_alignment() {
        let d = two_site();
        let s = ExactSignSampler::new(&d, &[1.0, 1.0]).unwrap();
        // coupling per unordered edge = 2 ⇒ P(align) = e²/(e²+e⁻²)
        let e2 = std::f64::consts::E.powi(2);
        let expect = e2 / (e2 + 1.0 / e2);
        assert_relative_eq!(s.align_probability(0, 1), expect, epsilon = 1e-12);
        // empirical
        let mut rng = StreamKey::root(63).child("signs2").rng();
        let draws = 20_000usize;
        let mut aligned = 0usize;
        for _ in 0..draws {
            let f = s.sample_with(&mut rng);
            assert!(f.s.iter().all(|&v| v == 1 || v == -1));
            if f.s[0] == f.s[1] {
                aligned += 1;
            }
        }
        let freq = aligned as f64 / draws as f64;
        let se = (expect * (1.0 - expect) / draws as f64).sqrt();
        assert!((freq - expect).abs() < 4.0 * se, "{freq} vs {expect}");
        // enormous coupling pins alignment
        let strong = ExactSignSampler::new(&d, &[100.0, 100.0]).unwrap();
        assert!(strong.align_probability(0, 1) > 1.0 - 1e-12);
        // nonpositive field rejected
        assert!(ExactSignSampler::new(&d, &[1.0, 0.0]).is_err());
        assert!(ExactSignSampler::new(&d, &[1.0, -2.0]).is_err());
    }

    #[test]
    fn swendsen_wang_matches_exact_enumeration() {
        // 2×2 grid, moderately inhomogeneous field
        let d = Domain::grid(2, 2).unwrap();
        let l = vec![0.3, 1.1, 0.7, 0.5];
        let exact = ExactSignSampler::new(&d, &l).unwrap();
        let sw = SignSampler::new(&d, &l).unwrap();
        let sweeps = 2 * sw.auto_sweeps(StreamKey::root(64).child("burnin"));
        let draws = 30_000usize;
        let mut counts = vec![0usize; 16];
        let key = StreamKey::root(64).child("sw");
        for r in 0..draws {
            let f = sw.run(sweeps, None, &mut key.index(r as u64).rng());
            let mask: usize = f
                .s
                .iter()
                .enumerate()
                .map(|(i, &v)| if v == 1 { 1 << i } else { 0 })
                .sum();
            counts[mask] += 1;
        }
        let tv: f64 = exact
            .probabilities()
            .iter()
            .enumerate()
            .map(|(m, &p)| (p - counts[m] as f64 / draws as f64).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.03, "total variation {tv}");
    }

    #[test]
    fn conditioned_sampling_matches_restricted_law() {
        let d = two_site();
        let l = vec![0.8, 1.3];
        let exact = ExactSignSampler::new(&d, &l).unwrap();
        // P(σ_1 = + | σ_0 = +) by direct summation
        let p_joint: f64 = exact
            .probabilities()
            .iter()
            .enumerate()
            .filter(|(m, _)| m & 1 == 1 && m >> 1 & 1 == 1)
            .map(|(_, &p)| p)
            .sum();
        let p_cond = p_joint / exact.plus_probability(0);
        let mut rng = StreamKey::root(65).child("cond").rng();
        let draws = 20_000usize;
        let mut plus = 0usize;
        for _ in 0..draws {
            let f = exact.sample_conditioned_with(0, 1, &mut rng).unwrap();
            assert_eq!(f.s[0], 1);
            if f.s[1] == 1 {
                plus += 1;
            }
        }
        let freq = plus as f64 / draws as f64;
        let se = (p_cond * (1.0 - p_cond) / draws as f64).sqrt();
        assert!((freq - p_cond).abs() < 4.0 * se, "{freq} vs {p_cond}");
        // SW conditional agrees too
        let sw = SignSampler::new(&d, &l).unwrap();
        let mut plus_sw = 0usize;
        let key = StreamKey::root(65).child("sw-cond");
        for r in 0..draws {
            let f = sw.run(12, Some((0, 1)), &mut key.index(r as u64).rng());
            assert_eq!(f.s[0], 1);
            if f.s[1] == 1 {
                plus_sw += 1;
            }
        }
        let freq_sw = plus_sw as f64 / draws as f64;
        assert!((freq_sw - p_cond).abs() < 4.0 * se, "{freq_sw} vs {p_cond}");
    }

    #[test]
    fn isomorphism_square_identity() {
        let l = OccupationField {
            l: vec![0.4, 1.7, 0.02],
        };
        let s = SignField {
            s: vec![1, -1, -1],
        };
        let psi = isomorphism_field(&l, &s).unwrap();
        for (p, (&lx, &sx)) in psi.iter().zip(l.l.iter().zip(&s.s)) {
            assert_relative_eq!(p * p, 2.0 * lx, epsilon = 1e-14);
            assert_eq!(p.signum() as i8, sx);
        }
        let bad = SignField { s: vec![1, -1] };
        assert!(isomorphism_field(&l, &bad).is_err());
    }

    #[test]
    fn isomorphism_two_site_covariance() {
        // E[ψ_x ψ_y] should match G_xy = 1/15 on the critical two-site domain
        let d = two_site();
        let k = Killing::critical(2);
        let key = StreamKey::root(66).child("iso");
        let reps = 30_000usize;
        let mut prods = Vec::with_capacity(reps);
        for r in 0..reps {
            let soup =
                sample_critical_soup(&d, 0.5, 12, key.index(r as u64).child("s")).unwrap();
            let l = occupation_field(&d, &soup, &k, key.index(r as u64).child("o")).unwrap();
            let exact = ExactSignSampler::new(&d, &l.l).unwrap();
            let signs = exact.sample_with(&mut key.index(r as u64).child("sg").rng());
            let psi = isomorphism_field(&l, &signs).unwrap();
            prods.push(psi[0] * psi[1]);
        }
        let (mean, se) = crate::stats::mean_stderr(&prods).unwrap();
        let expect = 1.0 / 15.0;
        assert!(
            (mean - expect).abs() < 3.0 * se + 1e-6,
            "cov {mean} vs {expect} (se {se})"
        );
    }

    #[test]
    fn covariance_helpers() {
        let samples = vec![vec![1.0, -1.0], vec![-1.0, 1.0], vec![2.0, 0.5], vec![0.0, 0.5]];
        let cov = empirical_covariance(&samples).unwrap();
        assert_eq!(cov.nrows(), 2);
        assert_relative_eq!(cov[(0, 1)], cov[(1, 0)]);
        let target = DMatrix::identity(2, 2);
        let (max_abs, _) = covariance_max_dev(&samples, &target).unwrap();
        assert!(max_abs > 0.0);
        assert!(empirical_covariance(&samples[..1]).is_err());
    }

    #[test]
    fn perturbation_identity_subdomain_never_flags() {
        let d = Domain::grid(3, 3).unwrap();
        let key = StreamKey::root(67).child("pert-id");
        let x0 = Site { x: 1, y: 1 };
        for r in 0..50 {
            let out = perturbation_coupling(
                &d,
                &d,
                x0,
                &MassField::parse("0.5").unwrap(),
                12,
                key.index(r),
            )
            .unwrap();
            assert!(!out.flag);
            let i = d.index_of(x0).unwrap() as usize;
            assert_eq!(out.psi[i].to_bits(), out.psi_prime[i].to_bits());
        }
    }

    #[test]
    fn perturbation_coupled_equality_and_errors() {
        let d = Domain::grid(3, 3).unwrap();
        let sub = Domain::from_spec(&DomainSpec::Rect {
            x0: 0,
            y0: 0,
            x1: 2,
            y1: 1,
        })
        .unwrap();
        let x0 = Site { x: 1, y: 1 };
        let m = MassField::parse("0.4").unwrap();
        let key = StreamKey::root(68).child("pert");
        let mut flags = 0usize;
        for r in 0..200 {
            let out = perturbation_coupling(&d, &sub, x0, &m, 10, key.index(r)).unwrap();
            let ib = d.index_of(x0).unwrap();
            let is = sub.index_of(x0).unwrap();
            if out.flag {
                flags += 1;
            } else {
                assert_eq!(
                    out.psi[ib].to_bits(),
                    out.psi_prime[is].to_bits(),
                    "coupled values must be identical when no loop links x0 to D\\D'"
                );
            }
            assert_eq!(out.psi.len(), 9);
            assert_eq!(out.psi_prime.len(), 6);
        }
        // some replicas must flag on this geometry (loops through (1,1)
        // reaching the removed top row are common at critical mass 0.4)
        assert!(flags > 0, "expected at least one flagged replica");
        // x0 outside the subdomain errors
        let bad = perturbation_coupling(&d, &sub, Site { x: 1, y: 2 }, &m, 10, key);
        assert!(bad.is_err());
        // subdomain not contained in domain errors
        let outside = Domain::from_spec(&DomainSpec::Sites {
            sites: vec![(0, 0), (5, 5)],
        })
        .unwrap();
        assert!(perturbation_coupling(&d, &outside, Site { x: 0, y: 0 }, &m, 10, key).is_err());
    }

    #[test]
    fn perturbation_flag_estimator_consistent() {
        // the standalone estimator uses the same soup stream, so it must
        // reproduce the coupling's flag replica by replica
        let d = Domain::grid(3, 3).unwrap();
        let sub = Domain::from_spec(&DomainSpec::Rect {
            x0: 0,
            y0: 0,
            x1: 2,
            y1: 1,
        })
        .unwrap();
        let x0 = Site { x: 1, y: 1 };
        let m = MassField::parse("0.4").unwrap();
        let key = StreamKey::root(69).child("flag");
        for r in 0..100 {
            let out = perturbation_coupling(&d, &sub, x0, &m, 10, key.index(r)).unwrap();
            let flag = perturbation_flag_only(&d, &sub, x0, &m, 10, key.index(r)).unwrap();
            assert_eq!(out.flag, flag);
        }
    }
}
