//! Poisson sampling of random-walk loop soups.
//!
//! A soup realization holds, for every (root x, even length 2n ≤ maxlen), a
//! Poisson(λ·q[2n][x]/(2n)) number of loops, each drawn from the rooted
//! measure conditioned on (root, length) by an h-transform bridge: from z
//! with r steps remaining, step to w with probability
//! p_{z,w}·(P^{r−1})_{w,x}/(P^r)_{z,x}. Every loop carries an Exp(1) mark
//! T_γ̃, persisted so that thinning couplings across different mass profiles
//! reuse the same randomness: the massive soup is the critical one minus the
//! loops with Σ_i m²(γ̃(i)) > T_γ̃.
//!
//! Loops additionally carry a structural id (layer, root, length, sequence
//! number) that downstream occupation dressing keys its streams on — that is
//! what makes the occupation field additive across Poisson layers and
//! byte-stable under replica parallelism.

use crate::error::{Error, Result};
use crate::lattice::{transition_kernel, Domain, Killing};
use crate::loop_measure::{return_probabilities, ReturnTable, RootedLoop, UnrootedLoop};
use crate::mass::MassField;
use crate::rng::StreamKey;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

/// Identity of a loop within a (possibly layered) realization; stable across
/// runs with the same seed and independent of scheduling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LoopId {
    pub layer: u32,
    pub root: u32,
    pub len: u32,
    pub seq: u32,
}

#[derive(Clone, Debug)]
pub struct SoupLoop {
    pub id: LoopId,
    pub rooted: RootedLoop,
    pub class: UnrootedLoop,
    /// Exp(1) thinning mark T_γ̃.
    pub mark: f64,
}

/// One realization of the soup. Immutable once sampled.
#[derive(Clone, Debug)]
pub struct LoopSoup {
    pub lambda: f64,
    pub maxlen: usize,
    pub loops: Vec<SoupLoop>,
}

impl LoopSoup {
    pub fn len(&self) -> usize {
        self.loops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loops.is_empty()
    }

    /// Count loops of a given length.
    pub fn count_len(&self, len: usize) -> usize {
        self.loops.iter().filter(|l| l.class.len() == len).count()
    }
}

/// Sample a soup with killing `k` at intensity λ, truncated at maxlen.
/// `key` should already encode experiment and replica; per-(root,length)
/// streams are derived below it.
pub fn sample_soup(
    domain: &Domain,
    killing: &Killing,
    lambda: f64,
    maxlen: usize,
    key: StreamKey,
) -> Result<LoopSoup> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "intensity must be positive and finite, got {lambda}"
        )));
    }
    let p = transition_kernel(domain, killing)?;
    let table = return_probabilities(&p, maxlen)?;
    sample_soup_with_table(domain, &table, lambda, maxlen, key, 0)
}

/// Same, reusing a precomputed power table (the expensive part for repeated
/// replicas).
pub fn sample_soup_with_table(
    domain: &Domain,
    table: &ReturnTable,
    lambda: f64,
    maxlen: usize,
    key: StreamKey,
    layer: u32,
) -> Result<LoopSoup> {
    if maxlen > table.maxlen {
        return Err(Error::InvalidArgument(format!(
            "maxlen {} exceeds table depth {}",
            maxlen, table.maxlen
        )));
    }
    let mut loops = Vec::new();
    for x in 0..domain.len() {
        for len in (2..=maxlen).step_by(2) {
            let mean = table.intensity(lambda, len, x);
            if mean <= 0.0 {
                continue;
            }
            let mut rng = key.child("site").index(x as u64).child("len").index(len as u64).rng();
            let count = Poisson::new(mean)
                .map_err(|e| Error::InvalidArgument(format!("Poisson({mean}): {e}")))?
                .sample(&mut rng) as u64;
            for seq in 0..count {
                let rooted = sample_bridge_with(domain, table, x, len, &mut rng)?;
                let class = UnrootedLoop::from_rooted(&rooted);
                let mark: f64 = Exp1.sample(&mut rng);
                loops.push(SoupLoop {
                    id: LoopId {
                        layer,
                        root: x as u32,
                        len: len as u32,
                        seq: seq as u32,
                    },
                    rooted,
                    class,
                    mark,
                });
            }
        }
    }
    Ok(LoopSoup {
        lambda,
        maxlen,
        loops,
    })
}

/// Critical soup: k ≡ 0.
pub fn sample_critical_soup(
    domain: &Domain,
    lambda: f64,
    maxlen: usize,
    key: StreamKey,
) -> Result<LoopSoup> {
    sample_soup(domain, &Killing::critical(domain.len()), lambda, maxlen, key)
}

/// Rooted-measure bridge conditioned on (root, length): h-transform against
/// the kernel powers.
pub fn sample_bridge(
    domain: &Domain,
    table: &ReturnTable,
    root: usize,
    len: usize,
    key: StreamKey,
) -> Result<RootedLoop> {
    let mut rng = key.rng();
    sample_bridge_with(domain, table, root, len, &mut rng)
}

fn sample_bridge_with(
    domain: &Domain,
    table: &ReturnTable,
    root: usize,
    len: usize,
    rng: &mut impl Rng,
) -> Result<RootedLoop> {
    if len < 2 || len % 2 != 0 || len > table.maxlen {
        return Err(Error::InvalidArgument(format!(
            "bridge length must be even, ≥ 2 and ≤ table depth, got {len}"
        )));
    }
    if table.q(len, root) <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "no length-{len} loops exist at root {root} (zero return probability)"
        )));
    }
    let p = &table.powers[1];
    let mut sites = Vec::with_capacity(len + 1);
    sites.push(root as u32);
    let mut z = root;
    for r in (1..=len).rev() {
        let denom = table.powers[r][(z, root)];
        let u: f64 = rng.random::<f64>() * denom;
        let mut acc = 0.0;
        let mut chosen = None;
        for nb in domain.neighbors(z).iter().flatten() {
            let w = *nb as usize;
            let weight = p[(z, w)] * table.powers[r - 1][(w, root)];
            acc += weight;
            if u < acc {
                chosen = Some(w);
                break;
            }
        }
        // rounding can push u past the last positive weight; take the last
        // admissible neighbour in that case
        let next = match chosen {
            Some(w) => w,
            None => {
                let mut fallback = None;
                for nb in domain.neighbors(z).iter().flatten() {
                    let w = *nb as usize;
                    if p[(z, w)] * table.powers[r - 1][(w, root)] > 0.0 {
                        fallback = Some(w);
                    }
                }
                fallback.ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "bridge stuck at site {z} with {r} steps remaining"
                    ))
                })?
            }
        };
        sites.push(next as u32);
        z = next;
    }
    debug_assert_eq!(z, root);
    RootedLoop::new(domain, sites)
}

/// Σ_{i=0}^{2n−1} m²(γ̃(i)) over the canonical cycle — the thinning exponent.
/// Rotation-invariant because it sums every visit once.
pub fn killing_exponent(domain: &Domain, class: &UnrootedLoop, mass: &MassField) -> Result<f64> {
    let mut total = 0.0;
    for (site, mult) in class.visits() {
        let s = domain.site(site as usize);
        total += mult as f64 * mass.sq((s.x as f64, s.y as f64))?;
    }
    Ok(total)
}

/// Prop.-style thinning: drop every loop with killing exponent exceeding its
/// mark. The survivors form a massive soup with k = 4(e^{m²}−1); marks are
/// kept so further (larger-mass) thinnings stay coupled.
pub fn thin_to_massive(
    domain: &Domain,
    soup: &LoopSoup,
    mass: &MassField,
) -> Result<LoopSoup> {
    let mut loops = Vec::with_capacity(soup.loops.len());
    for l in &soup.loops {
        if killing_exponent(domain, &l.class, mass)? <= l.mark {
            loops.push(l.clone());
        }
    }
    Ok(LoopSoup {
        lambda: soup.lambda,
        maxlen: soup.maxlen,
        loops,
    })
}

/// Monotone family of realizations at ascending intensities, built by Poisson
/// superposition: the λ_{i+1} realization is the λ_i one plus an independent
/// (λ_{i+1}−λ_i)-layer.
pub fn layered_soup(
    domain: &Domain,
    killing: &Killing,
    lambdas: &[f64],
    maxlen: usize,
    key: StreamKey,
) -> Result<Vec<LoopSoup>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty intensity list".into()));
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) || !(lambdas[0] > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "intensities must be positive and strictly ascending, got {lambdas:?}"
        )));
    }
    let p = transition_kernel(domain, killing)?;
    let table = return_probabilities(&p, maxlen)?;
    let mut out: Vec<LoopSoup> = Vec::with_capacity(lambdas.len());
    let mut acc: Vec<SoupLoop> = Vec::new();
    let mut prev = 0.0;
    for (i, &lam) in lambdas.iter().enumerate() {
        let layer = sample_soup_with_table(
            domain,
            &table,
            lam - prev,
            maxlen,
            key.child("layer").index(i as u64),
            i as u32,
        )?;
        acc.extend(layer.loops);
        out.push(LoopSoup {
            lambda: lam,
            maxlen,
            loops: acc.clone(),
        });
        prev = lam;
    }
    Ok(out)
}

/// A lattice loop viewed at scale N: duration |γ̃|/(2N²), coordinates in
/// units of 1/N.
#[derive(Clone, Debug)]
pub struct RescaledLoop {
    pub duration: f64,
    pub points: Vec<(f64, f64)>,
    pub mark: f64,
}

impl RescaledLoop {
    pub fn diameter(&self) -> f64 {
        crate::geometry::point_set_diameter(&self.points)
    }
}

/// Rescaled view of a domain soup.
pub fn rescale_soup(domain: &Domain, soup: &LoopSoup, n_scale: u32) -> Result<Vec<RescaledLoop>> {
    if n_scale < 2 {
        return Err(Error::InvalidArgument(format!(
            "rescaling needs N ≥ 2, got {n_scale}"
        )));
    }
    let n = n_scale as f64;
    Ok(soup
        .loops
        .iter()
        .map(|l| RescaledLoop {
            duration: l.class.len() as f64 / (2.0 * n * n),
            points: l
                .rooted
                .cycle()
                .iter()
                .map(|&s| {
                    let site = domain.site(s as usize);
                    (site.x as f64 / n, site.y as f64 / n)
                })
                .collect(),
            mark: l.mark,
        })
        .collect())
}

/// Cumulative length table for full-plane rescaled sampling: entry (2n, c)
/// where c is the cumulative Σ r_{2m}/(2m) over even 2m ≤ 2n in range, and
/// r_{2m} = (C(2m,m)·2^{−2m})² is the simple-walk return probability on ℤ².
#[derive(Clone, Debug)]
pub struct PlaneLengthTable {
    pub n_scale: u32,
    pub len_min: usize,
    pub lens: Vec<usize>,
    pub cum: Vec<f64>,
    /// Σ r_{2m}/(2m) over the whole range — per-root intensity at λ=1.
    pub per_root_mass: f64,
}

fn srw_return_probability(two_n: usize) -> f64 {
    // r = (C(2n,n) 2^{-2n})², via log-gamma for large n
    use statrs::function::gamma::ln_gamma;
    let n = two_n as f64 / 2.0;
    let lnc = ln_gamma(2.0 * n + 1.0) - 2.0 * ln_gamma(n + 1.0);
    let l = lnc - (two_n as f64) * std::f64::consts::LN_2;
    (2.0 * l).exp()
}

pub fn plane_length_table(n_scale: u32, t_min: f64, t_max: f64) -> Result<PlaneLengthTable> {
    if n_scale < 2 || !(t_min > 0.0) || t_max <= t_min {
        return Err(Error::InvalidArgument(format!(
            "need N ≥ 2 and 0 < t_min < t_max, got N={n_scale}, [{t_min}, {t_max}]"
        )));
    }
    let nn = 2.0 * (n_scale as f64) * (n_scale as f64);
    let mut len_min = (t_min * nn).ceil() as usize;
    if len_min % 2 == 1 {
        len_min += 1;
    }
    len_min = len_min.max(2);
    let len_max = (t_max * nn).floor() as usize;
    if len_max < len_min {
        return Err(Error::InvalidArgument(format!(
            "duration window [{t_min}, {t_max}] contains no even lattice length at N={n_scale}"
        )));
    }
    let mut lens = Vec::new();
    let mut cum = Vec::new();
    let mut acc = 0.0;
    let mut l = len_min;
    while l <= len_max {
        acc += srw_return_probability(l) / l as f64;
        lens.push(l);
        cum.push(acc);
        l += 2;
    }
    Ok(PlaneLengthTable {
        n_scale,
        len_min,
        lens,
        cum,
        per_root_mass: acc,
    })
}

/// A rescaled full-plane loop retained inside the window.
pub type PlaneLoop = RescaledLoop;

/// Sample the rescaled critical soup in a rectangular window
/// (x0, y0, x1, y1): roots run over all lattice sites of N·window, lengths
/// over the table range with the exact per-(root,length) intensity
/// λ·r_{2n}/(2n), and only loops whose every vertex stays inside the window
/// survive (restriction to the domain). Bridges use the diagonal trick: an
/// ℤ² bridge is two independent ±1 bridges along the diagonals, each a
/// uniform shuffle of n "+1"s and n "−1"s.
pub fn sample_rescaled_plane_soup(
    window: (f64, f64, f64, f64),
    table: &PlaneLengthTable,
    lambda: f64,
    key: StreamKey,
) -> Result<Vec<PlaneLoop>> {
    let (x0, y0, x1, y1) = window;
    if !(x1 > x0 && y1 > y0) {
        return Err(Error::InvalidArgument(format!("empty window {window:?}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("intensity {lambda} must be > 0")));
    }
    let n = table.n_scale as f64;
    let gx0 = (x0 * n).ceil() as i64;
    let gx1 = (x1 * n).floor() as i64;
    let gy0 = (y0 * n).ceil() as i64;
    let gy1 = (y1 * n).floor() as i64;
    let nx = (gx1 - gx0 + 1).max(0) as u64;
    let ny = (gy1 - gy0 + 1).max(0) as u64;
    let n_roots = nx * ny;
    if n_roots == 0 {
        return Ok(Vec::new());
    }
    let total_mean = lambda * table.per_root_mass * n_roots as f64;
    let mut rng = key.rng();
    let count = if total_mean > 0.0 {
        Poisson::new(total_mean)
            .map_err(|e| Error::InvalidArgument(format!("Poisson({total_mean}): {e}")))?
            .sample(&mut rng) as u64
    } else {
        0
    };
    let nn = 2.0 * n * n;
    let mut out = Vec::new();
    let mut steps: Vec<i8> = Vec::new();
    for _ in 0..count {
        // root uniform over window lattice sites
        let rx = gx0 + rng.random_range(0..nx) as i64;
        let ry = gy0 + rng.random_range(0..ny) as i64;
        // length from the normalized cumulative table
        let u: f64 = rng.random::<f64>() * table.per_root_mass;
        let idx = table.cum.partition_point(|&c| c < u).min(table.lens.len() - 1);
        let len = table.lens[idx];
        let half = len / 2;
        // two independent diagonal ±1 bridges
        steps.clear();
        steps.resize(half, 1i8);
        steps.resize(len, -1i8);
        partial_shuffle_all(&mut steps, &mut rng);
        let du: Vec<i8> = steps.clone();
        steps.clear();
        steps.resize(half, 1i8);
        steps.resize(len, -1i8);
        partial_shuffle_all(&mut steps, &mut rng);
        // walk and collect rescaled vertices, checking containment
        let mut px = rx;
        let mut py = ry;
        let mut pts = Vec::with_capacity(len);
        let mut inside = true;
        for i in 0..len {
            pts.push((px as f64 / n, py as f64 / n));
            let (u_step, v_step) = (du[i] as i64, steps[i] as i64);
            px += (u_step + v_step) / 2;
            py += (u_step - v_step) / 2;
            if px < gx0 || px > gx1 || py < gy0 || py > gy1 {
                inside = false;
                break;
            }
        }
        let mark: f64 = Exp1.sample(&mut rng);
        if !inside || (px, py) != (rx, ry) {
            // the bridge construction always closes; the second clause is a
            // defensive check, not a reachable branch
            continue;
        }
        out.push(PlaneLoop {
            duration: len as f64 / nn,
            points: pts,
            mark,
        });
    }
    Ok(out)
}

fn partial_shuffle_all(v: &mut [i8], rng: &mut impl Rng) {
    // Fisher–Yates; rand's SliceRandom works too, spelled out to keep the
    // draw order part of this crate's determinism contract
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i as u64) as usize;
        v.swap(i, j);
    }
}

/// Thinning exponent for a rescaled loop: Σ_i m²(p_i)/(2N²) with p_i the
/// rescaled vertices — equals t·m² for constant m.
pub fn plane_killing_exponent(
    l: &PlaneLoop,
    mass: &MassField,
    n_scale: u32,
) -> Result<f64> {
    let nn = 2.0 * (n_scale as f64) * (n_scale as f64);
    let mut acc = 0.0;
    for &p in &l.points {
        acc += mass.sq(p)?;
    }
    Ok(acc / nn)
}

// ---------------------------------------------------------------------------
// serialization: soup dumps with a versioned header

pub const SOUP_DUMP_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
pub struct SoupDump {
    pub format_version: u32,
    pub kind: String,
    pub domain: crate::lattice::DomainSpec,
    pub lambda: f64,
    pub mass: String,
    pub maxlen: usize,
    pub seed: u64,
    pub loops: Vec<DumpLoop>,
}

#[derive(Serialize, Deserialize)]
pub struct DumpLoop {
    /// Canonical cycle as lattice coordinates (closing repeat omitted).
    pub points: Vec<(i32, i32)>,
    pub mark: f64,
}

pub fn dump_soup(
    domain: &Domain,
    spec: &crate::lattice::DomainSpec,
    soup: &LoopSoup,
    mass_src: &str,
    seed: u64,
) -> SoupDump {
    SoupDump {
        format_version: SOUP_DUMP_VERSION,
        kind: "lattice-soup".into(),
        domain: spec.clone(),
        lambda: soup.lambda,
        mass: mass_src.to_owned(),
        maxlen: soup.maxlen,
        seed,
        loops: soup
            .loops
            .iter()
            .map(|l| DumpLoop {
                points: l
                    .class
                    .canonical()
                    .iter()
                    .map(|&s| {
                        let site = domain.site(s as usize);
                        (site.x, site.y)
                    })
                    .collect(),
                mark: l.mark,
            })
            .collect(),
    }
}
