//! Massive Brownian loop soup with a duration cutoff.
//!
//! Loops with duration ≥ t0 rooted in a sampling box arrive as a Poisson
//! process of total mean λ·Area/(2π·t0); each has a uniform root, a duration
//! with density t0/t² on [t0, ∞), and a path built from a standard Brownian
//! bridge by the scaling map (root, duration) ↦ root + √t·B_{s/t}. Loops
//! leaving the domain are rejected — exactly the restriction property at
//! path resolution. Each loop carries an Exp(1) mark; the massive soup is
//! obtained by dropping loops whose killing functional R_m = ∫ m²(γ(s)) ds
//! exceeds their mark, and shared marks couple the soups across different
//! masses.
//!
//! Path resolution is adaptive: M = max(64, ceil(t/h²)) points for a
//! configured spatial step h, so spatial accuracy is uniform across
//! durations.

use crate::conformal::ConformalMap;
use crate::error::{Error, Result};
use crate::mass::MassField;
use crate::rng::StreamKey;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

pub type Pt = (f64, f64);

/// Minimum number of path points per loop regardless of duration.
pub const MIN_RESOLUTION: usize = 64;

/// Plane region the soup is restricted to.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum PlaneDomain {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disc { cx: f64, cy: f64, r: f64 },
}

impl PlaneDomain {
    pub fn unit_square() -> Self {
        PlaneDomain::Rect {
            x0: 0.0,
            y0: 0.0,
            x1: 1.0,
            y1: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PlaneDomain::Rect { x0, y0, x1, y1 } => x1 > x0 && y1 > y0,
            PlaneDomain::Disc { r, .. } => r > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidDomain(format!("degenerate plane domain {self:?}")))
        }
    }

    /// Axis-aligned bounding box (the sampling box for roots).
    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        match *self {
            PlaneDomain::Rect { x0, y0, x1, y1 } => (x0, y0, x1, y1),
            PlaneDomain::Disc { cx, cy, r } => (cx - r, cy - r, cx + r, cy + r),
        }
    }

    pub fn bbox_area(&self) -> f64 {
        let (x0, y0, x1, y1) = self.bbox();
        (x1 - x0) * (y1 - y0)
    }

    pub fn contains(&self, p: Pt) -> bool {
        match *self {
            PlaneDomain::Rect { x0, y0, x1, y1 } => {
                p.0 >= x0 && p.0 <= x1 && p.1 >= y0 && p.1 <= y1
            }
            PlaneDomain::Disc { cx, cy, r } => (p.0 - cx).hypot(p.1 - cy) <= r,
        }
    }

    pub fn diam(&self) -> f64 {
        match *self {
            PlaneDomain::Rect { x0, y0, x1, y1 } => (x1 - x0).hypot(y1 - y0),
            PlaneDomain::Disc { r, .. } => 2.0 * r,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BrownianLoop {
    pub root: Pt,
    /// Time length of the loop.
    pub duration: f64,
    /// M+1 points γ(j·t/M), j = 0..M, closed: first = last = root. After a
    /// conformal transport the grid is no longer uniform and `times` holds
    /// the stamps.
    pub path: Vec<Pt>,
    /// Time stamps for each path point when the parametrization is not the
    /// uniform grid (set by conformal transport), else None.
    pub times: Option<Vec<f64>>,
    /// Number of steps M (path has M+1 points).
    pub resolution: usize,
    /// Exp(1) thinning mark.
    pub mark: f64,
}

impl BrownianLoop {
    /// Time stamp of path point j.
    pub fn time_at(&self, j: usize) -> f64 {
        match &self.times {
            Some(ts) => ts[j],
            None => self.duration * j as f64 / self.resolution as f64,
        }
    }

    /// True if some increment exceeds 6·√(Δt) for its grid step — a bridge
    /// increment at ~6 standard deviations, indicating a corrupted path.
    pub fn step_flag(&self) -> bool {
        for j in 0..self.resolution {
            let dt = self.time_at(j + 1) - self.time_at(j);
            if dt <= 0.0 {
                return true;
            }
            let dx = self.path[j + 1].0 - self.path[j].0;
            let dy = self.path[j + 1].1 - self.path[j].1;
            if dx.hypot(dy) > 6.0 * dt.sqrt() {
                return true;
            }
        }
        false
    }

    pub fn diameter(&self) -> f64 {
        crate::geometry::point_set_diameter(&self.path)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BrownianSoupConfig {
    pub domain: PlaneDomain,
    pub lambda: f64,
    /// Duration cutoff t0 > 0; the loop measure diverges as t → 0, so every
    /// soup carries its cutoff.
    pub t0: f64,
    /// Spatial step h for the adaptive resolution M = max(64, ceil(t/h²)).
    pub spatial_step: f64,
}

impl BrownianSoupConfig {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "intensity must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.t0 > 0.0) || !self.t0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "duration cutoff must be positive, got {}",
                self.t0
            )));
        }
        if !(self.spatial_step > 0.0) || !self.spatial_step.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "spatial step must be positive, got {}",
                self.spatial_step
            )));
        }
        Ok(())
    }

    pub fn resolution_for(&self, t: f64) -> usize {
        let m = (t / (self.spatial_step * self.spatial_step)).ceil() as usize;
        m.max(MIN_RESOLUTION)
    }
}

/// One replica of the soup, with pre-restriction records kept for count and
/// duration statistics.
#[derive(Clone, Debug)]
pub struct BrownianSoup {
    /// Loops whose full path stayed inside the domain.
    pub loops: Vec<BrownianLoop>,
    /// Poisson count before restriction.
    pub pre_count: u64,
    /// All sampled durations, including rejected loops.
    pub pre_durations: Vec<f64>,
}

/// Sample one realization. Loop i draws from the stream key/"loop"/i, so
/// generation is order-independent and parallelizable.
pub fn sample_brownian_soup(cfg: &BrownianSoupConfig, key: StreamKey) -> Result<BrownianSoup> {
    cfg.validate()?;
    let (x0, y0, x1, y1) = cfg.domain.bbox();
    let area = cfg.domain.bbox_area();
    let mean = cfg.lambda * area / (2.0 * std::f64::consts::PI * cfg.t0);
    let mut head_rng = key.child("count").rng();
    let count = Poisson::new(mean)
        .map_err(|e| Error::InvalidArgument(format!("Poisson({mean}): {e}")))?
        .sample(&mut head_rng) as u64;
    let mut loops = Vec::new();
    let mut pre_durations = Vec::with_capacity(count as usize);
    for i in 0..count {
        let mut rng = key.child("loop").index(i).rng();
        let root = (
            x0 + (x1 - x0) * rng.random::<f64>(),
            y0 + (y1 - y0) * rng.random::<f64>(),
        );
        // duration density t0/t² on [t0, ∞): t = t0/U
        let mut u: f64 = rng.random();
        while u == 0.0 {
            u = rng.random();
        }
        let t = cfg.t0 / u;
        pre_durations.push(t);
        let m = cfg.resolution_for(t);
        if let Some(path) = bridge_path_in(root, t, m, &cfg.domain, &mut rng) {
            let mark: f64 = Exp1.sample(&mut rng);
            loops.push(BrownianLoop {
                root,
                duration: t,
                path,
                times: None,
                resolution: m,
                mark,
            });
        }
    }
    Ok(BrownianSoup {
        loops,
        pre_count: count,
        pre_durations,
    })
}

/// Standard 2-D Brownian bridge of duration t from/to `root` on the uniform
/// M-step grid, generated point by point from the bridge's conditional law:
/// with R steps left, the next value is B·(R−1)/R + N(0, Δt·(R−1)/R) per
/// coordinate. Returns None as soon as a point leaves `domain` — the loop is
/// rejected by restriction at that moment, so the rest of the path is never
/// materialized. The duration tail t0/t² makes that matter: a duration far
/// above diam(D)² would otherwise allocate t/h² points only to be thrown
/// away, and such draws sampled the whole path here before this construction
/// replaced the walk-minus-drift one (W_j − (j/M)·W_M needs W_M up front).
/// Both produce the same grid marginal of the bridge.
fn bridge_path_in(
    root: Pt,
    t: f64,
    m: usize,
    domain: &PlaneDomain,
    rng: &mut impl Rng,
) -> Option<Vec<Pt>> {
    if !domain.contains(root) {
        return None;
    }
    let dt = t / m as f64;
    let mut path = Vec::with_capacity((m + 1).min(1 << 16));
    path.push(root);
    let (mut bx, mut by) = (0.0f64, 0.0f64);
    for j in 1..m {
        let r = (m - j + 1) as f64;
        let shrink = (r - 1.0) / r;
        let sd = (dt * shrink).sqrt();
        let gx: f64 = StandardNormal.sample(rng);
        let gy: f64 = StandardNormal.sample(rng);
        bx = bx * shrink + sd * gx;
        by = by * shrink + sd * gy;
        let p = (root.0 + bx, root.1 + by);
        if !domain.contains(p) {
            return None;
        }
        path.push(p);
    }
    // last step is deterministic: the bridge closes at the root
    path.push(root);
    Some(path)
}

/// R_m = ∫₀^t m²(γ(s)) ds by the trapezoid rule on the stored grid (uniform
/// or transported). Exact for constant m.
pub fn killing_functional(l: &BrownianLoop, mass: &MassField) -> Result<f64> {
    let mut acc = 0.0;
    let mut prev = mass.sq(l.path[0])?;
    for j in 1..=l.resolution {
        let cur = mass.sq(l.path[j])?;
        let dt = l.time_at(j) - l.time_at(j - 1);
        acc += 0.5 * (prev + cur) * dt;
        prev = cur;
    }
    Ok(acc)
}

/// Drop every loop with R_m exceeding its mark. Marks persist, so thinning
/// the same realization at a larger mass removes a superset of loops.
pub fn thin_to_massive_brownian(
    loops: &[BrownianLoop],
    mass: &MassField,
) -> Result<Vec<BrownianLoop>> {
    let mut out = Vec::with_capacity(loops.len());
    for l in loops {
        if killing_functional(l, mass)? <= l.mark {
            out.push(l.clone());
        }
    }
    Ok(out)
}

/// Transport a loop through a conformal map: points f(γ_j), new time stamps
/// s_j = ∫₀^{t_j} |f'(γ(u))|² du (trapezoid), new duration s_M.
pub fn conformal_transport(l: &BrownianLoop, f: &ConformalMap) -> Result<BrownianLoop> {
    let mut path = Vec::with_capacity(l.path.len());
    let mut times = Vec::with_capacity(l.path.len());
    let mut acc = 0.0;
    let mut prev_d2 = {
        let d = f.deriv_abs(l.path[0])?;
        d * d
    };
    path.push(f.apply(l.path[0]));
    times.push(0.0);
    for j in 1..=l.resolution {
        let d = f.deriv_abs(l.path[j])?;
        let d2 = d * d;
        let dt = l.time_at(j) - l.time_at(j - 1);
        acc += 0.5 * (prev_d2 + d2) * dt;
        prev_d2 = d2;
        path.push(f.apply(l.path[j]));
        times.push(acc);
    }
    Ok(BrownianLoop {
        root: path[0],
        duration: acc,
        path,
        times: Some(times),
        resolution: l.resolution,
        mark: l.mark,
    })
}

/// The mass a transported soup must carry for the thinning weights to match:
/// m̃(w) = |f'(f⁻¹(w))|⁻¹·m(f⁻¹(w)).
pub fn mass_transport(mass: MassField, f: ConformalMap) -> MassField {
    mass.transported(f)
}

/// Mean-count bound behind the duration-tail estimate: the expected number
/// of loops with duration ≥ θ staying inside D is at most λ·diam(D)²/θ.
pub fn duration_tail_bound(domain: &PlaneDomain, lambda: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be positive, got {theta}"
        )));
    }
    Ok(lambda * domain.diam() * domain.diam() / theta)
}
