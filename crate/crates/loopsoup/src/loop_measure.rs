//! Rooted and unrooted random-walk loop measures on a finite domain.
//!
//! A rooted loop of length 2n carries weight (2n)⁻¹·Π p_{x_i,x_{i+1}}; an
//! unrooted loop (rotation class) carries the sum of its ρ distinct rooted
//! rotations, which collapses to (ρ/2n)·Π_x (k_x+4)^{−n(x)}. The total
//! unrooted mass is −log det(I − P) (odd traces vanish since ℤ² is
//! bipartite), and the part carried by loops longer than a cutoff is summed
//! exactly from the eigenvalues of the symmetrized kernel. A brute-force
//! enumerator over small domains is kept as the oracle everything else is
//! tested against.

use crate::error::{Error, Result};
use crate::lattice::{Domain, Killing};
use nalgebra::DMatrix;

/// Default cap on DFS steps for `enumerate_loops`; the intended scale is
/// maxlen ≤ 12 on ≤ 16 sites, and this cap is what actually enforces the
/// budget (a two-site domain allows much deeper searches than a 4×4 one).
pub const ENUM_NODE_CAP: u64 = 50_000_000;

/// Closed nearest-neighbour path x₀,…,x_{2n} with x₀ = x_{2n}, stored as
/// domain site indices (length 2n+1 including the repeated root).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RootedLoop {
    sites: Vec<u32>,
}

impl RootedLoop {
    pub fn new(domain: &Domain, sites: Vec<u32>) -> Result<RootedLoop> {
        if sites.len() < 3 || sites.len() % 2 == 0 {
            return Err(Error::MalformedLoop(format!(
                "need an odd number of ≥ 3 points (2n steps + repeated root), got {}",
                sites.len()
            )));
        }
        if sites.first() != sites.last() {
            return Err(Error::MalformedLoop("not closed".into()));
        }
        for w in sites.windows(2) {
            let (a, b) = (w[0] as usize, w[1] as usize);
            if a >= domain.len() || b >= domain.len() {
                return Err(Error::MalformedLoop(format!(
                    "site index {} out of domain",
                    w[0].max(w[1])
                )));
            }
            let (sa, sb) = (domain.site(a), domain.site(b));
            if (sa.x - sb.x).abs() + (sa.y - sb.y).abs() != 1 {
                return Err(Error::MalformedLoop(format!(
                    "({},{}) -> ({},{}) is not a lattice step",
                    sa.x, sa.y, sb.x, sb.y
                )));
            }
        }
        Ok(RootedLoop { sites })
    }

    /// Number of steps 2n.
    pub fn len(&self) -> usize {
        self.sites.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn root(&self) -> u32 {
        self.sites[0]
    }

    /// The full point sequence including the closing repeat.
    pub fn points(&self) -> &[u32] {
        &self.sites
    }

    /// The cycle x₀..x_{2n−1} (closing repeat dropped).
    pub fn cycle(&self) -> &[u32] {
        &self.sites[..self.sites.len() - 1]
    }
}

/// Rotation class of a rooted loop: the lexicographically least rotation of
/// the cycle, the number ρ of distinct rotations, and visit multiplicities.
/// Reversal is *not* quotiented — a cycle and its time-reversal are different
/// classes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UnrootedLoop {
    canonical: Vec<u32>,
    rho: u32,
}

/// Index of the lexicographically least rotation (Booth's algorithm).
fn least_rotation(s: &[u32]) -> usize {
    let n = s.len();
    let at = |i: usize| s[i % n];
    let (mut i, mut j, mut k) = (0usize, 1usize, 0usize);
    while i < n && j < n && k < n {
        let (a, b) = (at(i + k), at(j + k));
        if a == b {
            k += 1;
            continue;
        }
        if a > b {
            i = (i + k + 1).max(j);
            j = i + 1;
        } else {
            j = (j + k + 1).max(i + 1);
        }
        k = 0;
    }
    i.min(j)
}

/// Smallest period of the sequence (via the KMP failure function).
fn period(s: &[u32]) -> usize {
    let n = s.len();
    let mut fail = vec![0usize; n];
    for i in 1..n {
        let mut k = fail[i - 1];
        while k > 0 && s[i] != s[k] {
            k = fail[k - 1];
        }
        if s[i] == s[k] {
            k += 1;
        }
        fail[i] = k;
    }
    let p = n - fail[n - 1];
    if n % p == 0 {
        p
    } else {
        n
    }
}

impl UnrootedLoop {
    pub fn from_rooted(l: &RootedLoop) -> UnrootedLoop {
        let cycle = l.cycle();
        let start = least_rotation(cycle);
        let n = cycle.len();
        let canonical: Vec<u32> = (0..n).map(|i| cycle[(start + i) % n]).collect();
        // distinct rotations of a cycle = its primitive period (shifting by
        // the period reproduces the sequence, smaller shifts don't)
        let rho = period(&canonical) as u32;
        UnrootedLoop { canonical, rho }
    }

    pub fn len(&self) -> usize {
        self.canonical.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rho(&self) -> u32 {
        self.rho
    }

    pub fn canonical(&self) -> &[u32] {
        &self.canonical
    }

    /// (site, multiplicity n(x,γ̃)) pairs, sorted by site index.
    pub fn visits(&self) -> Vec<(u32, u32)> {
        let mut v = self.canonical.clone();
        v.sort_unstable();
        let mut out: Vec<(u32, u32)> = Vec::new();
        for s in v {
            match out.last_mut() {
                Some((site, c)) if *site == s => *c += 1,
                _ => out.push((s, 1)),
            }
        }
        out
    }
}

/// (2n)⁻¹ Π_i p_{x_i,x_{i+1}}. Zero transitions (walking through a
/// non-neighbour in a mismatched kernel) simply make the weight 0.
pub fn rooted_weight(l: &RootedLoop, p: &DMatrix<f64>) -> f64 {
    let mut w = 1.0 / l.len() as f64;
    for st in l.points().windows(2) {
        w *= p[(st[0] as usize, st[1] as usize)];
    }
    w
}

/// (ρ/2n)·Π_x (k_x+4)^{−n(x,γ̃)} — the rotation-sum of rooted weights in
/// closed form.
pub fn unrooted_weight(l: &UnrootedLoop, killing: &Killing) -> f64 {
    let mut w = l.rho() as f64 / l.len() as f64;
    for (site, mult) in l.visits() {
        w *= (killing.k[site as usize] + 4.0).powi(-(mult as i32));
    }
    w
}

/// Powers P⁰..P^maxlen of the kernel; the diagonal of P^{2n} gives the
/// return probabilities q[2n][x], and the off-diagonal entries drive the
/// bridge sampler.
#[derive(Clone, Debug)]
pub struct ReturnTable {
    pub maxlen: usize,
    pub powers: Vec<DMatrix<f64>>,
}

impl ReturnTable {
    /// q[len][x] = (P^len)_{x,x}.
    pub fn q(&self, len: usize, site: usize) -> f64 {
        self.powers[len][(site, site)]
    }

    /// Poisson intensity of (root x, length 2n) under intensity λ:
    /// λ·q[2n][x]/(2n).
    pub fn intensity(&self, lambda: f64, len: usize, site: usize) -> f64 {
        lambda * self.q(len, site) / len as f64
    }

    /// Σ over roots and even lengths ≤ maxlen of the intensities at λ=1:
    /// the truncated total mass, as seen by the sampler.
    pub fn truncated_total(&self) -> f64 {
        let n = self.powers[0].nrows();
        let mut total = 0.0;
        for len in (2..=self.maxlen).step_by(2) {
            for x in 0..n {
                total += self.q(len, x) / len as f64;
            }
        }
        total
    }
}

pub fn return_probabilities(p: &DMatrix<f64>, maxlen: usize) -> Result<ReturnTable> {
    if maxlen < 2 || maxlen % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "maxlen must be even and ≥ 2, got {maxlen}"
        )));
    }
    let n = p.nrows();
    let mut powers = Vec::with_capacity(maxlen + 1);
    powers.push(DMatrix::identity(n, n));
    for r in 1..=maxlen {
        let next = &powers[r - 1] * p;
        powers.push(next);
    }
    Ok(ReturnTable { maxlen, powers })
}

/// Total unrooted mass Σ_{n≥1} tr(Pⁿ)/n = −log det(I−P); the determinant is
/// computed by LU factorization.
pub fn total_mass(p: &DMatrix<f64>) -> Result<f64> {
    let n = p.nrows();
    let det = (DMatrix::<f64>::identity(n, n) - p).lu().determinant();
    if !(det > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "det(I-P) = {det}; spectral radius must be < 1 for a loop measure"
        )));
    }
    Ok(-det.ln())
}

/// Eigenvalues of P, real because P is similar to the symmetric matrix
/// D^{1/2}·P·D^{−1/2} with D = diag(k+4); D is recovered from P's nonzero
/// entries (p = 1/(k+4) along every in-domain edge out of a site).
pub fn kernel_eigenvalues(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    let mut d = vec![1.0f64; n];
    for i in 0..n {
        let row_max = p.row(i).iter().cloned().fold(0.0f64, f64::max);
        if row_max > 0.0 {
            d[i] = 1.0 / row_max;
        }
    }
    let mut s = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = d[i].sqrt() * p[(i, j)] / d[j].sqrt();
        }
    }
    let asym = (&s - s.transpose())
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if asym > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "kernel is not symmetrizable by diag(k+4) (asymmetry {asym:.3e}); not a killed-walk kernel"
        )));
    }
    // enforce exact symmetry before the symmetric eigensolver
    let sym = (&s + s.transpose()) * 0.5;
    Ok(sym.symmetric_eigen().eigenvalues.iter().cloned().collect())
}

/// Σ_{even r ≤ maxlen} tr(P^r)/r, via eigenvalues — the mass carried by loops
/// of length ≤ maxlen.
pub fn truncated_mass(p: &DMatrix<f64>, maxlen: usize) -> Result<f64> {
    if maxlen % 2 != 0 {
        return Err(Error::InvalidArgument(format!("maxlen must be even, got {maxlen}")));
    }
    let eigs = kernel_eigenvalues(p)?;
    let mut total = 0.0;
    for r in (2..=maxlen).step_by(2) {
        let tr: f64 = eigs.iter().map(|e| e.powi(r as i32)).sum();
        total += tr / r as f64;
    }
    Ok(total)
}

/// Exact tail Σ_{even r > maxlen} tr(P^r)/r =
/// Σ_i [ −½·log(1−ρ_i²) − Σ_{even r ≤ maxlen} ρ_i^r/r ].
pub fn truncation_tail(p: &DMatrix<f64>, maxlen: usize) -> Result<f64> {
    if maxlen % 2 != 0 {
        return Err(Error::InvalidArgument(format!("maxlen must be even, got {maxlen}")));
    }
    let eigs = kernel_eigenvalues(p)?;
    let mut tail = 0.0;
    for &e in &eigs {
        let e2 = e * e;
        if e2 >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "kernel eigenvalue {e} outside (-1,1)"
            )));
        }
        let mut head = 0.0;
        for r in (2..=maxlen).step_by(2) {
            head += e.powi(r as i32) / r as f64;
        }
        tail += -0.5 * (1.0 - e2).ln() - head;
    }
    // clamp tiny negative rounding
    Ok(tail.max(0.0))
}

/// One rotation class found by the enumerator, with both sides of the
/// oracle identity attached.
#[derive(Clone, Debug)]
pub struct EnumeratedClass {
    pub class: UnrootedLoop,
    /// Number of distinct rooted loops that mapped to this class.
    pub rooted_count: u32,
    /// Σ rooted_weight over those rooted loops.
    pub rooted_sum: f64,
    /// Closed-form (ρ/2n)·Π (k+4)^{−n(x)}.
    pub unrooted_weight: f64,
}

#[derive(Clone, Debug)]
pub struct LoopEnumeration {
    pub maxlen: usize,
    /// Sorted by (length, canonical sequence) — deterministic.
    pub classes: Vec<EnumeratedClass>,
    /// rooted_by_root_len[x][n−1] = Σ rooted weights of loops rooted at x of
    /// length 2n.
    pub rooted_by_root_len: Vec<Vec<f64>>,
    /// DFS steps taken (budget accounting).
    pub visited: u64,
}

impl LoopEnumeration {
    pub fn total_weight(&self) -> f64 {
        self.classes.iter().map(|c| c.unrooted_weight).sum()
    }
}

/// Exhaustively enumerate every unrooted loop of length ≤ maxlen by walking
/// all closed paths from every root. Each rotation class is found once per
/// rooted representative; canonical-form deduplication merges them and checks
/// nothing twice. The search is budgeted by DFS step count (`node_cap`,
/// default `ENUM_NODE_CAP`) — this is what makes a two-site/length-20 request
/// fine while a 3×3/length-20 one errors out.
pub fn enumerate_loops(
    domain: &Domain,
    killing: &Killing,
    maxlen: usize,
    node_cap: Option<u64>,
) -> Result<LoopEnumeration> {
    if maxlen < 2 || maxlen % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "maxlen must be even and ≥ 2, got {maxlen}"
        )));
    }
    let cap = node_cap.unwrap_or(ENUM_NODE_CAP);
    let p = crate::lattice::transition_kernel(domain, killing)?;
    let n_sites = domain.len();
    let mut visited: u64 = 0;
    let mut classes: std::collections::HashMap<Vec<u32>, EnumeratedClass> =
        std::collections::HashMap::new();
    let mut rooted_by_root_len = vec![vec![0.0f64; maxlen / 2]; n_sites];

    // recursive DFS over walk prefixes, product of step probabilities carried down
    let mut path: Vec<u32> = Vec::with_capacity(maxlen + 1);
    for root in 0..n_sites {
        path.clear();
        path.push(root as u32);
        dfs(
            domain,
            &p,
            killing,
            root,
            maxlen,
            cap,
            &mut path,
            1.0,
            &mut visited,
            &mut classes,
            &mut rooted_by_root_len,
        )?;
    }

    let mut classes: Vec<EnumeratedClass> = classes.into_values().collect();
    classes.sort_by(|a, b| {
        (a.class.len(), a.class.canonical()).cmp(&(b.class.len(), b.class.canonical()))
    });
    Ok(LoopEnumeration {
        maxlen,
        classes,
        rooted_by_root_len,
        visited,
    })
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    domain: &Domain,
    p: &DMatrix<f64>,
    killing: &Killing,
    root: usize,
    maxlen: usize,
    cap: u64,
    path: &mut Vec<u32>,
    prod: f64,
    visited: &mut u64,
    classes: &mut std::collections::HashMap<Vec<u32>, EnumeratedClass>,
    rooted_by_root_len: &mut [Vec<f64>],
) -> Result<()> {
    let depth = path.len() - 1; // steps taken so far
    if depth > 0 && depth % 2 == 0 && *path.last().unwrap() as usize == root {
        let rooted = RootedLoop {
            sites: path.clone(),
        };
        let w = prod / depth as f64;
        rooted_by_root_len[root][depth / 2 - 1] += w;
        let class = UnrootedLoop::from_rooted(&rooted);
        let entry = classes
            .entry(class.canonical().to_vec())
            .or_insert_with(|| EnumeratedClass {
                unrooted_weight: unrooted_weight(&class, killing),
                class,
                rooted_count: 0,
                rooted_sum: 0.0,
            });
        entry.rooted_count += 1;
        entry.rooted_sum += w;
    }
    if depth == maxlen {
        return Ok(());
    }
    let here = *path.last().unwrap() as usize;
    for nb in domain.neighbors(here).iter().flatten() {
        *visited += 1;
        if *visited > cap {
            return Err(Error::BudgetExceeded {
                visited: *visited,
                cap,
            });
        }
        let step_p = p[(here, *nb as usize)];
        path.push(*nb);
        dfs(
            domain,
            p,
            killing,
            root,
            maxlen,
            cap,
            path,
            prod * step_p,
            visited,
            classes,
            rooted_by_root_len,
        )?;
        path.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{transition_kernel, Domain, DomainSpec, Killing};
    use approx::assert_relative_eq;

    fn two_site() -> Domain {
        Domain::from_spec(&DomainSpec::Sites {
            sites: vec![(0, 0), (1, 0)],
        })
        .unwrap()
    }

    #[test]
    fn rooted_loop_validation() {
        let d = two_site();
        assert!(RootedLoop::new(&d, vec![0, 1, 0]).is_ok());
        assert!(RootedLoop::new(&d, vec![0, 1]).is_err()); // not closed, even points
        assert!(RootedLoop::new(&d, vec![0, 0, 0]).is_err()); // not a step
        assert!(RootedLoop::new(&d, vec![0, 7, 0]).is_err()); // out of domain
    }

    #[test]
    fn canonical_rotation_and_rho() {
        let d = Domain::grid(3, 3).unwrap();
        // unit square 0→1→4→3→0 in row-major indices
        let l = RootedLoop::new(&d, vec![1, 4, 3, 0, 1]).unwrap();
        let u = UnrootedLoop::from_rooted(&l);
        assert_eq!(u.canonical(), &[0, 1, 4, 3]);
        assert_eq!(u.rho(), 4);
        // rotating the representative changes nothing
        let l2 = RootedLoop::new(&d, vec![3, 0, 1, 4, 3]).unwrap();
        assert_eq!(UnrootedLoop::from_rooted(&l2), u);
        // reversal is a different class
        let r = RootedLoop::new(&d, vec![1, 0, 3, 4, 1]).unwrap();
        assert_ne!(UnrootedLoop::from_rooted(&r), u);

        // back-and-forth x→y→x→y→x has period 2, rho 2
        let bf = RootedLoop::new(&d, vec![0, 1, 0, 1, 0]).unwrap();
        let ubf = UnrootedLoop::from_rooted(&bf);
        assert_eq!(ubf.rho(), 2);
        assert_eq!(ubf.visits(), vec![(0, 2), (1, 2)]);
    }

    #[test]
    fn weights_match_hand_values() {
        let d = two_site();
        let k = Killing::critical(2);
        let p = transition_kernel(&d, &k).unwrap();
        // 2-step loop: (1/2)(1/4)(1/4) = 1/32 rooted, 1/16 unrooted
        let l = RootedLoop::new(&d, vec![0, 1, 0]).unwrap();
        assert_relative_eq!(rooted_weight(&l, &p), 1.0 / 32.0);
        let u = UnrootedLoop::from_rooted(&l);
        assert_relative_eq!(unrooted_weight(&u, &k), 1.0 / 16.0);
        // 4-step back-and-forth: unrooted (2/4)·4^{-4} = 1/512
        let bf = RootedLoop::new(&d, vec![0, 1, 0, 1, 0]).unwrap();
        let ubf = UnrootedLoop::from_rooted(&bf);
        assert_relative_eq!(unrooted_weight(&ubf, &k), 1.0 / 512.0);

        // unit-square cycle on 3×3: rooted (1/4)(1/4)^4 = 1/1024, unrooted 1/256
        let d3 = Domain::grid(3, 3).unwrap();
        let k3 = Killing::critical(9);
        let p3 = transition_kernel(&d3, &k3).unwrap();
        let sq = RootedLoop::new(&d3, vec![0, 1, 4, 3, 0]).unwrap();
        assert_relative_eq!(rooted_weight(&sq, &p3), 1.0 / 1024.0);
        assert_relative_eq!(
            unrooted_weight(&UnrootedLoop::from_rooted(&sq), &k3),
            1.0 / 256.0
        );
    }

    #[test]
    fn return_probabilities_two_site() {
        let d = two_site();
        let p = transition_kernel(&d, &Killing::critical(2)).unwrap();
        let t = return_probabilities(&p, 8).unwrap();
        assert_relative_eq!(t.q(2, 0), 1.0 / 16.0, epsilon = 1e-15);
        assert_relative_eq!(t.q(4, 0), 1.0 / 256.0, epsilon = 1e-15);
        assert_relative_eq!(t.q(6, 1), 1.0 / 4096.0, epsilon = 1e-15);
        assert!(return_probabilities(&p, 7).is_err());
        // single site: q ≡ 0
        let d1 = Domain::from_spec(&DomainSpec::Sites {
            sites: vec![(0, 0)],
        })
        .unwrap();
        let p1 = transition_kernel(&d1, &Killing::critical(1)).unwrap();
        let t1 = return_probabilities(&p1, 4).unwrap();
        assert_eq!(t1.q(2, 0), 0.0);
        assert_eq!(t1.q(4, 0), 0.0);
    }

    #[test]
    fn total_mass_two_site_exact() {
        let d = two_site();
        let p = transition_kernel(&d, &Killing::critical(2)).unwrap();
        let m = total_mass(&p).unwrap();
        assert_relative_eq!(m, (16.0f64 / 15.0).ln(), epsilon = 1e-12);
        // single site: no loops at all
        let d1 = Domain::from_spec(&DomainSpec::Sites {
            sites: vec![(0, 0)],
        })
        .unwrap();
        let p1 = transition_kernel(&d1, &Killing::critical(1)).unwrap();
        assert_relative_eq!(total_mass(&p1).unwrap(), 0.0);
    }

    #[test]
    fn total_mass_strictly_decreasing_in_killing() {
        let d = Domain::grid(3, 3).unwrap();
        let m0 = total_mass(&transition_kernel(&d, &Killing::critical(9)).unwrap()).unwrap();
        let mut k = vec![0.0; 9];
        k[4] = 0.3;
        let m1 = total_mass(&transition_kernel(&d, &Killing::new(k).unwrap()).unwrap()).unwrap();
        assert!(m1 < m0);
    }

    #[test]
    fn tail_two_site_series() {
        let d = two_site();
        let p = transition_kernel(&d, &Killing::critical(2)).unwrap();
        // tail over maxlen=2: Σ_{n≥2} (1/16)ⁿ/n = ln(16/15) − 1/16
        let tail = truncation_tail(&p, 2).unwrap();
        assert_relative_eq!(tail, (16.0f64 / 15.0).ln() - 1.0 / 16.0, epsilon = 1e-13);
        // head + tail = total mass, any cutoff
        for maxlen in [2usize, 4, 8, 16] {
            let head = truncated_mass(&p, maxlen).unwrap();
            let tail = truncation_tail(&p, maxlen).unwrap();
            assert_relative_eq!(head + tail, total_mass(&p).unwrap(), epsilon = 1e-12);
        }
        // monotone decreasing in maxlen, and ≤ total
        let t2 = truncation_tail(&p, 2).unwrap();
        let t4 = truncation_tail(&p, 4).unwrap();
        assert!(t4 < t2);
        assert!(t2 <= total_mass(&p).unwrap());
    }

    #[test]
    fn enumerate_two_site_maxlen4() {
        let d = two_site();
        let k = Killing::critical(2);
        let e = enumerate_loops(&d, &k, 4, None).unwrap();
        assert_eq!(e.classes.len(), 2);
        assert_relative_eq!(e.classes[0].unrooted_weight, 1.0 / 16.0);
        assert_relative_eq!(e.classes[1].unrooted_weight, 1.0 / 512.0);
        // two-site domain is branching-factor 1: depth 20 is fine under the cap
        let deep = enumerate_loops(&d, &k, 20, None).unwrap();
        let p = transition_kernel(&d, &k).unwrap();
        let total = total_mass(&p).unwrap();
        let tail = truncation_tail(&p, 20).unwrap();
        let head: f64 = deep.total_weight();
        assert!(head <= total + 1e-12);
        assert!(total - head <= tail + 1e-12);
        assert_relative_eq!(head + tail, total, epsilon = 1e-12);
    }

    #[test]
    fn enumerate_budget_and_degenerate() {
        let d = Domain::grid(3, 3).unwrap();
        let k = Killing::critical(9);
        assert!(matches!(
            enumerate_loops(&d, &k, 20, Some(100_000)),
            Err(Error::BudgetExceeded { .. })
        ));
        let d1 = Domain::from_spec(&DomainSpec::Sites {
            sites: vec![(0, 0)],
        })
        .unwrap();
        let e = enumerate_loops(&d1, &Killing::critical(1), 8, None).unwrap();
        assert!(e.classes.is_empty());
    }

    #[test]
    fn oracle_identities_on_3x3() {
        // the acceptance-criterion identities, at unit-test scale (len ≤ 6):
        // rotation-sum equality and per-(root,length) sums against P-powers
        let d = Domain::grid(3, 3).unwrap();
        let mass = crate::mass::MassField::parse("0.4").unwrap();
        let k = crate::lattice::killing_from_mass(&d, &mass).unwrap();
        let e = enumerate_loops(&d, &k, 6, None).unwrap();
        assert!(!e.classes.is_empty());
        for c in &e.classes {
            assert_eq!(c.rooted_count, c.class.rho());
            assert!(
                (c.rooted_sum - c.unrooted_weight).abs() <= 1e-14,
                "rotation sum {} vs closed form {}",
                c.rooted_sum,
                c.unrooted_weight
            );
        }
        let p = transition_kernel(&d, &k).unwrap();
        let t = return_probabilities(&p, 6).unwrap();
        for x in 0..9 {
            for n in 1..=3usize {
                let expect = t.q(2 * n, x) / (2.0 * n as f64);
                assert!(
                    (e.rooted_by_root_len[x][n - 1] - expect).abs() <= 1e-12,
                    "root {x} len {}: {} vs {}",
                    2 * n,
                    e.rooted_by_root_len[x][n - 1],
                    expect
                );
            }
        }
        // truncated trace mass agrees with the enumerator's total
        let head = truncated_mass(&p, 6).unwrap();
        assert_relative_eq!(head, e.total_weight(), epsilon = 1e-12);
    }

    #[test]
    fn massive_reweighting_identity() {
        // ν^{u,k}(γ̃) = ν^{u,0}(γ̃)·Π_x (4/(k_x+4))^{n(x,γ̃)}
        let d = Domain::grid(3, 3).unwrap();
        let mut kv = vec![0.0; 9];
        kv[4] = 1.3;
        kv[1] = 0.2;
        let k = Killing::new(kv.clone()).unwrap();
        let crit = Killing::critical(9);
        let e = enumerate_loops(&d, &crit, 6, None).unwrap();
        for c in &e.classes {
            let mut factor = 1.0;
            for (site, mult) in c.class.visits() {
                factor *= (4.0 / (kv[site as usize] + 4.0)).powi(mult as i32);
            }
            let massive = unrooted_weight(&c.class, &k);
            assert_relative_eq!(massive, c.unrooted_weight * factor, epsilon = 1e-13);
        }
    }
}
