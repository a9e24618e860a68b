//! Occupation times and the occupation field of a soup realization.
//!
//! Each loop dresses its visited sites with i.i.d. Exp(1) holding times
//! scaled by 1/(k_x+4); the field adds an independent Gamma(1/2, 1/(k_x+4))
//! base term per site. At intensity λ = 1/2 the field's Laplace transform is
//! the determinant ratio √(det A / det(A + diag v)) — the exact oracle the
//! Monte Carlo estimates are verified against.
//!
//! Dressing randomness is keyed to loop identity (layer, root, length, seq)
//! under a caller-supplied occupation key, separate from the loop-sampling
//! streams. Consequences: a fixed soup can be re-dressed reproducibly, and
//! the field is bitwise additive across Poisson layers — dressing the 2λ
//! realization equals dressing the λ realization plus the extra layer's
//! contributions, because each loop's draws depend only on its own identity.

use crate::error::{Error, Result};
use crate::lattice::{transition_kernel, Domain, Killing};
use crate::loop_measure::UnrootedLoop;
use crate::rng::StreamKey;
use crate::soup::{LoopId, LoopSoup};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};

/// Site-indexed occupation field L.
#[derive(Clone, Debug)]
pub struct OccupationField {
    pub l: Vec<f64>,
}

impl OccupationField {
    pub fn len(&self) -> usize {
        self.l.len()
    }

    pub fn is_empty(&self) -> bool {
        self.l.is_empty()
    }

    pub fn get(&self, site: usize) -> f64 {
        self.l[site]
    }
}

/// Occupation time of one loop: for each visited site x with multiplicity
/// n(x), T_x = (Σ_{i=1}^{n(x)} τ_i)/(k_x+4) with τ_i i.i.d. Exp(1). Returned
/// sparse, sorted by site; untouched sites are absent (i.e. zero).
pub fn occupation_time(
    class: &UnrootedLoop,
    killing: &Killing,
    rng: &mut impl Rng,
) -> Vec<(usize, f64)> {
    class
        .visits()
        .iter()
        .map(|&(site, mult)| {
            let mut tau = 0.0;
            for _ in 0..mult {
                let e: f64 = Exp1.sample(rng);
                tau += e;
            }
            (site as usize, tau / (killing.k[site as usize] + 4.0))
        })
        .collect()
}

fn loop_stream(occ_key: StreamKey, id: LoopId) -> StreamKey {
    occ_key
        .child("loop")
        .index(id.layer as u64)
        .index(id.root as u64)
        .index(id.len as u64)
        .index(id.seq as u64)
}

/// Dress a soup realization into an occupation field:
/// L_x = Σ_loops T_x(γ̃) + base_x, base_x ~ Gamma(1/2, 1/(k_x+4)).
pub fn occupation_field(
    domain: &Domain,
    soup: &LoopSoup,
    killing: &Killing,
    occ_key: StreamKey,
) -> Result<OccupationField> {
    if killing.k.len() != domain.len() {
        return Err(Error::InvalidArgument(format!(
            "killing has {} entries for a {}-site domain",
            killing.k.len(),
            domain.len()
        )));
    }
    let mut l = base_field(domain, killing, occ_key)?;
    for lp in &soup.loops {
        let mut rng = loop_stream(occ_key, lp.id).rng();
        for (site, t) in occupation_time(&lp.class, killing, &mut rng) {
            l[site] += t;
        }
    }
    Ok(OccupationField { l })
}

/// The base terms alone (the field of the empty soup).
pub fn base_field(domain: &Domain, killing: &Killing, occ_key: StreamKey) -> Result<Vec<f64>> {
    let mut l = Vec::with_capacity(domain.len());
    for x in 0..domain.len() {
        let scale = 1.0 / (killing.k[x] + 4.0);
        let g = Gamma::new(0.5, scale)
            .map_err(|e| Error::InvalidArgument(format!("Gamma(1/2, {scale}): {e}")))?;
        let mut rng = occ_key.child("base").index(x as u64).rng();
        l.push(g.sample(&mut rng));
    }
    Ok(l)
}

/// Contributions of a subset of loops, added onto an existing field in soup
/// order — the additivity path used when layering.
pub fn add_loop_contributions(
    field: &mut OccupationField,
    soup: &LoopSoup,
    killing: &Killing,
    occ_key: StreamKey,
    skip: usize,
) -> Result<()> {
    for lp in soup.loops.iter().skip(skip) {
        let mut rng = loop_stream(occ_key, lp.id).rng();
        for (site, t) in occupation_time(&lp.class, killing, &mut rng) {
            field.l[site] += t;
        }
    }
    Ok(())
}

/// Monte Carlo Laplace transform: mean and standard error of
/// exp(−Σ_x v_x L_x) over replica fields.
pub fn laplace_mc(fields: &[OccupationField], v: &[f64]) -> Result<(f64, f64)> {
    if fields.len() < 1000 {
        return Err(Error::TooFewSamples {
            got: fields.len(),
            need: 1000,
            what: "occupation-field replicas",
        });
    }
    if v.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "test function v must be nonnegative and finite".into(),
        ));
    }
    let mut vals = Vec::with_capacity(fields.len());
    for f in fields {
        if f.l.len() != v.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} sites, v has {}",
                f.l.len(),
                v.len()
            )));
        }
        let dot: f64 = f.l.iter().zip(v).map(|(a, b)| a * b).sum();
        vals.push((-dot).exp());
    }
    crate::stats::mean_stderr(&vals)
}

/// Exact Laplace transform at λ = 1/2: √(det A / det(A + diag v)), via
/// Cholesky log-determinants.
pub fn laplace_exact(a: &DMatrix<f64>, v: &[f64]) -> Result<f64> {
    let n = a.nrows();
    if a.ncols() != n || v.len() != n {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: A is {}×{}, v has {}",
            n,
            a.ncols(),
            v.len()
        )));
    }
    let ld_a = chol_logdet(a).ok_or(Error::NotPositiveDefinite { hint: None })?;
    let mut av = a.clone();
    for i in 0..n {
        av[(i, i)] += v[i];
    }
    let ld_av = chol_logdet(&av).ok_or(Error::NotPositiveDefinite {
        hint: Some("A + diag(v) lost positive definiteness".into()),
    })?;
    Ok((0.5 * (ld_a - ld_av)).exp())
}

fn chol_logdet(m: &DMatrix<f64>) -> Option<f64> {
    let chol = nalgebra::Cholesky::new(m.clone())?;
    let l = chol.l();
    let mut ld = 0.0;
    for i in 0..m.nrows() {
        ld += l[(i, i)].ln();
    }
    Some(2.0 * ld)
}

/// Upper bound on the Laplace-transform bias from truncating loop lengths at
/// `maxlen`: |E e^{−⟨v,L⟩}_trunc − E e^{−⟨v,L⟩}| ≤ Σ_x v_x·E[L^tail_x]
/// where E[L^tail_x] = λ/(k_x+4)·Σ_{r>maxlen even} (P^r)_{xx}, summed in
/// closed form over the symmetrized kernel's spectrum.
pub fn truncation_bias_budget(
    domain: &Domain,
    killing: &Killing,
    lambda: f64,
    v: &[f64],
    maxlen: usize,
) -> Result<f64> {
    if maxlen % 2 != 0 || maxlen == 0 {
        return Err(Error::InvalidArgument(format!(
            "maxlen must be even and positive, got {maxlen}"
        )));
    }
    let n = domain.len();
    if v.len() != n {
        return Err(Error::InvalidArgument(format!(
            "v has {} entries for a {n}-site domain",
            v.len()
        )));
    }
    let p = transition_kernel(domain, killing)?;
    // symmetrize: S = D^{1/2} P D^{-1/2} with D_x = k_x + 4; S shares P's
    // spectrum and (P^r)_{xx} = (S^r)_{xx} = Σ_i ρ_i^r w_i(x)²
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let di = (killing.k[i] + 4.0).sqrt();
            let dj = (killing.k[j] + 4.0).sqrt();
            s[(i, j)] = di * p[(i, j)] / dj;
        }
    }
    // enforce exact symmetry before the eigensolve
    let s_sym = (&s + s.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(s_sym);
    let mut budget = 0.0;
    for x in 0..n {
        if v[x] == 0.0 {
            continue;
        }
        let mut tail_xx = 0.0;
        for (i, &rho) in eig.eigenvalues.iter().enumerate() {
            let r2 = rho * rho;
            if r2 >= 1.0 {
                return Err(Error::InvalidArgument(
                    "kernel spectral radius ≥ 1; tail sum diverges".into(),
                ));
            }
            let w = eig.eigenvectors[(x, i)];
            // Σ_{r = maxlen+2, maxlen+4, …} ρ^r = ρ^{maxlen+2}/(1−ρ²)
            tail_xx += w * w * rho.powi(maxlen as i32 + 2) / (1.0 - r2);
        }
        budget += v[x] * lambda * tail_xx.max(0.0) / (killing.k[x] + 4.0);
    }
    Ok(budget)
}

/// Write a field as CSV rows `x,y,L`.
pub fn write_field_csv(
    domain: &Domain,
    field: &OccupationField,
    out: &mut impl std::io::Write,
) -> Result<()> {
    writeln!(out, "x,y,L")?;
    for (i, &l) in field.l.iter().enumerate() {
        let s = domain.site(i);
        writeln!(out, "{},{},{}", s.x, s.y, l)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::DomainSpec;
    use crate::loop_measure::RootedLoop;
    use crate::soup::{layered_soup, sample_critical_soup, sample_soup};
    use approx::assert_relative_eq;
    use statrs::distribution::ContinuousCDF;

    fn two_site() -> Domain {
        Domain::from_spec(&DomainSpec::Sites {
            sites: vec![(0, 0), (1, 0)],
        })
        .unwrap()
    }

    #[test]
    fn two_step_loop_occupation_mean() {
        let d = two_site();
        let k = Killing::critical(2);
        let rooted = RootedLoop::new(&d, vec![0, 1, 0]).unwrap();
        let class = UnrootedLoop::from_rooted(&rooted);
        let mut rng = StreamKey::root(21).child("occ-mean").rng();
        let reps = 100_000usize;
        let mut sum = 0.0;
        for _ in 0..reps {
            let t = occupation_time(&class, &k, &mut rng);
            assert_eq!(t.len(), 2); // both sites visited once
            sum += t[0].1;
        }
        let mean = sum / reps as f64;
        // T ~ Exp(1)/4: mean 1/4, sd 1/4
        let se = 0.25 / (reps as f64).sqrt();
        assert!((mean - 0.25).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn double_visit_is_gamma_two() {
        // 4-step loop x→y→x→y visits each site twice
        let d = two_site();
        let k = Killing::critical(2);
        let rooted = RootedLoop::new(&d, vec![0, 1, 0, 1, 0]).unwrap();
        let class = UnrootedLoop::from_rooted(&rooted);
        let mut rng = StreamKey::root(22).child("occ-gamma").rng();
        let reps = 20_000usize;
        let mut xs = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t = occupation_time(&class, &k, &mut rng);
            xs.push(t[0].1);
        }
        // T_x ~ Gamma(shape 2, scale 1/4) = Gamma(shape 2, rate 4)
        let gamma = statrs::distribution::Gamma::new(2.0, 4.0).unwrap();
        let ks = crate::stats::one_sample_ks(&xs, |x| gamma.cdf(x)).unwrap();
        assert!(ks.p_value > 0.01, "p = {}", ks.p_value);
    }

    #[test]
    fn single_site_field_is_chi_square() {
        // single site, k≡0: 2L ~ Gamma(1/2, scale 1/2) = φ² for φ~N(0,1/4)
        let d = Domain::from_spec(&DomainSpec::Sites {
            sites: vec![(0, 0)],
        })
        .unwrap();
        let k = Killing::critical(1);
        let key = StreamKey::root(23).child("chisq");
        let reps = 100_000usize;
        let empty = LoopSoup {
            lambda: 0.5,
            maxlen: 2,
            loops: vec![],
        };
        let mut xs = Vec::with_capacity(reps);
        for r in 0..reps {
            let f = occupation_field(&d, &empty, &k, key.index(r as u64)).unwrap();
            xs.push(2.0 * f.l[0]);
        }
        let gamma = statrs::distribution::Gamma::new(0.5, 2.0).unwrap(); // rate 2 ⇔ scale 1/2
        let ks = crate::stats::one_sample_ks(&xs, |x| gamma.cdf(x)).unwrap();
        assert!(ks.p_value > 0.01, "p = {}", ks.p_value);
    }

    #[test]
    fn two_site_mean_matches_green_diagonal() {
        // E[L_x] = G_xx/2 = 2/15 at λ = 1/2
        let d = two_site();
        let k = Killing::critical(2);
        let key = StreamKey::root(24).child("green-mean");
        let reps = 30_000usize;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for r in 0..reps {
            let s = sample_critical_soup(&d, 0.5, 10, key.index(r as u64).child("s")).unwrap();
            let f = occupation_field(&d, &s, &k, key.index(r as u64).child("o")).unwrap();
            sum += f.l[0];
            sq += f.l[0] * f.l[0];
        }
        let mean = sum / reps as f64;
        let sd = (sq / reps as f64 - mean * mean).sqrt();
        let se = sd / (reps as f64).sqrt();
        let expect = 2.0 / 15.0;
        // maxlen-10 truncation bias on the mean is ≤ (1/2)·Σ_{r>10}(P^r)_xx/4
        // = (1/2)(1/4)·16^{-6}/(1-1/16) ≈ 8e-9 — invisible at this tolerance
        assert!(
            (mean - expect).abs() < 4.0 * se,
            "mean {mean} vs {expect} (se {se})"
        );
    }

    #[test]
    fn laplace_exact_oracles() {
        // single site k≡0: A = [4], v = 1 → √(4/5)
        let d1 = Domain::from_spec(&DomainSpec::Sites {
            sites: vec![(0, 0)],
        })
        .unwrap();
        let a1 = crate::lattice::precision_matrix(&d1, &Killing::critical(1)).unwrap();
        assert_relative_eq!(
            laplace_exact(&a1, &[1.0]).unwrap(),
            (4.0f64 / 5.0).sqrt(),
            epsilon = 1e-14
        );
        assert_relative_eq!(laplace_exact(&a1, &[0.0]).unwrap(), 1.0);
        // two-site: √(det[[4,−1],[−1,4]]/det[[5,−1],[−1,5]]) = √(15/24)
        let d2 = two_site();
        let a2 = crate::lattice::precision_matrix(&d2, &Killing::critical(2)).unwrap();
        assert_relative_eq!(
            laplace_exact(&a2, &[1.0, 1.0]).unwrap(),
            (15.0f64 / 24.0).sqrt(),
            epsilon = 1e-14
        );
        // destroying positive definiteness errors
        assert!(laplace_exact(&a2, &[-10.0, 0.0]).is_err());
    }

    #[test]
    fn laplace_mc_matches_exact() {
        let d = two_site();
        let k = Killing::critical(2);
        let key = StreamKey::root(25).child("laplace");
        let maxlen = 12;
        let reps = 30_000usize;
        let mut fields = Vec::with_capacity(reps);
        for r in 0..reps {
            let s = sample_critical_soup(&d, 0.5, maxlen, key.index(r as u64).child("s")).unwrap();
            fields.push(occupation_field(&d, &s, &k, key.index(r as u64).child("o")).unwrap());
        }
        let v = vec![1.0, 1.0];
        let (est, se) = laplace_mc(&fields, &v).unwrap();
        let exact = (15.0f64 / 24.0).sqrt();
        let bias = truncation_bias_budget(&d, &k, 0.5, &v, maxlen).unwrap();
        assert!(
            (est - exact).abs() < 3.0 * se + bias,
            "est {est} vs {exact} (se {se}, bias {bias})"
        );
        // v ≡ 0 → exactly 1 with zero stderr
        let (one, zero) = laplace_mc(&fields, &[0.0, 0.0]).unwrap();
        assert_eq!(one, 1.0);
        assert_eq!(zero, 0.0);
        assert!(laplace_mc(&fields[..10], &v).is_err());
        assert!(laplace_mc(&fields, &[-1.0, 0.0]).is_err());
    }

    #[test]
    fn truncation_budget_decays_and_bounds() {
        let d = Domain::grid(3, 3).unwrap();
        let k = Killing::critical(9);
        let v = vec![1.0; 9];
        let b8 = truncation_bias_budget(&d, &k, 0.5, &v, 8).unwrap();
        let b16 = truncation_bias_budget(&d, &k, 0.5, &v, 16).unwrap();
        let b32 = truncation_bias_budget(&d, &k, 0.5, &v, 32).unwrap();
        assert!(b8 > b16 && b16 > b32 && b32 > 0.0);
        // two-site closed form: tail_xx = Σ_{j>M/2} 16^{-j} = 16^{-(M/2+1)}·16/15
        let d2 = two_site();
        let k2 = Killing::critical(2);
        let b = truncation_bias_budget(&d2, &k2, 0.5, &[1.0, 1.0], 4).unwrap();
        let tail = 16.0f64.powi(-3) * 16.0 / 15.0;
        assert_relative_eq!(b, 2.0 * 0.5 * tail / 4.0, epsilon = 1e-12);
        assert!(truncation_bias_budget(&d2, &k2, 0.5, &[1.0, 1.0], 3).is_err());
    }

    #[test]
    fn field_additive_over_layers() {
        let d = Domain::grid(3, 3).unwrap();
        let k = Killing::critical(9);
        let key = StreamKey::root(26).child("layers");
        let fams = layered_soup(&d, &k, &[0.5, 1.0], 8, key.child("soup")).unwrap();
        let occ = key.child("occ");
        let f_small = occupation_field(&d, &fams[0], &k, occ).unwrap();
        let f_big = occupation_field(&d, &fams[1], &k, occ).unwrap();
        // adding the extra layer's contributions onto the small field in soup
        // order reproduces the big field bitwise
        let mut rebuilt = f_small.clone();
        add_loop_contributions(&mut rebuilt, &fams[1], &k, occ, fams[0].loops.len()).unwrap();
        for (a, b) in rebuilt.l.iter().zip(&f_big.l) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn re_dressing_is_reproducible_and_independent() {
        let d = Domain::grid(3, 3).unwrap();
        let k = Killing::critical(9);
        let s = sample_soup(&d, &k, 2.0, 8, StreamKey::root(27).child("s")).unwrap();
        let o1 = occupation_field(&d, &s, &k, StreamKey::root(27).child("dress")).unwrap();
        let o2 = occupation_field(&d, &s, &k, StreamKey::root(27).child("dress")).unwrap();
        assert!(o1.l.iter().zip(&o2.l).all(|(a, b)| a.to_bits() == b.to_bits()));
        let o3 = occupation_field(&d, &s, &k, StreamKey::root(27).child("other")).unwrap();
        assert!(o1.l.iter().zip(&o3.l).any(|(a, b)| a.to_bits() != b.to_bits()));
    }

    #[test]
    fn csv_export_shape() {
        let d = two_site();
        let k = Killing::critical(2);
        let empty = LoopSoup {
            lambda: 0.5,
            maxlen: 2,
            loops: vec![],
        };
        let f = occupation_field(&d, &empty, &k, StreamKey::root(28)).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&d, &f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.trim().lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "x,y,L");
        assert!(lines[1].starts_with("0,0,"));
    }
}
