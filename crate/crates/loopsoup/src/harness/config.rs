//! Run configuration: a single version-stamped TOML file drives every
//! experiment, and the file round-trips through serialization unchanged so a
//! report can embed the exact config that produced it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::brownian::PlaneDomain;
use crate::error::{Error, Result};
use crate::lattice::DomainSpec;
use crate::mass::MassField;

pub const CONFIG_VERSION: u32 = 1;

/// Cutoff parameters. Every estimate in a report cites the cutoffs it was
/// computed under; which fields matter depends on the experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Cutoffs {
    /// Lattice loop-length cutoff (even).
    #[serde(default)]
    pub maxlen: usize,
    /// Brownian duration cutoff t0.
    #[serde(default)]
    pub t0: f64,
    /// Largest lattice scale N; scale lists are doublings 8, 16, ..., n_scale.
    #[serde(default)]
    pub n_scale: u32,
    /// Upper duration bound for rescaled-soup length tables.
    #[serde(default)]
    pub duration_threshold: f64,
    /// Spatial step h for Brownian bridge resolution and rasterization.
    #[serde(default)]
    pub spatial_step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Config schema version; must equal [`CONFIG_VERSION`].
    pub version: u32,
    /// Registered experiment name; `experiment_names()` lists them.
    pub experiment: String,
    pub seed: u64,
    pub replicas: u64,
    /// Lattice domain, for experiments that need one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    /// Continuum domain, for experiments that need one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plane: Option<PlaneDomain>,
    pub lambda: f64,
    /// Mass expression in x and y; "0" means critical (no killing).
    pub mass: String,
    pub cutoffs: Cutoffs,
    /// Output directory for the report and raw CSVs; nothing is written when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(src: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(src).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let src = std::fs::read_to_string(path)?;
        RunConfig::from_toml(&src)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialize: {e}")))
    }

    /// Structural checks shared by every experiment; runners validate their
    /// own slices on top of this.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} not supported (expected {})",
                self.version, CONFIG_VERSION
            )));
        }
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be >= 1".into()));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be positive and finite, got {}",
                self.lambda
            )));
        }
        MassField::parse(&self.mass)?;
        crate::harness::lookup_experiment(&self.experiment)?;
        Ok(())
    }

    pub fn mass_field(&self) -> Result<MassField> {
        MassField::parse(&self.mass)
    }

    /// The doubling list 8, 16, ..., n_scale used by the scaling experiments.
    pub fn scale_list(&self) -> Result<Vec<u32>> {
        let top = self.cutoffs.n_scale;
        if top < 8 || !top.is_power_of_two() {
            return Err(Error::Config(format!(
                "n_scale must be a power of two >= 8, got {top}"
            )));
        }
        let mut out = Vec::new();
        let mut n = 8u32;
        while n <= top {
            out.push(n);
            n *= 2;
        }
        Ok(out)
    }

    /// The pinned configuration each experiment runs under by default; the
    /// acceptance suite uses exactly these.
    pub fn default_for(experiment: &str) -> Result<RunConfig> {
        let base = |replicas: u64, seed: u64| RunConfig {
            version: CONFIG_VERSION,
            experiment: experiment.to_owned(),
            seed,
            replicas,
            domain: None,
            plane: None,
            lambda: 0.5,
            mass: "0".into(),
            cutoffs: Cutoffs::default(),
            out: None,
        };
        let grid3 = DomainSpec::Rect {
            x0: 0,
            y0: 0,
            x1: 2,
            y1: 2,
        };
        let two_site = DomainSpec::Sites {
            sites: vec![(0, 0), (1, 0)],
        };
        let unit_square = PlaneDomain::Rect {
            x0: 0.0,
            y0: 0.0,
            x1: 1.0,
            y1: 1.0,
        };
        let cfg = match experiment {
            "measure-oracle" => {
                let mut c = base(1, 101);
                c.domain = Some(grid3);
                c.cutoffs.maxlen = 8;
                c
            }
            "determinant-identity" => {
                let mut c = base(1, 102);
                c.domain = Some(grid3);
                c.cutoffs.maxlen = 16;
                c
            }
            "poisson-sampling" => {
                let mut c = base(100_000, 103);
                c.domain = Some(two_site);
                c.lambda = 1.0;
                c.cutoffs.maxlen = 8;
                c
            }
            "massive-thinning" => {
                let mut c = base(20_000, 104);
                c.domain = Some(grid3);
                c.lambda = 1.0;
                // m² ≡ 0.5 per visit
                c.mass = "sqrt(0.5)".into();
                c.cutoffs.maxlen = 16;
                c
            }
            "laplace-identity" => {
                let mut c = base(100_000, 105);
                c.domain = Some(grid3);
                c.mass = "0.5".into(); // the massive case; k≡0 also run
                c.cutoffs.maxlen = 32;
                c
            }
            "iso-covariance" => {
                let mut c = base(20_000, 106);
                c.domain = Some(grid3);
                c.cutoffs.maxlen = 32;
                c
            }
            "sign-exactness" => {
                let mut c = base(100_000, 107);
                c.domain = Some(grid3);
                c.cutoffs.maxlen = 32;
                c
            }
            "perturbation-coupling" => {
                let mut c = base(40_000, 108);
                c.domain = Some(grid3);
                c.mass = "0.4".into();
                c.cutoffs.maxlen = 32;
                c
            }
            "brownian-sanity" => {
                let mut c = base(3_000, 109);
                c.plane = Some(unit_square);
                c.lambda = 1.0;
                c.mass = "1".into();
                c.cutoffs.t0 = 0.05;
                c.cutoffs.spatial_step = 0.02;
                c
            }
            "geometry" => {
                let mut c = base(20, 110);
                c.plane = Some(unit_square);
                c.mass = "1".into();
                // Carpet regime: the box-count ladder 1/16..1/128 reads the
                // carpet slope only while coverage at the coarsest cell stays
                // far from saturation; below t0 ≈ 0.01 the microscale loops
                // speckle every coarse cell and the fit steepens away from
                // the prediction.
                c.cutoffs.t0 = 0.02;
                c.cutoffs.spatial_step = 0.004;
                c
            }
            "near-critical" => {
                let mut c = base(3_000, 111);
                c.plane = Some(unit_square);
                c.lambda = 1.0;
                c.mass = "1".into();
                // above 4/N² for every scale in the ladder (N ≥ 8), and
                // deliberately not a multiple of 1/(2·8²) so the coarsest
                // lattice shows its duration rounding
                c.cutoffs.t0 = 0.08;
                c.cutoffs.n_scale = 64;
                c.cutoffs.duration_threshold = 3.0;
                c.cutoffs.spatial_step = 0.02;
                c
            }
            "determinism" => {
                let mut c = base(2_000, 112);
                c.domain = Some(two_site);
                c.lambda = 1.0;
                c.cutoffs.maxlen = 8;
                c
            }
            other => {
                return Err(Error::UnknownExperiment {
                    name: other.to_owned(),
                    known: crate::harness::experiment_names().join(", "),
                })
            }
        };
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_toml_unchanged() {
        for name in crate::harness::experiment_names() {
            let cfg = RunConfig::default_for(name).unwrap();
            let text = cfg.to_toml().unwrap();
            let back = RunConfig::from_toml(&text).unwrap();
            assert_eq!(cfg, back, "round-trip changed config for {name}");
        }
    }

    #[test]
    fn zero_replicas_rejected() {
        let mut cfg = RunConfig::default_for("poisson-sampling").unwrap();
        cfg.replicas = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_experiment_lists_names() {
        let err = RunConfig::default_for("no-such-thing").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("no-such-thing"));
        assert!(msg.contains("poisson-sampling"), "error should list known names: {msg}");
    }

    #[test]
    fn unknown_fields_rejected() {
        let cfg = RunConfig::default_for("poisson-sampling").unwrap();
        let mut text = cfg.to_toml().unwrap();
        text.push_str("\nbogus_knob = 3\n");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn wrong_version_rejected() {
        let mut cfg = RunConfig::default_for("poisson-sampling").unwrap();
        cfg.version = 7;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn scale_list_doubles_up_to_top() {
        let mut cfg = RunConfig::default_for("near-critical").unwrap();
        assert_eq!(cfg.scale_list().unwrap(), vec![8, 16, 32, 64]);
        cfg.cutoffs.n_scale = 12;
        assert!(cfg.scale_list().is_err());
    }
}
