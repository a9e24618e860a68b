//! Statistical reports. The serialized report is canonical: identical
//! config+seed produce byte-identical JSON at any worker count, so wall-clock
//! timings go to a sidecar file instead of the report itself.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::config::RunConfig;

pub const REPORT_VERSION: u32 = 1;

/// How a row's pass flag is recomputed from its stored numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// |estimate − target| ≤ tolerance.
    AbsWithin,
    /// estimate ≥ target − tolerance.
    AtLeast,
    /// estimate ≤ target + tolerance.
    AtMost,
}

impl Check {
    pub fn evaluate(self, estimate: f64, target: f64, tolerance: f64) -> bool {
        if !estimate.is_finite() {
            return false;
        }
        match self {
            Check::AbsWithin => (estimate - target).abs() <= tolerance,
            Check::AtLeast => estimate >= target - tolerance,
            Check::AtMost => estimate <= target + tolerance,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriterionReport {
    pub name: String,
    pub estimate: f64,
    pub target: f64,
    /// Monte Carlo standard error of the estimate where one exists; kept next
    /// to the tolerance so the margin is auditable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    pub tolerance: f64,
    pub check: Check,
    pub pass: bool,
    /// Rows with asserted = false are informational (reported, not gated).
    pub asserted: bool,
    pub replicas: u64,
    /// Cutoff parameters the estimate was computed under.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub cutoffs: BTreeMap<String, f64>,
    /// Analytic bias bounds associated with those cutoffs.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub bias: BTreeMap<String, f64>,
}

impl CriterionReport {
    pub fn new(name: &str, estimate: f64, target: f64, tolerance: f64, check: Check) -> Self {
        CriterionReport {
            name: name.to_owned(),
            estimate,
            target,
            stderr: None,
            tolerance,
            check,
            pass: check.evaluate(estimate, target, tolerance),
            asserted: true,
            replicas: 0,
            cutoffs: BTreeMap::new(),
            bias: BTreeMap::new(),
        }
    }

    pub fn stderr(mut self, se: f64) -> Self {
        self.stderr = Some(se);
        self
    }

    pub fn replicas(mut self, n: u64) -> Self {
        self.replicas = n;
        self
    }

    pub fn cutoff(mut self, key: &str, value: f64) -> Self {
        self.cutoffs.insert(key.to_owned(), value);
        self
    }

    pub fn bias(mut self, key: &str, value: f64) -> Self {
        self.bias.insert(key.to_owned(), value);
        self
    }

    /// Mark the row informational: it appears in the report but does not gate
    /// the experiment's pass flag.
    pub fn reported_only(mut self) -> Self {
        self.asserted = false;
        self
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StatReport {
    pub format_version: u32,
    pub experiment: String,
    /// The exact configuration that produced this report.
    pub config: RunConfig,
    pub criteria: Vec<CriterionReport>,
    pub passed: bool,
    /// Seconds per criterion row plus a total; excluded from the canonical
    /// bytes so reports stay reproducible.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl StatReport {
    pub fn new(cfg: &RunConfig, criteria: Vec<CriterionReport>) -> Self {
        let passed = criteria.iter().filter(|c| c.asserted).all(|c| c.pass);
        StatReport {
            format_version: REPORT_VERSION,
            experiment: cfg.experiment.clone(),
            config: cfg.clone(),
            criteria,
            passed,
            timings: Vec::new(),
        }
    }

    /// Canonical serialized form: fixed field order, sorted maps, trailing
    /// newline. Byte-identical across reruns and worker counts.
    pub fn canonical_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Re-derive every pass flag and the experiment flag from stored numbers;
    /// true when the stored flags agree with the recomputation.
    pub fn recheck(&self) -> bool {
        let rows_ok = self
            .criteria
            .iter()
            .all(|c| c.pass == c.check.evaluate(c.estimate, c.target, c.tolerance));
        let passed_ok =
            self.passed == self.criteria.iter().filter(|c| c.asserted).all(|c| c.pass);
        rows_ok && passed_ok
    }

    /// Write report.json (canonical) plus a timings.json sidecar.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.canonical_json()?)?;
        let timings: BTreeMap<&str, f64> =
            self.timings.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        let mut t = serde_json::to_string_pretty(&timings)?;
        t.push('\n');
        std::fs::write(dir.join("timings.json"), t)?;
        Ok(())
    }
}

/// Write rows of f64 samples as a one-column CSV.
pub fn write_samples_csv(path: &Path, header: &str, xs: &[f64]) -> Result<()> {
    use std::fmt::Write as _;
    let mut s = String::with_capacity(16 * xs.len() + header.len() + 1);
    s.push_str(header);
    s.push('\n');
    for x in xs {
        // `{:?}` is the shortest round-trip float form, same as the JSON
        // encoder uses, so CSVs are as reproducible as reports.
        let _ = writeln!(s, "{x:?}");
    }
    std::fs::write(path, s)?;
    Ok(())
}
