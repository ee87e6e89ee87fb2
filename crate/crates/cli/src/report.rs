//! Report documents and their JSON/CSV export.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use atlab_core::tensorization::{ATReport, StateMargin};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub applicable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// A row violates the check when its margin is below `−tolerance`.
    pub tolerance: f64,
    pub evaluations: usize,
    pub violations: usize,
    pub worst_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub artifact_version: String,
    pub experiment: String,
    /// The configuration as run, with command-line overrides applied.
    pub config: ExperimentConfig,
    pub threads: usize,
    pub checks: Vec<CheckResult>,
    /// Smallest margin per check.
    pub worst_margins: BTreeMap<String, f64>,
    pub violations: usize,
    /// The wall-clock cap stopped the run before all work units were evaluated.
    pub truncated: bool,
    /// Experiment-specific quantities: constants, brackets, fits.
    pub values: serde_json::Map<String, serde_json::Value>,
    pub notes: Vec<String>,
    pub wall_clock_seconds: f64,
    /// Per-row margins; exported to CSV rather than JSON.
    #[serde(skip)]
    pub margins: Vec<StateMargin>,
}

impl ReportDocument {
    pub fn new(config: ExperimentConfig, threads: usize) -> Self {
        Self {
            artifact_version: ARTIFACT_VERSION.to_string(),
            experiment: config.experiment.name().to_string(),
            config,
            threads,
            checks: Vec::new(),
            worst_margins: BTreeMap::new(),
            violations: 0,
            truncated: false,
            values: serde_json::Map::new(),
            notes: Vec::new(),
            wall_clock_seconds: 0.0,
            margins: Vec::new(),
        }
    }

    /// Records the rows of a check; rows with the same name accumulate into one result.
    pub fn push(&mut self, name: &str, rows: Vec<StateMargin>, tolerance: f64) {
        let violations = rows.iter().filter(|m| !(m.margin >= -tolerance)).count();
        let worst = rows.iter().map(|m| m.margin).reduce(f64::min);
        match self.checks.iter_mut().find(|c| c.name == name && c.applicable) {
            Some(c) => {
                c.evaluations += rows.len();
                c.violations += violations;
                c.worst_margin = match (c.worst_margin, worst) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
            }
            None => self.checks.push(CheckResult {
                name: name.to_string(),
                applicable: true,
                reason: None,
                tolerance,
                evaluations: rows.len(),
                violations,
                worst_margin: worst,
            }),
        }
        self.margins.extend(rows);
    }

    /// `value ≤ limit`, judged without slack.
    pub fn push_bound(&mut self, name: &str, id: usize, value: f64, limit: f64) {
        self.push(name, vec![StateMargin::new(id, value, limit, name)], 0.0);
    }

    pub fn push_not_applicable(&mut self, name: &str, reason: impl Into<String>) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            applicable: false,
            reason: Some(reason.into()),
            tolerance: 0.0,
            evaluations: 0,
            violations: 0,
            worst_margin: None,
        });
    }

    /// Copies the certificates and margins of a tensorization report.
    pub fn absorb(&mut self, report: &ATReport) {
        for cert in &report.certificates {
            if cert.applicable {
                let rows = report
                    .per_state_margins
                    .iter()
                    .filter(|m| m.check_name == cert.check_name)
                    .cloned()
                    .collect();
                self.push(&cert.check_name, rows, report.tolerance);
            } else {
                self.push_not_applicable(&cert.check_name, cert.reason.clone().unwrap_or_default());
            }
        }
    }

    pub fn set_value(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.values.insert(key.to_string(), v);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Recomputes the totals from the checks.
    pub fn finish(&mut self, seconds: f64) {
        self.violations = self.checks.iter().map(|c| c.violations).sum();
        self.worst_margins = self
            .checks
            .iter()
            .filter_map(|c| c.worst_margin.map(|m| (c.name.clone(), m)))
            .collect();
        self.wall_clock_seconds = seconds;
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn write_json(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    /// Writes `state_id, lhs, rhs, margin, check_name` rows.
    pub fn write_csv(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        if self.margins.is_empty() {
            w.write_record(["state_id", "lhs", "rhs", "margin", "check_name"])?;
        }
        for row in &self.margins {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One line per check, for terminals.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let line = if c.applicable {
                let worst = c.worst_margin.map_or("n/a".to_string(), |m| format!("{m:.3e}"));
                let status = if c.violations == 0 { "PASS" } else { "FAIL" };
                format!(
                    "{status} {:<28} {:>6} rows  {:>4} violations  worst margin {worst}\n",
                    c.name, c.evaluations, c.violations
                )
            } else {
                format!("SKIP {:<28} {}\n", c.name, c.reason.as_deref().unwrap_or(""))
            };
            out.push_str(&line);
        }
        if self.truncated {
            out.push_str("run truncated by the wall-clock cap\n");
        }
        out
    }
}
