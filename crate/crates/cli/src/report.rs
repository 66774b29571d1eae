//! Report bundle and its files.
//!
//! `report.json` schema (stable):
//!
//! ```text
//! { "kind": str, "seed": u64, "status": "pass" | "fail" | "inconclusive",
//!   "checks": [ { "name": str, "value": f64, "tolerance": f64, "passed": bool } ],
//!   "estimators": [ { "name": str, "estimate": f64, "std_error": f64,
//!                     "n_events": u64, "exact": f64 | null,
//!                     "z_score": f64 | null, "z_bound": f64,
//!                     "rel_bound": f64 | null, "passed": bool } ],
//!   "inconclusive": [ { "name": str, "reason": str } ],
//!   "data": { ... kind-specific values ... } }
//! ```
//!
//! `summary.txt` is a fixed-width table of the same checks. CSV files are
//! written only when they have rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use trace_forms::mc::EstimatorReport;

use crate::config::Kind;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Inconclusive => 2,
        }
    }
}

/// A deterministic quantity compared against a tolerance: passes when
/// `value <= tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorRecord {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub n_events: u64,
    pub exact: Option<f64>,
    pub z_score: Option<f64>,
    pub z_bound: f64,
    /// Set for estimators with a known bias floor; they are judged by
    /// relative error against `exact` instead of by `z`.
    pub rel_bound: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inconclusive {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub kind: Kind,
    pub seed: u64,
    pub status: Status,
    pub checks: Vec<CheckRecord>,
    pub estimators: Vec<EstimatorRecord>,
    pub inconclusive: Vec<Inconclusive>,
    pub data: BTreeMap<String, serde_json::Value>,
    /// File name and contents of each CSV.
    #[serde(skip)]
    pub csv: Vec<(String, String)>,
}

impl ReportBundle {
    pub fn new(kind: Kind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            status: Status::Pass,
            checks: Vec::new(),
            estimators: Vec::new(),
            inconclusive: Vec::new(),
            data: BTreeMap::new(),
            csv: Vec::new(),
        }
    }

    /// Records `value <= tolerance`. NaN fails.
    pub fn check(&mut self, name: impl Into<String>, value: f64, tolerance: f64) {
        self.checks.push(CheckRecord {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        });
    }

    /// Records a yes/no condition as a check with value 0 (holds) or 1.
    pub fn flag(&mut self, name: impl Into<String>, holds: bool) {
        self.check(name, if holds { 0.0 } else { 1.0 }, 0.0);
    }

    /// Records an estimator; it passes when `|z| < z_bound`, or always when
    /// there is no reference.
    pub fn estimator(&mut self, name: impl Into<String>, r: &EstimatorReport, z_bound: f64) {
        self.estimators.push(EstimatorRecord {
            name: name.into(),
            estimate: r.estimate,
            std_error: r.std_error,
            n_events: r.n_events,
            exact: r.exact,
            z_score: r.z_score,
            z_bound,
            rel_bound: None,
            passed: r.within(z_bound),
        });
    }

    /// Records an estimator that passes when its relative error against
    /// the exact value is at most `rel_bound`.
    pub fn estimator_rel(&mut self, name: impl Into<String>, r: &EstimatorReport, z_bound: f64, rel_bound: f64) {
        let passed = match r.exact {
            Some(x) => (r.estimate - x).abs() <= rel_bound * x.abs(),
            None => true,
        };
        self.estimators.push(EstimatorRecord {
            name: name.into(),
            estimate: r.estimate,
            std_error: r.std_error,
            n_events: r.n_events,
            exact: r.exact,
            z_score: r.z_score,
            z_bound,
            rel_bound: Some(rel_bound),
            passed,
        });
    }

    pub fn inconclusive(&mut self, name: impl Into<String>, reason: impl Into<String>) {
        self.inconclusive.push(Inconclusive {
            name: name.into(),
            reason: reason.into(),
        });
    }

    pub fn data(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("report data serializes");
        self.data.insert(key.to_string(), v);
    }

    /// Adds a CSV unless it has no data rows.
    pub fn csv(&mut self, name: &str, contents: String) {
        if contents.lines().count() > 1 {
            self.csv.push((name.to_string(), contents));
        }
    }

    /// Fail if any check or estimator failed, else inconclusive if any
    /// estimator lacked events, else pass.
    pub fn finalize(mut self) -> Self {
        let failed = self.checks.iter().any(|c| !c.passed) || self.estimators.iter().any(|e| !e.passed);
        self.status = if failed {
            Status::Fail
        } else if !self.inconclusive.is_empty() {
            Status::Inconclusive
        } else {
            Status::Pass
        };
        self
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kind: {}  seed: {}  status: {:?}", self.kind, self.seed, self.status);
        let _ = writeln!(s);
        let width = self
            .checks
            .iter()
            .map(|c| c.name.len())
            .chain(self.estimators.iter().map(|e| e.name.len()))
            .max()
            .unwrap_or(4)
            .max(4);
        if !self.checks.is_empty() {
            let _ = writeln!(s, "{:<width$}  {:>12}  {:>12}  result", "check", "value", "tolerance");
            for c in &self.checks {
                let _ = writeln!(
                    s,
                    "{:<width$}  {:>12.4e}  {:>12.4e}  {}",
                    c.name,
                    c.value,
                    c.tolerance,
                    if c.passed { "ok" } else { "FAIL" }
                );
            }
            let _ = writeln!(s);
        }
        if !self.estimators.is_empty() {
            let _ = writeln!(
                s,
                "{:<width$}  {:>12}  {:>10}  {:>12}  {:>7}  {:>9}  result",
                "estimator", "estimate", "std_err", "exact", "z", "events"
            );
            for e in &self.estimators {
                let exact = e.exact.map_or("-".to_string(), |x| format!("{x:.6}"));
                let z = e.z_score.map_or("-".to_string(), |z| format!("{z:+.2}"));
                let _ = writeln!(
                    s,
                    "{:<width$}  {:>12.6}  {:>10.2e}  {:>12}  {:>7}  {:>9}  {}",
                    e.name,
                    e.estimate,
                    e.std_error,
                    exact,
                    z,
                    e.n_events,
                    if e.passed { "ok" } else { "FAIL" }
                );
            }
            let _ = writeln!(s);
        }
        for i in &self.inconclusive {
            let _ = writeln!(s, "inconclusive: {}: {}", i.name, i.reason);
        }
        s
    }
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `report.json`, `summary.txt` and the CSVs into `dir`, creating
/// it if needed. Returns the written paths.
pub fn emit_reports(bundle: &ReportBundle, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut files = vec![
        (
            "report.json".to_string(),
            serde_json::to_string_pretty(bundle).expect("report serializes") + "\n",
        ),
        ("summary.txt".to_string(), bundle.summary()),
    ];
    files.extend(bundle.csv.iter().cloned());
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_logic() {
        let mut b = ReportBundle::new(Kind::ChainVerify, 1);
        b.check("a", 1e-12, 1e-10);
        assert_eq!(b.clone().finalize().status, Status::Pass);
        b.inconclusive("x", "few events");
        assert_eq!(b.clone().finalize().status, Status::Inconclusive);
        b.check("b", f64::NAN, 1e-10);
        assert_eq!(b.finalize().status, Status::Fail);

        let mut b = ReportBundle::new(Kind::ChainMc, 1);
        b.estimator("e", &EstimatorReport::new(1.0, 0.1, 10).with_exact(1.5), 4.0);
        assert_eq!(b.finalize().status, Status::Fail);
    }

    #[test]
    fn header_only_csv_is_dropped() {
        let mut b = ReportBundle::new(Kind::ChainMc, 1);
        b.csv("pairs.csv", "pre_state,post_state,count\n".into());
        assert!(b.csv.is_empty());
        b.csv("pairs.csv", "pre_state,post_state,count\n1,2,5\n".into());
        assert_eq!(b.csv.len(), 1);
    }
}
