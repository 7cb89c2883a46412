use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::config::ResolvedTolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    /// The experiment could not be carried out.
    Error,
}

/// One acceptance threshold and the number it was judged on.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub kind: String,
    pub seed: u64,
    pub tolerances: ResolvedTolerances,
    pub status: Status,
    pub wall_clock_s: f64,
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
    pub error: Option<String>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

/// Accumulates named numbers and threshold checks while an experiment runs.
#[derive(Debug, Default)]
pub struct Recorder {
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
}

impl Recorder {
    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    pub fn at_most(&mut self, name: &str, value: f64, bound: f64) {
        self.push(name, value, format!("<= {bound:e}"), value <= bound);
    }

    pub fn at_least(&mut self, name: &str, value: f64, bound: f64) {
        self.push(name, value, format!(">= {bound:e}"), value >= bound);
    }

    pub fn greater(&mut self, name: &str, value: f64, bound: f64) {
        self.push(name, value, format!("> {bound:e}"), value > bound);
    }

    pub fn within(&mut self, name: &str, value: f64, lo: f64, hi: f64) {
        self.push(
            name,
            value,
            format!("in [{lo}, {hi}]"),
            (lo..=hi).contains(&value),
        );
    }

    pub fn holds(&mut self, name: &str, ok: bool) {
        self.push(name, if ok { 1.0 } else { 0.0 }, "true".into(), ok);
    }

    fn push(&mut self, name: &str, value: f64, threshold: String, passed: bool) {
        self.checks.push(Check {
            name: name.to_string(),
            value,
            threshold,
            passed: passed && !value.is_nan(),
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub passed: bool,
    pub experiments: usize,
    pub failures: Vec<String>,
    pub wall_clock_s: f64,
    pub reports: Vec<ExperimentReport>,
}

impl SuiteReport {
    pub fn new(reports: Vec<ExperimentReport>, wall_clock_s: f64) -> Self {
        let failures: Vec<String> = reports
            .iter()
            .filter(|r| !r.passed())
            .map(|r| r.name.clone())
            .collect();
        Self {
            passed: failures.is_empty(),
            experiments: reports.len(),
            failures,
            wall_clock_s,
            reports,
        }
    }

    /// Fixed-width summary with one row per experiment and an indented row
    /// per failed check.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:<17} {:<6} {:>9} {:>7}",
            "experiment", "kind", "status", "time [s]", "checks"
        );
        for r in &self.reports {
            let ok = r.checks.iter().filter(|c| c.passed).count();
            let status = match r.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::Error => "ERROR",
            };
            let _ = writeln!(
                out,
                "{:<28} {:<17} {:<6} {:>9.2} {:>3}/{:<3}",
                r.name,
                r.kind,
                status,
                r.wall_clock_s,
                ok,
                r.checks.len()
            );
            for c in r.checks.iter().filter(|c| !c.passed) {
                let _ = writeln!(
                    out,
                    "    {}: {:.3e} (needs {})",
                    c.name, c.value, c.threshold
                );
            }
            if let Some(e) = &r.error {
                let _ = writeln!(out, "    error: {e}");
            }
        }
        let _ = writeln!(
            out,
            "{} of {} experiments passed in {:.2} s",
            self.experiments - self.failures.len(),
            self.experiments,
            self.wall_clock_s
        );
        out
    }
}
