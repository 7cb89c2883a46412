//! Experiment driver behind the `pqflow` binary: JSON configurations,
//! seeded experiment runs, artifact export and suite aggregation.

pub mod config;
pub mod experiments;
pub mod report;

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use config::ExperimentConfig;
use report::{ExperimentReport, Recorder, Status, SuiteReport};

/// Refuses to write into a non-empty directory unless `force` is set.
pub fn ensure_writable(dir: &Path, force: bool) -> Result<()> {
    if force || !dir.exists() {
        return Ok(());
    }
    let mut entries =
        std::fs::read_dir(dir).with_context(|| format!("cannot read {}", dir.display()))?;
    if entries.next().is_some() {
        bail!(
            "{} is not empty; pass --force-overwrite to replace its contents",
            dir.display()
        );
    }
    Ok(())
}

fn write_file(dir: &Path, rel: &str, contents: &str) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
}

/// Runs one experiment and writes `report.json` plus its CSV/JSON
/// artifacts into [`ExperimentConfig::artifact_dir`]. Numerical failures
/// end up in the report; only I/O problems are returned as errors.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let dir = cfg.artifact_dir();
    let clock = Instant::now();
    let mut rec = Recorder::default();
    let outcome = experiments::execute(cfg, &mut rec);
    let wall_clock_s = clock.elapsed().as_secs_f64();

    let mut artifacts = Vec::new();
    let (status, error) = match outcome {
        Ok(files) => {
            for (rel, contents) in &files {
                write_file(&dir, rel, contents)?;
                artifacts.push(rel.clone());
            }
            (
                if rec.all_passed() {
                    Status::Pass
                } else {
                    Status::Fail
                },
                None,
            )
        }
        Err(e) => (Status::Error, Some(format!("{e:#}"))),
    };
    let report = ExperimentReport {
        name: cfg.name(),
        kind: cfg.experiment.kind().to_string(),
        seed: cfg.seed,
        tolerances: cfg.tolerances.resolved(),
        status,
        wall_clock_s,
        metrics: rec.metrics,
        checks: rec.checks,
        artifacts,
        error,
    };
    write_file(&dir, "report.json", &serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Runs every experiment in a pool of `jobs` threads (all cores when
/// `None`). Reports keep the manifest order.
pub fn run_suite(cfgs: &[ExperimentConfig], jobs: Option<usize>) -> Result<SuiteReport> {
    let clock = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()?;
    let reports: Result<Vec<ExperimentReport>> =
        pool.install(|| cfgs.par_iter().map(run_experiment).collect());
    Ok(SuiteReport::new(reports?, clock.elapsed().as_secs_f64()))
}
