use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pqflow_cli::config::{
    load_config, load_manifest, Experiment, ExperimentConfig, Overrides, Tolerances,
};
use pqflow_cli::report::SuiteReport;
use pqflow_cli::{ensure_writable, run_experiment, run_suite};

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "pqflow",
    version,
    about = "Reproducible experiments on spiralling gradient flows and their pseudoholomorphic lifts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment described by a JSON configuration.
    Run {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run every experiment of a JSON manifest in parallel.
    Suite {
        /// Manifest with an `experiments` array of configurations.
        manifest: PathBuf,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Check the structural identities of the knot model in dimension n.
    Identities {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; each experiment writes into a subdirectory named after it.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    rtol: Option<f64>,
    /// Width of the band around the limit circle used for coverage.
    #[arg(long)]
    band: Option<f64>,
    /// Number of angular bins used for coverage.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    force_overwrite: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            rtol: self.rtol,
            band: self.band,
            bins: self.bins,
        }
    }
}

/// Usage problems are reported before anything runs.
fn prepare(cli: &Cli) -> Result<(Vec<ExperimentConfig>, Option<usize>, bool, bool)> {
    let (cfgs, jobs, common, is_suite) = match &cli.command {
        Command::Run { config, common } => (
            vec![load_config(config, &common.overrides())?],
            Some(1),
            common,
            false,
        ),
        Command::Suite {
            manifest,
            jobs,
            common,
        } => (
            load_manifest(manifest, &common.overrides())?,
            *jobs,
            common,
            true,
        ),
        Command::Identities { n, common } => {
            let mut cfg = ExperimentConfig {
                name: None,
                seed: 0,
                tolerances: Tolerances::default(),
                output_dir: None,
                experiment: Experiment::Identities { n: *n, points: 100 },
            };
            cfg.apply(&common.overrides());
            cfg.validate()?;
            (vec![cfg], Some(1), common, false)
        }
    };
    for cfg in &cfgs {
        ensure_writable(&cfg.artifact_dir(), common.force_overwrite)?;
    }
    if is_suite {
        if let Some(dir) = suite_dir(&cfgs, &common.out) {
            if dir.join("suite.json").exists() && !common.force_overwrite {
                anyhow::bail!(
                    "{} already exists; pass --force-overwrite",
                    dir.join("suite.json").display()
                );
            }
        }
    }
    Ok((cfgs, jobs, common.force_overwrite, is_suite))
}

fn suite_dir(cfgs: &[ExperimentConfig], out: &Option<PathBuf>) -> Option<PathBuf> {
    out.clone()
        .or_else(|| cfgs.first().and_then(|c| c.output_dir.clone()))
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    let (cfgs, jobs, _, is_suite) = match prepare(cli) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("usage error: {e:#}");
            return Ok(ExitCode::from(EXIT_USAGE));
        }
    };
    let suite: SuiteReport = if is_suite {
        run_suite(&cfgs, jobs)?
    } else {
        let clock = std::time::Instant::now();
        let report = run_experiment(&cfgs[0])?;
        SuiteReport::new(vec![report], clock.elapsed().as_secs_f64())
    };
    print!("{}", suite.table());
    if is_suite {
        let out = match &cli.command {
            Command::Suite { common, .. } => suite_dir(&cfgs, &common.out),
            _ => None,
        };
        let dir = out.unwrap_or_else(|| PathBuf::from("pqflow-out"));
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create {}", dir.display()))?;
        std::fs::write(
            dir.join("suite.json"),
            serde_json::to_string_pretty(&suite)?,
        )?;
    }
    Ok(if suite.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}
