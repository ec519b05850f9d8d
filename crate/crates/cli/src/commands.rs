//! Command-line surface: argument parsing and exit-code policy.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use qsd_core::{Domain, Registry};
use serde_json::json;

use crate::experiments::{check_line, check_model_report, run_scenario};
use crate::output::Artifacts;
use crate::scenario::Scenario;

#[derive(Debug, Parser)]
#[command(name = "qsd", version, about = "Killed diffusions, Fleming-Viot particles and coupled pairs")]
pub struct Cli {
    /// Cap on worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a scenario file.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the seed in the file.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the file's `out` or `out/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a scenario file without running it.
    Check {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run the model validators (periodicity, ellipticity, Lipschitz,
    /// kill-rate bounds, coupling covariance).
    CheckModel {
        /// Library model name; ignored when --scenario is given.
        name: Option<String>,
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Dimension of the unit ball used when no scenario is given.
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the model library.
    ListModels,
    /// Print a model's description and declared constants.
    Describe { name: String },
}

fn error_json(err: &anyhow::Error) -> serde_json::Value {
    json!({
        "error": err.to_string(),
        "causes": err.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
    })
}

/// Runs a parsed command line and returns the process exit code: 0 on
/// success, 1 on failure (with an error JSON on stderr), 2 on bad usage.
pub fn execute(cli: Cli) -> i32 {
    if let Some(k) = cli.workers {
        if k == 0 {
            eprintln!("{}", json!({ "error": "--workers must be positive" }));
            return 2;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("{}", json!({ "error": format!("thread pool: {e}") }));
            return 1;
        }
    }
    let mut out_dir: Option<PathBuf> = None;
    let result = dispatch(cli.command, &mut out_dir);
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let body = error_json(&e);
            eprintln!("{body}");
            if let Some(dir) = out_dir {
                if let Ok(mut a) = Artifacts::new(Some(dir)) {
                    let _ = a.write_json("error.json", &body);
                }
            }
            1
        }
    }
}

fn resolve_out(scenario: &Scenario, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| scenario.out.clone()).unwrap_or_else(|| Path::new("out").join(scenario.label()))
}

fn dispatch(command: Command, out_dir: &mut Option<PathBuf>) -> Result<bool> {
    match command {
        Command::Run { scenario, seed, out } => {
            let mut s = Scenario::load(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let dir = resolve_out(&s, out);
            *out_dir = Some(dir.clone());
            let mut artifacts = Artifacts::new(Some(dir.clone()))?;
            let outcome = run_scenario(&s, &mut artifacts, true)?;
            println!("{} done: {} files in {}", s.label(), artifacts.written().len(), dir.display());
            Ok(outcome.passed())
        }
        Command::Check { scenario } => {
            let s = Scenario::load(&scenario)?;
            println!("{}: ok ({} on {} in {} dimension(s))", scenario.display(), s.experiment.as_str(), s.model.name, s.domain.dim());
            Ok(true)
        }
        Command::CheckModel { name, scenario, dim, samples, seed, out } => {
            let (model, domain, seed, lambda0) = match scenario {
                Some(path) => {
                    let s = Scenario::load(&path)?;
                    (s.build_model()?, s.domain.clone(), seed.unwrap_or(s.seed), s.params.lambda0)
                }
                None => {
                    let name = name.context("give a model name or --scenario")?;
                    let domain = Domain::unit_ball(dim);
                    let model = Registry::with_library().build(&name, &Default::default(), &Arc::new(domain.clone()))?;
                    (model, domain, seed.unwrap_or(1), None)
                }
            };
            *out_dir = out.clone();
            let report = check_model_report(&model, &domain, samples, lambda0, seed)?;
            println!("{}", check_line(&report));
            let mut artifacts = Artifacts::new(out)?;
            artifacts.write_json("validation.json", &report)?;
            Ok(report.passed)
        }
        Command::ListModels => {
            let reg = Registry::with_library();
            for name in reg.names() {
                println!("{}", reg.describe(name)?);
            }
            Ok(true)
        }
        Command::Describe { name } => {
            let reg = Registry::with_library();
            println!("{}", reg.describe(&name)?);
            Ok(true)
        }
    }
}
