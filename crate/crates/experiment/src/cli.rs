//! Command-line front end of the `sgl` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{ExperimentConfig, Kind};
use crate::error::{RunError, RunResult};
use crate::manifest::RunManifest;
use crate::{EXIT_DIVERGED, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "sgl", version, about = "Snake gait experiments: grid, BO, PPO and comparison")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment configuration; defaults apply to everything omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Output directory; the SGL_OUT environment variable takes precedence.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Policy checkpoint to evaluate.
    #[arg(long, global = true, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Continue a partial run in a non-empty output directory.
    #[arg(long, global = true)]
    pub resume: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exhaustive sweep over the gait grid.
    Grid,
    /// One Bayesian-optimization trial per temporal frequency.
    Bayes,
    /// Train a policy with PPO.
    PpoTrain,
    /// Evaluate a policy checkpoint at every target velocity.
    PpoEval,
    /// Compare policy evaluations with the grid and BO results.
    Compare {
        /// Grid results table.
        #[arg(long, value_name = "PATH")]
        grid: Option<PathBuf>,
        /// Directory of BO history tables.
        #[arg(long, value_name = "DIR")]
        bayes: Option<PathBuf>,
        /// Policy evaluation table.
        #[arg(long, value_name = "PATH")]
        ppo: Option<PathBuf>,
    },
}

impl Command {
    pub fn kind(&self) -> Kind {
        match self {
            Command::Grid => Kind::Grid,
            Command::Bayes => Kind::Bayes,
            Command::PpoTrain => Kind::PpoTrain,
            Command::PpoEval => Kind::PpoEval,
            Command::Compare { .. } => Kind::Compare,
        }
    }
}

/// Merges the config file, flags and `out_override` (from `SGL_OUT`).
pub fn resolve(cli: &Cli, out_override: Option<String>) -> RunResult<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let kind = cli.command.kind();
    if let Some(k) = config.kind {
        if k != kind {
            return Err(RunError::usage(format!("config declares kind `{k}` but the subcommand is `{kind}`")));
        }
    }
    config.kind = Some(kind);
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(workers) = cli.workers {
        config.workers = workers;
    }
    if let Some(out) = out_override.map(PathBuf::from).or_else(|| cli.out.clone()) {
        config.out = Some(out);
    }
    if let Some(ck) = &cli.checkpoint {
        config.checkpoint = Some(ck.clone());
    }
    if let Command::Compare { grid, bayes, ppo } = &cli.command {
        let c = &mut config.compare;
        c.grid_csv = grid.clone().or(c.grid_csv.take());
        c.bayes_dir = bayes.clone().or(c.bayes_dir.take());
        c.ppo_eval_csv = ppo.clone().or(c.ppo_eval_csv.take());
    }
    config.resume = cli.resume;
    Ok(config)
}

/// Exit status for a finished run.
pub fn exit_code(manifest: &RunManifest) -> u8 {
    if manifest.failures.other > 0 {
        EXIT_RUNTIME
    } else if manifest.failures.diverged > 0 {
        EXIT_DIVERGED
    } else {
        EXIT_OK
    }
}

/// Parses `args`, runs the experiment and returns the process exit code.
pub fn main_with<I, T>(args: I, out_override: Option<String>) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match resolve(&cli, out_override).and_then(|config| crate::run(&config).map(|m| (config, m))) {
        Ok((config, manifest)) => {
            let out = config.out.expect("validated");
            println!("{}: {} artifacts in {}", manifest.kind, manifest.artifacts.len(), out.display());
            let f = manifest.failures;
            if f.diverged + f.other > 0 {
                eprintln!("{} evaluations diverged, {} failed otherwise", f.diverged, f.other);
            }
            exit_code(&manifest)
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
