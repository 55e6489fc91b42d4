//! `fedminmax` — config-driven trainer for group-fair federated learning.
//!
//! Subcommands:
//! * `run` — train the configured algorithm once per evaluation seed and
//!   write `metrics.csv` / `summary.json` / `timing.txt` per seed plus an
//!   `aggregate.json` with mean and standard deviation across seeds.
//! * `compare` — train federated and pooled minimax from one initialization
//!   and report per-round parameter and weight differences.
//! * `analyze-feasibility` — test whether the fedminmax group weights are
//!   reachable by a client-level adversary on the same partition.
//! * `synth-gen` — write the synthetic dataset as a snapshot file.
//! * `project` — project a vector onto the probability simplex.
//!
//! Exit codes: 0 success, 1 configuration or validation error, 2 runtime
//! failure (I/O, numeric divergence).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use fedminmax_cli::config::{ExperimentConfig, Overrides, ResolvedConfig};
use fedminmax_cli::{runner, CliError};

#[derive(Parser)]
#[command(
    name = "fedminmax",
    version,
    about = "Trainer and analysis tools for group-fair federated learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured algorithm for every evaluation seed.
    Run(ConfigArgs),
    /// Train federated and pooled minimax together and diff the rounds.
    Compare(ConfigArgs),
    /// Check whether fedminmax group weights are client-reachable.
    AnalyzeFeasibility(ConfigArgs),
    /// Generate the synthetic dataset and save it as a snapshot.
    SynthGen(ConfigArgs),
    /// Project a vector onto the probability simplex.
    Project(ProjectArgs),
}

/// Flags shared by all config-driven subcommands; every flag overrides the
/// matching config key.
#[derive(Args)]
struct ConfigArgs {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Replace the evaluation seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override algorithm.name.
    #[arg(long)]
    algorithm: Option<String>,
    /// Override partition.setting.
    #[arg(long)]
    setting: Option<String>,
    /// Override partition.num_clients.
    #[arg(long)]
    clients: Option<usize>,
    /// Override algorithm.rounds.
    #[arg(long)]
    rounds: Option<usize>,
    /// Override output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override algorithm.loss.
    #[arg(long)]
    loss: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ResolvedConfig, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config).map_err(CliError::Validation)?;
        cfg.apply_overrides(&Overrides {
            seed: self.seed,
            algorithm: self.algorithm.clone(),
            setting: self.setting.clone(),
            clients: self.clients,
            rounds: self.rounds,
            out: self.out.clone(),
            loss: self.loss.clone(),
        });
        cfg.resolve().map_err(CliError::Validation)
    }
}

#[derive(Args)]
struct ProjectArgs {
    /// Vector coordinates.
    #[arg(required = true, allow_negative_numbers = true)]
    values: Vec<f64>,
    /// Minimum mass per coordinate.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    floor: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(args) => args.resolve().and_then(|cfg| runner::cmd_run(&cfg)),
        Command::Compare(args) => args.resolve().and_then(|cfg| runner::cmd_compare(&cfg)),
        Command::AnalyzeFeasibility(args) => args
            .resolve()
            .and_then(|cfg| runner::cmd_analyze_feasibility(&cfg)),
        Command::SynthGen(args) => args.resolve().and_then(|cfg| runner::cmd_synth_gen(&cfg)),
        Command::Project(args) => runner::cmd_project(&args.values, args.floor),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
