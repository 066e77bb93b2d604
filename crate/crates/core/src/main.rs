use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dimix::cli::{self, ExperimentConfig, RunOptions, TheoryOptions};
use dimix::lemma_oracle::DEFAULT_INSTANCES;

#[derive(Parser)]
#[command(
    name = "dimix",
    version,
    about = "Two-time-scale decentralized GD simulator and verifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML), or a run manifest.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Also write loss.svg and deviation.svg.
    #[arg(long, global = true)]
    plots: bool,
    /// Concurrent runs (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Overrides the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; falls back to the config's output_dir.
    #[arg(long, global = true, env = "DIMIX_OUT")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo runs with CSV traces and a manifest.
    Run,
    /// Check the mixing schedule against the connectivity assumptions.
    Validate {
        /// Defaults to the config's horizon.
        #[arg(long)]
        horizon: Option<u64>,
    },
    /// Evaluate the convergence bound and its constants.
    Theory {
        /// Directory written by `run`.
        #[arg(long)]
        traces: Option<PathBuf>,
        #[arg(long)]
        assume_q0: Option<f64>,
        /// Overrides the manifest's noise variance bound.
        #[arg(long)]
        gamma: Option<f64>,
        /// Overrides the manifest's gradient bound.
        #[arg(long)]
        k_grad: Option<f64>,
    },
    /// Randomized checks of the supporting inequalities.
    Lemmas {
        #[arg(long, default_value_t = DEFAULT_INSTANCES)]
        instances: u64,
    },
    /// Fit the decay rate of dist_opt_sq over a grid of horizons.
    Sweep {
        /// Comma-separated, strictly increasing.
        #[arg(long, value_delimiter = ',')]
        t_grid: Option<Vec<u64>>,
    },
}

fn load_config(common: &Common) -> dimix::Result<ExperimentConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| dimix::Error::InvalidArgument("--config <path> is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run_options(common: &Common, config: &ExperimentConfig) -> RunOptions {
    RunOptions {
        out: common
            .out
            .clone()
            .unwrap_or_else(|| config.output_dir.clone()),
        plots: common.plots,
        jobs: common.jobs,
    }
}

fn execute(cli: Cli, log: &mut dyn Write) -> dimix::Result<ExitCode> {
    let common = &cli.common;
    match cli.command {
        Command::Run => {
            let config = load_config(common)?;
            cli::cmd_run(&config, &run_options(common, &config), log)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { horizon } => {
            let config = load_config(common)?;
            let rep = cli::cmd_validate(&config, horizon.unwrap_or(config.horizon), log)?;
            Ok(if rep.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Theory {
            traces,
            assume_q0,
            gamma,
            k_grad,
        } => {
            let config = load_config(common)?;
            let opts = TheoryOptions {
                traces,
                assume_q0,
                gamma,
                k_grad,
            };
            cli::cmd_theory(&config, &opts, log)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Lemmas { instances } => {
            let suite = cli::cmd_lemmas(common.seed.unwrap_or(0), instances, log)?;
            Ok(if suite.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Sweep { t_grid } => {
            let config = load_config(common)?;
            let grid = t_grid.unwrap_or_else(|| cli::DEFAULT_T_GRID.to_vec());
            cli::cmd_sweep(&config, &grid, &run_options(common, &config), log)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut log = stdout.lock();
    match execute(cli, &mut log) {
        Ok(code) => code,
        Err(e) => {
            let _ = log.flush();
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
