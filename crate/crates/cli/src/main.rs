use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gimcmc_cli::commands::{self, Context};
use gimcmc_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "gimcmc",
    version,
    about = "Gaussian-invariant MCMC experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Full-size settings (64x64 Cox lattice).
    #[arg(long, global = true)]
    extended: bool,

    /// Worker threads for repeated runs.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Suppress tables on stdout.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run each configured sampler and report ESS.
    Sample,
    /// Compare two or more samplers on one target.
    Compare,
    /// Variance of plain versus control-variate estimators over repeated runs.
    VarianceReduction,
    /// Optimal step sizes for near-Gaussian product targets.
    Scaling,
    /// Simulate a log-Gaussian Cox data set.
    SimulateCox {
        /// Lattice side length (8 to 64).
        #[arg(long)]
        grid_size: Option<usize>,
    },
    /// Validate the bundled datasets and export them with --out.
    Datasets,
}

fn load(path: Option<&Path>) -> Result<Option<ExperimentConfig>, CliError> {
    path.map(ExperimentConfig::load).transpose()
}

fn require(cfg: Option<ExperimentConfig>) -> Result<ExperimentConfig, CliError> {
    cfg.ok_or_else(|| CliError::Config("this command needs --config PATH".into()))
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>, default: &str) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.clone()))
        .unwrap_or_else(|| PathBuf::from(default))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let ctx = Context {
        seed: cli.seed,
        extended: cli.extended,
        quiet: cli.quiet,
    };
    let cfg = load(cli.config.as_deref())?;
    match &cli.command {
        Command::Sample => {
            let out = out_dir(cli, cfg.as_ref(), "results/sample");
            commands::sample(&require(cfg)?, &ctx, &out)
        }
        Command::Compare => {
            let out = out_dir(cli, cfg.as_ref(), "results/compare");
            commands::compare(&require(cfg)?, &ctx, &out)
        }
        Command::VarianceReduction => {
            let out = out_dir(cli, cfg.as_ref(), "results/variance-reduction");
            commands::variance_reduction(&require(cfg)?, &ctx, &out)
        }
        Command::Scaling => {
            let out = out_dir(cli, cfg.as_ref(), "results/scaling");
            commands::scaling(&cfg.unwrap_or_else(empty_config), &ctx, &out)
        }
        Command::SimulateCox { grid_size } => {
            let out = out_dir(cli, cfg.as_ref(), "results/cox");
            commands::simulate_cox_cmd(cfg.as_ref(), *grid_size, &ctx, &out)
        }
        Command::Datasets => commands::datasets(&ctx, cli.out.as_deref()),
    }
}

fn empty_config() -> ExperimentConfig {
    ExperimentConfig {
        target: None,
        samplers: Vec::new(),
        run: Default::default(),
        estimator: None,
        scaling: None,
        output: None,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
