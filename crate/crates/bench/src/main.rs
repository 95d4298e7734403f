//! Benchmark CLI: reproduce the attack-synthesis and detection experiments
//! as CSV/JSON report bundles.

use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use mdp_stealth_bench::config::{
    ExperimentConfig, InventoryDetectConfig, InventoryGammaSweepConfig, InventoryTradeoffConfig,
    LinearAttackConfig, LinearFrontierConfig,
};
use mdp_stealth_bench::{parse_config, run_experiment};

#[derive(Parser)]
#[command(name = "mdp-stealth-bench", version, about = "Stealthy control-channel attack experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON experiment configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the report bundle.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's Monte Carlo trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads for Monte Carlo fan-out (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Victim-reward vs information-rate trade-off curves.
    InventoryTradeoff(RunArgs),
    /// CUSUM / GLR detection delays and statistic traces.
    InventoryDetect(RunArgs),
    /// Discounted-rate convergence sweep over the discount factor.
    InventoryGammaSweep(RunArgs),
    /// Attacked linear-system trajectories across penalty weights.
    LinearAttack(RunArgs),
    /// Feasibility frontier and stationary statistics of the linear attack.
    LinearFrontier(RunArgs),
    /// Validate a configuration file against the schema.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_or_default(
    args: &RunArgs,
    default: ExperimentConfig,
    expected: &str,
) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let cfg = parse_config(&text)?;
            anyhow::ensure!(
                cfg.name() == expected,
                "config is for experiment `{}`, expected `{expected}`",
                cfg.name()
            );
            cfg
        }
        None => default,
    };
    if let Some(seed) = args.seed {
        config.apply_seed(seed);
    }
    if let Some(trials) = args.trials {
        config.apply_trials(trials);
    }
    if let Some(threads) = args.threads {
        // Errors only if a global pool already exists, which is fine.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    Ok(config)
}

fn run(args: &RunArgs, default: ExperimentConfig, expected: &str) -> anyhow::Result<()> {
    let config = load_or_default(args, default, expected)?;
    let manifest = run_experiment(&config, &args.out)?;
    println!(
        "{}: wrote {} file(s) to {} (config {})",
        manifest.experiment,
        manifest.files.len() + 1,
        args.out.display(),
        &manifest.config_hash[..12]
    );
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::InventoryTradeoff(args) => run(
            args,
            ExperimentConfig::InventoryTradeoff(InventoryTradeoffConfig::default()),
            "inventory-tradeoff",
        ),
        Command::InventoryDetect(args) => run(
            args,
            ExperimentConfig::InventoryDetect(InventoryDetectConfig::default()),
            "inventory-detect",
        ),
        Command::InventoryGammaSweep(args) => run(
            args,
            ExperimentConfig::InventoryGammaSweep(InventoryGammaSweepConfig::default()),
            "inventory-gamma-sweep",
        ),
        Command::LinearAttack(args) => run(
            args,
            ExperimentConfig::LinearAttack(LinearAttackConfig::default()),
            "linear-attack",
        ),
        Command::LinearFrontier(args) => run(
            args,
            ExperimentConfig::LinearFrontier(LinearFrontierConfig::default()),
            "linear-frontier",
        ),
        Command::Validate { config } => {
            let text = fs::read_to_string(config)
                .with_context(|| format!("reading config {}", config.display()))?;
            let cfg = parse_config(&text)?;
            println!("ok: valid `{}` config (hash {})", cfg.name(), &cfg.config_hash()[..12]);
            Ok(())
        }
    }
}
