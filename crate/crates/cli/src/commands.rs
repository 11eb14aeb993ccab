//! Subcommands. `main` only parses arguments and maps errors to exit codes.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tandem_core::kernels::{kernel_set_name, parse_kernel_set};
use tandem_core::model::exact_overflow_probability;
use tandem_core::ratio::train;
use tandem_core::simulate::sample_trajectory;
use tandem_core::QueueState;

use crate::config::{ExperimentConfig, Rates};
use crate::error::{CliError, Result};
use crate::runner::{CellStatus, Plan};
use crate::{model_io, output, seeds};

#[derive(Debug, Parser)]
#[command(name = "tandem-is", version, about = "Overflow probabilities of a two-station tandem queue by importance sampling")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags override the config file, which overrides the preset.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML file whose fields override the preset
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Base preset: desk or paper
    #[arg(long, global = true)]
    pub preset: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the closed-form overflow probability of the original system
    Exact {
        /// Thresholds (default: the configured list)
        #[arg(long, value_delimiter = ',')]
        gammas: Vec<u64>,
    },
    /// Write one alternative-system trajectory as CSV
    Simulate {
        #[command(flatten)]
        pick: Pick,
        /// Simulate the original system instead of an alternative
        #[arg(long)]
        original: bool,
    },
    /// Train the ratio network on one alternative-system trajectory
    Train {
        #[command(flatten)]
        pick: Pick,
        /// Kernel set (default: the first configured set)
        #[arg(long)]
        kernels: Option<String>,
    },
    /// Run every configured method for a single round
    Estimate {
        /// Round index, selecting the random streams
        #[arg(long, default_value_t = 0)]
        round: u64,
        /// Use this trained model for MLIS instead of training
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run all rounds of every configured cell and write result tables
    Benchmark,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct Pick {
    /// Index into the configured alternatives
    #[arg(long, default_value_t = 0)]
    pub alt: usize,
    #[arg(long, default_value_t = 0)]
    pub round: u64,
}

pub fn load_config(global: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(global.preset.as_deref(), global.config.as_deref())?;
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Some(threads) = global.threads {
        config.threads = Some(threads);
    }
    if let Some(out) = &global.out {
        config.out_dir = out.clone();
    }
    Ok(config)
}

fn threads(config: &ExperimentConfig) -> usize {
    config
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn alternative(config: &ExperimentConfig, index: usize) -> Result<Rates> {
    config.alternatives.get(index).copied().ok_or_else(|| {
        CliError::config(format!(
            "alternative {index} out of range ({} configured)",
            config.alternatives.len()
        ))
    })
}

pub fn run(cli: Cli, stdout: &mut impl Write) -> Result<()> {
    let config = load_config(&cli.global)?;
    match cli.command {
        Command::Exact { gammas } => exact(&config, &gammas, stdout),
        Command::Simulate { pick, original } => simulate(&config, pick, original),
        Command::Train { pick, kernels } => train_model(&config, pick, kernels.as_deref()),
        Command::Estimate { round, model } => estimate(config, round, model),
        Command::Benchmark => benchmark(config),
    }
}

pub fn exact(config: &ExperimentConfig, gammas: &[u64], stdout: &mut impl Write) -> Result<()> {
    let params = config.original_params()?;
    if !params.stability().is_stable() {
        return Err(CliError::config(format!("original system {params} is unstable")));
    }
    let gammas = if gammas.is_empty() { &config.gammas[..] } else { gammas };
    let mut text = String::from("gamma,probability\n");
    for &g in gammas {
        let p = exact_overflow_probability(&params, g)?;
        text.push_str(&format!("{g},{p:e}\n"));
    }
    stdout.write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e))
}

pub fn simulate(config: &ExperimentConfig, pick: Pick, original: bool) -> Result<()> {
    let (rates, stream) = if original {
        (config.original, seeds::monte_carlo(config.seed, &config.original, pick.round))
    } else {
        let alt = alternative(config, pick.alt)?;
        (alt, seeds::trajectory(config.seed, &alt, pick.round))
    };
    let params = rates.params()?;
    if config.horizon < 1 {
        return Err(CliError::config("horizon must be positive"));
    }
    let trajectory = sample_trajectory(&params, config.horizon, QueueState::EMPTY, stream)?;
    output::write_file(&config.out_dir, output::TRAJECTORY_CSV, &output::trajectory_csv(trajectory.samples()))?;
    eprintln!(
        "simulate: {} steps of {params} written to {}",
        config.horizon,
        config.out_dir.join(output::TRAJECTORY_CSV).display()
    );
    Ok(())
}

pub fn train_model(config: &ExperimentConfig, pick: Pick, kernels: Option<&str>) -> Result<()> {
    let alt = alternative(config, pick.alt)?;
    let q = alt.params()?;
    let p = config.original_params()?;
    let set = match kernels {
        Some(s) => s.to_string(),
        None => config
            .kernel_sets
            .first()
            .cloned()
            .ok_or_else(|| CliError::config("no kernel set configured"))?,
    };
    let kinds = parse_kernel_set(&set).map_err(|e| CliError::config(format!("kernel set {set:?}: {e}")))?;
    let name = kernel_set_name(&kinds);
    let cfg = config.train_config(&kinds, seeds::training(config.seed, &alt, &name, pick.round));
    cfg.validate().map_err(|e| CliError::config(format!("training settings: {e}")))?;
    if config.horizon < 2 {
        return Err(CliError::config("horizon must be at least 2"));
    }

    let trajectory = sample_trajectory(&q, config.horizon, QueueState::EMPTY, seeds::trajectory(config.seed, &alt, pick.round))?;
    let every = (cfg.iterations / 20).max(1);
    let mut log = Vec::with_capacity(cfg.iterations);
    let model = train(trajectory.samples(), &p, &q, &cfg, |i, loss| {
        log.push((i, loss));
        if i % every == 0 {
            eprintln!("train: iteration {i}/{} loss {loss:.4e}", cfg.iterations);
        }
    })?;
    output::write_file(&config.out_dir, output::TRAINING_LOG, &output::training_log_csv(&log))?;
    model_io::write(&config.out_dir.join(output::MODEL_FILE), &model, &config.fingerprint_bytes())?;
    eprintln!("train: model written to {}", config.out_dir.join(output::MODEL_FILE).display());
    Ok(())
}

pub fn estimate(config: ExperimentConfig, round: u64, model: Option<PathBuf>) -> Result<()> {
    let threads = threads(&config);
    let mut plan = Plan::new(config)?;
    if let Some(path) = model {
        plan.model_override = Some(model_io::read(&path)?.model);
    }
    let cells = plan.run_rounds(round..round + 1, threads, false)?;
    output::write_benchmark(&plan.config.out_dir, &cells, &plan.config)?;
    for c in &cells {
        eprintln!(
            "estimate: {} γ={} estimate {:e} truth {:e}",
            c.key.method.method().name(),
            c.key.gamma,
            c.mean_estimate,
            c.truth
        );
    }
    check_aborted(&cells)
}

pub fn benchmark(config: ExperimentConfig) -> Result<()> {
    let threads = threads(&config);
    let plan = Plan::new(config)?;
    eprintln!("benchmark: {} cells, {} rounds, {threads} threads", plan.cells.len(), plan.config.rounds);
    let cells = plan.run(threads, true)?;
    output::write_benchmark(&plan.config.out_dir, &cells, &plan.config)?;
    check_aborted(&cells)
}

fn check_aborted(cells: &[crate::runner::CellResult]) -> Result<()> {
    let failed: Vec<_> = cells.iter().filter(|c| c.status == CellStatus::Aborted).collect();
    for c in &failed {
        eprintln!(
            "aborted: {} γ={} ({} of {} rounds failed: {})",
            c.key.method.method().name(),
            c.key.gamma,
            c.failed_rounds,
            c.rounds,
            c.first_error.as_deref().unwrap_or("no successful rounds")
        );
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CellsAborted { failed: failed.len() })
    }
}
