//! Command-line front end for the training engine: run a configured loop,
//! probe the quadratic divergence estimate, compare algorithms on a shared
//! task, or scatter post-update density ratios.
//!
//! Exit codes: 0 on success, 2 for configuration problems, 3 for numerical
//! aborts, 1 otherwise. Failures print a human-readable message and a
//! machine-readable JSON record to stderr. All artifacts are deterministic
//! given the configuration and seed; wall-clock timing goes to stderr only.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use r2vpo::config::RunConfig;
use r2vpo::report::{cmd_compare, cmd_probe, cmd_ratio_scatter, cmd_train};
use r2vpo::trainer::Checkpoint;
use r2vpo::{Error, Result};

#[derive(Parser)]
#[command(
    name = "r2vpo",
    version,
    about = "Train tabular sequence policies with ratio-variance regularization or hard clipping"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training loop; write metrics CSV, checkpoint, and config echo
    Train(TrainArgs),
    /// Compare the exact divergence against its quadratic ratio-variance estimate
    Probe(ProbeArgs),
    /// Run several configs on one task and compare their learning curves
    Compare(CompareArgs),
    /// Roll out a checkpoint's policy, step on the frozen batch, scatter the ratios
    RatioScatter(ScatterArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration file
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override one config key, e.g. --set step_size=0.1 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Override the config's random seed
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ProbeArgs {
    /// Perturbation scale, repeatable; each bounds max |rho - 1|
    #[arg(long = "scale", value_name = "S")]
    scale: Vec<f64>,
    /// Probe trials per scale, each with a fresh random behavior distribution
    #[arg(long, value_name = "N", default_value_t = 200)]
    trials: usize,
    /// Random seed for the probe draws
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Run configuration file (repeat once per run); labels come from file stems
    #[arg(long = "config", value_name = "PATH", required = true)]
    config: Vec<PathBuf>,
    /// Override one config key in every run, e.g. --set seed=3 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Override every config's random seed
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ScatterArgs {
    /// Checkpoint JSON written by the train command
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Gradient steps to take on the frozen rollout batch
    #[arg(long, value_name = "N", default_value_t = 1)]
    steps: usize,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = err.exit_code();
            eprintln!("error: {err}");
            let record = serde_json::json!({ "error": err.to_string(), "exit_code": code });
            eprintln!("{record}");
            ExitCode::from(code as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    let start = Instant::now();
    match command {
        Command::Train(args) => {
            let overrides = collect_overrides(&args.set, args.seed)?;
            let config = RunConfig::from_file(&args.config, &overrides)?;
            let artifacts = cmd_train(&config, &args.out)?;
            let last = artifacts
                .metrics
                .last()
                .map(|row| format!("final mean reward {}", row.mean_reward))
                .unwrap_or_else(|| "no iterations requested".to_string());
            println!(
                "trained {} iterations; {last}",
                artifacts.metrics.len()
            );
            println!("metrics: {}", artifacts.metrics_path.display());
            println!("checkpoint: {}", artifacts.checkpoint_path.display());
            println!("effective config: {}", artifacts.config_echo_path.display());
        }
        Command::Probe(args) => {
            let scales = if args.scale.is_empty() {
                vec![0.1, 0.05, 0.025]
            } else {
                args.scale.clone()
            };
            let artifacts = cmd_probe(&scales, args.trials, args.seed, &args.out)?;
            println!(
                "generator check at the identity ratio: value {}, first derivative {}, \
                 second derivative {}",
                artifacts.generator.value_at_one,
                artifacts.generator.first_derivative,
                artifacts.generator.second_derivative
            );
            for summary in &artifacts.summaries {
                println!(
                    "scale {}: median exact {}, median quadratic {}, median |residual| {}",
                    summary.scale,
                    summary.median_js,
                    summary.median_quadratic,
                    summary.median_abs_residual
                );
            }
            println!("csv: {}", artifacts.csv_path.display());
            println!("plot: {}", artifacts.svg_path.display());
        }
        Command::Compare(args) => {
            let overrides = collect_overrides(&args.set, args.seed)?;
            let mut labeled = Vec::with_capacity(args.config.len());
            for path in &args.config {
                let label = path
                    .file_stem()
                    .and_then(|stem| stem.to_str())
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "cannot derive a label from config path {}",
                            path.display()
                        ))
                    })?
                    .to_string();
                labeled.push((label, RunConfig::from_file(path, &overrides)?));
            }
            let artifacts = cmd_compare(&labeled, &args.out)?;
            println!("rollouts to mean reward >= {}:", artifacts.threshold);
            for run in &artifacts.runs {
                let cell = run
                    .rollouts_to_threshold
                    .map(|n| n.to_string())
                    .unwrap_or_else(|| r2vpo::report::NOT_REACHED.to_string());
                println!("  {}: {}", run.label, cell);
            }
            println!("csv: {}", artifacts.csv_path.display());
            println!("plot: {}", artifacts.svg_path.display());
            println!("table: {}", artifacts.table_path.display());
        }
        Command::RatioScatter(args) => {
            let text = fs::read_to_string(&args.checkpoint)?;
            let checkpoint = Checkpoint::from_json(&text)?;
            let artifacts = cmd_ratio_scatter(&checkpoint, args.steps, &args.out)?;
            println!(
                "{} tokens after {} step(s); ratio variance {} in the lowest \
                 behavior-probability decile, {} in the highest",
                artifacts.points.len(),
                args.steps,
                artifacts.low_decile_ratio_variance,
                artifacts.high_decile_ratio_variance
            );
            println!("csv: {}", artifacts.csv_path.display());
            println!("plot: {}", artifacts.svg_path.display());
        }
    }
    eprintln!("wall time: {} ms", start.elapsed().as_millis());
    Ok(())
}

/// Parse repeated `--set key=value` flags, then apply `--seed` on top.
fn collect_overrides(set: &[String], seed: Option<u64>) -> Result<Vec<(String, String)>> {
    let mut overrides = Vec::with_capacity(set.len() + 1);
    for entry in set {
        let (key, value) = entry.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "override {entry:?} must have the form key=value"
            ))
        })?;
        overrides.push((key.trim().to_string(), value.trim().to_string()));
    }
    if let Some(seed) = seed {
        overrides.push(("seed".to_string(), seed.to_string()));
    }
    Ok(overrides)
}
