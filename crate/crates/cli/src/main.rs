use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use remest_cli::{exit_code, load, parse_preset, run, Command};

/// Solve, simulate and certify energy-harvesting remote estimation instances.
#[derive(Debug, Parser)]
#[command(name = "remest", version)]
struct Args {
    /// Instance file (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value = "solve")]
    command: Command,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated seeds for `simulate` and `props`.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    /// Monte Carlo rollouts per seed.
    #[arg(long, default_value_t = 100_000)]
    rollouts: usize,
    /// `fixed_budget=K`, `no_constraint` or `iid`.
    #[arg(long)]
    preset: Option<String>,
    /// Radial grid step (Gaussian sources).
    #[arg(long)]
    radial_h: Option<f64>,
    /// Radial grid extent (Gaussian sources).
    #[arg(long)]
    radial_rmax: Option<f64>,
    /// Strategy budget for `oracle` and `crosscheck`.
    #[arg(long, default_value_t = 1_000_000)]
    budget: u128,
    /// Let the oracle's strategies see only the last receipt.
    #[arg(long)]
    collapse_histories: bool,
    /// Also write `strategy_costs.csv` with one row per enumerated strategy.
    #[arg(long)]
    dump_costs: bool,
    /// Random trials per property for `props`.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Write SVG plots next to the CSV files.
    #[arg(long)]
    plots: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = load(&args.config).and_then(|(spec, warnings)| {
        for w in &warnings {
            eprintln!("warning: {w}");
        }
        let cfg = remest_cli::RunConfig {
            spec,
            preset: args.preset.as_deref().map(parse_preset).transpose()?,
            command: args.command,
            seeds: args.seeds,
            rollouts: args.rollouts,
            output_dir: args.out,
            radial_grid: remest::solver::RadialGridCfg {
                step: args.radial_h,
                r_max: args.radial_rmax,
                ..Default::default()
            },
            budget: args.budget,
            collapse_histories: args.collapse_histories,
            dump_costs: args.dump_costs,
            trials: args.trials,
            plots: args.plots,
        };
        run(&cfg)
    });
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
