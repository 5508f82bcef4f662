//! Experiment runner behind the `remest` binary.
//!
//! Every command writes `resolved_spec.toml` (the instance after preset
//! expansion) and then:
//!
//! | command      | files                                                     |
//! |--------------|-----------------------------------------------------------|
//! | `solve`      | `thresholds.csv` (t, e, threshold), `values.csv` (t, d_or_r, e, J, U) |
//! | `simulate`   | `trace_<run>_seed<seed>.csv` (t, x, e, u, y, estimate, stage_cost; y empty when silent), `summary.csv` (seed_count, rollouts, mean_cost, std_err, solver_predicted_cost) |
//! | `oracle`     | `oracle_report.csv` (best_cost, best_strategy_id, solver_cost, gap, strategy_count, threshold_witness) |
//! | `crosscheck` | `crosscheck.csv` (solver_cost, family_cost, oracle_cost, solver_family_gap, solver_oracle_gap, family_oracle_gap) |
//! | `props`      | `props.csv` (seed, property, trials, failures, passed, first_failure) |
//!
//! Exit codes: 0 success, 2 bad configuration, 3 structural violation,
//! 4 budget exceeded, 1 anything else.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use remest::config::{parse_spec, to_toml};
use remest::dist::props::run_property_suite;
use remest::model::{sample_trajectory, simulate_cost, Preset, ProblemSpec, SourceKind, State};
use remest::oracle::{enumerate, enumerate_all, threshold_family_dp};
use remest::solver::{solve_gaussian_radial, solve_integer, RadialGridCfg, Solution};
use remest::Error;

mod svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Solve,
    Simulate,
    Oracle,
    Crosscheck,
    Props,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: ProblemSpec,
    /// Applied to `spec` before anything runs.
    pub preset: Option<Preset>,
    pub command: Command,
    pub seeds: Vec<u64>,
    pub rollouts: usize,
    pub output_dir: PathBuf,
    pub radial_grid: RadialGridCfg,
    pub budget: u128,
    pub collapse_histories: bool,
    pub dump_costs: bool,
    pub trials: usize,
    pub plots: bool,
}

impl RunConfig {
    /// Defaults for everything but the instance and command.
    pub fn new(spec: ProblemSpec, command: Command, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            spec,
            preset: None,
            command,
            seeds: vec![1],
            rollouts: 100_000,
            output_dir: output_dir.into(),
            radial_grid: RadialGridCfg::default(),
            budget: 1_000_000,
            collapse_histories: false,
            dump_costs: false,
            trials: 1000,
            plots: false,
        }
    }
}

/// Marks errors caused by the input rather than the computation.
#[derive(Debug)]
struct ConfigError;

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("configuration error")
    }
}

impl std::error::Error for ConfigError {}

fn config_error(e: Error) -> anyhow::Error {
    anyhow::Error::from(e).context(ConfigError)
}

/// Reads an instance, returning it with the parser's warnings.
pub fn load(path: &Path) -> Result<(ProblemSpec, Vec<String>)> {
    let parsed = parse_spec(path).map_err(config_error)?;
    Ok((parsed.spec, parsed.warnings))
}

/// Parses a `--preset` value.
pub fn parse_preset(s: &str) -> Result<Preset> {
    s.parse().map_err(config_error)
}

/// Process exit status for an error returned by [`load`] or [`run`].
pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.chain().any(|c| c.is::<ConfigError>()) {
        return 2;
    }
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::InvalidSpec(_) | Error::InvalidPmf(_) | Error::KindMismatch(_) | Error::GridTooSmall { .. }) => 2,
        Some(Error::StructuralViolation { .. }) => 3,
        Some(Error::BudgetExceeded { .. }) => 4,
        _ => 1,
    }
}

/// Runs one command and returns a one-line human summary.
pub fn run(cfg: &RunConfig) -> Result<String> {
    if let Some(p) = cfg.preset {
        let spec = cfg.spec.clone().with_preset(p).map_err(config_error)?;
        return run(&RunConfig { spec, preset: None, ..cfg.clone() });
    }
    if cfg.seeds.is_empty() {
        return Err(anyhow::Error::new(ConfigError).context("--seeds must not be empty"));
    }
    if cfg.rollouts == 0 {
        return Err(anyhow::Error::new(ConfigError).context("--rollouts must be positive"));
    }
    let out = &cfg.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("resolved_spec.toml"), to_toml(&cfg.spec))?;
    match cfg.command {
        Command::Solve => solve_cmd(cfg),
        Command::Simulate => simulate_cmd(cfg),
        Command::Oracle => oracle_cmd(cfg),
        Command::Crosscheck => crosscheck_cmd(cfg),
        Command::Props => props_cmd(cfg),
    }
}

fn solve(cfg: &RunConfig) -> Result<Solution> {
    Ok(match cfg.spec.source.kind {
        SourceKind::GaussianRadial => solve_gaussian_radial(&cfg.spec, &cfg.radial_grid)?,
        _ => solve_integer(&cfg.spec)?,
    })
}

fn create(dir: &Path, name: &str) -> Result<File> {
    let path = dir.join(name);
    File::create(&path).with_context(|| format!("creating {}", path.display()))
}

fn solve_cmd(cfg: &RunConfig) -> Result<String> {
    let sol = solve(cfg)?;
    sol.policy.write_csv(create(&cfg.output_dir, "thresholds.csv")?)?;
    sol.table.write_csv(create(&cfg.output_dir, "values.csv")?)?;
    if cfg.plots {
        fs::write(cfg.output_dir.join("thresholds.svg"), svg::thresholds(&sol.policy))?;
        for t in 1..=sol.table.horizon {
            fs::write(cfg.output_dir.join(format!("values_t{t}.svg")), svg::values(&sol.table, t))?;
        }
    }
    Ok(format!("expected cost {}", sol.expected_cost))
}

fn simulate_cmd(cfg: &RunConfig) -> Result<String> {
    let sol = solve(cfg)?;
    let mut means = Vec::new();
    let mut variances = Vec::new();
    for (run, &seed) in cfg.seeds.iter().enumerate() {
        let trace = sample_trajectory(&cfg.spec, &sol.policy, seed)?;
        let name = format!("trace_{run}_seed{seed}.csv");
        let mut w = csv::Writer::from_writer(create(&cfg.output_dir, &name)?);
        w.write_record(["t", "x", "e", "u", "y", "estimate", "stage_cost"])?;
        for s in &trace.steps {
            w.write_record([
                s.t.to_string(),
                state_text(&s.x),
                s.e.to_string(),
                (s.u as u8).to_string(),
                if s.u { state_text(&s.x) } else { String::new() },
                state_text(&s.estimate),
                s.stage_cost.to_string(),
            ])?;
        }
        w.flush()?;
        let mc = simulate_cost(&cfg.spec, &sol.policy, seed, cfg.rollouts)?;
        means.push(mc.mean_cost);
        variances.push(mc.std_err * mc.std_err);
    }
    let k = means.len() as f64;
    let mean = means.iter().sum::<f64>() / k;
    let std_err = variances.iter().sum::<f64>().sqrt() / k;
    let mut w = csv::Writer::from_writer(create(&cfg.output_dir, "summary.csv")?);
    w.write_record(["seed_count", "rollouts", "mean_cost", "std_err", "solver_predicted_cost"])?;
    w.write_record([
        cfg.seeds.len().to_string(),
        cfg.rollouts.to_string(),
        mean.to_string(),
        std_err.to_string(),
        sol.expected_cost.to_string(),
    ])?;
    w.flush()?;
    Ok(format!("simulated {mean} ± {std_err}, predicted {}", sol.expected_cost))
}

fn state_text(s: &State) -> String {
    match s {
        State::Int(x) => x.to_string(),
        State::Vector(v) => {
            let mut out = String::new();
            for (i, c) in v.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write!(out, "{c}").unwrap();
            }
            out
        }
    }
}

fn oracle_cmd(cfg: &RunConfig) -> Result<String> {
    let report = if cfg.dump_costs {
        let all = enumerate(&cfg.spec, cfg.budget, cfg.collapse_histories)?;
        all.write_costs_csv(create(&cfg.output_dir, "strategy_costs.csv")?)?;
        enumerate_all(&cfg.spec, cfg.budget, cfg.collapse_histories)?
    } else {
        enumerate_all(&cfg.spec, cfg.budget, cfg.collapse_histories)?
    };
    report.write_csv(create(&cfg.output_dir, "oracle_report.csv")?)?;
    Ok(format!(
        "{} strategies, best {} (id {}), solver {}, gap {:e}",
        report.strategy_count, report.best_cost, report.best_strategy_id, report.solver_cost, report.gap
    ))
}

fn crosscheck_cmd(cfg: &RunConfig) -> Result<String> {
    let solver = solve_integer(&cfg.spec)?.expected_cost;
    let family = threshold_family_dp(&cfg.spec)?;
    let oracle = enumerate_all(&cfg.spec, cfg.budget, cfg.collapse_histories)?.best_cost;
    let mut w = csv::Writer::from_writer(create(&cfg.output_dir, "crosscheck.csv")?);
    w.write_record([
        "solver_cost",
        "family_cost",
        "oracle_cost",
        "solver_family_gap",
        "solver_oracle_gap",
        "family_oracle_gap",
    ])?;
    w.write_record([solver, family, oracle, solver - family, solver - oracle, family - oracle].map(|v| v.to_string()))?;
    w.flush()?;
    Ok(format!("solver {solver}, threshold family {family}, oracle {oracle}"))
}

fn props_cmd(cfg: &RunConfig) -> Result<String> {
    let mut w = csv::Writer::from_writer(create(&cfg.output_dir, "props.csv")?);
    w.write_record(["seed", "property", "trials", "failures", "passed", "first_failure"])?;
    let mut failures = 0;
    for &seed in &cfg.seeds {
        for o in run_property_suite(seed, cfg.trials) {
            failures += o.failures;
            w.write_record([
                seed.to_string(),
                o.name.to_string(),
                o.trials.to_string(),
                o.failures.to_string(),
                o.passed().to_string(),
                o.first_failure.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    if failures > 0 {
        return Err(Error::StructuralViolation {
            t: 0,
            e: 0,
            coord: f64::NAN,
            reason: format!("{failures} property failures, see props.csv"),
        }
        .into());
    }
    Ok(format!("all properties hold on {} seed(s) x {} trials", cfg.seeds.len(), cfg.trials))
}
