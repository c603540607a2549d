//! The `scopt` command line front end.
//!
//! Config resolution is defaults < JSON config file < flags. Every key is
//! checked on its own so a bad value is reported by name. Invalid
//! configuration exits with code 2, runtime failures with code 1.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::error::Error;
use crate::euclidean_solver::solve;
use crate::exec::with_threads;
use crate::harness::{
    emit_csv, emit_snapshots, emit_svg_scatter, epsilon_sweep, euclidean_eps_grid, measure_eps_grid, n_sweep, rate_fit,
    rate_fit_comparison, SweepRecord, Transform, ValueMethod, N_GRID,
};
use crate::measure_solver::solve_measure;
use crate::objectives::{lookup, Problem, PROBLEM_IDS};
use crate::rng::{Purpose, RngStream};
use crate::trajectory::TrajectoryRecord;
use crate::types::RunConfig;
use crate::value_estimation::{estimate_value_euclidean, estimate_value_particle, realized_cost_of};

#[derive(Parser, Debug)]
#[command(name = "scopt", version, about = "Stochastic-control particle optimizer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Minimize a Euclidean objective.
    Solve(RunArgs),
    /// Minimize a functional of probability measures with an interacting particle system.
    SolveMeasure(RunArgs),
    /// Value error over a grid of regularization strengths.
    SweepEps {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated epsilons, or `start:end:count`.
        #[arg(long)]
        eps_grid: Option<String>,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Per-particle value error over a grid of particle counts.
    SweepN {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated particle counts.
        #[arg(long)]
        n_grid: Option<String>,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Monte Carlo estimate of the value function at the initial condition.
    Value {
        #[command(flatten)]
        run: RunArgs,
        /// Evaluation time, in [0, horizon).
        #[arg(long, default_value_t = 0.0)]
        time: f64,
    },
    /// Print the registered problem ids.
    ListProblems,
}

#[derive(Args, Debug, Default)]
pub struct SweepArgs {
    /// `feynman-kac` or `realized-cost`. Defaults to feynman-kac for
    /// Euclidean problems and realized-cost for measure problems.
    #[arg(long)]
    pub method: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long, visible_alias = "time-steps")]
    pub steps: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub outer_iterations: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub coupling: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `fixed:<v1,..>`, `fixed-scalar:<v>` or `normal:<mean>,<std>`.
    #[arg(long, allow_hyphen_values = true)]
    pub init: Option<String>,
    #[arg(long)]
    pub shared_mc_batch: bool,
    #[arg(long)]
    pub antithetic: bool,
    /// `auto`, `frozen-context` or `joint-separable`.
    #[arg(long)]
    pub estimator: Option<String>,
    /// `parallel` or `sequential`.
    #[arg(long)]
    pub execution: Option<String>,
    /// Worker thread cap; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
    /// Write particle snapshots at t = 0, T/2 and T for every outer iteration.
    #[arg(long)]
    pub dump_trajectories: bool,
    /// Write the merged configuration to effective_config.json.
    #[arg(long)]
    pub emit_effective_config: bool,
}

/// Failure with its exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

type CliResult<T> = std::result::Result<T, CliError>;

impl RunArgs {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("problem", self.problem.clone().map(Value::from));
        put("dim", self.dim.map(Value::from));
        put("particles", self.particles.map(Value::from));
        put("time_steps", self.steps.map(Value::from));
        put("horizon", self.horizon.map(Value::from));
        put("epsilon", self.epsilon.map(Value::from));
        put("mc_samples", self.mc_samples.map(Value::from));
        put("outer_iterations", self.outer_iterations.map(Value::from));
        put("coupling", self.coupling.map(Value::from));
        put("seed", self.seed.map(Value::from));
        put("init", self.init.clone().map(Value::from));
        put("shared_mc_batch", self.shared_mc_batch.then_some(Value::Bool(true)));
        put("antithetic", self.antithetic.then_some(Value::Bool(true)));
        put("estimator", self.estimator.as_ref().map(|s| Value::from(s.replace('-', "_"))));
        put("execution", self.execution.clone().map(Value::from));
        put("record_trajectories", self.dump_trajectories.then_some(Value::Bool(true)));
        m
    }

    /// Merges defaults, the config file and flags, then validates the result.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut merged = match serde_json::to_value(RunConfig::default()).map_err(config_err)? {
            Value::Object(m) => m,
            _ => unreachable!("RunConfig serializes to an object"),
        };
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| config_err(Error::io(path, e)))?;
            let file: Value = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            let Value::Object(file) = file else {
                return Err(config_err(format!("{}: config must be a JSON object", path.display())));
            };
            merged.extend(file);
        }
        merged.extend(self.overrides());
        // Check keys one by one so errors name the offending key.
        for (key, value) in &merged {
            if let Err(e) = serde_json::from_value::<RunConfig>(json!({ key.as_str(): value })) {
                return Err(CliError::Config(format!("invalid config `{key}`: {e}")));
            }
        }
        let cfg: RunConfig = serde_json::from_value(Value::Object(merged)).map_err(config_err)?;
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }
}

fn problem_for(cfg: &RunConfig) -> CliResult<Problem> {
    lookup(&cfg.problem, cfg.dim).map_err(|e| CliError::Config(format!("invalid config `problem`: {e}")))
}

fn prepare(args: &RunArgs) -> CliResult<(RunConfig, Problem)> {
    let cfg = args.resolve()?;
    let problem = problem_for(&cfg)?;
    std::fs::create_dir_all(&args.output_dir).map_err(|e| runtime(Error::io(&args.output_dir, e)))?;
    if args.emit_effective_config {
        write_json(&args.output_dir.join("effective_config.json"), &serde_json::to_value(&cfg).map_err(runtime)?)?;
    }
    Ok((cfg, problem))
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| runtime(Error::io(path, e)))
}

fn dump(history: &[TrajectoryRecord], cfg: &RunConfig, dir: &Path) -> CliResult<()> {
    if !cfg.record_trajectories {
        return Ok(());
    }
    let times = [0.0, cfg.horizon / 2.0, cfg.horizon];
    for r in history {
        emit_snapshots(r, &times, &dir.join(format!("trajectory_iter{}.csv", r.iteration))).map_err(runtime)?;
    }
    Ok(())
}

fn cloud_json(cloud: &crate::types::ParticleCloud) -> Value {
    Value::from(cloud.iter().map(|p| Value::from(p.to_vec())).collect::<Vec<_>>())
}

fn run_solve(args: &RunArgs, measure: bool) -> CliResult<()> {
    let (cfg, problem) = prepare(args)?;
    let start = Instant::now();
    let (key, point, objective, history) = match (&problem, measure) {
        (Problem::Euclidean(g), false) => {
            let sol = solve(g, &cfg).map_err(runtime)?;
            let value = g.evaluate(&sol.x_star);
            ("x_star", Value::from(sol.x_star.to_vec()), value, sol.history)
        }
        (Problem::Measure(spec), true) => {
            let sol = solve_measure(spec, &cfg).map_err(runtime)?;
            let value = spec.evaluate(&sol.final_cloud).map_err(runtime)?;
            ("cloud", cloud_json(&sol.final_cloud), value, sol.history)
        }
        (p, _) => {
            let (cmd, kind) = if measure { ("solve-measure", "measure") } else { ("solve", "Euclidean") };
            return Err(CliError::Config(format!("invalid config `problem`: `{cmd}` needs a {kind} problem, `{}` is not one", p.id())));
        }
    };
    let last = history.last().expect("at least one iteration");
    let cost = realized_cost_of(last, &problem, cfg.epsilon).map_err(runtime)?;
    let wall_ms = start.elapsed().as_millis() as u64;
    dump(&history, &cfg, &args.output_dir)?;
    let mut result = Map::new();
    result.insert("problem".into(), Value::from(cfg.problem.clone()));
    result.insert("config".into(), serde_json::to_value(&cfg).map_err(runtime)?);
    result.insert(key.into(), point.clone());
    result.insert("objective_value".into(), Value::from(objective));
    result.insert("realized_cost".into(), Value::from(cost));
    result.insert("wall_ms".into(), Value::from(wall_ms));
    result.insert("seed".into(), Value::from(cfg.seed));
    write_json(&args.output_dir.join("result.json"), &Value::Object(result))?;
    if measure {
        println!("{}: N={} objective={objective} realized_cost={cost} ({wall_ms} ms)", cfg.problem, cfg.particles);
    } else {
        println!("{}: x_star={point} objective={objective} realized_cost={cost} ({wall_ms} ms)", cfg.problem);
    }
    Ok(())
}

fn run_value(args: &RunArgs, time: f64) -> CliResult<()> {
    let (cfg, problem) = prepare(args)?;
    let start = Instant::now();
    let stream = RngStream::new(cfg.seed);
    let value_stream = stream.purpose(Purpose::Value);
    let v = match &problem {
        Problem::Euclidean(g) => {
            let x = cfg.init.sample(1, cfg.dim, stream);
            estimate_value_euclidean(g, x.point(0), time, cfg.horizon, cfg.epsilon, cfg.mc_samples, value_stream, cfg.execution)
        }
        Problem::Measure(spec) => {
            let cloud = cfg.init.sample(cfg.particles, cfg.dim, stream);
            estimate_value_particle(spec, &cloud, time, cfg.horizon, cfg.epsilon, cfg.mc_samples, value_stream, cfg.execution)
        }
    }
    .map_err(|e| match e {
        Error::Config { .. } => config_err(e),
        other => runtime(other),
    })?;
    let wall_ms = start.elapsed().as_millis() as u64;
    let result = json!({
        "problem": cfg.problem,
        "config": cfg,
        "time": time,
        "value": v.mean,
        "stderr": v.stderr,
        "samples_used": v.samples_used,
        "wall_ms": wall_ms,
        "seed": cfg.seed,
    });
    write_json(&args.output_dir.join("result.json"), &result)?;
    println!("{}: value estimate {} (stderr {})", cfg.problem, v.mean, v.stderr);
    Ok(())
}

fn parse_list<T: std::str::FromStr>(key: &str, text: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| CliError::Config(format!("invalid config `{key}`: cannot parse `{t}`"))))
        .collect()
}

fn parse_eps_grid(text: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [a, b, n] => {
            let bad = || CliError::Config(format!("invalid config `eps_grid`: `{text}` is not start:end:count"));
            let a: f64 = a.parse().map_err(|_| bad())?;
            let b: f64 = b.parse().map_err(|_| bad())?;
            let n: usize = n.parse().map_err(|_| bad())?;
            Ok(crate::harness::linspace(a, b, n))
        }
        _ => parse_list("eps_grid", text),
    }
}

fn method_for(sweep: &SweepArgs, problem: &Problem) -> CliResult<ValueMethod> {
    match &sweep.method {
        Some(m) => m.parse().map_err(config_err),
        None => Ok(match problem {
            Problem::Euclidean(_) => ValueMethod::FeynmanKac,
            Problem::Measure(_) => ValueMethod::RealizedCost,
        }),
    }
}

fn sweep_error(e: Error) -> CliError {
    match e {
        Error::Config { .. } | Error::NoKnownMinimum(_) | Error::Empty(_) => config_err(e),
        other => runtime(other),
    }
}

fn write_sweep(args: &RunArgs, records: &[SweepRecord], transform: Transform, fit: Value) -> CliResult<()> {
    emit_csv(records, &args.output_dir.join("sweep.csv")).map_err(runtime)?;
    emit_svg_scatter(records, transform, &args.output_dir.join("sweep.svg")).map_err(runtime)?;
    write_json(&args.output_dir.join("fit.json"), &fit)
}

fn run_sweep_eps(args: &RunArgs, grid: Option<&str>, sweep: &SweepArgs) -> CliResult<()> {
    let (cfg, problem) = prepare(args)?;
    let grid = match grid {
        Some(g) => parse_eps_grid(g)?,
        None if matches!(problem, Problem::Measure(_)) => measure_eps_grid(),
        None => euclidean_eps_grid(),
    };
    let method = method_for(sweep, &problem)?;
    let records = epsilon_sweep(&problem, &cfg, &grid, method).map_err(sweep_error)?;
    let report = rate_fit_comparison(&records, Transform::EpsLogInvEps, Transform::Identity).ok();
    let fit = json!({ "method": method, "report": report });
    write_sweep(args, &records, Transform::EpsLogInvEps, fit)?;
    match report {
        Some(r) => println!(
            "{}: {} points; RMSE {} {:.4e} vs {} {:.4e}; winner {}",
            cfg.problem,
            records.len(),
            r.a.transform.label(),
            r.a.fit.rmse,
            r.b.transform.label(),
            r.b.fit.rmse,
            r.winner.label()
        ),
        None => println!("{}: {} points (too few for a fit)", cfg.problem, records.len()),
    }
    Ok(())
}

fn run_sweep_n(args: &RunArgs, grid: Option<&str>, sweep: &SweepArgs) -> CliResult<()> {
    let (cfg, problem) = prepare(args)?;
    let grid = match grid {
        Some(g) => parse_list::<usize>("n_grid", g)?,
        None => N_GRID.to_vec(),
    };
    let method = method_for(sweep, &problem)?;
    let records = n_sweep(&problem, &cfg, &grid, method).map_err(sweep_error)?;
    let fit = rate_fit(&records, Transform::InverseN).ok();
    if let Some((_, excluded)) = &fit {
        if !excluded.is_empty() {
            eprintln!("excluded from the 1/N fit: N = {excluded:?}");
        }
    }
    let fit_json = json!({
        "method": method,
        "transform": Transform::InverseN,
        "fit": fit.as_ref().map(|f| f.0),
        "excluded": fit.as_ref().map(|f| f.1.clone()).unwrap_or_default(),
    });
    write_sweep(args, &records, Transform::InverseN, fit_json)?;
    match fit {
        Some((f, _)) => println!(
            "{}: {} points; error vs 1/N slope {:.4} intercept {:.4} R2 {:.4}",
            cfg.problem,
            records.len(),
            f.slope,
            f.intercept,
            f.r2
        ),
        None => println!("{}: {} points (too few for a fit)", cfg.problem, records.len()),
    }
    Ok(())
}

fn list_problems() {
    for id in PROBLEM_IDS {
        let dim = if matches!(id, "newtonian2d" | "hulahoop") { 2 } else { 1 };
        let p = lookup(id, dim).expect("registered problem");
        let kind = match p {
            Problem::Euclidean(_) => "euclidean",
            Problem::Measure(_) => "measure",
        };
        match p.known_min_value() {
            Some(v) => println!("{id}\t{kind}\tknown minimum {v}"),
            None => println!("{id}\t{kind}\tknown minimum unknown"),
        }
    }
}

fn threads_of(cmd: &Command) -> usize {
    match cmd {
        Command::Solve(r) | Command::SolveMeasure(r) => r.threads,
        Command::SweepEps { run, .. } | Command::SweepN { run, .. } | Command::Value { run, .. } => run.threads,
        Command::ListProblems => 0,
    }
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    let threads = threads_of(&cli.command);
    with_threads(threads, move || match &cli.command {
        Command::Solve(r) => run_solve(r, false),
        Command::SolveMeasure(r) => run_solve(r, true),
        Command::SweepEps { run, eps_grid, sweep } => run_sweep_eps(run, eps_grid.as_deref(), sweep),
        Command::SweepN { run, n_grid, sweep } => run_sweep_n(run, n_grid.as_deref(), sweep),
        Command::Value { run, time } => run_value(run, *time),
        Command::ListProblems => {
            list_problems();
            Ok(())
        }
    })
}

/// Process entry point: parses `std::env::args` and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
