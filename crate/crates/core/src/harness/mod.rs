//! Convergence studies: sweeps over the regularization strength and the
//! particle count, rate regressions, and CSV/SVG emission.

mod emit;

pub use emit::{emit_csv, emit_snapshots, emit_svg_scatter, parse_csv, parse_snapshots, render_csv, render_svg_scatter};

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::euclidean_solver::solve_from;
use crate::measure_solver::solve_measure_from;
use crate::numerics::{linear_fit, LinearFit};
use crate::objectives::Problem;
use crate::rng::{Purpose, RngStream};
use crate::types::RunConfig;
use crate::value_estimation::{estimate_value_euclidean, estimate_value_particle, realized_cost, realized_cost_measure};

/// One point of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRecord {
    /// The swept quantity: epsilon, or N as a real.
    pub parameter: f64,
    pub value_estimate: f64,
    pub stderr: f64,
    /// `value_estimate - known_min_value`.
    pub error: f64,
    pub runtime_ms: u64,
    /// Seed the point was run with; rerunning with it reproduces the point.
    pub seed: u64,
}

/// How the value at a sweep point is estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueMethod {
    /// Feynman-Kac Monte Carlo estimate at t = 0 with `mc_samples` draws.
    #[default]
    FeynmanKac,
    /// Cost actually paid by the simulated controlled particles in the last
    /// outer iteration.
    RealizedCost,
}

impl std::str::FromStr for ValueMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feynman-kac" | "feynman_kac" | "fk" => Ok(ValueMethod::FeynmanKac),
            "realized-cost" | "realized_cost" | "realized" => Ok(ValueMethod::RealizedCost),
            other => Err(Error::config("method", format!("unknown value method `{other}`"))),
        }
    }
}

/// `n` evenly spaced points on `[a, b]`, endpoints included.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| {
                let f = i as f64 / (n - 1) as f64;
                a * (1.0 - f) + b * f
            })
            .collect(),
    }
}

/// 21 epsilons on `[0.0005, 0.12]`, used for the Euclidean rate study.
pub fn euclidean_eps_grid() -> Vec<f64> {
    linspace(0.0005, 0.12, 21)
}

/// 41 epsilons on `[0.005, 0.2]`, used for the measure rate study.
pub fn measure_eps_grid() -> Vec<f64> {
    linspace(0.005, 0.2, 41)
}

/// Particle counts for the 1/N study.
pub const N_GRID: [usize; 12] = [10, 20, 25, 50, 100, 125, 200, 250, 400, 500, 800, 1000];

/// Seed of sweep point `index`, derived from the base seed.
pub fn point_seed(base_seed: u64, index: usize) -> u64 {
    RngStream::new(base_seed).at(Purpose::Sweep, 0, 0, index).stream_id
}

fn known_min(problem: &Problem) -> Result<f64> {
    problem
        .known_min_value()
        .ok_or_else(|| Error::NoKnownMinimum(problem.id().to_string()))
}

/// Value estimate and its standard error for one fully specified run.
fn estimate_point(problem: &Problem, cfg: &RunConfig, method: ValueMethod) -> Result<(f64, f64)> {
    let stream = RngStream::new(cfg.seed);
    let init = cfg.init.sample(cfg.particles, cfg.dim, stream);
    match (method, problem) {
        (ValueMethod::FeynmanKac, Problem::Euclidean(g)) => {
            let x = cfg.init.sample(1, cfg.dim, stream);
            let v = estimate_value_euclidean(g, x.point(0), 0.0, cfg.horizon, cfg.epsilon, cfg.mc_samples, stream.purpose(Purpose::Value), cfg.execution)?;
            Ok((v.mean, v.stderr))
        }
        (ValueMethod::FeynmanKac, Problem::Measure(spec)) => {
            let v = estimate_value_particle(spec, &init, 0.0, cfg.horizon, cfg.epsilon, cfg.mc_samples, stream.purpose(Purpose::Value), cfg.execution)?;
            Ok((v.mean, v.stderr))
        }
        (ValueMethod::RealizedCost, Problem::Euclidean(g)) => {
            let sol = solve_from(g, &init, cfg)?;
            let last = sol.history.last().expect("at least one iteration");
            let costs: Vec<f64> = last
                .terminal
                .iter()
                .zip(&last.control_energy)
                .map(|(x, e)| g.evaluate(x) + 0.5 * cfg.epsilon * e)
                .collect();
            let n = costs.len() as f64;
            let mean = realized_cost(last, g, cfg.epsilon);
            let stderr = if costs.len() > 1 {
                let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            Ok((mean, stderr))
        }
        (ValueMethod::RealizedCost, Problem::Measure(spec)) => {
            // A single interacting system gives one sample of the cost.
            let sol = solve_measure_from(spec, &init, cfg)?;
            let last = sol.history.last().expect("at least one iteration");
            Ok((realized_cost_measure(last, spec, cfg.epsilon)?, 0.0))
        }
    }
}

fn sweep<P: Copy + Sync>(
    problem: &Problem,
    base: &RunConfig,
    grid: &[P],
    method: ValueMethod,
    configure: impl Fn(&mut RunConfig, P) + Sync + Send,
    parameter: impl Fn(P) -> f64 + Sync + Send,
) -> Result<Vec<SweepRecord>> {
    let min = known_min(problem)?;
    if grid.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    base.validate()?;
    base.execution.try_map(grid.len(), |i| -> Result<SweepRecord> {
        let mut cfg = base.clone();
        configure(&mut cfg, grid[i]);
        cfg.seed = point_seed(base.seed, i);
        cfg.validate()?;
        let start = Instant::now();
        let (value, stderr) = estimate_point(problem, &cfg, method)?;
        let error = value - min;
        if !error.is_finite() {
            return Err(Error::InvalidEvaluation { index: i, value });
        }
        Ok(SweepRecord {
            parameter: parameter(grid[i]),
            value_estimate: value,
            stderr,
            error,
            runtime_ms: start.elapsed().as_millis() as u64,
            seed: cfg.seed,
        })
    })
}

/// Value error at each epsilon of `grid`, other settings taken from `base`.
pub fn epsilon_sweep(problem: &Problem, base: &RunConfig, grid: &[f64], method: ValueMethod) -> Result<Vec<SweepRecord>> {
    let limit = (-1.0f64).exp();
    if let Some(bad) = grid.iter().find(|&&e| !(e > 0.0 && e < limit)) {
        return Err(Error::config("eps_grid", format!("epsilon {bad} outside (0, 1/e)")));
    }
    sweep(problem, base, grid, method, |cfg, eps| cfg.epsilon = eps, |eps| eps)
}

/// Per-particle value error at each particle count of `grid`.
pub fn n_sweep(problem: &Problem, base: &RunConfig, grid: &[usize], method: ValueMethod) -> Result<Vec<SweepRecord>> {
    if grid.contains(&0) {
        return Err(Error::config("n_grid", "particle counts must be positive"));
    }
    sweep(problem, base, grid, method, |cfg, n| cfg.particles = n, |n| n as f64)
}

/// Abscissa transform for rate regressions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// `eps * ln(1/eps)`.
    EpsLogInvEps,
    Identity,
    /// `1/N`.
    InverseN,
}

impl Transform {
    pub fn apply(self, p: f64) -> f64 {
        match self {
            Transform::EpsLogInvEps => p * (1.0 / p).ln(),
            Transform::Identity => p,
            Transform::InverseN => 1.0 / p,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Transform::EpsLogInvEps => "eps*ln(1/eps)",
            Transform::Identity => "eps",
            Transform::InverseN => "1/N",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TransformFit {
    pub transform: Transform,
    pub fit: LinearFit,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub a: TransformFit,
    pub b: TransformFit,
    /// Transform with the lower RMSE; `a` on ties.
    pub winner: Transform,
    /// Parameters of records left out of the fits (N = 1 under a 1/N transform).
    pub excluded: Vec<f64>,
}

impl FitReport {
    pub fn winning_fit(&self) -> &LinearFit {
        if self.winner == self.a.transform {
            &self.a.fit
        } else {
            &self.b.fit
        }
    }
}

/// Splits off records that must not enter a fit under `transforms`.
fn usable<'a>(records: &'a [SweepRecord], transforms: &[Transform]) -> (Vec<&'a SweepRecord>, Vec<f64>) {
    let inverse = transforms.contains(&Transform::InverseN);
    let (mut kept, mut excluded) = (Vec::new(), Vec::new());
    for r in records {
        if inverse && r.parameter == 1.0 {
            // A single particle has no interaction partners.
            excluded.push(r.parameter);
        } else {
            kept.push(r);
        }
    }
    (kept, excluded)
}

fn fit_with(records: &[&SweepRecord], transform: Transform) -> Result<LinearFit> {
    let xs: Vec<f64> = records.iter().map(|r| transform.apply(r.parameter)).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.error).collect();
    linear_fit(&xs, &ys)
}

/// Least-squares fit of error against `transform(parameter)`.
pub fn rate_fit(records: &[SweepRecord], transform: Transform) -> Result<(LinearFit, Vec<f64>)> {
    let (kept, excluded) = usable(records, &[transform]);
    if kept.len() < 3 {
        return Err(Error::Empty("rate fit needs at least three records"));
    }
    Ok((fit_with(&kept, transform)?, excluded))
}

/// Fits error against both transforms and reports which explains it better.
pub fn rate_fit_comparison(records: &[SweepRecord], a: Transform, b: Transform) -> Result<FitReport> {
    let (kept, excluded) = usable(records, &[a, b]);
    if kept.len() < 3 {
        return Err(Error::Empty("rate fit needs at least three records"));
    }
    let fa = fit_with(&kept, a)?;
    let fb = fit_with(&kept, b)?;
    let winner = if fb.rmse < fa.rmse { b } else { a };
    Ok(FitReport {
        a: TransformFit { transform: a, fit: fa },
        b: TransformFit { transform: b, fit: fb },
        winner,
        excluded,
    })
}
