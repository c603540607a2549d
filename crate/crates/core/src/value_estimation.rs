//! Feynman-Kac value estimators and realized trajectory costs.
//!
//! `V_eps(t, x) = -eps ln E[exp(-G(x + W_T - W_t) / eps)]` and its
//! N-particle analogue `v^N_eps(t, x) / N` with `U = N G(mu^N)` are estimated
//! by shift-stabilized log-mean-exp over Gaussian samples.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::numerics::log_mean_exp_with_stderr;
use crate::objectives::{MeasureObjectiveSpec, ObjectiveSpec, Problem};
use crate::rng::{fill_normal, RngStream};
use crate::trajectory::TrajectoryRecord;
use crate::types::ParticleCloud;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples_used: usize,
}

/// Samples are drawn in chunks of this size, each from its own child stream.
const CHUNK: usize = 1024;

/// Evaluates `score` on `samples` Gaussian vectors of length `width`, in sample order.
fn gaussian_scores(
    samples: usize,
    width: usize,
    stream: RngStream,
    exec: Exec,
    score: impl Fn(&[f64]) -> f64 + Sync + Send,
) -> Result<Vec<f64>> {
    let chunks = samples.div_ceil(CHUNK);
    let per_chunk = exec.map(chunks, |c| {
        let count = CHUNK.min(samples - c * CHUNK);
        let mut rng = stream.child(c as u64).rng();
        let mut z = vec![0.0; width];
        (0..count)
            .map(|_| {
                fill_normal(&mut rng, &mut z);
                score(&z)
            })
            .collect::<Vec<f64>>()
    });
    let values: Vec<f64> = per_chunk.into_iter().flatten().collect();
    if let Some((sample, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidSample { sample, value });
    }
    Ok(values)
}

fn check_time(t: f64, horizon: f64, samples: usize) -> Result<f64> {
    if !(t < horizon) || !t.is_finite() {
        return Err(Error::config("t", "evaluation time must be below the horizon"));
    }
    if samples < 2 {
        return Err(Error::config("samples", "need at least two samples"));
    }
    Ok((horizon - t).sqrt())
}

/// Monte Carlo estimate of `V_eps(t, x)` for a Euclidean objective.
pub fn estimate_value_euclidean(
    g: &ObjectiveSpec,
    x: &[f64],
    t: f64,
    horizon: f64,
    epsilon: f64,
    samples: usize,
    stream: RngStream,
    exec: Exec,
) -> Result<ValueEstimate> {
    let root = check_time(t, horizon, samples)?;
    let d = x.len();
    let values = gaussian_scores(samples, d, stream, exec, |z| {
        let y: Vec<f64> = x.iter().zip(z).map(|(x, z)| x + root * z).collect();
        g.evaluate(&y)
    })?;
    let (mean, stderr) = log_mean_exp_with_stderr(&values, epsilon)?;
    Ok(ValueEstimate {
        mean,
        stderr,
        samples_used: samples,
    })
}

/// Monte Carlo estimate of `v^N_eps(t, x) / N`, perturbing every particle per sample.
pub fn estimate_value_particle(
    spec: &MeasureObjectiveSpec,
    cloud: &ParticleCloud,
    t: f64,
    horizon: f64,
    epsilon: f64,
    samples: usize,
    stream: RngStream,
    exec: Exec,
) -> Result<ValueEstimate> {
    let root = check_time(t, horizon, samples)?;
    if cloud.dim() != spec.dim {
        return Err(Error::Dimension {
            expected: spec.dim,
            got: cloud.dim(),
        });
    }
    let n = cloud.len() as f64;
    let values = gaussian_scores(samples, cloud.flat().len(), stream, exec, |z| {
        let y: Vec<f64> = cloud.flat().iter().zip(z).map(|(x, z)| x + root * z).collect();
        n * spec.evaluate_unchecked(&ParticleCloud::from_flat_unchecked(cloud.dim(), y)).0
    })?;
    let (v, se) = log_mean_exp_with_stderr(&values, epsilon)?;
    Ok(ValueEstimate {
        mean: v / n,
        stderr: se / n,
        samples_used: samples,
    })
}

/// Mean over particles of `G(X_T) + eps/2 sum_k |theta_k|^2 dt`.
pub fn realized_cost(record: &TrajectoryRecord, g: &ObjectiveSpec, epsilon: f64) -> f64 {
    let n = record.particles() as f64;
    record
        .terminal
        .iter()
        .zip(&record.control_energy)
        .map(|(x, e)| g.evaluate(x) + 0.5 * epsilon * e)
        .sum::<f64>()
        / n
}

/// `G(mu_T) + eps/(2N) sum_i sum_k |theta^i_k|^2 dt`.
pub fn realized_cost_measure(record: &TrajectoryRecord, spec: &MeasureObjectiveSpec, epsilon: f64) -> Result<f64> {
    let n = record.particles() as f64;
    let energy: f64 = record.control_energy.iter().sum();
    Ok(spec.evaluate(&record.terminal)? + 0.5 * epsilon * energy / n)
}

/// Realized cost for either kind of problem.
pub fn realized_cost_of(record: &TrajectoryRecord, problem: &Problem, epsilon: f64) -> Result<f64> {
    match problem {
        Problem::Euclidean(g) => Ok(realized_cost(record, g, epsilon)),
        Problem::Measure(s) => realized_cost_measure(record, s, epsilon),
    }
}
