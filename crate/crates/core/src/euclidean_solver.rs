//! Particle optimizer on R^d.
//!
//! Each particle follows the closed-loop SDE `dX = theta dt + dW` where the
//! feedback drift is the softmin-weighted look-ahead displacement
//! `theta = (sum_j w_j Y_j - x) / tau`, `Y_j = x + sqrt(tau) xi_j`,
//! `w = softmin(G(Y), eps)`, `tau` the remaining time. Outer iterations
//! restart every particle at a convex combination of its terminal state and
//! the terminal mean.

use crate::error::{Error, Result};
use crate::numerics::softmin_weights_into;
use crate::objectives::ObjectiveSpec;
use crate::rng::{fill_normal, Purpose, RngStream};
use crate::trajectory::TrajectoryRecord;
use crate::types::{ParticleCloud, PointVec, RunConfig};

/// Reusable buffers for one drift estimate.
#[derive(Default)]
pub(crate) struct DriftScratch {
    pub(crate) sample: Vec<f64>,
    pub(crate) values: Vec<f64>,
    pub(crate) weights: Vec<f64>,
}

/// Draws an `S x d` standard-normal batch; with `antithetic` the second half mirrors the first.
pub(crate) fn draw_batch(stream: RngStream, samples: usize, dim: usize, antithetic: bool, out: &mut Vec<f64>) {
    out.resize(samples * dim, 0.0);
    let mut rng = stream.rng();
    if antithetic {
        let half = samples / 2 * dim;
        fill_normal(&mut rng, &mut out[..half]);
        let (a, b) = out.split_at_mut(half);
        for (dst, src) in b.iter_mut().zip(a.iter()) {
            *dst = -*src;
        }
    } else {
        fill_normal(&mut rng, out);
    }
}

/// `sum_j w_j sqrt(tau) xi_j / tau`, accumulating antithetic pairs together
/// so that equal-weight pairs cancel exactly.
pub(crate) fn weighted_displacement(
    noise: &[f64],
    weights: &[f64],
    tau: f64,
    antithetic: bool,
    out: &mut [f64],
) {
    let dim = out.len();
    let root = tau.sqrt();
    out.iter_mut().for_each(|v| *v = 0.0);
    if antithetic {
        let half = weights.len() / 2;
        for j in 0..half {
            let (wa, wb) = (weights[j], weights[j + half]);
            let a = &noise[j * dim..(j + 1) * dim];
            let b = &noise[(j + half) * dim..(j + half + 1) * dim];
            for c in 0..dim {
                out[c] += wa * (root * a[c]) + wb * (root * b[c]);
            }
        }
    } else {
        for (j, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, z) in out.iter_mut().zip(&noise[j * dim..(j + 1) * dim]) {
                *o += w * (root * z);
            }
        }
    }
    out.iter_mut().for_each(|v| *v /= tau);
}

/// Softmin drift from a given noise batch.
pub(crate) fn drift_from_noise(
    g: &ObjectiveSpec,
    x: &[f64],
    tau: f64,
    epsilon: f64,
    noise: &[f64],
    antithetic: bool,
    scratch: &mut DriftScratch,
    out: &mut [f64],
) -> Result<()> {
    let dim = x.len();
    let samples = noise.len() / dim;
    let root = tau.sqrt();
    scratch.values.clear();
    scratch.sample.resize(dim, 0.0);
    for j in 0..samples {
        for ((y, xv), z) in scratch.sample.iter_mut().zip(x).zip(&noise[j * dim..(j + 1) * dim]) {
            *y = xv + root * z;
        }
        let v = g.evaluate(&scratch.sample);
        if !v.is_finite() {
            return Err(Error::InvalidSample { sample: j, value: v });
        }
        scratch.values.push(v);
    }
    softmin_weights_into(&scratch.values, epsilon, &mut scratch.weights)?;
    weighted_displacement(noise, &scratch.weights, tau, antithetic, out);
    Ok(())
}

/// Monte Carlo estimate of the optimal feedback drift at `x` with remaining time `tau`.
pub fn estimate_drift(
    g: &ObjectiveSpec,
    x: &[f64],
    tau: f64,
    epsilon: f64,
    samples: usize,
    stream: RngStream,
) -> Result<PointVec> {
    estimate_drift_with(g, x, tau, epsilon, samples, false, stream)
}

/// As [`estimate_drift`], optionally with antithetic `(xi, -xi)` pairs.
pub fn estimate_drift_with(
    g: &ObjectiveSpec,
    x: &[f64],
    tau: f64,
    epsilon: f64,
    samples: usize,
    antithetic: bool,
    stream: RngStream,
) -> Result<PointVec> {
    if !(tau > 0.0) {
        return Err(Error::config("tau", "remaining time must be positive"));
    }
    if samples == 0 || (antithetic && samples % 2 != 0) {
        return Err(Error::config("mc_samples", "need a positive (even, if antithetic) sample count"));
    }
    let mut scratch = DriftScratch::default();
    let mut noise = Vec::new();
    draw_batch(stream, samples, x.len(), antithetic, &mut noise);
    let mut out = vec![0.0; x.len()];
    drift_from_noise(g, x, tau, epsilon, &noise, antithetic, &mut scratch, &mut out)?;
    Ok(PointVec::from_vec_unchecked(out))
}

/// `x + drift dt + sqrt(dt) z` with a caller-supplied standard-normal `z`.
pub fn euler_step_with_noise(x: &[f64], drift: &[f64], dt: f64, z: &[f64]) -> PointVec {
    let root = dt.sqrt();
    PointVec::from_vec_unchecked(
        x.iter()
            .zip(drift)
            .zip(z)
            .map(|((x, d), z)| x + d * dt + root * z)
            .collect(),
    )
}

/// Euler-Maruyama step with fresh Gaussian noise from `stream`.
pub fn euler_step(x: &[f64], drift: &[f64], dt: f64, stream: RngStream) -> PointVec {
    let mut z = vec![0.0; x.len()];
    fill_normal(&mut stream.rng(), &mut z);
    euler_step_with_noise(x, drift, dt, &z)
}

pub(crate) fn check_cloud(cloud: &ParticleCloud, cfg: &RunConfig) -> Result<()> {
    if cloud.dim() != cfg.dim {
        return Err(Error::Dimension {
            expected: cfg.dim,
            got: cloud.dim(),
        });
    }
    if cloud.len() != cfg.particles {
        return Err(Error::config(
            "particles",
            format!("initial cloud has {} particles, config says {}", cloud.len(), cfg.particles),
        ));
    }
    Ok(())
}

/// Per-step output of one particle.
pub(crate) struct ParticleStep {
    pub(crate) next: Vec<f64>,
    pub(crate) drift: Vec<f64>,
    pub(crate) clamps: usize,
}

/// Accumulates per-step results into a [`TrajectoryRecord`].
pub(crate) struct Recorder {
    record: TrajectoryRecord,
    keep: bool,
}

impl Recorder {
    pub(crate) fn new(init: &ParticleCloud, cfg: &RunConfig, iteration: usize, seed: RngStream) -> Self {
        let m = cfg.time_steps;
        Self {
            keep: cfg.record_trajectories,
            record: TrajectoryRecord {
                iteration,
                dt: cfg.dt(),
                times: (0..m).map(|k| cfg.time(k)).collect(),
                initial: init.clone(),
                terminal: init.clone(),
                states: cfg.record_trajectories.then(|| Vec::with_capacity(m)),
                drifts: cfg.record_trajectories.then(|| Vec::with_capacity(m)),
                control_energy: vec![0.0; init.len()],
                max_drift_norm: 0.0,
                clamped_pairs: Vec::with_capacity(m),
                seed,
            },
        }
    }

    /// Records step output and returns the advanced cloud.
    pub(crate) fn push(&mut self, current: ParticleCloud, steps: Vec<ParticleStep>) -> ParticleCloud {
        let r = &mut self.record;
        let dim = current.dim();
        let mut next = Vec::with_capacity(current.flat().len());
        let mut drifts = Vec::with_capacity(if self.keep { next.capacity() } else { 0 });
        let mut clamps = 0;
        for (i, s) in steps.into_iter().enumerate() {
            let sq: f64 = s.drift.iter().map(|v| v * v).sum();
            r.control_energy[i] += sq * r.dt;
            r.max_drift_norm = r.max_drift_norm.max(sq.sqrt());
            clamps += s.clamps;
            next.extend_from_slice(&s.next);
            if self.keep {
                drifts.extend_from_slice(&s.drift);
            }
        }
        r.clamped_pairs.push(clamps);
        if let (Some(states), Some(ds)) = (r.states.as_mut(), r.drifts.as_mut()) {
            states.push(current);
            ds.push(ParticleCloud::from_flat_unchecked(dim, drifts));
        }
        ParticleCloud::from_flat_unchecked(dim, next)
    }

    pub(crate) fn finish(mut self, terminal: ParticleCloud) -> TrajectoryRecord {
        self.record.terminal = terminal;
        self.record
    }
}

/// Stream keys identifying particles; `keys[i]` selects particle `i`'s random streams.
pub(crate) fn default_keys(n: usize) -> Vec<u64> {
    (0..n as u64).collect()
}

/// One pass of the closed-loop dynamics from `init` over `[0, T]`.
pub fn run_iteration(
    g: &ObjectiveSpec,
    init: &ParticleCloud,
    cfg: &RunConfig,
    stream: RngStream,
    iteration: usize,
) -> Result<TrajectoryRecord> {
    run_iteration_keyed(g, init, cfg, stream, iteration, &default_keys(init.len()))
}

pub(crate) fn run_iteration_keyed(
    g: &ObjectiveSpec,
    init: &ParticleCloud,
    cfg: &RunConfig,
    stream: RngStream,
    iteration: usize,
    keys: &[u64],
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    check_cloud(init, cfg)?;
    if !g.accepts_dim(cfg.dim) {
        return Err(Error::Dimension {
            expected: g.dim.unwrap_or(1),
            got: cfg.dim,
        });
    }
    let (dim, dt) = (cfg.dim, cfg.dt());
    let shared = cfg.shared_mc_batch.then(|| {
        let mut b = Vec::new();
        draw_batch(stream.at(Purpose::SharedBatch, iteration, 0, 0), cfg.mc_samples, dim, cfg.antithetic, &mut b);
        b
    });
    let mut recorder = Recorder::new(init, cfg, iteration, stream);
    let mut cloud = init.clone();
    for k in 0..cfg.time_steps {
        let tau = cfg.remaining(k);
        let steps = cfg.execution.try_map(cloud.len(), |i| -> Result<ParticleStep> {
            let key = keys[i] as usize;
            let x = cloud.point(i);
            let mut scratch = DriftScratch::default();
            let mut own = Vec::new();
            let noise = match &shared {
                Some(b) => b.as_slice(),
                None => {
                    draw_batch(stream.at(Purpose::DriftSamples, iteration, k, key), cfg.mc_samples, dim, cfg.antithetic, &mut own);
                    own.as_slice()
                }
            };
            let mut drift = vec![0.0; dim];
            drift_from_noise(g, x, tau, cfg.epsilon, noise, cfg.antithetic, &mut scratch, &mut drift)?;
            let next = euler_step(x, &drift, dt, stream.at(Purpose::EulerNoise, iteration, k, key)).into_inner();
            Ok(ParticleStep { next, drift, clamps: 0 })
        })?;
        cloud = recorder.push(cloud, steps);
    }
    Ok(recorder.finish(cloud))
}

#[derive(Clone, Debug)]
pub struct EuclideanSolution {
    /// Mean of the final iteration's terminal states.
    pub x_star: PointVec,
    pub history: Vec<TrajectoryRecord>,
}

/// Runs `L` outer iterations with mean-coupled restarts.
pub fn solve(g: &ObjectiveSpec, cfg: &RunConfig) -> Result<EuclideanSolution> {
    cfg.validate()?;
    let stream = RngStream::new(cfg.seed);
    let init = cfg.init.sample(cfg.particles, cfg.dim, stream);
    solve_from(g, &init, cfg)
}

/// [`solve`] from an explicit initial cloud.
pub fn solve_from(g: &ObjectiveSpec, init: &ParticleCloud, cfg: &RunConfig) -> Result<EuclideanSolution> {
    let stream = RngStream::new(cfg.seed);
    let keys = default_keys(init.len());
    let mut start = init.clone();
    let mut history = Vec::with_capacity(cfg.outer_iterations);
    for l in 0..cfg.outer_iterations {
        let record = run_iteration_keyed(g, &start, cfg, stream, l, &keys)?;
        if l + 1 < cfg.outer_iterations {
            start = coupled_restart(&record.terminal, cfg.coupling);
        }
        history.push(record);
    }
    let x_star = history.last().map(|r| r.terminal.mean()).expect("at least one iteration");
    Ok(EuclideanSolution { x_star, history })
}

/// `lambda * mean + (1 - lambda) * x_i` for every particle.
pub fn coupled_restart(terminal: &ParticleCloud, coupling: f64) -> ParticleCloud {
    let mean = terminal.mean();
    let mut next = terminal.clone();
    for i in 0..next.len() {
        for (v, m) in next.point_mut(i).iter_mut().zip(mean.iter()) {
            *v = coupling * m + (1.0 - coupling) * *v;
        }
    }
    next
}
