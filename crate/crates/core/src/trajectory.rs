use serde::Serialize;

use crate::rng::RngStream;
use crate::types::{ParticleCloud, PointVec};

/// One outer iteration of a particle solver.
///
/// `times[k] = k * dt` for `k = 0..M`; the last Euler update lands at the
/// horizon and its result is `terminal`. Full per-step states and drifts are
/// kept only when the run asked for them.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub iteration: usize,
    pub dt: f64,
    pub times: Vec<f64>,
    pub initial: ParticleCloud,
    pub terminal: ParticleCloud,
    /// `states[k]` is the cloud at `times[k]`.
    pub states: Option<Vec<ParticleCloud>>,
    /// `drifts[k][i]` is the drift applied to particle `i` at `times[k]`.
    pub drifts: Option<Vec<ParticleCloud>>,
    /// Per particle, `sum_k |theta_k|^2 dt`.
    pub control_energy: Vec<f64>,
    pub max_drift_norm: f64,
    /// Per step, pair distances clamped by singular kernels (measure runs).
    pub clamped_pairs: Vec<usize>,
    pub seed: RngStream,
}

impl TrajectoryRecord {
    pub fn particles(&self) -> usize {
        self.initial.len()
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.times.len() as f64
    }

    /// State of `particle` at grid index `k` (`k == times.len()` is the terminal state).
    pub fn state(&self, particle: usize, k: usize) -> Option<PointVec> {
        if k == self.times.len() {
            return Some(PointVec::from_vec_unchecked(self.terminal.point(particle).to_vec()));
        }
        if k == 0 {
            return Some(PointVec::from_vec_unchecked(self.initial.point(particle).to_vec()));
        }
        self.states
            .as_ref()
            .map(|s| PointVec::from_vec_unchecked(s[k].point(particle).to_vec()))
    }

    /// Cloud at the grid time closest to `t` (the terminal cloud for `t >= T`).
    pub fn snapshot(&self, t: f64) -> Option<&ParticleCloud> {
        let k = (t / self.dt).round().max(0.0) as usize;
        if k >= self.times.len() {
            return Some(&self.terminal);
        }
        if k == 0 {
            return Some(&self.initial);
        }
        self.states.as_ref().map(|s| &s[k])
    }
}

/// Serializable per-iteration summary.
#[derive(Clone, Debug, Serialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub terminal_mean: Vec<f64>,
    pub max_drift_norm: f64,
    pub mean_control_energy: f64,
    pub clamped_pairs: usize,
}

impl From<&TrajectoryRecord> for IterationSummary {
    fn from(r: &TrajectoryRecord) -> Self {
        Self {
            iteration: r.iteration,
            terminal_mean: r.terminal.mean().into_inner(),
            max_drift_norm: r.max_drift_norm,
            mean_control_energy: r.control_energy.iter().sum::<f64>() / r.control_energy.len() as f64,
            clamped_pairs: r.clamped_pairs.iter().sum(),
        }
    }
}
