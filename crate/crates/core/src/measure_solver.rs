//! Interacting N-particle optimizer over probability measures.
//!
//! The N-particle system minimizes `U(x) = N G(mu^N_x)` plus the quadratic
//! control cost. Two drift estimators are available:
//!
//! * frozen context: per step the cloud is projected once to
//!   `X~_k = X_k + sqrt(tau) zeta_k`; particle `i` scores its own look-ahead
//!   samples by `N G` of the projected cloud with atom `i` replaced;
//! * joint separable: every Monte Carlo draw perturbs all particles at once
//!   and, for separable functionals, particle `i`'s score keeps only the
//!   terms of `N G` that involve it.
//!
//! Outer iterations restart from the terminal cloud without coupling.

use crate::error::{Error, Result};
use crate::euclidean_solver::{check_cloud, default_keys, draw_batch, weighted_displacement, euler_step, ParticleStep, Recorder};
use crate::numerics::softmin_weights_into;
use crate::objectives::measure::Moments;
use crate::objectives::MeasureObjectiveSpec;
use crate::rng::{fill_normal, Purpose, RngStream};
use crate::trajectory::TrajectoryRecord;
use crate::types::{MeasureEstimator, ParticleCloud, PointVec, RunConfig};

/// The projected cloud used as frozen context during one step.
#[derive(Clone, Debug)]
pub struct ContextProjection {
    pub projected: ParticleCloud,
    pub tau: f64,
    pub source_step: usize,
    moments: Moments,
}

impl ContextProjection {
    pub fn new(projected: ParticleCloud, tau: f64, source_step: usize) -> Self {
        let moments = Moments::of(projected.flat(), projected.dim());
        Self {
            projected,
            tau,
            source_step,
            moments,
        }
    }

    /// Projects `cloud` forward by `sqrt(tau) zeta`, one stream per particle key.
    fn project(cloud: &ParticleCloud, tau: f64, k: usize, stream: RngStream, iteration: usize, keys: &[u64]) -> Self {
        let dim = cloud.dim();
        let root = tau.sqrt();
        let mut coords = cloud.flat().to_vec();
        let mut z = vec![0.0; dim];
        for (i, p) in coords.chunks_exact_mut(dim).enumerate() {
            fill_normal(&mut stream.at(Purpose::Context, iteration, k, keys[i] as usize).rng(), &mut z);
            for (v, zv) in p.iter_mut().zip(&z) {
                *v += root * zv;
            }
        }
        Self::new(ParticleCloud::from_flat_unchecked(dim, coords), tau, k)
    }
}

fn resolve_estimator(spec: &MeasureObjectiveSpec, choice: MeasureEstimator) -> Result<MeasureEstimator> {
    match choice {
        MeasureEstimator::Auto if spec.is_separable() => Ok(MeasureEstimator::JointSeparable),
        MeasureEstimator::Auto => Ok(MeasureEstimator::FrozenContext),
        MeasureEstimator::JointSeparable if !spec.is_separable() => Err(Error::NotSeparable),
        other => Ok(other),
    }
}

/// Score `N G(context with atom i replaced by y)`, up to a constant in `y`.
fn frozen_score(spec: &MeasureObjectiveSpec, ctx: &ContextProjection, i: usize, y: &[f64], clamps: &mut usize) -> f64 {
    if spec.is_separable() {
        return spec.particle_score(y, ctx.projected.flat(), i, Some(&ctx.moments), clamps);
    }
    let mut cloud = ctx.projected.clone();
    cloud.point_mut(i).copy_from_slice(y);
    let (v, c) = spec.evaluate_unchecked(&cloud);
    *clamps += c;
    cloud.len() as f64 * v
}

fn frozen_drift(
    spec: &MeasureObjectiveSpec,
    x: &[f64],
    i: usize,
    ctx: &ContextProjection,
    epsilon: f64,
    noise: &[f64],
    antithetic: bool,
    clamps: &mut usize,
) -> Result<Vec<f64>> {
    let d = x.len();
    let tau = ctx.tau;
    let root = tau.sqrt();
    let samples = noise.len() / d;
    let mut values = Vec::with_capacity(samples);
    let mut y = vec![0.0; d];
    for j in 0..samples {
        for ((yv, xv), z) in y.iter_mut().zip(x).zip(&noise[j * d..(j + 1) * d]) {
            *yv = xv + root * z;
        }
        let v = frozen_score(spec, ctx, i, &y, clamps);
        if !v.is_finite() {
            return Err(Error::InvalidSample { sample: j, value: v });
        }
        values.push(v);
    }
    let mut weights = Vec::new();
    softmin_weights_into(&values, epsilon, &mut weights)?;
    let mut out = vec![0.0; d];
    weighted_displacement(noise, &weights, tau, antithetic, &mut out);
    Ok(out)
}

/// Frozen-context drift for particle `i` of `cloud`.
pub fn estimate_drift_frozen(
    spec: &MeasureObjectiveSpec,
    cloud: &ParticleCloud,
    i: usize,
    ctx: &ContextProjection,
    epsilon: f64,
    samples: usize,
    stream: RngStream,
) -> Result<PointVec> {
    check_measure_cloud(spec, cloud)?;
    if ctx.projected.len() != cloud.len() || ctx.projected.dim() != cloud.dim() {
        return Err(Error::LengthMismatch(ctx.projected.len(), cloud.len()));
    }
    let mut noise = Vec::new();
    draw_batch(stream, samples, cloud.dim(), false, &mut noise);
    let mut clamps = 0;
    frozen_drift(spec, cloud.point(i), i, ctx, epsilon, &noise, false, &mut clamps).map(PointVec::from_vec_unchecked)
}

/// Joint noise batch for one step: `S` draws of per-particle noise.
///
/// `noise[j]` is particle `j`'s `S x d` block, so particle `j`'s draws come
/// from its own stream and do not depend on the other particles.
#[derive(Clone, Debug)]
pub struct JointSamples {
    pub dim: usize,
    pub samples: usize,
    pub noise: Vec<Vec<f64>>,
}

impl JointSamples {
    pub fn draw(n: usize, dim: usize, samples: usize, antithetic: bool, stream_of: impl Fn(usize) -> RngStream) -> Self {
        let noise = (0..n)
            .map(|j| {
                let mut b = Vec::new();
                draw_batch(stream_of(j), samples, dim, antithetic, &mut b);
                b
            })
            .collect();
        Self { dim, samples, noise }
    }

    /// Perturbed clouds `Y_{., l}`, one flat `N x d` block per sample `l`.
    fn perturbed(&self, cloud: &ParticleCloud, tau: f64) -> Vec<Vec<f64>> {
        let (d, root) = (self.dim, tau.sqrt());
        (0..self.samples)
            .map(|l| {
                let mut y = Vec::with_capacity(cloud.flat().len());
                for (j, x) in cloud.iter().enumerate() {
                    let z = &self.noise[j][l * d..(l + 1) * d];
                    y.extend(x.iter().zip(z).map(|(x, z)| x + root * z));
                }
                y
            })
            .collect()
    }
}

struct JointStep {
    ys: Vec<Vec<f64>>,
    moments: Vec<Moments>,
}

impl JointStep {
    fn new(cloud: &ParticleCloud, joint: &JointSamples, tau: f64) -> Self {
        let ys = joint.perturbed(cloud, tau);
        let moments = ys.iter().map(|y| Moments::of(y, joint.dim)).collect();
        Self { ys, moments }
    }
}

fn joint_drift(
    spec: &MeasureObjectiveSpec,
    i: usize,
    step: &JointStep,
    joint: &JointSamples,
    tau: f64,
    epsilon: f64,
    antithetic: bool,
    clamps: &mut usize,
) -> Result<Vec<f64>> {
    let d = joint.dim;
    let mut values = Vec::with_capacity(joint.samples);
    for (l, (y, m)) in step.ys.iter().zip(&step.moments).enumerate() {
        let yi = &y[i * d..(i + 1) * d];
        let v = spec.particle_score(yi, y, i, Some(m), clamps);
        if !v.is_finite() {
            return Err(Error::InvalidSample { sample: l, value: v });
        }
        values.push(v);
    }
    let mut weights = Vec::new();
    softmin_weights_into(&values, epsilon, &mut weights)?;
    let mut out = vec![0.0; d];
    weighted_displacement(&joint.noise[i], &weights, tau, antithetic, &mut out);
    Ok(out)
}

/// Joint-sample drift for particle `i` of a separable functional.
pub fn estimate_drift_joint_separable(
    spec: &MeasureObjectiveSpec,
    cloud: &ParticleCloud,
    i: usize,
    joint: &JointSamples,
    tau: f64,
    epsilon: f64,
) -> Result<PointVec> {
    if !spec.is_separable() {
        return Err(Error::NotSeparable);
    }
    check_measure_cloud(spec, cloud)?;
    if joint.noise.len() != cloud.len() {
        return Err(Error::LengthMismatch(joint.noise.len(), cloud.len()));
    }
    let step = JointStep::new(cloud, joint, tau);
    let mut clamps = 0;
    joint_drift(spec, i, &step, joint, tau, epsilon, false, &mut clamps).map(PointVec::from_vec_unchecked)
}

fn check_measure_cloud(spec: &MeasureObjectiveSpec, cloud: &ParticleCloud) -> Result<()> {
    if cloud.dim() != spec.dim {
        return Err(Error::Dimension {
            expected: spec.dim,
            got: cloud.dim(),
        });
    }
    Ok(())
}

/// One pass of the interacting dynamics over `[0, T]`.
pub fn run_measure_iteration(
    spec: &MeasureObjectiveSpec,
    init: &ParticleCloud,
    cfg: &RunConfig,
    stream: RngStream,
    iteration: usize,
    keys: &[u64],
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    check_cloud(init, cfg)?;
    check_measure_cloud(spec, init)?;
    if keys.len() != init.len() {
        return Err(Error::LengthMismatch(keys.len(), init.len()));
    }
    let estimator = resolve_estimator(spec, cfg.estimator)?;
    let (dim, dt) = (cfg.dim, cfg.dt());
    let mut recorder = Recorder::new(init, cfg, iteration, stream);
    let mut cloud = init.clone();
    for k in 0..cfg.time_steps {
        let tau = cfg.remaining(k);
        let euler = |i: usize, drift: Vec<f64>, clamps: usize| {
            let next = euler_step(cloud.point(i), &drift, dt, stream.at(Purpose::EulerNoise, iteration, k, keys[i] as usize)).into_inner();
            ParticleStep { next, drift, clamps }
        };
        let steps = match estimator {
            MeasureEstimator::FrozenContext | MeasureEstimator::Auto => {
                let ctx = ContextProjection::project(&cloud, tau, k, stream, iteration, keys);
                cfg.execution.try_map(cloud.len(), |i| -> Result<ParticleStep> {
                    let mut noise = Vec::new();
                    draw_batch(stream.at(Purpose::DriftSamples, iteration, k, keys[i] as usize), cfg.mc_samples, dim, cfg.antithetic, &mut noise);
                    let mut clamps = 0;
                    let drift = frozen_drift(spec, cloud.point(i), i, &ctx, cfg.epsilon, &noise, cfg.antithetic, &mut clamps)?;
                    Ok(euler(i, drift, clamps))
                })?
            }
            MeasureEstimator::JointSeparable => {
                // Particle j's joint draws use the same stream a decoupled
                // Euclidean run would use for its look-ahead samples.
                let joint = JointSamples {
                    dim,
                    samples: cfg.mc_samples,
                    noise: cfg.execution.map(cloud.len(), |j| {
                        let mut b = Vec::new();
                        draw_batch(stream.at(Purpose::DriftSamples, iteration, k, keys[j] as usize), cfg.mc_samples, dim, cfg.antithetic, &mut b);
                        b
                    }),
                };
                let step = JointStep::new(&cloud, &joint, tau);
                cfg.execution.try_map(cloud.len(), |i| -> Result<ParticleStep> {
                    let mut clamps = 0;
                    let drift = joint_drift(spec, i, &step, &joint, tau, cfg.epsilon, cfg.antithetic, &mut clamps)?;
                    Ok(euler(i, drift, clamps))
                })?
            }
        };
        cloud = recorder.push(cloud, steps);
    }
    Ok(recorder.finish(cloud))
}

#[derive(Clone, Debug)]
pub struct MeasureSolution {
    pub final_cloud: ParticleCloud,
    pub history: Vec<TrajectoryRecord>,
}

/// Runs `L` outer iterations, recycling the terminal cloud each time.
pub fn solve_measure(spec: &MeasureObjectiveSpec, cfg: &RunConfig) -> Result<MeasureSolution> {
    cfg.validate()?;
    let init = cfg.init.sample(cfg.particles, cfg.dim, RngStream::new(cfg.seed));
    solve_measure_from(spec, &init, cfg)
}

/// [`solve_measure`] from an explicit initial cloud.
pub fn solve_measure_from(spec: &MeasureObjectiveSpec, init: &ParticleCloud, cfg: &RunConfig) -> Result<MeasureSolution> {
    solve_measure_keyed(spec, init, cfg, &default_keys(init.len()))
}

/// [`solve_measure_from`] with explicit per-particle stream keys.
pub fn solve_measure_keyed(spec: &MeasureObjectiveSpec, init: &ParticleCloud, cfg: &RunConfig, keys: &[u64]) -> Result<MeasureSolution> {
    let stream = RngStream::new(cfg.seed);
    let mut start = init.clone();
    let mut history = Vec::with_capacity(cfg.outer_iterations);
    for l in 0..cfg.outer_iterations {
        let record = run_measure_iteration(spec, &start, cfg, stream, l, keys)?;
        start = record.terminal.clone();
        history.push(record);
    }
    Ok(MeasureSolution {
        final_cloud: start,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euclidean_solver;
    use crate::exec::Exec;
    use crate::objectives::{ObjectiveSpec, PairKernel};
    use crate::types::InitialCondition;
    use std::sync::Arc;

    fn cfg2(n: usize) -> RunConfig {
        RunConfig {
            problem: "test".into(),
            dim: 2,
            particles: n,
            time_steps: 10,
            mc_samples: 12,
            epsilon: 0.05,
            init: InitialCondition::Normal { mean: 0.0, std: 1.0 },
            ..RunConfig::default()
        }
    }

    #[test]
    fn constant_functional_has_uniform_weights() {
        let spec = MeasureObjectiveSpec::constant(2, 4.0);
        let cloud = ParticleCloud::from_flat(2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let ctx = ContextProjection::new(cloud.clone(), 0.5, 0);
        let s = RngStream::new(3);
        let d = estimate_drift_frozen(&spec, &cloud, 0, &ctx, 1e-300, 40, s).unwrap();
        let mut noise = Vec::new();
        draw_batch(s, 40, 2, false, &mut noise);
        let root = 0.5f64.sqrt();
        for c in 0..2 {
            let mean: f64 = (0..40).map(|j| noise[j * 2 + c]).sum::<f64>() / 40.0;
            assert!((d[c] - root * mean / 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_degenerate_selects_argmin() {
        let spec = MeasureObjectiveSpec::newtonian_energy(2).unwrap();
        let cloud = ParticleCloud::from_flat(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.5]).unwrap();
        let ctx = ContextProjection::new(cloud.clone(), 0.3, 0);
        let s = RngStream::new(11);
        let d = estimate_drift_frozen(&spec, &cloud, 0, &ctx, 1e-300, 30, s).unwrap();
        let mut noise = Vec::new();
        draw_batch(s, 30, 2, false, &mut noise);
        let root = 0.3f64.sqrt();
        // oracle: full functional with atom 0 replaced, explicit argmin
        let best = (0..30)
            .map(|j| {
                let mut c = ctx.projected.clone();
                c.point_mut(0).copy_from_slice(&[root * noise[2 * j], root * noise[2 * j + 1]]);
                (j, spec.evaluate(&c).unwrap())
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        assert!((d[0] - root * noise[2 * best] / 0.3).abs() < 1e-12);
        assert!((d[1] - root * noise[2 * best + 1] / 0.3).abs() < 1e-12);
    }

    #[test]
    fn spring_frozen_drift_points_at_partner() {
        let spec = MeasureObjectiveSpec::spring_energy(2).unwrap();
        let cloud = ParticleCloud::from_flat(2, vec![0.0, 0.0, 2.0, 0.0]).unwrap();
        let ctx = ContextProjection::new(cloud.clone(), 1.0, 0);
        let trials = 200;
        let hits = (0..trials)
            .filter(|&t| {
                let d = estimate_drift_frozen(&spec, &cloud, 0, &ctx, 1e-3, 100, RngStream::new(t)).unwrap();
                d[0] * 2.0 > 0.0
            })
            .count();
        assert!(hits as f64 >= 0.95 * trials as f64, "{hits}/{trials}");
    }

    #[test]
    fn joint_requires_separable() {
        let spec = MeasureObjectiveSpec::constant(2, 1.0);
        let cloud = ParticleCloud::filled(2, &[0.0, 0.0]);
        let joint = JointSamples::draw(2, 2, 4, false, |j| RngStream::new(0).child(j as u64));
        let e = estimate_drift_joint_separable(&spec, &cloud, 0, &joint, 1.0, 1.0).unwrap_err();
        assert_eq!(e.to_string(), "joint fast path requires separable functional");
        let cfg = RunConfig { estimator: MeasureEstimator::JointSeparable, ..cfg2(2) };
        assert!(matches!(solve_measure(&spec, &cfg), Err(Error::NotSeparable)));
    }

    #[test]
    fn joint_without_interaction_matches_euclidean_drift() {
        let f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = Arc::new(|x: &[f64]| crate::objectives::yang4(x));
        let spec = MeasureObjectiveSpec::separable("f-only", 2, Some(f), None, None);
        let cloud = ParticleCloud::from_flat(2, vec![0.3, -0.1, 1.0, 2.0, -0.5, 0.5]).unwrap();
        let base = RngStream::new(5);
        let joint = JointSamples::draw(3, 2, 25, false, |j| base.child(j as u64));
        for i in 0..3 {
            let a = estimate_drift_joint_separable(&spec, &cloud, i, &joint, 0.4, 0.01).unwrap();
            let b = euclidean_solver::estimate_drift(&ObjectiveSpec::yang4(), cloud.point(i), 0.4, 0.01, 25, base.child(i as u64)).unwrap();
            assert_eq!(a, b);
        }
    }

    // With all j != i noise zeroed, the i-independent part of N G(Y_l) is
    // constant across samples, so the joint weights equal the weights of the
    // full functional on the perturbed clouds.
    #[test]
    fn joint_scores_match_full_functional_brute_force() {
        for (n, s, seed) in [(2usize, 5usize, 1u64), (3, 8, 2), (4, 6, 3), (4, 8, 4)] {
            let spec = MeasureObjectiveSpec::double_hula_hoop(2).unwrap();
            let base = RngStream::new(seed);
            let init = InitialCondition::Normal { mean: 0.0, std: 1.5 }.sample(n, 2, base);
            let i = n - 1;
            let mut joint = JointSamples::draw(n, 2, s, false, |j| base.child(j as u64 + 100));
            for j in 0..n {
                if j != i {
                    joint.noise[j].iter_mut().for_each(|v| *v = 0.0);
                }
            }
            let tau = 0.6;
            let step = JointStep::new(&init, &joint, tau);
            let mut c = 0;
            let scores: Vec<f64> = (0..s)
                .map(|l| spec.particle_score(&step.ys[l][i * 2..i * 2 + 2], &step.ys[l], i, Some(&step.moments[l]), &mut c))
                .collect();
            let full: Vec<f64> = (0..s)
                .map(|l| n as f64 * spec.evaluate(&ParticleCloud::from_flat(2, step.ys[l].clone()).unwrap()).unwrap())
                .collect();
            let diffs: Vec<f64> = scores.iter().zip(&full).map(|(a, b)| b - a).collect();
            assert!(diffs.iter().all(|d| (d - diffs[0]).abs() < 1e-10), "{diffs:?}");
            let wa = crate::numerics::softmin_weights(&scores, 0.5).unwrap();
            let wb = crate::numerics::softmin_weights(&full, 0.5).unwrap();
            for (a, b) in wa.iter().zip(&wb) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn decoupled_system_matches_euclidean_solver() {
        let f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = Arc::new(|x: &[f64]| crate::objectives::ackley(x));
        let spec = MeasureObjectiveSpec::separable("ackley-measure", 2, Some(f), Some(PairKernel::Radial { quadratic: 0.0, logarithmic: 0.0 }), None);
        let cfg = cfg2(6);
        let a = solve_measure(&spec, &cfg).unwrap();
        let b = euclidean_solver::solve(&ObjectiveSpec::ackley(), &cfg).unwrap();
        assert_eq!(a.final_cloud, b.history[0].terminal);
    }

    #[test]
    fn shift_invariance_is_exact() {
        let spec = MeasureObjectiveSpec::double_hula_hoop(2).unwrap();
        for estimator in [MeasureEstimator::JointSeparable, MeasureEstimator::FrozenContext] {
            let cfg = RunConfig { estimator, ..cfg2(8) };
            let a = solve_measure(&spec, &cfg).unwrap();
            let b = solve_measure(&spec.shifted(3.25), &cfg).unwrap();
            assert_eq!(a.final_cloud, b.final_cloud);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let spec = MeasureObjectiveSpec::newtonian_energy(2).unwrap();
        let cfg = cfg2(7);
        let init = cfg.init.sample(7, 2, RngStream::new(1));
        let perm = [3usize, 0, 6, 5, 1, 2, 4];
        let keys: Vec<u64> = (0..7).collect();
        let pkeys: Vec<u64> = perm.iter().map(|&p| keys[p]).collect();
        for estimator in [MeasureEstimator::JointSeparable, MeasureEstimator::FrozenContext] {
            let cfg = RunConfig { estimator, ..cfg.clone() };
            let a = solve_measure_keyed(&spec, &init, &cfg, &keys).unwrap();
            let b = solve_measure_keyed(&spec, &init.permuted(&perm), &cfg, &pkeys).unwrap();
            let ap = a.final_cloud.permuted(&perm);
            for (u, v) in ap.flat().iter().zip(b.final_cloud.flat()) {
                assert!((u - v).abs() < 1e-9, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn recycles_terminal_cloud() {
        let spec = MeasureObjectiveSpec::spring_energy(2).unwrap();
        let cfg = RunConfig { outer_iterations: 3, ..cfg2(5) };
        let sol = solve_measure(&spec, &cfg).unwrap();
        for l in 1..3 {
            assert_eq!(sol.history[l].initial, sol.history[l - 1].terminal);
        }
        assert_eq!(sol.final_cloud, sol.history[2].terminal);
    }

    #[test]
    fn deterministic_across_execution_modes_and_threads() {
        let spec = MeasureObjectiveSpec::double_hula_hoop(2).unwrap();
        let cfg = cfg2(9);
        let a = solve_measure(&spec, &RunConfig { execution: Exec::Sequential, ..cfg.clone() }).unwrap();
        let b = crate::exec::with_threads(1, || solve_measure(&spec, &cfg).unwrap());
        let c = crate::exec::with_threads(3, || solve_measure(&spec, &cfg).unwrap());
        assert_eq!(a.final_cloud, b.final_cloud);
        assert_eq!(a.final_cloud, c.final_cloud);
    }

    #[test]
    fn general_functional_uses_frozen_context() {
        let var = MeasureObjectiveSpec::general(
            "variance",
            2,
            |c: &ParticleCloud| {
                let m = c.mean();
                c.iter().map(|p| (p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2)).sum::<f64>() / c.len() as f64
            },
            Some(0.0),
        );
        let cfg = RunConfig { time_steps: 40, mc_samples: 40, epsilon: 1e-3, ..cfg2(10) };
        let sol = solve_measure(&var, &cfg).unwrap();
        let before = var.evaluate(&sol.history[0].initial).unwrap();
        let after = var.evaluate(&sol.final_cloud).unwrap();
        assert!(after < before, "{after} !< {before}");
    }
}
