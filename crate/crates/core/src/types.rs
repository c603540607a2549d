//! Points, particle clouds and run configuration.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng::{Purpose, RngStream};

/// A point in R^d with finite coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PointVec(Vec<f64>);

impl PointVec {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Empty("point"));
        }
        if let Some((index, &value)) = coords.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim.max(1)])
    }

    pub fn splat(dim: usize, value: f64) -> Self {
        Self(vec![value; dim.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Only for coordinates produced by finite arithmetic on finite inputs.
    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|v| v.is_finite()));
        Self(coords)
    }
}

impl Deref for PointVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl<'de> Deserialize<'de> for PointVec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        PointVec::new(v).map_err(serde::de::Error::custom)
    }
}

/// N points of a common dimension, stored row-major; doubles as the
/// empirical measure (1/N) sum delta_{x_i}.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl ParticleCloud {
    pub fn new(points: &[PointVec]) -> Result<Self> {
        let first = points.first().ok_or(Error::Empty("particle cloud"))?;
        let dim = first.dim();
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: p.dim(),
                });
            }
            coords.extend_from_slice(p);
        }
        Ok(Self { dim, coords })
    }

    /// Builds a cloud from row-major coordinates.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.is_empty() {
            return Err(Error::Empty("particle cloud"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::LengthMismatch(coords.len(), dim));
        }
        if let Some((index, &value)) = coords.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self { dim, coords })
    }

    pub(crate) fn from_flat_unchecked(dim: usize, coords: Vec<f64>) -> Self {
        debug_assert!(coords.len() % dim == 0 && !coords.is_empty());
        Self { dim, coords }
    }

    pub fn filled(n: usize, point: &[f64]) -> Self {
        let mut coords = Vec::with_capacity(n * point.len());
        for _ in 0..n {
            coords.extend_from_slice(point);
        }
        Self {
            dim: point.len(),
            coords,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn to_points(&self) -> Vec<PointVec> {
        self.iter()
            .map(|p| PointVec::from_vec_unchecked(p.to_vec()))
            .collect()
    }

    pub fn mean(&self) -> PointVec {
        let n = self.len() as f64;
        let mut m = vec![0.0; self.dim];
        for p in self.iter() {
            for (acc, v) in m.iter_mut().zip(p) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= n);
        PointVec::from_vec_unchecked(m)
    }

    /// Reorders particles: `result[k] = self[perm[k]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(self.coords.len());
        for &k in perm {
            coords.extend_from_slice(self.point(k));
        }
        Self {
            dim: self.dim,
            coords,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|v| v.is_finite())
    }
}

/// How particles are placed at the start of the first outer iteration.
///
/// Text grammar: `fixed:<v1,v2,...>`, `fixed-scalar:<v>` (broadcast to all
/// coordinates), `normal:<mean>,<std>`.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    Fixed(Vec<f64>),
    FixedScalar(f64),
    Normal { mean: f64, std: f64 },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::FixedScalar(0.0)
    }
}

impl InitialCondition {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::config("init", m));
        match self {
            InitialCondition::Fixed(v) if v.len() != dim => bad(&format!(
                "fixed point has {} coordinates, dim is {dim}",
                v.len()
            )),
            InitialCondition::Fixed(v) if v.iter().any(|x| !x.is_finite()) => {
                bad("coordinates must be finite")
            }
            InitialCondition::FixedScalar(v) if !v.is_finite() => bad("value must be finite"),
            InitialCondition::Normal { mean, std } if !mean.is_finite() || !(*std >= 0.0) || !std.is_finite() => {
                bad("normal init needs finite mean and std >= 0")
            }
            _ => Ok(()),
        }
    }

    /// Samples the initial cloud. Random initial conditions use one stream per particle.
    pub fn sample(&self, n: usize, dim: usize, stream: RngStream) -> ParticleCloud {
        match self {
            InitialCondition::Fixed(v) => ParticleCloud::filled(n, v),
            InitialCondition::FixedScalar(v) => ParticleCloud::filled(n, &vec![*v; dim]),
            InitialCondition::Normal { mean, std } => {
                let mut coords = Vec::with_capacity(n * dim);
                for i in 0..n {
                    let mut rng = stream.at(Purpose::Init, 0, 0, i).rng();
                    for _ in 0..dim {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        coords.push(mean + std * z);
                    }
                }
                ParticleCloud::from_flat_unchecked(dim, coords)
            }
        }
    }
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}

impl FromStr for InitialCondition {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("`{s}`: expected fixed:, fixed-scalar: or normal:"))?;
        match kind {
            "fixed" => Ok(InitialCondition::Fixed(parse_list(rest)?)),
            "fixed-scalar" => rest
                .trim()
                .parse()
                .map(InitialCondition::FixedScalar)
                .map_err(|e| format!("`{rest}`: {e}")),
            "normal" => match parse_list(rest)?.as_slice() {
                [mean, std] => Ok(InitialCondition::Normal {
                    mean: *mean,
                    std: *std,
                }),
                _ => Err("normal init takes <mean>,<std>".into()),
            },
            other => Err(format!("unknown init kind `{other}`")),
        }
    }
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `{:?}` on f64 is the shortest round-tripping form.
        match self {
            InitialCondition::Fixed(v) => {
                let parts: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
                write!(f, "fixed:{}", parts.join(","))
            }
            InitialCondition::FixedScalar(v) => write!(f, "fixed-scalar:{v:?}"),
            InitialCondition::Normal { mean, std } => write!(f, "normal:{mean:?},{std:?}"),
        }
    }
}

impl Serialize for InitialCondition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InitialCondition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Drift estimator used by the measure solver.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureEstimator {
    /// Joint-sample for separable functionals, frozen-context otherwise.
    #[default]
    Auto,
    FrozenContext,
    JointSeparable,
}

impl FromStr for MeasureEstimator {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "auto" => Ok(Self::Auto),
            "frozen_context" | "frozen-context" => Ok(Self::FrozenContext),
            "joint_separable" | "joint-separable" => Ok(Self::JointSeparable),
            _ => Err(format!("unknown estimator `{s}`")),
        }
    }
}

/// All solver parameters. Field names are the JSON config keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: String,
    pub dim: usize,
    pub particles: usize,
    pub time_steps: usize,
    pub horizon: f64,
    pub epsilon: f64,
    pub mc_samples: usize,
    pub outer_iterations: usize,
    pub coupling: f64,
    pub seed: u64,
    pub init: InitialCondition,
    /// Reuse one sample batch per outer iteration across steps and particles.
    pub shared_mc_batch: bool,
    /// Draw drift samples as (xi, -xi) pairs.
    pub antithetic: bool,
    pub estimator: MeasureEstimator,
    /// Keep every intermediate state and drift in the trajectory record.
    pub record_trajectories: bool,
    pub execution: Exec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "yang4".into(),
            dim: 1,
            particles: 20,
            time_steps: 1000,
            horizon: 1.0,
            epsilon: 1e-300,
            mc_samples: 800,
            outer_iterations: 1,
            coupling: 0.5,
            seed: 0,
            init: InitialCondition::default(),
            shared_mc_batch: false,
            antithetic: false,
            estimator: MeasureEstimator::Auto,
            record_trajectories: false,
            execution: Exec::Parallel,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(key, format!("{key} must be positive")))
            }
        };
        positive("dim", self.dim >= 1)?;
        positive("particles", self.particles >= 1)?;
        positive("time_steps", self.time_steps >= 1)?;
        positive("mc_samples", self.mc_samples >= 1)?;
        positive("outer_iterations", self.outer_iterations >= 1)?;
        positive("horizon", self.horizon.is_finite() && self.horizon > 0.0)?;
        positive("epsilon", self.epsilon.is_finite() && self.epsilon > 0.0)?;
        if !(0.0..=1.0).contains(&self.coupling) {
            return Err(Error::config("coupling", "coupling must lie in [0, 1]"));
        }
        if self.problem.is_empty() {
            return Err(Error::config("problem", "problem id must be set"));
        }
        if self.antithetic && self.mc_samples % 2 != 0 {
            return Err(Error::config(
                "mc_samples",
                "antithetic sampling needs an even sample count",
            ));
        }
        self.init.validate(self.dim)
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.time_steps as f64
    }

    /// Grid time `t_k = k * dt`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Remaining time `T - t_k`; at least `dt` for `k < M`.
    pub fn remaining(&self, k: usize) -> f64 {
        (self.time_steps - k) as f64 * self.dt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_rejects_non_finite() {
        assert!(PointVec::new(vec![1.0, f64::NAN]).is_err());
        assert!(PointVec::new(vec![]).is_err());
        assert!(PointVec::new(vec![1.0, -2.0]).is_ok());
    }

    #[test]
    fn cloud_rejects_mixed_dimensions() {
        let a = PointVec::new(vec![0.0, 1.0]).unwrap();
        let b = PointVec::new(vec![0.0]).unwrap();
        assert!(ParticleCloud::new(&[a.clone(), b]).is_err());
        let c = ParticleCloud::new(&[a.clone(), a]).unwrap();
        assert_eq!((c.len(), c.dim()), (2, 2));
    }

    #[test]
    fn init_grammar() {
        assert_eq!(
            "fixed:1,2.5".parse::<InitialCondition>().unwrap(),
            InitialCondition::Fixed(vec![1.0, 2.5])
        );
        assert_eq!(
            "fixed-scalar:5".parse::<InitialCondition>().unwrap(),
            InitialCondition::FixedScalar(5.0)
        );
        assert_eq!(
            "normal:0,1".parse::<InitialCondition>().unwrap(),
            InitialCondition::Normal {
                mean: 0.0,
                std: 1.0
            }
        );
        assert!("normal:0".parse::<InitialCondition>().is_err());
        assert!("gauss:0,1".parse::<InitialCondition>().is_err());
        for s in ["fixed:0.1,-3", "fixed-scalar:1e-300", "normal:0,1"] {
            let ic: InitialCondition = s.parse().unwrap();
            assert_eq!(ic.to_string().parse::<InitialCondition>().unwrap(), ic);
        }
    }

    #[test]
    fn time_grid_ends_at_horizon() {
        let cfg = RunConfig {
            time_steps: 4,
            horizon: 2.0,
            ..RunConfig::default()
        };
        assert_eq!(cfg.dt(), 0.5);
        assert_eq!(cfg.time(3), 1.5);
        assert_eq!(cfg.remaining(3), 0.5);
        assert_eq!(cfg.remaining(0), 2.0);
    }

    #[test]
    fn validation_names_key() {
        let cfg = RunConfig {
            epsilon: 0.0,
            ..RunConfig::default()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("epsilon must be positive"), "{msg}");
        let cfg = RunConfig {
            init: InitialCondition::Fixed(vec![1.0, 2.0]),
            ..RunConfig::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("init"));
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let err = serde_json::from_str::<RunConfig>(r#"{"epsilonn": 1.0}"#).unwrap_err();
        assert!(err.to_string().contains("epsilonn"));
        let cfg: RunConfig =
            serde_json::from_str(r#"{"epsilon": 1e-300, "init": "normal:0,1"}"#).unwrap();
        assert_eq!(cfg.epsilon, 1e-300);
        assert_eq!(cfg.particles, 20);
    }
}
