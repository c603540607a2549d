//! Objectives on R^d.

use std::f64::consts::{E, PI};
use std::fmt;
use std::sync::Arc;

use crate::types::PointVec;

pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Xin-She Yang function no. 4. Global minimum -1 at the origin.
pub fn yang4(x: &[f64]) -> f64 {
    let (mut sin2, mut sq, mut sin2_root) = (0.0, 0.0, 0.0);
    for &v in x {
        sin2 += v.sin().powi(2);
        sq += v * v;
        sin2_root += v.abs().sqrt().sin().powi(2);
    }
    (sin2 - (-sq).exp()) * (-sin2_root).exp()
}

/// Ackley function. Global minimum 0 at the origin.
pub fn ackley(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let (mut sq, mut cos) = (0.0, 0.0);
    for &v in x {
        sq += v * v;
        cos += (2.0 * PI * v).cos();
    }
    -20.0 * (-0.2 * (sq / d).sqrt()).exp() - (cos / d).exp() + 20.0 + E
}

#[derive(Clone, Debug, PartialEq)]
pub enum KnownMinimizer {
    Origin,
    Point(PointVec),
}

/// A Euclidean objective `G: R^d -> R` with optional known optimum.
#[derive(Clone)]
pub struct ObjectiveSpec {
    pub id: String,
    /// `None` means any dimension is accepted.
    pub dim: Option<usize>,
    eval: PointFn,
    pub known_min_value: Option<f64>,
    pub known_minimizer: Option<KnownMinimizer>,
}

impl fmt::Debug for ObjectiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObjectiveSpec")
            .field("id", &self.id)
            .field("dim", &self.dim)
            .field("known_min_value", &self.known_min_value)
            .finish_non_exhaustive()
    }
}

impl ObjectiveSpec {
    pub fn new(
        id: impl Into<String>,
        dim: Option<usize>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            dim,
            eval: Arc::new(eval),
            known_min_value: None,
            known_minimizer: None,
        }
    }

    pub fn with_known_min(mut self, value: f64, minimizer: Option<KnownMinimizer>) -> Self {
        self.known_min_value = Some(value);
        self.known_minimizer = minimizer;
        self
    }

    pub fn yang4() -> Self {
        Self::new("yang4", None, yang4).with_known_min(-1.0, Some(KnownMinimizer::Origin))
    }

    pub fn ackley() -> Self {
        Self::new("ackley", None, ackley).with_known_min(0.0, Some(KnownMinimizer::Origin))
    }

    pub fn constant(value: f64) -> Self {
        Self::new("constant", None, move |_| value).with_known_min(value, Some(KnownMinimizer::Origin))
    }

    #[inline]
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn known_minimizer(&self, dim: usize) -> Option<PointVec> {
        match &self.known_minimizer {
            Some(KnownMinimizer::Origin) => Some(PointVec::zeros(dim)),
            Some(KnownMinimizer::Point(p)) => Some(p.clone()),
            None => None,
        }
    }

    /// `G + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let inner = self.eval.clone();
        Self {
            id: format!("{}+{c}", self.id),
            dim: self.dim,
            eval: Arc::new(move |x| inner(x) + c),
            known_min_value: self.known_min_value.map(|v| v + c),
            known_minimizer: self.known_minimizer.clone(),
        }
    }

    pub fn accepts_dim(&self, dim: usize) -> bool {
        dim >= 1 && self.dim.is_none_or(|d| d == dim)
    }
}
