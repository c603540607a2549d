//! Benchmark objective catalogue and the string-id problem registry.

pub mod euclidean;
pub mod measure;

pub use euclidean::{ackley, yang4, KnownMinimizer, ObjectiveSpec, PointFn};
pub use measure::{
    empirical_functional, hula_hoop_potential, MeasureKind, MeasureObjectiveSpec, PairKernel,
    MIN_PAIR_DISTANCE,
};

use crate::error::{Error, Result};

/// Registered problem ids. `constant` (G = 1) is a smoke-test problem.
pub const PROBLEM_IDS: [&str; 6] = ["yang4", "ackley", "newtonian2d", "spring", "hulahoop", "constant"];

/// Value of the registered `constant` problem.
pub const CONSTANT_PROBLEM_VALUE: f64 = 1.0;

#[derive(Clone, Debug)]
pub enum Problem {
    Euclidean(ObjectiveSpec),
    Measure(MeasureObjectiveSpec),
}

impl Problem {
    pub fn id(&self) -> &str {
        match self {
            Problem::Euclidean(s) => &s.id,
            Problem::Measure(s) => &s.id,
        }
    }

    pub fn known_min_value(&self) -> Option<f64> {
        match self {
            Problem::Euclidean(s) => s.known_min_value,
            Problem::Measure(s) => s.known_min_value,
        }
    }

    pub fn euclidean(&self) -> Result<&ObjectiveSpec> {
        match self {
            Problem::Euclidean(s) => Ok(s),
            Problem::Measure(s) => Err(Error::WrongProblemKind(s.id.clone(), "euclidean")),
        }
    }

    pub fn measure(&self) -> Result<&MeasureObjectiveSpec> {
        match self {
            Problem::Measure(s) => Ok(s),
            Problem::Euclidean(s) => Err(Error::WrongProblemKind(s.id.clone(), "measure")),
        }
    }
}

/// Looks up a registered problem for the given dimension.
pub fn lookup(id: &str, dim: usize) -> Result<Problem> {
    let problem = match id {
        "yang4" => Problem::Euclidean(ObjectiveSpec::yang4()),
        "ackley" => Problem::Euclidean(ObjectiveSpec::ackley()),
        "constant" => Problem::Euclidean(ObjectiveSpec::constant(CONSTANT_PROBLEM_VALUE)),
        "newtonian2d" => Problem::Measure(MeasureObjectiveSpec::newtonian_energy(dim)?),
        "spring" => Problem::Measure(MeasureObjectiveSpec::spring_energy(dim)?),
        "hulahoop" => Problem::Measure(MeasureObjectiveSpec::double_hula_hoop(dim)?),
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    if let Problem::Euclidean(s) = &problem {
        if !s.accepts_dim(dim) {
            return Err(Error::Dimension {
                expected: s.dim.unwrap_or(1),
                got: dim,
            });
        }
    }
    Ok(problem)
}
