//! Global optimization by simulating regularized stochastic-control particle
//! dynamics, over R^d and over probability measures.
//!
//! The feedback drift of every particle is a softmin (Gibbs) weighted
//! average of Gaussian look-ahead samples, so only objective evaluations are
//! needed. [`euclidean_solver`] drives independent particles on R^d with
//! mean-coupled restarts; [`measure_solver`] drives an interacting system
//! whose empirical measure approximates a minimizer of a functional on
//! measures. [`value_estimation`] and [`harness`] measure how the value
//! error scales with the regularization strength and the particle count.

pub mod cli;
pub mod error;
pub mod euclidean_solver;
pub mod exec;
pub mod harness;
pub mod measure_solver;
pub mod numerics;
pub mod objectives;
pub mod rng;
pub mod trajectory;
pub mod types;
pub mod value_estimation;

pub use error::{Error, Result};
pub use exec::Exec;
pub use numerics::{linear_fit, log_mean_exp, softmin_weights, LinearFit};
pub use objectives::{MeasureObjectiveSpec, ObjectiveSpec, Problem};
pub use rng::RngStream;
pub use trajectory::TrajectoryRecord;
pub use types::{InitialCondition, MeasureEstimator, ParticleCloud, PointVec, RunConfig};
