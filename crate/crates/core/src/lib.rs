//! Deterministic Local SGD simulation and convergence-bound checking on
//! convex finite-sum problems.
//!
//! Everything numeric is generic over [`Scalar`]; the aliases below fix it to
//! `f64` (the default everywhere) or `f32`. Bound formulas in [`theory`] are
//! plain `f64`.

pub mod dataio;
pub mod numkit;
pub mod objective;
pub mod scalar;
pub mod simulator;
pub mod theory;

pub use scalar::Scalar;

use thiserror::Error;

pub type DenseVector64 = numkit::DenseVector<f64>;
pub type DenseVector32 = numkit::DenseVector<f32>;
pub type SparseVector64 = numkit::SparseVector<f64>;
pub type Dataset64 = dataio::Dataset<f64>;
pub type Dataset32 = dataio::Dataset<f32>;
pub type Problem64 = objective::Problem<f64>;
pub type Problem32 = objective::Problem<f32>;
pub type QuadraticProblem64 = objective::QuadraticProblem<f64>;
pub type ReferenceSolution64 = objective::ReferenceSolution<f64>;
pub type VarianceReport64 = objective::VarianceReport<f64>;
pub type RunConfig64 = simulator::RunConfig<f64>;
pub type RunConfig32 = simulator::RunConfig<f32>;
pub type Trace64 = simulator::Trace<f64>;
pub type Trace32 = simulator::Trace<f32>;

/// Any error raised by this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Num(#[from] numkit::NumError),
    #[error(transparent)]
    Data(#[from] dataio::DataError),
    #[error(transparent)]
    Objective(#[from] objective::ObjectiveError),
    #[error(transparent)]
    Sim(#[from] simulator::SimError),
    #[error(transparent)]
    Theory(#[from] theory::TheoryError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
