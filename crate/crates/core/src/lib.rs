//! Richardson extrapolation for iterative optimization, Nesterov smoothing and
//! kernel ridge regression, with the slope-fitting instruments used to check
//! the resulting convergence rates.

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod extrapolation;
pub mod problems;
pub mod ridge;
pub mod smoothing;
pub mod solvers;

pub use error::{Error, Result};
pub use extrapolation::{combine, richardson_weights, spectral_filter, RichardsonWeights};
pub use problems::{LinearMinimizationOracle, Objective};
pub use solvers::{CheckpointSchedule, SolverTrace, StepRule};
