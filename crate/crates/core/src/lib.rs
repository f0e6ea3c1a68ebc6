//! Gaussian RBF surrogates fitted to function values (F), gradients (G) or both
//! (FG), and an experiment harness that fits them to mini-batch MSE surfaces of a
//! quadratic regression problem.
//!
//! Gradient-only surrogates ignore the batch-dependent bias in sampled loss
//! values, which makes them a simple way to fuse observations of mixed fidelity.

pub mod analysis;
pub mod artifacts;
pub mod config;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod lstsq;
pub mod problem;
pub mod rng;
pub mod surrogate;

pub use analysis::{SurfaceGrid, SurfaceReport, SurfaceSource};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use kernel::{KernelParams, Matrix};
pub use problem::{Dataset1D, DatasetSpec, FullBatchOracle, GridSpec, MiniBatchPolicy};
pub use surrogate::{Fit, FitMode, FitRecipe, LossObservation, Surrogate};
