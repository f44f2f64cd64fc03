//! Gaussian-process regression over sets of points.
//!
//! The covariance between two layouts is the mean RBF kernel over all
//! cross pairs of turbines. Observation noise enters once, on the diagonal of
//! the set covariance. Hyperparameters are chosen by maximising the Gaussian
//! log marginal likelihood with differential evolution.

pub mod de;
mod kernel;
mod model;

pub use de::DeConfig;
pub use kernel::{
    base_kernel, covariance_matrix, cross_covariance, log_marginal_likelihood, set_kernel,
    Hyperparams, KernelProfile, Lattice,
};
pub use model::{
    fit, FitOptions, HyperparamBounds, ModelSnapshot, Prediction, SetDataset, SetGpModel,
};
