//! Set-based multi-objective Bayesian optimisation of wind-farm layouts.
//!
//! A layout is a variable-cardinality set of turbine coordinates. Its two
//! objectives are expected power (from a Jensen wake model integrated against
//! a kernel-density estimate of the site's joint wind speed/direction
//! distribution) and an installation cost depending only on turbine count.
//! Each objective is modelled by a Gaussian process whose covariance is the
//! mean set kernel, and new layouts are proposed by maximising expected
//! hypervolume improvement with a binary genetic algorithm over a grid
//! encoding.
//!
//! The numerical modules are generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! optimisation loop in [`bo`] uses.

pub mod acq_opt;
pub mod bo;
pub mod error;
pub mod linalg;
pub mod objectives;
pub mod pareto;
pub mod rng;
pub mod scalar;
pub mod set_gp;
pub mod wake;
pub mod wind_stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Turbine = wake::Turbine<f64>;
pub type Layout = wake::Layout<f64>;
pub type WakeConfig = wake::WakeConfig<f64>;
pub type JensenWake = wake::JensenWake<f64>;
pub type WindRecord = wind_stats::WindRecord<f64>;
pub type WindDistribution = wind_stats::WindDistribution<f64>;
pub type PowerCurveParams = objectives::PowerCurveParams<f64>;
pub type PowerCurve = objectives::PowerCurve<f64>;
pub type ObjectiveVector = objectives::ObjectiveVector<f64>;
pub type Evaluator = objectives::Evaluator<f64>;
pub type Hyperparams = set_gp::Hyperparams<f64>;
pub type HyperparamBounds = set_gp::HyperparamBounds<f64>;
pub type SetDataset = set_gp::SetDataset<f64>;
pub type SetGpModel = set_gp::SetGpModel<f64>;
pub type Prediction = set_gp::Prediction<f64>;
pub type ParetoArchive = pareto::ParetoArchive<f64>;
pub type PredictiveBox = pareto::PredictiveBox<f64>;
pub type GridSpec = acq_opt::GridSpec<f64>;

pub use acq_opt::Genome;
pub use bo::{RunConfig, RunOutcome, RunTrace};
