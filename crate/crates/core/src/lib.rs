//! Pattern-stratified prediction-powered inference for nonmonotone missing data.

pub mod baselines;
pub mod data;
pub mod error;
pub mod io;
pub mod linalg;
pub mod propensity;
pub mod psppi;
pub mod report;
pub mod simulation;
pub mod zestim;

pub use baselines::{BaselineFit, Method};
pub use data::{Coarsening, ObservedDataset, PatternRegistry, PredictionOracle, VariableSchema};
pub use error::{Error, Result};
pub use propensity::{PatternLinearPredictorSpec, PropensityModel};
pub use psppi::{CovarianceBundle, CovariancePath, PsppiFit, PsppiOptions};
pub use zestim::{DesignSpec, EstimatingFunction, FitResult, MeatMode, SolverOptions};
