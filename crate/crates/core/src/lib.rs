//! Multivariate spatial statistics: valid cross-covariance construction,
//! latent-process layering, fitting, and co-kriging.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common case.

pub mod cross;
pub mod error;
pub mod estimation;
pub mod hierarchical;
pub mod kernels;
pub mod prediction;
pub mod rng;
pub mod scalar;
pub mod spatial;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Location = spatial::Location<f64>;
pub type LocationSet = spatial::LocationSet<f64>;
pub type VariableSeries = spatial::VariableSeries<f64>;
pub type Dataset = spatial::MultivariateDataset<f64>;
pub type CrossModel = cross::CrossModel<f64>;
pub type CovMatrixBundle = cross::CovMatrixBundle<f64>;
pub type HierarchicalModel = hierarchical::HierarchicalModel<f64>;
pub type Family = estimation::Family<f64>;
pub type PredictionSet = prediction::PredictionSet<f64>;

pub type Location32 = spatial::Location<f32>;
pub type LocationSet32 = spatial::LocationSet<f32>;
pub type Dataset32 = spatial::MultivariateDataset<f32>;
pub type CrossModel32 = cross::CrossModel<f32>;
pub type HierarchicalModel32 = hierarchical::HierarchicalModel<f32>;
