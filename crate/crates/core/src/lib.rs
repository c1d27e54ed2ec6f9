//! Bivariate Hawkes clustered-jump model for asset prices.

pub mod analytics;
pub mod bs;
pub mod calibration;
pub mod error;
pub mod estimation;
pub mod fourier;
pub mod linalg;
pub mod measure;
pub mod mgf;
pub mod model;
pub mod optim;
pub mod quadrature;
pub mod sim;

pub use error::{Error, Result};
pub use model::{IntensityDynamics, IntensityState, JumpLaw, ModelParams, Side, DAYS_PER_YEAR};
