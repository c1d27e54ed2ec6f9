use thiserror::Error;

use crate::model::Side;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or transform argument fell outside its admissible region.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is singular: {0}")]
    SingularMatrix(String),

    /// The simulated event count hit the configured cap.
    #[error("event count exceeded cap of {cap} (parameters are likely non-stationary)")]
    ExplosionGuard { cap: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("no {0:?} jumps available")]
    EmptySide(Side),

    #[error("numeric domain violation: {0}")]
    NumericDomain(String),

    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),

    #[error("transform argument left its strip during ODE integration at tau={tau}")]
    StripViolation { tau: f64 },

    #[error("ODE step size fell below minimum at tau={tau}")]
    StepFailure { tau: f64 },

    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("price {price} outside no-arbitrage bounds [{lower}, {upper}]")]
    OutOfBounds { price: f64, lower: f64, upper: f64 },

    #[error("no feasible calibration start: {0}")]
    InfeasibleRegion(String),

    #[error("regressor matrix is rank deficient")]
    RankDeficient,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures caused by bad or inconsistent input data, as opposed
    /// to numerical breakdowns.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::DegenerateSample(_)
                | Error::EmptySide(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
