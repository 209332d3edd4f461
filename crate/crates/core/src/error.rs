use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain: {0}")]
    Domain(String),

    #[error("infeasible: requested work {requested} exceeds total capacity {capacity}")]
    Infeasible { requested: f64, capacity: f64 },

    /// Density too small to divide by when forming `F/f`.
    #[error("singular: density {density:e} at b = {at} is below 1e-12")]
    NumericalSingularity { at: f64, density: f64 },

    /// Adaptive quadrature could not meet its tolerance.
    #[error("precision: error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    Precision { estimate: f64, tolerance: f64 },

    #[error("size: {0}")]
    Size(String),

    #[error("configuration: {0}")]
    Configuration(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Short machine-readable tag, used by the command line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Infeasible { .. } => "infeasible",
            Error::NumericalSingularity { .. } => "singular",
            Error::Precision { .. } => "precision",
            Error::Size(_) => "size",
            Error::Configuration(_) => "configuration",
        }
    }
}
