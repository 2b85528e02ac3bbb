use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("operator is not self-adjoint: defect {defect:.3e} exceeds tolerance {tolerance:.3e}")]
    NotSelfAdjoint { defect: f64, tolerance: f64 },

    #[error("operator is not positivity preserving: min of A f = {min:.3e} for a nonnegative probe")]
    NotPositivityPreserving { min: f64 },

    #[error("asymmetric {what}: max defect {defect:.3e}")]
    Asymmetric { what: &'static str, defect: f64 },

    #[error("density became negative at t = {time:.6}: min = {min:.3e}; retry with dt <= {suggested_dt:.3e}")]
    Positivity {
        time: f64,
        min: f64,
        suggested_dt: f64,
    },

    #[error("CFL condition violated: dt = {dt:.3e} exceeds the advective limit {limit:.3e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("density slice {node} has mass {mass:.12} (expected 1)")]
    Mass { node: usize, mass: f64 },

    #[error("density must be strictly positive for {0}")]
    NonPositiveDensity(&'static str),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            found,
        })
    }
}
