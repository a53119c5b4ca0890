use thiserror::Error;

use crate::zeros::DiscZeroSet;

pub type Result<T, E = GefError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GefError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("truncation degree {degree} too small for radius {radius} (need at least {required})")]
    DegreeTooSmall {
        degree: usize,
        radius: f64,
        required: usize,
    },

    #[error("certification error: {0}")]
    Certification(String),

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    /// Root iteration did not settle; `partial` holds the last iterate restricted
    /// to the requested disc.
    #[error("root iteration did not converge after {sweeps} sweeps")]
    Convergence {
        sweeps: usize,
        partial: Box<DiscZeroSet>,
    },

    #[error("grid point at angle {angle} hits an exact zero")]
    SingularGrid { angle: f64 },

    #[error("sample is not in the omega event: {0}")]
    NotInOmega(String),
}

impl GefError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        GefError::Domain(msg.into())
    }
}
