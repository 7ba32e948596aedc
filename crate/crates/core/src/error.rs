use thiserror::Error;

/// Errors raised by the physics, estimation and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("value outside the domain of {what}: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        /// Last iterate (or best point found) when the solver gave up.
        last: Vec<f64>,
    },

    #[error("no signal: both probe sides recorded zero bright events")]
    NoSignal,

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("lineshape maximum is not at zero detuning")]
    PeakNotCentered,

    #[error("sampling is not uniform: interval {found} s deviates from {expected} s")]
    NonUniformSampling { expected: f64, found: f64 },

    #[error("segment starting at sample {index} (voltage {voltage} V) is not bracketed by zero-voltage anchors")]
    Unbracketed { index: usize, voltage: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
