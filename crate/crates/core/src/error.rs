use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("pulse clipped by the time window: {clipped_fraction:.3e} of the energy lies outside")]
    WindowTooSmall { clipped_fraction: f64 },

    #[error("spectral clipping at step {step} (z = {z:.6} m): {edge_fraction:.3e} of the energy at the grid edge")]
    SpectralClipping { step: usize, z: f64, edge_fraction: f64 },

    #[error("numerical failure at step {step}: {reason}")]
    Numerical { step: usize, reason: String },

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("grid of {0} samples exceeds the covariance size guard of {max}", max = crate::linearization::MAX_QUANTUM_SAMPLES)]
    GridTooLarge(usize),

    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
