//! Quantum noise in Kerr fibre optics.
//!
//! Classical split-step propagation of femtosecond pulses, linearized
//! transport of quantum fluctuations, spectral-filtering and loop-mirror
//! amplitude squeezing, continuous-variable entanglement of two squeezed
//! beams, and an entanglement-based key distribution protocol with
//! beamsplitting attacks.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod entanglement;
pub mod error;
pub mod fft;
pub mod linearization;
pub mod nlse;
pub mod nolm;
pub mod pulse;
pub mod qkd;
pub mod scenario;
pub mod units;

pub use error::{Error, Result};
