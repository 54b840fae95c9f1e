//! Unitary discrete Fourier transform on a centred time grid.
//!
//! Frequency-domain amplitudes use the `exp(+iωt)` kernel so that the field
//! is recovered as `A(t) = Σ Ã(ω) exp(-iωt)`. Samples are kept in FFT order
//! (non-negative frequencies first). Because the time axis is centred on
//! `t = 0`, every frequency bin carries an extra `(-1)^m` relative to a plain
//! FFT.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct UnitaryDft {
    n: usize,
    // rustfft "inverse" carries the exp(+i...) kernel.
    to_freq: Arc<dyn Fft<f64>>,
    to_time: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for UnitaryDft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnitaryDft").field("n", &self.n).finish()
    }
}

impl UnitaryDft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            to_freq: planner.plan_fft_inverse(n),
            to_time: planner.plan_fft_forward(n),
            scale: 1.0 / (n as f64).sqrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place transform of one or more contiguous length-`n` vectors to the
    /// frequency domain.
    pub fn forward(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len() % self.n, 0);
        self.to_freq.process(buf);
        self.apply_sign_and_scale(buf);
    }

    /// In-place inverse of [`UnitaryDft::forward`].
    pub fn inverse(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len() % self.n, 0);
        self.apply_sign_and_scale(buf);
        self.to_time.process(buf);
    }

    fn apply_sign_and_scale(&self, buf: &mut [Complex64]) {
        for chunk in buf.chunks_exact_mut(self.n) {
            for (m, v) in chunk.iter_mut().enumerate() {
                let s = if m % 2 == 0 { self.scale } else { -self.scale };
                *v *= s;
            }
        }
    }
}
