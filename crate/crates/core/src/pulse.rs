//! Time/frequency grids, pulse construction and classical pulse diagnostics.
//!
//! Units throughout: time in ps, angular frequency in rad/ps, power in W,
//! energy in pJ (W·ps), fibre length in m.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft::UnitaryDft;

/// FWHM of sech² intensity in units of T₀: 2·ln(1+√2).
pub const SECH_FWHM_FACTOR: f64 = 1.762_747_174_039_086;
/// FWHM of a Gaussian intensity exp(-t²/T₀²) in units of T₀: 2·√(ln 2).
pub const GAUSSIAN_FWHM_FACTOR: f64 = 1.665_109_222_315_395;

/// Uniform, centred time grid: `t_k = (k - N/2)·dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    n_samples: usize,
    window: f64,
}

impl TimeGrid {
    pub fn new(n_samples: usize, window_ps: f64) -> Result<Self> {
        if n_samples < 8 || !n_samples.is_power_of_two() {
            return Err(invalid(format!(
                "grid needs a power-of-two sample count >= 8, got {n_samples}"
            )));
        }
        if !(window_ps.is_finite() && window_ps > 0.0) {
            return Err(invalid(format!("grid window must be > 0, got {window_ps}")));
        }
        Ok(Self { n_samples, window: window_ps })
    }

    /// 4096 samples over 20 ps.
    pub fn default_classical() -> Self {
        Self { n_samples: 4096, window: 20.0 }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn dt(&self) -> f64 {
        self.window / self.n_samples as f64
    }

    pub fn d_omega(&self) -> f64 {
        2.0 * PI / self.window
    }

    pub fn time(&self, k: usize) -> f64 {
        (k as f64 - (self.n_samples / 2) as f64) * self.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_samples).map(|k| self.time(k)).collect()
    }

    /// Angular frequency of bin `m` in FFT order.
    pub fn omega(&self, m: usize) -> f64 {
        let n = self.n_samples;
        let signed = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
        signed * self.d_omega()
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.n_samples).map(|m| self.omega(m)).collect()
    }

    /// FFT-order bin indices sorted by increasing frequency.
    pub fn ascending_bins(&self) -> Vec<usize> {
        let n = self.n_samples;
        (n / 2..n).chain(0..n / 2).collect()
    }

    pub fn omega_min(&self) -> f64 {
        self.omega(self.n_samples / 2)
    }

    pub fn omega_max(&self) -> f64 {
        self.omega(self.n_samples / 2 - 1)
    }
}

/// Sampled complex envelope A(t) in √W.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexEnvelope {
    grid: TimeGrid,
    samples: Vec<Complex64>,
}

impl ComplexEnvelope {
    pub fn new(grid: TimeGrid, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.n_samples() {
            return Err(invalid(format!(
                "{} samples for a grid of {}",
                samples.len(),
                grid.n_samples()
            )));
        }
        if samples.iter().any(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(invalid("envelope contains non-finite samples"));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self { grid, samples: vec![Complex64::new(0.0, 0.0); grid.n_samples()] }
    }

    pub(crate) fn from_parts_unchecked(grid: TimeGrid, samples: Vec<Complex64>) -> Self {
        Self { grid, samples }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    /// Instantaneous power |A|² in W.
    pub fn power(&self) -> Vec<f64> {
        self.samples.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn peak_power(&self) -> f64 {
        self.samples.iter().map(|a| a.norm_sqr()).fold(0.0, f64::max)
    }

    /// Multiply every sample by a complex factor.
    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            grid: self.grid,
            samples: self.samples.iter().map(|a| a * factor).collect(),
        }
    }
}

/// Frequency-domain view. `samples[m]` approximates the continuous transform
/// `∫A(t)exp(iω_m t)dt` (units √W·ps), FFT-ordered.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEnvelope {
    grid: TimeGrid,
    samples: Vec<Complex64>,
}

impl SpectralEnvelope {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// Σ|Ã_m|²·dω/2π, equal to the time-domain energy.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.d_omega() / (2.0 * PI)
    }

    /// (ω, |Ã|²) pairs sorted by increasing ω.
    pub fn power_spectrum(&self) -> (Vec<f64>, Vec<f64>) {
        let bins = self.grid.ascending_bins();
        let omegas = bins.iter().map(|&m| self.grid.omega(m)).collect();
        let power = bins.iter().map(|&m| self.samples[m].norm_sqr()).collect();
        (omegas, power)
    }

    pub fn to_envelope(&self) -> ComplexEnvelope {
        let n = self.grid.n_samples();
        let dft = UnitaryDft::new(n);
        let norm = 1.0 / (self.grid.dt() * (n as f64).sqrt());
        let mut buf: Vec<Complex64> = self.samples.iter().map(|a| a * norm).collect();
        dft.inverse(&mut buf);
        ComplexEnvelope::from_parts_unchecked(self.grid, buf)
    }
}

/// Fibre parameters of the propagation equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FibreSpec {
    /// Group-velocity dispersion in ps²/m (negative = anomalous).
    pub beta2: f64,
    /// Kerr coefficient in 1/(W·m).
    pub gamma: f64,
    /// Length in m.
    pub length: f64,
    /// Power attenuation in 1/m.
    pub loss: f64,
}

impl Default for FibreSpec {
    /// One metre of the calibrated fibre.
    fn default() -> Self {
        Self::calibrated(1.0)
    }
}

/// Kerr coefficient of the default fibre, 1/(W·m).
pub const DEFAULT_GAMMA: f64 = 0.04;
/// Fundamental-soliton energy the default fibre is calibrated to, pJ.
pub const CALIBRATION_SOLITON_ENERGY: f64 = 9.0;
/// Pulse FWHM the default fibre is calibrated at, fs.
pub const CALIBRATION_FWHM_FS: f64 = 130.0;

impl FibreSpec {
    pub fn new(beta2: f64, gamma: f64, length: f64, loss: f64) -> Result<Self> {
        let f = Self { beta2, gamma, length, loss };
        f.validate()?;
        Ok(f)
    }

    /// Microstructured-fibre default: γ = 0.04 /(W·m), β₂ chosen so that a
    /// 130 fs sech pulse forms a fundamental soliton at 9 pJ.
    pub fn calibrated(length: f64) -> Self {
        let t0 = CALIBRATION_FWHM_FS * 1e-3 / SECH_FWHM_FACTOR;
        Self {
            beta2: -DEFAULT_GAMMA * t0 * CALIBRATION_SOLITON_ENERGY / 2.0,
            gamma: DEFAULT_GAMMA,
            length,
            loss: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length >= 0.0) {
            return Err(invalid(format!("fibre length must be >= 0, got {}", self.length)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(invalid(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.loss.is_finite() && self.loss >= 0.0) {
            return Err(invalid(format!("loss must be >= 0, got {}", self.loss)));
        }
        if !self.beta2.is_finite() {
            return Err(invalid("beta2 must be finite"));
        }
        Ok(())
    }

    pub fn with_length(&self, length: f64) -> Self {
        Self { length, ..*self }
    }

    /// Dispersion length T₀²/|β₂| in m.
    pub fn dispersion_length(&self, t0: f64) -> f64 {
        t0 * t0 / self.beta2.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseShape {
    Sech,
    Gaussian,
}

impl PulseShape {
    pub fn fwhm_factor(self) -> f64 {
        match self {
            PulseShape::Sech => SECH_FWHM_FACTOR,
            PulseShape::Gaussian => GAUSSIAN_FWHM_FACTOR,
        }
    }

    /// ∫|u(t)|²dt for unit peak power and unit T₀.
    fn unit_energy(self) -> f64 {
        match self {
            PulseShape::Sech => 2.0,
            PulseShape::Gaussian => PI.sqrt(),
        }
    }

    fn amplitude(self, x: f64) -> f64 {
        match self {
            PulseShape::Sech => 1.0 / x.cosh(),
            PulseShape::Gaussian => (-0.5 * x * x).exp(),
        }
    }
}

/// Either the pulse energy (pJ) or its peak power (W), never both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PulseAmplitude {
    Energy(f64),
    PeakPower(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    pub shape: PulseShape,
    /// Intensity FWHM in fs.
    pub fwhm_fs: f64,
    pub amplitude: PulseAmplitude,
    /// Quadratic phase coefficient C: A ∝ exp(-iC t²/(2T₀²)).
    pub chirp: f64,
    pub center_offset_ps: f64,
}

impl PulseSpec {
    pub fn sech_energy(fwhm_fs: f64, energy_pj: f64) -> Self {
        Self {
            shape: PulseShape::Sech,
            fwhm_fs,
            amplitude: PulseAmplitude::Energy(energy_pj),
            chirp: 0.0,
            center_offset_ps: 0.0,
        }
    }

    pub fn gaussian_energy(fwhm_fs: f64, energy_pj: f64) -> Self {
        Self { shape: PulseShape::Gaussian, ..Self::sech_energy(fwhm_fs, energy_pj) }
    }

    pub fn with_amplitude(self, amplitude: PulseAmplitude) -> Self {
        Self { amplitude, ..self }
    }

    /// T₀ in ps.
    pub fn t0(&self) -> f64 {
        self.fwhm_fs * 1e-3 / self.shape.fwhm_factor()
    }

    /// Analytic peak power in W.
    pub fn peak_power(&self) -> f64 {
        match self.amplitude {
            PulseAmplitude::PeakPower(p) => p,
            PulseAmplitude::Energy(e) => e / (self.shape.unit_energy() * self.t0()),
        }
    }

    /// Analytic energy in pJ.
    pub fn energy(&self) -> f64 {
        match self.amplitude {
            PulseAmplitude::Energy(e) => e,
            PulseAmplitude::PeakPower(p) => p * self.shape.unit_energy() * self.t0(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm_fs.is_finite() && self.fwhm_fs > 0.0) {
            return Err(invalid(format!("pulse fwhm must be > 0, got {}", self.fwhm_fs)));
        }
        let v = match self.amplitude {
            PulseAmplitude::Energy(e) => e,
            PulseAmplitude::PeakPower(p) => p,
        };
        if !(v.is_finite() && v >= 0.0) {
            return Err(invalid(format!("pulse energy/peak power must be >= 0, got {v}")));
        }
        if !self.chirp.is_finite() || !self.center_offset_ps.is_finite() {
            return Err(invalid("chirp and centre offset must be finite"));
        }
        Ok(())
    }
}

/// Build a pulse on `grid`. Requested energies are reproduced exactly by the
/// discrete sum; peak powers are exact at the pulse centre.
pub fn make_pulse(spec: &PulseSpec, grid: &TimeGrid) -> Result<ComplexEnvelope> {
    spec.validate()?;
    let fwhm_ps = spec.fwhm_fs * 1e-3;
    if grid.window() < 20.0 * fwhm_ps {
        log::warn!(
            "grid window {} ps is less than 20x the pulse FWHM ({} ps)",
            grid.window(),
            fwhm_ps
        );
    }
    let t0 = spec.t0();
    let dt = grid.dt();
    let shape: Vec<Complex64> = grid
        .times()
        .into_iter()
        .map(|t| {
            let x = (t - spec.center_offset_ps) / t0;
            let phase = -spec.chirp * x * x / 2.0;
            Complex64::from_polar(spec.shape.amplitude(x), phase)
        })
        .collect();
    let discrete: f64 = shape.iter().map(|a| a.norm_sqr()).sum::<f64>() * dt;
    let analytic = spec.shape.unit_energy() * t0;
    let clipped = 1.0 - discrete / analytic;
    if clipped > 1e-9 {
        return Err(Error::WindowTooSmall { clipped_fraction: clipped });
    }
    let scale = match spec.amplitude {
        PulseAmplitude::Energy(e) => (e / discrete).sqrt(),
        PulseAmplitude::PeakPower(p) => p.sqrt(),
    };
    Ok(ComplexEnvelope::from_parts_unchecked(
        *grid,
        shape.into_iter().map(|a| a * scale).collect(),
    ))
}

/// Energy Σ|A|²·dt in pJ.
pub fn pulse_energy(env: &ComplexEnvelope) -> f64 {
    env.samples().iter().map(|a| a.norm_sqr()).sum::<f64>() * env.grid().dt()
}

pub fn spectrum(env: &ComplexEnvelope) -> SpectralEnvelope {
    let grid = *env.grid();
    let n = grid.n_samples();
    let dft = UnitaryDft::new(n);
    let mut buf = env.samples().to_vec();
    dft.forward(&mut buf);
    let norm = grid.dt() * (n as f64).sqrt();
    buf.iter_mut().for_each(|a| *a *= norm);
    SpectralEnvelope { grid, samples: buf }
}

/// Intensity autocorrelation over delays `j·dt`, `j = -(N-1)..=(N-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrelationTrace {
    pub delays: Vec<f64>,
    pub values: Vec<f64>,
}

impl AutocorrelationTrace {
    pub fn at_zero(&self) -> f64 {
        self.values[self.values.len() / 2]
    }

    pub fn fwhm(&self) -> Option<f64> {
        fwhm(&self.delays, &self.values)
    }
}

/// G(τ) = Σ P(t)P(t-τ) without wraparound. Computed for τ ≥ 0 and mirrored.
pub fn autocorrelation(env: &ComplexEnvelope) -> AutocorrelationTrace {
    let p = env.power();
    let n = p.len();
    let dt = env.grid().dt();
    let half: Vec<f64> = (0..n)
        .map(|j| p[j..].iter().zip(&p[..n - j]).map(|(a, b)| a * b).sum())
        .collect();
    let mut delays = Vec::with_capacity(2 * n - 1);
    let mut values = Vec::with_capacity(2 * n - 1);
    for j in (1..n).rev() {
        delays.push(-(j as f64) * dt);
        values.push(half[j]);
    }
    for (j, v) in half.iter().enumerate() {
        delays.push(j as f64 * dt);
        values.push(*v);
    }
    AutocorrelationTrace { delays, values }
}

/// Full width at half maximum of a sampled trace, by linear interpolation at
/// the half-maximum crossings either side of the peak. `None` when the trace
/// has no positive maximum or never falls to half of it.
pub fn fwhm(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || ys.is_empty() {
        return None;
    }
    let (peak_idx, &peak) = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if !(peak > 0.0) {
        return None;
    }
    let half = peak / 2.0;
    let cross = |i: usize, j: usize| -> f64 {
        // ys[i] >= half > ys[j]
        let f = (ys[i] - half) / (ys[i] - ys[j]);
        xs[i] + f * (xs[j] - xs[i])
    };
    let left = (0..peak_idx).rev().find(|&j| ys[j] < half).map(|j| cross(j + 1, j))?;
    let right = (peak_idx + 1..ys.len()).find(|&j| ys[j] < half).map(|j| cross(j - 1, j))?;
    Some(right - left)
}

/// FWHM of |A(t)|² in ps, refined by bisection on the band-limited
/// (trigonometric) interpolant of the samples. Accurate well below `dt` for
/// pulses that are resolved on the grid.
pub fn fwhm_bandlimited(env: &ComplexEnvelope) -> Option<f64> {
    let grid = *env.grid();
    let n = grid.n_samples();
    let p = env.power();
    fwhm(&grid.times(), &p)?;
    let peak_idx = p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?.0;
    let spec = spectrum(env);
    let bins: Vec<(f64, Complex64)> = (0..n).map(|m| (grid.omega(m), spec.samples()[m])).collect();
    // A(t) = Σ Ã(ω) exp(-iωt) dω/2π; the Nyquist bin is split symmetrically.
    let nyq = n / 2;
    let eval = |t: f64| -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (m, &(w, a)) in bins.iter().enumerate() {
            if m == nyq {
                let c = a * 0.5;
                acc += c * Complex64::from_polar(1.0, -w * t) + c * Complex64::from_polar(1.0, w * t);
            } else {
                acc += a * Complex64::from_polar(1.0, -w * t);
            }
        }
        (acc / grid.window()).norm_sqr()
    };
    let t_peak = grid.time(peak_idx);
    let peak = refine_peak(&eval, t_peak, grid.dt());
    let half = peak / 2.0;
    let side = |dir: f64| -> Option<f64> {
        let mut j = peak_idx as isize;
        loop {
            let next = j + dir as isize;
            if next < 0 || next as usize >= n {
                return None;
            }
            if p[next as usize] < half {
                let (mut lo, mut hi) = (grid.time(j as usize), grid.time(next as usize));
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if eval(mid) >= half {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Some(0.5 * (lo + hi));
            }
            j = next;
        }
    };
    Some(side(1.0)? - side(-1.0)?)
}

fn refine_peak(eval: &dyn Fn(f64) -> f64, t: f64, dt: f64) -> f64 {
    // golden-section search on [t-dt, t+dt]
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (t - dt, t + dt);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..100 {
        if eval(c) > eval(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    eval(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::default_classical()
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(TimeGrid::new(4, 1.0).is_err());
        assert!(TimeGrid::new(100, 1.0).is_err());
        assert!(TimeGrid::new(64, 0.0).is_err());
        assert!(TimeGrid::new(64, 2.0).is_ok());
    }

    #[test]
    fn sech_energy_matches_request() {
        let env = make_pulse(&PulseSpec::sech_energy(130.0, 14.1), &grid()).unwrap();
        assert!((pulse_energy(&env) - 14.1).abs() / 14.1 < 1e-6);
        let env = make_pulse(&PulseSpec::sech_energy(130.0, 15.8), &grid()).unwrap();
        assert!((pulse_energy(&env) - 15.8).abs() / 15.8 < 1e-6);
    }

    #[test]
    fn zero_energy_gives_zero_envelope() {
        for shape in [PulseShape::Sech, PulseShape::Gaussian] {
            let spec = PulseSpec { shape, ..PulseSpec::sech_energy(130.0, 0.0) };
            let env = make_pulse(&spec, &grid()).unwrap();
            assert!(env.samples().iter().all(|a| a.norm() == 0.0));
            assert_eq!(pulse_energy(&env), 0.0);
        }
    }

    #[test]
    fn sech_peak_power_energy_relation() {
        // T0 = 1 ps, P0 = 1 W -> E = 2 pJ. Oracle: Simpson quadrature of sech².
        let t0 = 1.0;
        let spec = PulseSpec {
            shape: PulseShape::Sech,
            fwhm_fs: SECH_FWHM_FACTOR * t0 * 1e3,
            amplitude: PulseAmplitude::PeakPower(1.0),
            chirp: 0.0,
            center_offset_ps: 0.0,
        };
        let g = TimeGrid::new(4096, 80.0).unwrap();
        let env = make_pulse(&spec, &g).unwrap();
        assert_eq!(env.peak_power(), 1.0);
        let simpson = {
            let (a, b, m) = (-40.0f64, 40.0f64, 20000usize);
            let h = (b - a) / m as f64;
            let f = |t: f64| (1.0 / (t / t0).cosh()).powi(2);
            let mut s = f(a) + f(b);
            for i in 1..m {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * f(a + i as f64 * h);
            }
            s * h / 3.0
        };
        assert!((simpson - 2.0).abs() < 1e-9);
        assert!((pulse_energy(&env) - simpson).abs() < 1e-9);
    }

    #[test]
    fn window_too_small_is_rejected() {
        let g = TimeGrid::new(64, 0.5).unwrap();
        let err = make_pulse(&PulseSpec::sech_energy(130.0, 1.0), &g).unwrap_err();
        assert!(matches!(err, Error::WindowTooSmall { .. }));
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let g = TimeGrid::new(64, 6.4).unwrap();
        let mut s = vec![Complex64::new(0.0, 0.0); 64];
        s[17] = Complex64::new(2.0, 0.0);
        let env = ComplexEnvelope::new(g, s).unwrap();
        let sp = spectrum(&env);
        let m0 = sp.samples()[0].norm();
        assert!(sp.samples().iter().all(|a| (a.norm() - m0).abs() < 1e-12));
    }

    #[test]
    fn spectrum_round_trip_and_parseval() {
        let spec = PulseSpec { chirp: 1.5, ..PulseSpec::gaussian_energy(130.0, 3.0) };
        let env = make_pulse(&spec, &grid()).unwrap();
        let sp = spectrum(&env);
        assert!((sp.energy() - pulse_energy(&env)).abs() / 3.0 < 1e-10);
        let back = sp.to_envelope();
        for (a, b) in back.samples().iter().zip(env.samples()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn sech_time_bandwidth_product() {
        let env = make_pulse(&PulseSpec::sech_energy(130.0, 1.0), &grid()).unwrap();
        let (w, p) = spectrum(&env).power_spectrum();
        let nu: Vec<f64> = w.iter().map(|w| w / (2.0 * PI)).collect();
        let dnu = fwhm(&nu, &p).unwrap();
        let dt = fwhm(&env.grid().times(), &env.power()).unwrap();
        let tbp = dnu * dt;
        assert!((tbp - 0.315).abs() / 0.315 < 0.01, "tbp {tbp}");
    }

    #[test]
    fn autocorrelation_symmetry_and_normalisation() {
        let spec = PulseSpec { chirp: 0.7, center_offset_ps: 0.3, ..PulseSpec::sech_energy(200.0, 5.0) };
        let g = TimeGrid::new(512, 10.0).unwrap();
        let env = make_pulse(&spec, &g).unwrap();
        let ac = autocorrelation(&env);
        let n = ac.values.len();
        for j in 0..n {
            assert_eq!(ac.values[j], ac.values[n - 1 - j]);
        }
        let p = env.power();
        let g0: f64 = p.iter().map(|x| x * x).sum();
        assert_eq!(ac.at_zero(), g0);
        let max = ac.values.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(max, ac.at_zero());
    }

    #[test]
    fn sech_autocorrelation_ratio() {
        let env = make_pulse(&PulseSpec::sech_energy(130.0, 1.0), &grid()).unwrap();
        let ratio = autocorrelation(&env).fwhm().unwrap() / fwhm(&env.grid().times(), &env.power()).unwrap();
        // Oracle: direct numerical convolution of sech² on a fine axis.
        let oracle = {
            let t0 = 1.0;
            let h = 0.002;
            let ts: Vec<f64> = (-10000..=10000).map(|i| i as f64 * h).collect();
            let p: Vec<f64> = ts.iter().map(|t| (1.0 / (t / t0).cosh()).powi(2)).collect();
            let g = |shift: usize| -> f64 { p[shift..].iter().zip(&p).map(|(a, b)| a * b).sum() };
            let g0 = g(0);
            let mut k = 0;
            while g(k) > g0 / 2.0 {
                k += 1;
            }
            let (a, b) = (g(k - 1), g(k));
            let x = (k - 1) as f64 + (a - g0 / 2.0) / (a - b);
            2.0 * x * h / (SECH_FWHM_FACTOR * t0)
        };
        assert!((oracle - 1.543).abs() / 1.543 < 0.01, "oracle {oracle}");
        assert!((ratio - oracle).abs() / oracle < 0.01, "ratio {ratio}");
    }

    #[test]
    fn gaussian_fwhm_within_one_sample() {
        let env = make_pulse(&PulseSpec::gaussian_energy(130.0, 1.0), &grid()).unwrap();
        let w = fwhm(&env.grid().times(), &env.power()).unwrap();
        assert!((w - 0.130).abs() <= env.grid().dt());
        let wb = fwhm_bandlimited(&env).unwrap();
        assert!((wb - 0.130).abs() < 1e-9, "{wb}");
    }

    #[test]
    fn fwhm_absent_for_zero_trace() {
        assert_eq!(fwhm(&[0.0, 1.0, 2.0], &[0.0, 0.0, 0.0]), None);
    }

    #[test]
    fn calibrated_fibre_numbers() {
        let f = FibreSpec::calibrated(1.0);
        // ≈ -13.3 fs²/mm
        assert!((f.beta2 * 1e3 + 13.3).abs() < 0.05, "{}", f.beta2);
    }
}
