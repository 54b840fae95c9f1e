//! Asymmetric nonlinear optical loop mirror and single-mode projection.
//!
//! The coupler maps `(a, v) ↦ (√ρ a + i√(1−ρ) v, i√(1−ρ) a + √ρ v)`. The two
//! arms traverse the same fibre independently and recombine on the same
//! coupler; the bright (transmitted) port is `√ρ c' + i√(1−ρ) d'`, the dark
//! port `i√(1−ρ) c' + √ρ d'`. For γ = 0 the bright port carries `(2ρ−1)` of
//! the input amplitude.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linearization::{
    freq_functional_to_time, mean_modes_freq, photon_number_noise, propagate_with_noise,
    CovarianceMatrix, ModeSelector, SymplecticMap,
};
use crate::nlse::SolverConfig;
use crate::pulse::{make_pulse, ComplexEnvelope, FibreSpec, PulseAmplitude, PulseSpec, TimeGrid};
use crate::units::photons_per_pj;

pub const DEFAULT_SPLIT_RATIO: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NolmSpec {
    pub fibre: FibreSpec,
    /// Power fraction coupled into the bright arm.
    pub split_ratio: f64,
    pub pulse: PulseSpec,
}

impl NolmSpec {
    pub fn new(fibre: FibreSpec, split_ratio: f64, pulse: PulseSpec) -> Result<Self> {
        let spec = Self { fibre, split_ratio, pulse };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(invalid(format!("split ratio must lie in (0, 1), got {}", self.split_ratio)));
        }
        self.fibre.validate()?;
        self.pulse.validate()
    }

    /// A 50:50 loop reflects everything at low power and cannot separate a
    /// bright and a dark pulse.
    pub fn is_symmetric(&self) -> bool {
        (self.split_ratio - 0.5).abs() < 1e-12
    }
}

/// Mean amplitude in √photon units and the 2×2 covariance of `(X, P)` in
/// the frame where `X` is aligned with `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleModeState {
    pub alpha: Complex64,
    pub covariance: Matrix2<f64>,
}

impl SingleModeState {
    pub fn new(alpha: Complex64, covariance: Matrix2<f64>) -> Result<Self> {
        let s = Self { alpha, covariance };
        if (covariance[(0, 1)] - covariance[(1, 0)]).abs() > 1e-12 {
            return Err(invalid("single-mode covariance must be symmetric"));
        }
        if s.uncertainty_min_eigenvalue() < -1e-8 {
            return Err(invalid("single-mode covariance violates the uncertainty relation"));
        }
        Ok(s)
    }

    pub fn coherent(alpha: Complex64) -> Self {
        Self { alpha, covariance: Matrix2::identity() }
    }

    /// Pure amplitude-squeezed state: Var(X) = v, Var(P) = 1/v.
    pub fn amplitude_squeezed(alpha: Complex64, v: f64) -> Self {
        Self { alpha, covariance: Matrix2::new(v, 0.0, 0.0, 1.0 / v) }
    }

    /// Smallest eigenvalue of V + iΩ₂, i.e. (tr V)/2 − √((tr V)²/4 − det V + 1).
    pub fn uncertainty_min_eigenvalue(&self) -> f64 {
        let v = &self.covariance;
        let half_tr = 0.5 * (v[(0, 0)] + v[(1, 1)]);
        let off = 0.5 * (v[(0, 0)] - v[(1, 1)]);
        half_tr - (off * off + v[(0, 1)] * v[(0, 1)] + 1.0).sqrt()
    }

    pub fn mean_photons(&self) -> f64 {
        self.alpha.norm_sqr()
    }

    /// Covariance in the lab quadratures (rotated by arg α).
    pub fn lab_covariance(&self) -> Matrix2<f64> {
        let theta = if self.alpha.norm() > 0.0 { self.alpha.arg() } else { 0.0 };
        let (s, c) = theta.sin_cos();
        let r = Matrix2::new(c, -s, s, c);
        r * self.covariance * r.transpose()
    }
}

/// Both output ports of the loop with their joint covariance.
#[derive(Debug, Clone)]
pub struct NolmPorts {
    pub bright: ComplexEnvelope,
    pub dark: ComplexEnvelope,
    /// Ordering `(X_bright, X_dark, P_bright, P_dark)`, each block M long.
    pub joint: CovarianceMatrix,
}

/// R(λ)·S, where R(λ) is the real form of multiplication by λ.
fn rotate_rows(s: &DMatrix<f64>, lambda: Complex64) -> DMatrix<f64> {
    let m = s.nrows() / 2;
    let top = s.rows(0, m);
    let bot = s.rows(m, m);
    let mut out = DMatrix::zeros(2 * m, s.ncols());
    out.rows_mut(0, m).copy_from(&(top * lambda.re - bot * lambda.im));
    out.rows_mut(m, m).copy_from(&(top * lambda.im + bot * lambda.re));
    out
}

/// S·R(λ).
fn rotate_cols(s: &DMatrix<f64>, lambda: Complex64) -> DMatrix<f64> {
    let m = s.ncols() / 2;
    let left = s.columns(0, m);
    let right = s.columns(m, m);
    let mut out = DMatrix::zeros(s.nrows(), 2 * m);
    out.columns_mut(0, m).copy_from(&(left * lambda.re + right * lambda.im));
    out.columns_mut(m, m).copy_from(&(right * lambda.re - left * lambda.im));
    out
}

struct PortGains {
    bright: ComplexEnvelope,
    dark: ComplexEnvelope,
    /// Bright port response to the signal and vacuum inputs.
    ba: DMatrix<f64>,
    bv: DMatrix<f64>,
    da: DMatrix<f64>,
    dv: DMatrix<f64>,
}

fn loop_gains(spec: &NolmSpec, grid: &TimeGrid, cfg: &SolverConfig) -> Result<PortGains> {
    spec.validate()?;
    let input = input_envelope(spec, grid)?;
    let rho = spec.split_ratio;
    let t = rho.sqrt();
    let r = Complex64::new(0.0, (1.0 - rho).sqrt());
    let c_in = input.scaled(Complex64::new(t, 0.0));
    let d_in = input.scaled(r);
    let (arm_c, arm_d) = rayon::join(
        || propagate_with_noise(&c_in, &spec.fibre, cfg),
        || propagate_with_noise(&d_in, &spec.fibre, cfg),
    );
    let (c_out, s_c) = arm_c?;
    let (d_out, s_d) = arm_d?;
    let combine = |x: Complex64, y: Complex64| {
        let samples = c_out.samples().iter().zip(d_out.samples()).map(|(c, d)| x * c + y * d).collect();
        ComplexEnvelope::new(*grid, samples)
    };
    let bright = combine(Complex64::new(t, 0.0), r)?;
    let dark = combine(r, Complex64::new(t, 0.0))?;
    let (sc, sd) = (s_c.matrix(), s_d.matrix());
    let i = Complex64::i();
    let tr = t * r.im;
    let ba = sc * rho + rotate_cols(&rotate_rows(sd, r), r);
    let bv = (rotate_cols(sc, i) + rotate_rows(sd, i)) * tr;
    let da = (rotate_rows(sc, i) + rotate_cols(sd, i)) * tr;
    let dv = rotate_cols(&rotate_rows(sc, r), r) + sd * rho;
    Ok(PortGains { bright, dark, ba, bv, da, dv })
}

fn input_envelope(spec: &NolmSpec, grid: &TimeGrid) -> Result<ComplexEnvelope> {
    let zero = match spec.pulse.amplitude {
        PulseAmplitude::Energy(e) => e == 0.0,
        PulseAmplitude::PeakPower(p) => p == 0.0,
    };
    if zero {
        return Ok(ComplexEnvelope::zeros(*grid));
    }
    make_pulse(&spec.pulse, grid)
}

/// Bright output mean field and covariance (vacuum at both coupler inputs).
pub fn nolm_output(
    spec: &NolmSpec,
    grid: &TimeGrid,
    cfg: &SolverConfig,
) -> Result<(ComplexEnvelope, CovarianceMatrix)> {
    let g = loop_gains(spec, grid, cfg)?;
    let sigma = &g.ba * g.ba.transpose() + &g.bv * g.bv.transpose();
    Ok((g.bright, CovarianceMatrix::from_matrix_unchecked(sigma)))
}

/// Both ports with their joint covariance.
pub fn nolm_ports(spec: &NolmSpec, grid: &TimeGrid, cfg: &SolverConfig) -> Result<NolmPorts> {
    let g = loop_gains(spec, grid, cfg)?;
    let m = grid.n_samples();
    // rows (X_b, X_d, P_b, P_d), columns (X_a, P_a, X_v, P_v)
    let mut gain = DMatrix::zeros(4 * m, 4 * m);
    for (row, a, v) in [(0, &g.ba, &g.bv), (m, &g.da, &g.dv)] {
        for (half, src_row) in [(0, 0), (2 * m, m)] {
            gain.view_mut((row + half, 0), (m, 2 * m)).copy_from(&a.rows(src_row, m));
            gain.view_mut((row + half, 2 * m), (m, 2 * m)).copy_from(&v.rows(src_row, m));
        }
    }
    let joint = &gain * gain.transpose();
    Ok(NolmPorts { bright: g.bright, dark: g.dark, joint: CovarianceMatrix::from_matrix_unchecked(joint) })
}

/// Full input-to-ports symplectic map, for checking the loop is canonical.
pub fn nolm_port_map(spec: &NolmSpec, grid: &TimeGrid, cfg: &SolverConfig) -> Result<SymplecticMap> {
    let g = loop_gains(spec, grid, cfg)?;
    let m = grid.n_samples();
    let mut gain = DMatrix::zeros(4 * m, 4 * m);
    // columns reordered to (X_a, X_v, P_a, P_v) so both sides use the standard form
    for (row, a, v) in [(0, &g.ba, &g.bv), (m, &g.da, &g.dv)] {
        for (half, src_row) in [(0, 0), (2 * m, m)] {
            let a_rows = a.rows(src_row, m);
            let v_rows = v.rows(src_row, m);
            gain.view_mut((row + half, 0), (m, m)).copy_from(&a_rows.columns(0, m));
            gain.view_mut((row + half, m), (m, m)).copy_from(&v_rows.columns(0, m));
            gain.view_mut((row + half, 2 * m), (m, m)).copy_from(&a_rows.columns(m, m));
            gain.view_mut((row + half, 3 * m), (m, m)).copy_from(&v_rows.columns(m, m));
        }
    }
    SymplecticMap::from_matrix(gain)
}

/// Direct-detection photon-number noise ratio (dB) of the bright port for
/// each input energy.
pub fn nolm_energy_scan(
    spec: &NolmSpec,
    energies: &[f64],
    grid: &TimeGrid,
    cfg: &SolverConfig,
) -> Result<Vec<(f64, f64)>> {
    if energies.len() < 4 {
        return Err(invalid(format!("energy scan needs >= 4 energies, got {}", energies.len())));
    }
    energies
        .par_iter()
        .map(|&e| {
            if !(e > 0.0) {
                return Err(invalid(format!("scan energies must be > 0, got {e}")));
            }
            let s = NolmSpec { pulse: spec.pulse.with_amplitude(PulseAmplitude::Energy(e)), ..*spec };
            let (out, sigma) = nolm_output(&s, grid, cfg)?;
            let ratio = photon_number_noise(&out, &sigma, &ModeSelector::all_pass(grid.n_samples()))?;
            Ok((e, 10.0 * ratio.log10()))
        })
        .collect()
}

/// Projects the fluctuations onto the normalized mean-field mode.
pub fn effective_single_mode(env: &ComplexEnvelope, sigma: &CovarianceMatrix) -> Result<SingleModeState> {
    effective_single_mode_at(env, sigma, crate::units::DEFAULT_WAVELENGTH_NM)
}

pub fn effective_single_mode_at(
    env: &ComplexEnvelope,
    sigma: &CovarianceMatrix,
    wavelength_nm: f64,
) -> Result<SingleModeState> {
    if sigma.n_modes() != env.grid().n_samples() {
        return Err(invalid("covariance and envelope sizes differ"));
    }
    let beta = mean_modes_freq(env);
    let norm = beta.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::Undefined("effective mode needs a nonzero mean field".into()));
    }
    let f: Vec<Complex64> = beta.iter().map(|b| b / norm).collect();
    let cx = freq_functional_to_time(&f);
    let cp: Vec<Complex64> = cx.iter().map(|c| c * Complex64::i()).collect();
    let vxx = sigma.functional_variance(&cx);
    let vpp = sigma.functional_variance(&cp);
    let vxp = sigma.functional_covariance(&cx, &cp);
    let alpha = Complex64::new(norm * photons_per_pj(wavelength_nm).sqrt(), 0.0);
    Ok(SingleModeState { alpha, covariance: Matrix2::new(vxx, vxp, vxp, vpp) })
}
