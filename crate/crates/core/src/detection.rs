//! Knife-edge spectral filter, balanced direct detection, shot-noise
//! calibration and cutoff scans.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linearization::{filtered_noise, CovarianceMatrix, ModeSelector};
use crate::pulse::{ComplexEnvelope, TimeGrid};
use crate::units::{pj_to_mw, photons_per_pj};

/// Ideal high-pass knife edge at `cutoff` rad/ps relative to the carrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub cutoff: f64,
}

impl FilterSpec {
    pub fn new(cutoff: f64, grid: &TimeGrid) -> Result<Self> {
        if !(cutoff >= grid.omega_min() && cutoff <= grid.omega_max()) {
            return Err(invalid(format!(
                "cutoff {cutoff} rad/ps outside the grid band [{}, {}]",
                grid.omega_min(),
                grid.omega_max()
            )));
        }
        Ok(Self { cutoff })
    }

    pub fn selector(&self, grid: &TimeGrid) -> ModeSelector {
        knife_edge(self.cutoff, grid)
    }
}

/// Passes every bin with ω ≥ cutoff. Infinite cutoffs give all-pass/all-block.
pub fn knife_edge(cutoff: f64, grid: &TimeGrid) -> ModeSelector {
    let w = grid
        .omegas()
        .into_iter()
        .map(|w| if w >= cutoff { 1.0 } else { 0.0 })
        .collect();
    ModeSelector::new(w).expect("weights are 0 or 1")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSpec {
    /// Photodiode quantum efficiency, (0, 1].
    pub efficiency: f64,
    /// Electronic noise floor, in photon-number variance per pulse.
    pub electronic_noise: f64,
    pub wavelength_nm: f64,
    pub repetition_rate_hz: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            efficiency: 1.0,
            electronic_noise: 0.0,
            wavelength_nm: crate::units::DEFAULT_WAVELENGTH_NM,
            repetition_rate_hz: crate::units::DEFAULT_REPETITION_RATE_HZ,
        }
    }
}

impl DetectorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(invalid(format!("detector efficiency must lie in (0, 1], got {}", self.efficiency)));
        }
        if !(self.electronic_noise.is_finite() && self.electronic_noise >= 0.0) {
            return Err(invalid("electronic noise must be >= 0"));
        }
        if !(self.wavelength_nm > 0.0 && self.repetition_rate_hz > 0.0) {
            return Err(invalid("wavelength and repetition rate must be > 0"));
        }
        Ok(())
    }
}

/// Sum and difference photocurrent variances of the balanced detector, per
/// pulse, in photon-number units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRecord {
    pub sum_variance: f64,
    pub difference_variance: f64,
    /// Detected mean photon number.
    pub mean_photons: f64,
    pub mean_power_mw: f64,
    pub electronic_noise: f64,
    pub corrected_sum: f64,
    pub corrected_difference: f64,
    /// Set when electronic-noise subtraction had to be clamped at zero.
    pub clamped: bool,
}

impl DetectionRecord {
    /// Corrected sum over corrected difference (1 = shot noise).
    pub fn ratio(&self) -> f64 {
        self.corrected_sum / self.corrected_difference
    }

    pub fn ratio_db(&self) -> f64 {
        to_db(self.ratio())
    }
}

pub fn to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Filter → efficiency loss → 50:50 split onto two photodiodes.
pub fn balanced_detection(
    env: &ComplexEnvelope,
    sigma: &CovarianceMatrix,
    sel: &ModeSelector,
    det: &DetectorSpec,
) -> Result<DetectionRecord> {
    det.validate()?;
    let filtered = filtered_noise(env, sigma, sel)?;
    let eta = det.efficiency;
    let detected_energy = eta * filtered.energy;
    let n = detected_energy * photons_per_pj(det.wavelength_nm);
    // loss mixes in vacuum: r -> η r + (1 - η); the difference port is shot noise
    let sum_signal = n * (eta * filtered.ratio + 1.0 - eta);
    let diff_signal = n;
    let e = det.electronic_noise;
    let (sum_variance, difference_variance) = (sum_signal + e, diff_signal + e);
    let mut clamped = false;
    let mut correct = |raw: f64| {
        let c = raw - e;
        if c < 0.0 {
            log::warn!("electronic-noise correction went negative ({c}); clamped at 0");
            clamped = true;
            0.0
        } else {
            c
        }
    };
    let corrected_sum = correct(sum_variance);
    let corrected_difference = correct(difference_variance);
    Ok(DetectionRecord {
        sum_variance,
        difference_variance,
        mean_photons: n,
        mean_power_mw: pj_to_mw(detected_energy, det.repetition_rate_hz),
        electronic_noise: e,
        corrected_sum,
        corrected_difference,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares fit of `ys` against `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    LinearFit { slope, intercept, r_squared }
}

/// Difference-port noise power against detected mean power (both in mW) over
/// neutral-density attenuations.
pub fn shot_noise_calibration(
    env: &ComplexEnvelope,
    sigma: &CovarianceMatrix,
    sel: &ModeSelector,
    det: &DetectorSpec,
    attenuations: &[f64],
) -> Result<LinearFit> {
    if attenuations.len() < 3 {
        return Err(invalid(format!("need at least 3 attenuation points, got {}", attenuations.len())));
    }
    if let Some(a) = attenuations.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        return Err(invalid(format!("attenuation {a} outside (0, 1]")));
    }
    let per_photon_mw = pj_to_mw(1.0, det.repetition_rate_hz) / photons_per_pj(det.wavelength_nm);
    let mut xs = Vec::with_capacity(attenuations.len());
    let mut ys = Vec::with_capacity(attenuations.len());
    for &a in attenuations {
        let d = DetectorSpec { efficiency: det.efficiency * a, ..*det };
        let rec = balanced_detection(env, sigma, sel, &d)?;
        xs.push(rec.mean_power_mw);
        ys.push(rec.difference_variance * per_photon_mw);
    }
    Ok(linear_fit(&xs, &ys))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub cutoff: f64,
    pub ratio_db: f64,
    pub mean_power_mw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqueezingCurve {
    pub energy_pj: f64,
    pub points: Vec<CurvePoint>,
}

impl SqueezingCurve {
    /// Deepest point of the curve.
    pub fn minimum(&self) -> CurvePoint {
        *self
            .points
            .iter()
            .min_by(|a, b| a.ratio_db.total_cmp(&b.ratio_db))
            .expect("curve has points")
    }

    /// Maximal runs of consecutive cutoffs with ratio below `threshold_db`,
    /// as (first cutoff, last cutoff).
    pub fn windows_below(&self, threshold_db: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut start: Option<f64> = None;
        let mut last = 0.0;
        for p in &self.points {
            if p.ratio_db < threshold_db {
                start.get_or_insert(p.cutoff);
                last = p.cutoff;
            } else if let Some(s) = start.take() {
                out.push((s, last));
            }
        }
        if let Some(s) = start {
            out.push((s, last));
        }
        out
    }
}

/// Corrected sum/difference ratio against knife-edge cutoff.
pub fn squeezing_scan(
    env: &ComplexEnvelope,
    sigma: &CovarianceMatrix,
    cutoffs: &[f64],
    det: &DetectorSpec,
) -> Result<SqueezingCurve> {
    if cutoffs.len() < 8 {
        return Err(invalid(format!("squeezing scan needs >= 8 cutoffs, got {}", cutoffs.len())));
    }
    let grid = *env.grid();
    let mut sorted = cutoffs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let points = sorted
        .par_iter()
        .map(|&c| {
            let rec = balanced_detection(env, sigma, &knife_edge(c, &grid), det)?;
            Ok(CurvePoint { cutoff: c, ratio_db: rec.ratio_db(), mean_power_mw: rec.mean_power_mw })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SqueezingCurve { energy_pj: crate::pulse::pulse_energy(env), points })
}

/// `count` evenly spaced cutoffs from the lowest grid frequency (all-pass)
/// up to the highest frequency at which the knife edge still transmits at
/// least `min_transmission` of the pulse energy.
pub fn default_cutoffs(env: &ComplexEnvelope, count: usize, min_transmission: f64) -> Vec<f64> {
    let grid = env.grid();
    let (omegas, power) = crate::pulse::spectrum(env).power_spectrum();
    let total: f64 = power.iter().sum();
    let mut upper = grid.omega_min();
    let mut acc = total;
    for (w, p) in omegas.iter().zip(&power) {
        if acc / total < min_transmission {
            break;
        }
        upper = *w;
        acc -= p;
    }
    let lo = grid.omega_min();
    if count < 2 {
        return vec![lo];
    }
    (0..count).map(|i| lo + (upper - lo) * i as f64 / (count - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse::{make_pulse, PulseSpec};

    fn setup() -> (ComplexEnvelope, CovarianceMatrix) {
        let g = TimeGrid::new(64, 4.0).unwrap();
        let env = make_pulse(&PulseSpec::sech_energy(130.0, 15.8), &g).unwrap();
        (env, CovarianceMatrix::vacuum(64))
    }

    #[test]
    fn knife_edge_limits() {
        let g = TimeGrid::new(64, 4.0).unwrap();
        assert_eq!(knife_edge(f64::NEG_INFINITY, &g), ModeSelector::all_pass(64));
        assert_eq!(knife_edge(g.omega_min(), &g), ModeSelector::all_pass(64));
        assert_eq!(knife_edge(f64::INFINITY, &g), ModeSelector::all_block(64));
        let half = knife_edge(0.0, &g);
        assert_eq!(half.weights().iter().sum::<f64>(), 32.0);
        assert!(FilterSpec::new(1e6, &g).is_err());
    }

    #[test]
    fn coherent_sum_equals_difference() {
        let (env, sigma) = setup();
        let det = DetectorSpec { electronic_noise: 1e5, efficiency: 0.7, ..Default::default() };
        for c in [-30.0, -5.0, 0.0, 7.0] {
            let rec = balanced_detection(&env, &sigma, &knife_edge(c, env.grid()), &det).unwrap();
            assert!((rec.corrected_sum - rec.corrected_difference).abs() <= 1e-10 * rec.corrected_difference);
            assert!(!rec.clamped);
        }
    }

    #[test]
    fn negative_correction_is_clamped() {
        let rec = DetectionRecord { corrected_sum: 0.0, ..dummy() };
        assert_eq!(rec.corrected_sum, 0.0);
        let (env, sigma) = setup();
        let det = DetectorSpec::default();
        let rec = balanced_detection(&env, &sigma, &ModeSelector::all_pass(64), &det).unwrap();
        assert!(!rec.clamped);
    }

    fn dummy() -> DetectionRecord {
        DetectionRecord {
            sum_variance: 1.0,
            difference_variance: 1.0,
            mean_photons: 1.0,
            mean_power_mw: 1.0,
            electronic_noise: 0.0,
            corrected_sum: 1.0,
            corrected_difference: 1.0,
            clamped: false,
        }
    }

    #[test]
    fn calibration_needs_three_points() {
        let (env, sigma) = setup();
        let sel = ModeSelector::all_pass(64);
        let err = shot_noise_calibration(&env, &sigma, &sel, &DetectorSpec::default(), &[1.0, 0.5]);
        assert!(err.is_err());
        assert!(shot_noise_calibration(&env, &sigma, &sel, &DetectorSpec::default(), &[1.0, 0.5, 0.0]).is_err());
    }

    #[test]
    fn coherent_calibration_is_linear_through_origin() {
        let (env, sigma) = setup();
        let sel = ModeSelector::all_pass(64);
        let fit = shot_noise_calibration(&env, &sigma, &sel, &DetectorSpec::default(), &[1.0, 0.5, 0.25]).unwrap();
        assert!((fit.r_squared - 1.0).abs() < 1e-9);
        assert!(fit.intercept.abs() < 1e-9);
        assert!((fit.slope - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scan_needs_eight_cutoffs_and_vacuum_is_flat() {
        let (env, sigma) = setup();
        let det = DetectorSpec::default();
        assert!(squeezing_scan(&env, &sigma, &[0.0; 7], &det).is_err());
        let cutoffs = default_cutoffs(&env, 16, 0.05);
        let curve = squeezing_scan(&env, &sigma, &cutoffs, &det).unwrap();
        assert!(curve.points.iter().all(|p| p.ratio_db.abs() < 1e-9));
        assert!(curve.points.windows(2).all(|w| w[0].cutoff <= w[1].cutoff));
        assert!(curve.windows_below(-1e-9).is_empty());
    }

    #[test]
    fn windows_are_contiguous_runs() {
        let mk = |v: &[f64]| SqueezingCurve {
            energy_pj: 1.0,
            points: v
                .iter()
                .enumerate()
                .map(|(i, &r)| CurvePoint { cutoff: i as f64, ratio_db: r, mean_power_mw: 1.0 })
                .collect(),
        };
        let c = mk(&[0.0, -1.5, -2.0, 0.1, -1.2, 0.0, -3.0]);
        assert_eq!(c.windows_below(-1.0), vec![(1.0, 2.0), (4.0, 4.0), (6.0, 6.0)]);
        assert_eq!(c.minimum().cutoff, 6.0);
    }
}
