//! Entanglement-based key distribution with correlation sifting.
//!
//! A slot is one basis-choice frame: Alice and Bob each pick amplitude or
//! phase once per slot and measure `pulses_per_slot` consecutive pulse pairs
//! in that basis. Bob discloses his values (not his basis); Alice correlates
//! them with her own values over the slot and keeps the slot when the
//! correlation matches what her basis predicts. Matched slots yield one key
//! bit each: amplitude → 1, phase → 0.

use std::fmt;

use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::entanglement::TwoModeState;
use crate::error::{invalid, Error, Result};

pub const DEFAULT_PULSES_PER_SLOT: usize = 256;
/// Matched slots needed per basis before the channel can be judged.
pub const MIN_MATCHED_SLOTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSpec {
    pub transmittance: f64,
    /// Added to both quadrature variances of Bob's mode, vacuum units.
    pub excess_noise: f64,
    /// Fraction left to Bob by an eavesdropper's beamsplitter (1 = no attack).
    pub tap: f64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self { transmittance: 1.0, excess_noise: 0.0, tap: 1.0 }
    }
}

impl ChannelSpec {
    pub fn new(transmittance: f64, excess_noise: f64) -> Result<Self> {
        let ch = Self { transmittance, excess_noise, tap: 1.0 };
        ch.validate()?;
        Ok(ch)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.transmittance) {
            return Err(invalid(format!("transmittance must lie in [0, 1], got {}", self.transmittance)));
        }
        if !(0.0..=1.0).contains(&self.tap) {
            return Err(invalid(format!("attack tap must lie in [0, 1], got {}", self.tap)));
        }
        if !(self.excess_noise.is_finite() && self.excess_noise >= 0.0) {
            return Err(invalid(format!("excess noise must be >= 0, got {}", self.excess_noise)));
        }
        Ok(())
    }

    /// Transmittance seen by Bob, including any tap.
    pub fn effective_transmittance(&self) -> f64 {
        self.transmittance * self.tap
    }

    /// The same channel without the eavesdropper.
    pub fn without_attack(&self) -> Self {
        Self { tap: 1.0, ..*self }
    }

    /// Bob's mode after loss, tap and excess noise.
    pub fn apply(&self, pair: &TwoModeState) -> Result<TwoModeState> {
        self.validate()?;
        let mut out = pair.with_loss_on_b(self.effective_transmittance())?;
        for k in 2..4 {
            out.covariance[(k, k)] += self.excess_noise;
        }
        Ok(out)
    }

    /// Covariance of the mode diverted to the eavesdropper (Alice's mode A
    /// and Eve's mode), for diagnostics.
    pub fn eve_state(&self, pair: &TwoModeState) -> Result<TwoModeState> {
        self.validate()?;
        let before_tap = pair.with_loss_on_b(self.transmittance)?;
        before_tap.with_loss_on_b(1.0 - self.tap)
    }
}

/// Splits off `1 − tap` of the channel with a passive beamsplitter. Taps
/// compose multiplicatively.
pub fn beamsplit_attack(ch: &ChannelSpec, tap: f64) -> Result<ChannelSpec> {
    if !(0.0..=1.0).contains(&tap) {
        return Err(invalid(format!("attack tap must lie in [0, 1], got {tap}")));
    }
    Ok(ChannelSpec { tap: ch.tap * tap, ..*ch })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Amplitude,
    Phase,
}

impl Basis {
    pub fn bit(self) -> u8 {
        match self {
            Basis::Amplitude => 1,
            Basis::Phase => 0,
        }
    }

    fn index(self) -> usize {
        match self {
            Basis::Amplitude => 0,
            Basis::Phase => 1,
        }
    }

    fn from_coin(heads: bool) -> Self {
        if heads {
            Basis::Amplitude
        } else {
            Basis::Phase
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Amplitude => "amplitude",
            Basis::Phase => "phase",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionSpec {
    pub n_slots: usize,
    pub pulses_per_slot: usize,
    pub seed: u64,
}

impl Default for SessionSpec {
    fn default() -> Self {
        Self { n_slots: 10_000, pulses_per_slot: DEFAULT_PULSES_PER_SLOT, seed: 0 }
    }
}

impl SessionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_slots == 0 {
            return Err(invalid("n_slots must be >= 1"));
        }
        if self.pulses_per_slot < 2 {
            return Err(invalid("pulses_per_slot must be >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub index: usize,
    pub alice_basis: Basis,
    pub bob_basis: Basis,
    pub alice_values: Vec<f64>,
    pub bob_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub spec: SessionSpec,
    pub channel: ChannelSpec,
    pub slots: Vec<Slot>,
    /// Correlation Alice expects on a matched slot over the channel without
    /// an eavesdropper, indexed by basis (amplitude, phase).
    pub expected_correlation: [f64; 2],
}

impl SessionRecord {
    pub fn matched_fraction(&self) -> f64 {
        let m = self.slots.iter().filter(|s| s.alice_basis == s.bob_basis).count();
        m as f64 / self.slots.len() as f64
    }
}

fn quadrature_index(party_offset: usize, b: Basis) -> usize {
    party_offset + b.index()
}

fn correlation_2x2(c: &Matrix4<f64>, i: usize, j: usize) -> f64 {
    let d = (c[(i, i)] * c[(j, j)]).sqrt();
    if d > 0.0 {
        c[(i, j)] / d
    } else {
        0.0
    }
}

/// Seeded Monte-Carlo session over the channel.
pub fn run_session(pair: &TwoModeState, ch: &ChannelSpec, spec: &SessionSpec) -> Result<SessionRecord> {
    spec.validate()?;
    ch.validate()?;
    let received = ch.apply(pair)?;
    let clean = ch.without_attack().apply(pair)?.covariance;
    let expected_correlation = [correlation_2x2(&clean, 0, 2), correlation_2x2(&clean, 1, 3)];
    let c = received.covariance;
    // Cholesky factors of each (Alice quadrature, Bob quadrature) marginal
    let mut factors = [[(0.0, 0.0, 0.0); 2]; 2];
    for a in [Basis::Amplitude, Basis::Phase] {
        for b in [Basis::Amplitude, Basis::Phase] {
            let (i, j) = (quadrature_index(0, a), quadrature_index(2, b));
            let (va, vb, cov) = (c[(i, i)], c[(j, j)], c[(i, j)]);
            if !(va > 0.0) {
                return Err(Error::Numerical { step: 0, reason: "Alice's quadrature has zero variance".into() });
            }
            let l11 = va.sqrt();
            let l21 = cov / l11;
            let l22 = (vb - l21 * l21).max(0.0).sqrt();
            factors[a.index()][b.index()] = (l11, l21, l22);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.pulses_per_slot;
    let slots = (0..spec.n_slots)
        .map(|index| {
            let alice_basis = Basis::from_coin(rng.gen::<bool>());
            let bob_basis = Basis::from_coin(rng.gen::<bool>());
            let (l11, l21, l22) = factors[alice_basis.index()][bob_basis.index()];
            let mut alice_values = Vec::with_capacity(n);
            let mut bob_values = Vec::with_capacity(n);
            for _ in 0..n {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                alice_values.push(l11 * z1);
                bob_values.push(l21 * z1 + l22 * z2);
            }
            Slot { index, alice_basis, bob_basis, alice_values, bob_values }
        })
        .collect();
    Ok(SessionRecord { spec: *spec, channel: *ch, slots, expected_correlation })
}

/// Pearson correlation of the first `n` samples.
fn sample_correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxx += da * da;
        syy += db * db;
        sxy += da * db;
    }
    if sxx > 0.0 && syy > 0.0 {
        sxy / (sxx * syy).sqrt()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiftResult {
    pub matched_slots: Vec<usize>,
    pub alice_key: Vec<u8>,
    pub bob_key: Vec<u8>,
    /// Per-slot sample correlation over the decision block.
    pub block_correlations: Vec<f64>,
    /// Acceptance threshold on |correlation| per basis (amplitude, phase).
    pub thresholds: [f64; 2],
    pub sift_rate: f64,
    /// Why no slot was accepted, when that happens.
    pub diagnostic: Option<String>,
}

impl SiftResult {
    pub fn key_length(&self) -> usize {
        self.alice_key.len()
    }

    pub fn keys_agree(&self) -> bool {
        self.alice_key == self.bob_key
    }
}

/// Alice's correlation-based sifting over the first `block_size` pulses of
/// every slot. The threshold is half the expected matched correlation,
/// raised to five standard errors of a null correlation when that is larger.
pub fn sift_key(rec: &SessionRecord, block_size: usize) -> Result<SiftResult> {
    if block_size < 16 {
        return Err(invalid(format!("block size must be >= 16, got {block_size}")));
    }
    if block_size > rec.spec.pulses_per_slot {
        return Err(invalid(format!(
            "block size {block_size} exceeds the {} pulses per slot",
            rec.spec.pulses_per_slot
        )));
    }
    let floor = 5.0 / (block_size as f64).sqrt();
    let thresholds = rec.expected_correlation.map(|r| (0.5 * r.abs()).max(floor));
    let mut matched_slots = Vec::new();
    let mut alice_key = Vec::new();
    let mut bob_key = Vec::new();
    let mut block_correlations = Vec::with_capacity(rec.slots.len());
    for slot in &rec.slots {
        let r = sample_correlation(&slot.alice_values[..block_size], &slot.bob_values[..block_size]);
        block_correlations.push(r);
        let k = slot.alice_basis.index();
        let expected = rec.expected_correlation[k];
        if expected != 0.0 && r.signum() == expected.signum() && r.abs() > thresholds[k] {
            matched_slots.push(slot.index);
            alice_key.push(slot.alice_basis.bit());
            bob_key.push(slot.bob_basis.bit());
        }
    }
    let sift_rate = matched_slots.len() as f64 / rec.slots.len() as f64;
    let diagnostic = matched_slots.is_empty().then(|| {
        format!(
            "no slot exceeded the correlation thresholds {:.3}/{:.3} (expected {:.3}/{:.3})",
            thresholds[0], thresholds[1], rec.expected_correlation[0], rec.expected_correlation[1]
        )
    });
    Ok(SiftResult { matched_slots, alice_key, bob_key, block_correlations, thresholds, sift_rate, diagnostic })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EavesdropReport {
    /// Set when either conditional variance exceeds the threshold.
    pub flag: bool,
    /// The measured correlations are statistically indistinguishable from
    /// zero in some basis: there is nothing to protect.
    pub unusable: bool,
    /// Estimated V(X_B|X_A).
    pub cond_var_x: f64,
    /// Estimated V(P_B|P_A).
    pub cond_var_p: f64,
    pub matched_amplitude: usize,
    pub matched_phase: usize,
}

/// Conditional-variance test on the slots where both parties used the same
/// basis. Fewer than 100 such slots per basis is inconclusive.
pub fn detect_eavesdropper(rec: &SessionRecord, threshold: f64) -> Result<EavesdropReport> {
    let mut stats = [Moments::default(), Moments::default()];
    let mut counts = [0usize; 2];
    for slot in rec.slots.iter().filter(|s| s.alice_basis == s.bob_basis) {
        let k = slot.alice_basis.index();
        counts[k] += 1;
        for (a, b) in slot.alice_values.iter().zip(&slot.bob_values) {
            stats[k].push(*a, *b);
        }
    }
    if counts.iter().any(|&c| c < MIN_MATCHED_SLOTS) {
        return Err(Error::Inconclusive(format!(
            "need {MIN_MATCHED_SLOTS} matched slots per basis, got {} amplitude / {} phase",
            counts[0], counts[1]
        )));
    }
    let cond = |m: &Moments| m.var_y() - m.cov() * m.cov() / m.var_x();
    let (cond_var_x, cond_var_p) = (cond(&stats[0]), cond(&stats[1]));
    let unusable = stats.iter().any(|m| {
        let r = m.cov() / (m.var_x() * m.var_y()).sqrt();
        r.abs() < 5.0 / (m.n as f64).sqrt()
    });
    Ok(EavesdropReport {
        flag: cond_var_x > threshold || cond_var_p > threshold,
        unusable,
        cond_var_x,
        cond_var_p,
        matched_amplitude: counts[0],
        matched_phase: counts[1],
    })
}

/// Running first and second moments of (Alice, Bob) samples.
#[derive(Debug, Default, Clone, Copy)]
struct Moments {
    n: usize,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl Moments {
    fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
    }

    fn var_x(&self) -> f64 {
        let n = self.n as f64;
        (self.sxx - self.sx * self.sx / n) / (n - 1.0)
    }

    fn var_y(&self) -> f64 {
        let n = self.n as f64;
        (self.syy - self.sy * self.sy / n) / (n - 1.0)
    }

    fn cov(&self) -> f64 {
        let n = self.n as f64;
        (self.sxy - self.sx * self.sy / n) / (n - 1.0)
    }
}

/// Analytic V(X_B|X_A), V(P_B|P_A) of the state Bob receives.
pub fn analytic_conditional_variances(pair: &TwoModeState, ch: &ChannelSpec) -> Result<(f64, f64)> {
    let q = crate::entanglement::quadrature_correlations(&ch.apply(pair)?)?;
    Ok((q.cond_var_x, q.cond_var_p))
}

/// Key bits per second: repetition rate × sift rate × (1 − overhead).
pub fn raw_bit_rate(repetition_rate_hz: f64, sift_rate: f64, overhead: f64) -> Result<f64> {
    if !(repetition_rate_hz >= 0.0 && sift_rate >= 0.0) {
        return Err(invalid("rates must be >= 0"));
    }
    if sift_rate > 1.0 {
        return Err(invalid(format!("sift rate must be <= 1, got {sift_rate}")));
    }
    if !(0.0..=1.0).contains(&overhead) {
        return Err(invalid(format!("overhead must lie in [0, 1], got {overhead}")));
    }
    Ok(repetition_rate_hz * (sift_rate * (1.0 - overhead)))
}

/// Key bits per second for a combined efficiency (sift rate net of overhead).
pub fn raw_bit_rate_from_efficiency(repetition_rate_hz: f64, efficiency: f64) -> Result<f64> {
    raw_bit_rate(repetition_rate_hz, efficiency, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entanglement::{combine_on_beamsplitter, DEFAULT_PHASE};
    use crate::nolm::SingleModeState;
    use num_complex::Complex64;

    fn squeezed_pair() -> TwoModeState {
        let a = SingleModeState::amplitude_squeezed(Complex64::new(10.0, 0.0), 0.5);
        combine_on_beamsplitter(&a, &a, DEFAULT_PHASE)
    }

    fn spec(n_slots: usize, seed: u64) -> SessionSpec {
        SessionSpec { n_slots, pulses_per_slot: 64, seed }
    }

    #[test]
    fn attack_blends_bob_mode() {
        let pair = squeezed_pair();
        let ch = beamsplit_attack(&ChannelSpec::default(), 0.5).unwrap();
        let out = ch.apply(&pair).unwrap();
        let want_b = pair.mode_b() * 0.5 + nalgebra::Matrix2::identity() * 0.5;
        assert!((out.mode_b() - want_b).abs().max() < 1e-14);
        assert!((out.cross() - pair.cross() * 0.5f64.sqrt()).abs().max() < 1e-14);
        assert_eq!(beamsplit_attack(&ChannelSpec::default(), 1.0).unwrap(), ChannelSpec::default());
        let taps = beamsplit_attack(&ch, 0.5).unwrap();
        assert_eq!(taps.effective_transmittance(), 0.25);
        assert!(beamsplit_attack(&ch, 1.5).is_err());
    }

    #[test]
    fn full_tap_leaves_bob_vacuum() {
        let pair = squeezed_pair();
        let out = beamsplit_attack(&ChannelSpec::default(), 0.0).unwrap().apply(&pair).unwrap();
        assert_eq!(out.mode_b(), nalgebra::Matrix2::identity());
        assert_eq!(out.cross(), nalgebra::Matrix2::zeros());
    }

    #[test]
    fn eve_holds_the_tapped_fraction() {
        let pair = squeezed_pair();
        let ch = beamsplit_attack(&ChannelSpec::default(), 0.5).unwrap();
        let eve = ch.eve_state(&pair).unwrap();
        let bob = ch.apply(&pair).unwrap();
        assert!((eve.mode_b() - bob.mode_b()).abs().max() < 1e-14);
    }

    #[test]
    fn sessions_are_deterministic() {
        let pair = squeezed_pair();
        let a = run_session(&pair, &ChannelSpec::default(), &spec(50, 7)).unwrap();
        let b = run_session(&pair, &ChannelSpec::default(), &spec(50, 7)).unwrap();
        let c = run_session(&pair, &ChannelSpec::default(), &spec(50, 8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(sift_key(&a, 32).unwrap(), sift_key(&b, 32).unwrap());
    }

    #[test]
    fn matched_amplitude_slots_anticorrelate() {
        let rec = run_session(&squeezed_pair(), &ChannelSpec::default(), &spec(200, 3)).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for s in rec.slots.iter().filter(|s| s.alice_basis == Basis::Amplitude && s.bob_basis == Basis::Amplitude) {
            x.extend_from_slice(&s.alice_values);
            y.extend_from_slice(&s.bob_values);
        }
        assert!(sample_correlation(&x, &y) < 0.0);
    }

    #[test]
    fn clean_sifting_gives_equal_keys() {
        let spec = SessionSpec { n_slots: 2000, pulses_per_slot: 256, seed: 11 };
        let rec = run_session(&squeezed_pair(), &ChannelSpec::default(), &spec).unwrap();
        let sift = sift_key(&rec, 256).unwrap();
        assert!(sift.keys_agree());
        assert!((sift.sift_rate - 0.5).abs() < 0.05, "{}", sift.sift_rate);
        assert!(sift.diagnostic.is_none());
    }

    #[test]
    fn coherent_pair_does_not_sift() {
        let a = SingleModeState::coherent(Complex64::new(10.0, 0.0));
        let pair = combine_on_beamsplitter(&a, &a, DEFAULT_PHASE);
        let rec = run_session(&pair, &ChannelSpec::default(), &spec(500, 5)).unwrap();
        let sift = sift_key(&rec, 64).unwrap();
        assert_eq!(sift.key_length(), 0);
        assert!(sift.diagnostic.is_some());
        let report = detect_eavesdropper(&rec, 0.85).unwrap();
        assert!(report.unusable && report.flag);
    }

    #[test]
    fn sift_rejects_bad_blocks() {
        let rec = run_session(&squeezed_pair(), &ChannelSpec::default(), &spec(10, 1)).unwrap();
        assert!(sift_key(&rec, 8).is_err());
        assert!(sift_key(&rec, 65).is_err());
    }

    #[test]
    fn few_slots_are_inconclusive() {
        let rec = run_session(&squeezed_pair(), &ChannelSpec::default(), &spec(100, 1)).unwrap();
        assert!(matches!(detect_eavesdropper(&rec, 0.85), Err(Error::Inconclusive(_))));
    }

    #[test]
    fn analytic_conditionals_clean_and_attacked() {
        let pair = squeezed_pair();
        let (x, p) = analytic_conditional_variances(&pair, &ChannelSpec::default()).unwrap();
        assert!((x - 0.8).abs() < 1e-12 && (p - 0.8).abs() < 1e-12);
        let ch = beamsplit_attack(&ChannelSpec::default(), 0.5).unwrap();
        let (x, p) = analytic_conditional_variances(&pair, &ch).unwrap();
        assert!((x - 0.9).abs() < 1e-12 && (p - 0.9).abs() < 1e-12);
        let mut last = 0.0;
        for k in 0..=20 {
            let tap = 1.0 - k as f64 / 20.0;
            let ch = beamsplit_attack(&ChannelSpec::default(), tap).unwrap();
            let (x, _) = analytic_conditional_variances(&pair, &ch).unwrap();
            assert!(x >= last - 1e-15);
            last = x;
        }
    }

    #[test]
    fn rate_anchors() {
        assert_eq!(raw_bit_rate_from_efficiency(82e6, 0.1).unwrap(), 8.2e6);
        assert_eq!(raw_bit_rate_from_efficiency(100e9, 0.1).unwrap(), 1e10);
        assert_eq!(raw_bit_rate(82e6, 0.0, 0.2).unwrap(), 0.0);
        assert!(raw_bit_rate(-1.0, 0.5, 0.0).is_err());
        assert!(raw_bit_rate(1.0, 0.5, 1.5).is_err());
    }

    #[test]
    fn channel_validation() {
        assert!(ChannelSpec::new(1.2, 0.0).is_err());
        assert!(ChannelSpec::new(0.5, -0.1).is_err());
        assert!(run_session(&squeezed_pair(), &ChannelSpec::default(), &spec(0, 1)).is_err());
    }
}
