//! C ABI over `kerr-squeeze`.
//!
//! Objects are opaque handles created by `ks_*_new`/`ks_*_run` functions and
//! released with the matching `ks_*_free`. Every fallible call returns a
//! status code (`KS_OK` on success); the message of the last failure on the
//! calling thread is available from `ks_last_error_message`.

#![allow(clippy::missing_safety_doc, clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use kerr_squeeze::detection::{knife_edge, squeezing_scan, DetectorSpec};
use kerr_squeeze::entanglement::{combine_on_beamsplitter, DEFAULT_PHASE};
use kerr_squeeze::linearization::{filtered_noise, output_covariance, propagate_with_noise, CovarianceMatrix};
use kerr_squeeze::nlse::{propagate, SolverConfig};
use kerr_squeeze::nolm::SingleModeState;
use kerr_squeeze::pulse::{make_pulse, pulse_energy, ComplexEnvelope, FibreSpec, PulseShape, PulseSpec, TimeGrid};
use kerr_squeeze::qkd::{self, ChannelSpec, SessionRecord, SessionSpec};
use kerr_squeeze::scenario::{parse_config, run_scenario, Overrides, Registry};
use kerr_squeeze::Error;
use num_complex::Complex64;

pub const KS_OK: i32 = 0;
pub const KS_ERR_NULL_POINTER: i32 = 1;
pub const KS_ERR_INVALID_INPUT: i32 = 2;
pub const KS_ERR_WINDOW_TOO_SMALL: i32 = 3;
pub const KS_ERR_SPECTRAL_CLIPPING: i32 = 4;
pub const KS_ERR_NUMERICAL: i32 = 5;
pub const KS_ERR_UNDEFINED: i32 = 6;
pub const KS_ERR_GRID_TOO_LARGE: i32 = 7;
pub const KS_ERR_INCONCLUSIVE: i32 = 8;
pub const KS_ERR_PANIC: i32 = 99;

pub const KS_SHAPE_SECH: i32 = 0;
pub const KS_SHAPE_GAUSSIAN: i32 = 1;

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(msg.bytes().filter(|b| *b != 0));
    });
}

fn status_of(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_) => KS_ERR_INVALID_INPUT,
        Error::WindowTooSmall { .. } => KS_ERR_WINDOW_TOO_SMALL,
        Error::SpectralClipping { .. } => KS_ERR_SPECTRAL_CLIPPING,
        Error::Numerical { .. } => KS_ERR_NUMERICAL,
        Error::Undefined(_) => KS_ERR_UNDEFINED,
        Error::GridTooLarge(_) => KS_ERR_GRID_TOO_LARGE,
        Error::Inconclusive(_) => KS_ERR_INCONCLUSIVE,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (i32, String)>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KS_OK,
        Ok(Err((code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            KS_ERR_PANIC
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (i32, String)>;
}

impl<T> IntoFfi<T> for kerr_squeeze::Result<T> {
    fn ffi(self) -> Result<T, (i32, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (i32, String) {
    (KS_ERR_NULL_POINTER, format!("{what} is null"))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, (i32, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (i32, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (i32, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], (i32, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, (i32, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (KS_ERR_INVALID_INPUT, format!("{what} is not valid UTF-8")))
}

/// Length in bytes of the last error message on this thread (0 if none).
#[no_mangle]
pub extern "C" fn ks_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies the last error message, NUL-terminated and truncated to `len`
/// bytes including the terminator. Returns the number of bytes written
/// without the terminator.
#[no_mangle]
pub unsafe extern "C" fn ks_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let n = e.len().min(len - 1);
        ptr::copy_nonoverlapping(e.as_ptr() as *const c_char, buf, n);
        *buf.add(n) = 0;
        n
    })
}

/// Fibre parameters: β₂ in ps²/m, γ in 1/(W·m), length in m, loss in 1/m.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsFibre {
    pub beta2: f64,
    pub gamma: f64,
    pub length: f64,
    pub loss: f64,
}

impl From<KsFibre> for FibreSpec {
    fn from(f: KsFibre) -> Self {
        FibreSpec { beta2: f.beta2, gamma: f.gamma, length: f.length, loss: f.loss }
    }
}

/// The calibrated fibre (9 pJ fundamental soliton at 130 fs) of given length.
#[no_mangle]
pub extern "C" fn ks_fibre_calibrated(length: f64) -> KsFibre {
    let f = FibreSpec::calibrated(length);
    KsFibre { beta2: f.beta2, gamma: f.gamma, length: f.length, loss: f.loss }
}

/// Opaque complex envelope on a time grid.
pub struct KsEnvelope(ComplexEnvelope);

/// Opaque mean field plus fluctuation covariance.
pub struct KsQuantumState {
    env: ComplexEnvelope,
    sigma: CovarianceMatrix,
}

/// Opaque key-distribution session record.
pub struct KsSession(SessionRecord);

/// Builds an unchirped pulse of `energy_pj` with intensity FWHM `fwhm_fs`.
#[no_mangle]
pub unsafe extern "C" fn ks_pulse_new(
    shape: i32,
    fwhm_fs: f64,
    energy_pj: f64,
    n_samples: usize,
    window_ps: f64,
    out_env: *mut *mut KsEnvelope,
) -> i32 {
    guard(|| {
        let out_env = out(out_env, "out_env")?;
        let shape = match shape {
            KS_SHAPE_SECH => PulseShape::Sech,
            KS_SHAPE_GAUSSIAN => PulseShape::Gaussian,
            s => return Err((KS_ERR_INVALID_INPUT, format!("unknown pulse shape {s}"))),
        };
        let grid = TimeGrid::new(n_samples, window_ps).ffi()?;
        let spec = PulseSpec { shape, ..PulseSpec::sech_energy(fwhm_fs, energy_pj) };
        let env = make_pulse(&spec, &grid).ffi()?;
        *out_env = Box::into_raw(Box::new(KsEnvelope(env)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ks_envelope_free(env: *mut KsEnvelope) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Number of time samples (0 for a null handle).
#[no_mangle]
pub unsafe extern "C" fn ks_envelope_len(env: *const KsEnvelope) -> usize {
    env.as_ref().map_or(0, |e| e.0.samples().len())
}

/// Pulse energy in pJ (NaN for a null handle).
#[no_mangle]
pub unsafe extern "C" fn ks_envelope_energy(env: *const KsEnvelope) -> f64 {
    env.as_ref().map_or(f64::NAN, |e| pulse_energy(&e.0))
}

/// Copies the samples (√W) into `re` and `im`, each `len` long; `len` must
/// equal the envelope length.
#[no_mangle]
pub unsafe extern "C" fn ks_envelope_samples(
    env: *const KsEnvelope,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> i32 {
    guard(|| {
        let env = obj(env, "env")?;
        let s = env.0.samples();
        if len != s.len() {
            return Err((KS_ERR_INVALID_INPUT, format!("buffer length {len} != envelope length {}", s.len())));
        }
        let re = slice_mut(re, len, "re")?;
        let im = slice_mut(im, len, "im")?;
        for (k, a) in s.iter().enumerate() {
            re[k] = a.re;
            im[k] = a.im;
        }
        Ok(())
    })
}

fn solver(max_phase: f64, max_step: f64) -> Result<SolverConfig, (i32, String)> {
    let cfg = SolverConfig { max_nonlinear_phase_per_step: max_phase, max_step };
    cfg.validate().ffi()?;
    Ok(cfg)
}

/// Classical split-step propagation through `fibre`.
#[no_mangle]
pub unsafe extern "C" fn ks_propagate(
    env: *const KsEnvelope,
    fibre: *const KsFibre,
    max_phase_per_step: f64,
    max_step: f64,
    out_env: *mut *mut KsEnvelope,
) -> i32 {
    guard(|| {
        let env = obj(env, "env")?;
        let fibre = FibreSpec::from(*obj(fibre, "fibre")?);
        let out_env = out(out_env, "out_env")?;
        let cfg = solver(max_phase_per_step, max_step)?;
        let result = propagate(&env.0, &fibre, &cfg).ffi()?;
        *out_env = Box::into_raw(Box::new(KsEnvelope(result)));
        Ok(())
    })
}

/// Propagation with linearized vacuum fluctuations.
#[no_mangle]
pub unsafe extern "C" fn ks_propagate_quantum(
    env: *const KsEnvelope,
    fibre: *const KsFibre,
    max_phase_per_step: f64,
    max_step: f64,
    out_state: *mut *mut KsQuantumState,
) -> i32 {
    guard(|| {
        let env = obj(env, "env")?;
        let fibre = FibreSpec::from(*obj(fibre, "fibre")?);
        let out_state = out(out_state, "out_state")?;
        let cfg = solver(max_phase_per_step, max_step)?;
        let (result, map) = propagate_with_noise(&env.0, &fibre, &cfg).ffi()?;
        let sigma = output_covariance(&map);
        *out_state = Box::into_raw(Box::new(KsQuantumState { env: result, sigma }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ks_quantum_free(state: *mut KsQuantumState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Photon-number noise ratio (1 = shot noise) behind a knife edge at
/// `cutoff` rad/ps; pass -INFINITY for the unfiltered beam.
#[no_mangle]
pub unsafe extern "C" fn ks_quantum_noise_ratio(state: *const KsQuantumState, cutoff: f64, ratio: *mut f64) -> i32 {
    guard(|| {
        let s = obj(state, "state")?;
        let ratio = out(ratio, "ratio")?;
        let sel = knife_edge(cutoff, s.env.grid());
        *ratio = filtered_noise(&s.env, &s.sigma, &sel).ffi()?.ratio;
        Ok(())
    })
}

/// Knife-edge scan with an ideal detector; writes one dB value per cutoff
/// in ascending cutoff order (`n >= 8`).
#[no_mangle]
pub unsafe extern "C" fn ks_squeezing_scan(
    state: *const KsQuantumState,
    cutoffs: *const f64,
    n: usize,
    ratios_db: *mut f64,
) -> i32 {
    guard(|| {
        let s = obj(state, "state")?;
        let cutoffs = slice(cutoffs, n, "cutoffs")?;
        let ratios = slice_mut(ratios_db, n, "ratios_db")?;
        let curve = squeezing_scan(&s.env, &s.sigma, cutoffs, &DetectorSpec::default()).ffi()?;
        for (r, p) in ratios.iter_mut().zip(&curve.points) {
            *r = p.ratio_db;
        }
        Ok(())
    })
}

/// Seeded session on a pair made from two amplitude-squeezed inputs with
/// amplitude variance `amplitude_variance`, interfered at π/2.
#[no_mangle]
pub unsafe extern "C" fn ks_session_run(
    amplitude_variance: f64,
    transmittance: f64,
    excess_noise: f64,
    tap: f64,
    n_slots: usize,
    pulses_per_slot: usize,
    seed: u64,
    out_session: *mut *mut KsSession,
) -> i32 {
    guard(|| {
        let out_session = out(out_session, "out_session")?;
        if !(amplitude_variance > 0.0) {
            return Err((KS_ERR_INVALID_INPUT, "amplitude_variance must be > 0".into()));
        }
        let a = SingleModeState::amplitude_squeezed(Complex64::new(1.0, 0.0), amplitude_variance);
        let pair = combine_on_beamsplitter(&a, &a, DEFAULT_PHASE);
        let ch = ChannelSpec { transmittance, excess_noise, tap };
        let rec = qkd::run_session(&pair, &ch, &SessionSpec { n_slots, pulses_per_slot, seed }).ffi()?;
        *out_session = Box::into_raw(Box::new(KsSession(rec)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ks_session_free(session: *mut KsSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Fraction of slots in which both parties chose the same basis.
#[no_mangle]
pub unsafe extern "C" fn ks_session_matched_fraction(session: *const KsSession) -> f64 {
    session.as_ref().map_or(f64::NAN, |s| s.0.matched_fraction())
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KsSiftSummary {
    pub sift_rate: f64,
    pub key_length: usize,
    /// 1 when Alice's and Bob's keys are identical.
    pub keys_agree: i32,
}

#[no_mangle]
pub unsafe extern "C" fn ks_sift(session: *const KsSession, block_size: usize, summary: *mut KsSiftSummary) -> i32 {
    guard(|| {
        let s = obj(session, "session")?;
        let summary = out(summary, "summary")?;
        let r = qkd::sift_key(&s.0, block_size).ffi()?;
        *summary = KsSiftSummary {
            sift_rate: r.sift_rate,
            key_length: r.key_length(),
            keys_agree: i32::from(r.keys_agree()),
        };
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KsEavesdropReport {
    pub flag: i32,
    pub unusable: i32,
    pub cond_var_x: f64,
    pub cond_var_p: f64,
}

/// Conditional-variance test; `KS_ERR_INCONCLUSIVE` when fewer than 100
/// matched slots per basis are available.
#[no_mangle]
pub unsafe extern "C" fn ks_detect_eavesdropper(
    session: *const KsSession,
    threshold: f64,
    report: *mut KsEavesdropReport,
) -> i32 {
    guard(|| {
        let s = obj(session, "session")?;
        let report = out(report, "report")?;
        let r = qkd::detect_eavesdropper(&s.0, threshold).ffi()?;
        *report = KsEavesdropReport {
            flag: i32::from(r.flag),
            unusable: i32::from(r.unusable),
            cond_var_x: r.cond_var_x,
            cond_var_p: r.cond_var_p,
        };
        Ok(())
    })
}

/// repetition rate × sift rate × (1 − overhead), bits/s.
#[no_mangle]
pub unsafe extern "C" fn ks_raw_bit_rate(repetition_rate_hz: f64, sift_rate: f64, overhead: f64, rate: *mut f64) -> i32 {
    guard(|| {
        let rate = out(rate, "rate")?;
        *rate = qkd::raw_bit_rate(repetition_rate_hz, sift_rate, overhead).ffi()?;
        Ok(())
    })
}

/// Runs a built-in scenario by name, or every scenario in a TOML config
/// file, writing into `out_dir/<name>/`.
#[no_mangle]
pub unsafe extern "C" fn ks_run_scenario(name_or_path: *const c_char, out_dir: *const c_char) -> i32 {
    guard(|| {
        let target = string(name_or_path, "name_or_path")?;
        let out_dir = Path::new(string(out_dir, "out_dir")?);
        let configs = if Path::new(target).is_file() {
            let text = std::fs::read_to_string(target).map_err(|e| (KS_ERR_INVALID_INPUT, format!("{target}: {e}")))?;
            parse_config(&text, target).map_err(|e| (KS_ERR_INVALID_INPUT, e.to_string()))?.scenario
        } else {
            let reg = Registry::builtin();
            let entry = reg
                .get(target)
                .ok_or_else(|| (KS_ERR_INVALID_INPUT, format!("unknown scenario '{target}'")))?;
            vec![entry.config.clone()]
        };
        for c in configs {
            let resolved = c.resolve(&Overrides::default()).ffi()?;
            run_scenario(&resolved, out_dir).ffi()?;
        }
        Ok(())
    })
}
