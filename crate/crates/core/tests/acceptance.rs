//! Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the lines always show.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use kerr_squeeze::detection::{
    balanced_detection, default_cutoffs, knife_edge, shot_noise_calibration, squeezing_scan, DetectorSpec,
};
use kerr_squeeze::entanglement::{combine_on_beamsplitter, duan_criterion, DEFAULT_PHASE, DUAN_BOUND};
use kerr_squeeze::linearization::{
    output_covariance, photon_number_noise, propagate_with_noise, ModeSelector, SymplecticMap,
};
use kerr_squeeze::nlse::{propagate, SolverConfig};
use kerr_squeeze::nolm::{effective_single_mode, nolm_output, nolm_port_map, NolmSpec, SingleModeState};
use kerr_squeeze::pulse::{
    fwhm_bandlimited, make_pulse, ComplexEnvelope, FibreSpec, PulseSpec, TimeGrid, GAUSSIAN_FWHM_FACTOR,
    SECH_FWHM_FACTOR,
};
use kerr_squeeze::qkd::{
    analytic_conditional_variances, beamsplit_attack, detect_eavesdropper, raw_bit_rate, run_session, sift_key,
    ChannelSpec, SessionSpec,
};
use kerr_squeeze::scenario::{parse_config, run_scenario, Overrides, Registry, ScenarioConfig};
use nalgebra::Matrix2;
use num_complex::Complex64;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn quantum_solver() -> SolverConfig {
    SolverConfig { max_nonlinear_phase_per_step: 0.01, max_step: 1e-2 }
}

fn quantum_grid() -> TimeGrid {
    TimeGrid::new(256, 5.0).unwrap()
}

fn c1_soliton() -> Outcome {
    let fibre = FibreSpec::calibrated(1.0);
    let t0 = 0.130 / SECH_FWHM_FACTOR;
    let ld = t0 * t0 / fibre.beta2.abs();
    let grid = TimeGrid::default_classical();
    let input = make_pulse(&PulseSpec::sech_energy(130.0, 9.0), &grid).unwrap();
    let start = Instant::now();
    let out = propagate(&input, &fibre.with_length(8.0 * ld), &SolverConfig::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mag = |e: &ComplexEnvelope| e.samples().iter().map(|a| Complex64::new(a.norm(), 0.0)).collect::<Vec<_>>();
    let dev = rel_l2(&mag(&out), &mag(&input));
    outcome(dev < 1e-4 && secs < 10.0, format!("8 L_D = {:.4} m, L2 deviation {dev:.3e} (< 1e-4), {secs:.2} s (< 10 s)", 8.0 * ld))
}

fn c2_dispersion_and_spm() -> Outcome {
    let grid = TimeGrid::new(2048, 20.0).unwrap();
    let spec = PulseSpec::gaussian_energy(200.0, 5.0);
    let input = make_pulse(&spec, &grid).unwrap();
    let t0 = 0.200 / GAUSSIAN_FWHM_FACTOR;
    let base = FibreSpec { gamma: 0.0, ..FibreSpec::calibrated(1.0) };
    let ld = t0 * t0 / base.beta2.abs();
    let w0 = fwhm_bandlimited(&input).unwrap();
    let mut worst_broad: f64 = 0.0;
    for zl in [0.5, 1.0, 2.0, 4.0] {
        let out = propagate(&input, &base.with_length(zl * ld), &SolverConfig::default()).unwrap();
        let ratio = fwhm_bandlimited(&out).unwrap() / w0;
        let expected = (1.0 + zl * zl).sqrt();
        worst_broad = worst_broad.max((ratio - expected).abs() / expected);
    }
    let spm = FibreSpec { beta2: 0.0, ..FibreSpec::calibrated(0.7) };
    let sech = make_pulse(&PulseSpec::sech_energy(130.0, 12.0), &grid).unwrap();
    let out = propagate(&sech, &spm, &SolverConfig::default()).unwrap();
    let mut worst_phase: f64 = 0.0;
    for (a, b) in sech.samples().iter().zip(out.samples()) {
        if a.norm_sqr() < 1e-6 * sech.peak_power() {
            continue;
        }
        let expected = spm.gamma * a.norm_sqr() * spm.length;
        let got = (b / a).arg();
        worst_phase = worst_phase.max((got - expected).abs());
    }
    outcome(
        worst_broad < 1e-6 && worst_phase < 1e-10,
        format!("broadening rel. error {worst_broad:.3e} (< 1e-6), SPM phase error {worst_phase:.3e} rad (< 1e-10)"),
    )
}

/// (energy pJ, length m) → fluctuation map after lossless propagation.
fn quantum_matrix() -> Vec<((f64, f64), ComplexEnvelope, SymplecticMap)> {
    let grid = quantum_grid();
    let cases = [(2.0, 1.0), (9.0, 1.0), (12.0, 0.5), (14.1, 1.0), (15.8, 1.0), (15.8, 0.3)];
    cases
        .par_iter()
        .map(|&(e, l)| {
            let input = make_pulse(&PulseSpec::sech_energy(130.0, e), &grid).unwrap();
            let (out, map) = propagate_with_noise(&input, &FibreSpec::calibrated(l), &quantum_solver()).unwrap();
            ((e, l), out, map)
        })
        .collect()
}

fn c3_symplectic(maps: &[((f64, f64), ComplexEnvelope, SymplecticMap)]) -> Outcome {
    let mut defect: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    for (_, _, map) in maps {
        defect = defect.max(map.symplectic_defect());
        min_eig = min_eig.min(output_covariance(map).uncertainty_min_eigenvalue());
    }
    // NOLM loop, bright and dark ports together
    let grid = TimeGrid::new(128, 4.0).unwrap();
    let nolm = NolmSpec::new(FibreSpec::calibrated(0.5), 0.9, PulseSpec::sech_energy(130.0, 8.0)).unwrap();
    let port = nolm_port_map(&nolm, &grid, &quantum_solver()).unwrap();
    defect = defect.max(port.symplectic_defect());
    min_eig = min_eig.min(output_covariance(&port).uncertainty_min_eigenvalue());
    outcome(
        defect < 1e-8 && min_eig > -1e-8,
        format!("{} maps, max defect {defect:.3e} (< 1e-8), min eig(σ+iΩ) {min_eig:.3e} (> -1e-8)", maps.len() + 1),
    )
}

fn c4_conservation(maps: &[((f64, f64), ComplexEnvelope, SymplecticMap)]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut energies = Vec::new();
    for ((e, _), out, map) in maps {
        let r = photon_number_noise(out, &output_covariance(map), &ModeSelector::all_pass(out.grid().n_samples())).unwrap();
        worst = worst.max((r - 1.0).abs());
        if !energies.contains(e) {
            energies.push(*e);
        }
    }
    let has_reference = energies.contains(&14.1) && energies.contains(&15.8);
    outcome(
        worst < 1e-8 && energies.len() >= 5 && has_reference,
        format!("{} energies {energies:?} pJ, max |ratio - 1| {worst:.3e} (< 1e-8)", energies.len()),
    )
}

fn c5_kerr_oracle() -> Outcome {
    let grid = TimeGrid::new(8, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for phi in [0.1, 1.0, 5.0] {
        let mut s = vec![Complex64::new(0.0, 0.0); 8];
        s[3] = Complex64::new(2.0f64.sqrt(), 0.0);
        let env = ComplexEnvelope::new(grid, s).unwrap();
        let fibre = FibreSpec { beta2: 0.0, gamma: 1.0, length: phi / 2.0, loss: 0.0 };
        let (out, map) = propagate_with_noise(&env, &fibre, &SolverConfig::default()).unwrap();
        let local = output_covariance(&map).to_local_frame(&out);
        let b = local.mode_block(3);
        let expected = Matrix2::new(1.0, 2.0 * phi, 2.0 * phi, 1.0 + 4.0 * phi * phi);
        worst = worst.max((b - expected).abs().max());
    }
    outcome(worst < 1e-8, format!("Φ ∈ {{0.1, 1, 5}}, max entry error {worst:.3e} (< 1e-8)"))
}

fn fig3() -> ScenarioConfig {
    Registry::builtin().get("fig3").unwrap().config.resolve(&Overrides::default()).unwrap()
}

fn c6_c7_fig3() -> (Outcome, Outcome) {
    let cfg = fig3();
    let grid = cfg.time_grid().unwrap();
    let input = make_pulse(&cfg.pulse.to_spec().unwrap(), &grid).unwrap();
    let (out, map) = propagate_with_noise(&input, &cfg.fibre, &cfg.solver()).unwrap();
    let sigma = output_covariance(&map);
    let cutoffs = default_cutoffs(&out, cfg.scan.n_cutoffs, cfg.scan.min_transmission);
    let curve = squeezing_scan(&out, &sigma, &cutoffs, &cfg.detection).unwrap();
    let best = curve.minimum();
    let windows = curve.windows_below(-1.0);
    let all_pass = balanced_detection(&out, &sigma, &ModeSelector::all_pass(grid.n_samples()), &cfg.detection).unwrap();
    let edge = curve.points[0].ratio_db;
    let c6 = outcome(
        !windows.is_empty()
            && all_pass.ratio_db().abs() < 1e-6
            && edge.abs() < 1e-6
            && (-5.0..=-1.0).contains(&best.ratio_db),
        format!(
            "min {:.3} dB at {:.3} rad/ps (in [-5, -1], experimental reference -1.7 dB), {} window(s) below -1 dB, \
             all-pass {:.1e} dB (|.| < 1e-6)",
            best.ratio_db,
            best.cutoff,
            windows.len(),
            all_pass.ratio_db()
        ),
    );
    let sel = knife_edge(best.cutoff, &grid);
    let atten = [1.0, 0.8, 0.6, 0.4, 0.2, 0.1, 0.05];
    let fit = shot_noise_calibration(&out, &sigma, &sel, &DetectorSpec::default(), &atten).unwrap();
    let c7 = outcome(
        fit.r_squared > 0.999999 && fit.intercept.abs() < 1e-9,
        format!("{} attenuations, R² = {:.9} (> 0.999999), intercept {:.2e} (|b| < 1e-9)", atten.len(), fit.r_squared, fit.intercept),
    );
    (c6, c7)
}

fn c8_entanglement() -> Outcome {
    let alpha = Complex64::new(3.0, 0.0);
    let coh = SingleModeState::coherent(alpha);
    let sq = SingleModeState::amplitude_squeezed(alpha, 0.5);
    let d_coh = duan_criterion(&combine_on_beamsplitter(&coh, &coh, DEFAULT_PHASE)).value;
    let d_sq = duan_criterion(&combine_on_beamsplitter(&sq, &sq, DEFAULT_PHASE)).value;
    // the entangle scenario: two NOLMs fed at the fig3 fibre and pulse settings
    let cfg = Registry::builtin().get("entangle").unwrap().config.resolve(&Overrides::default()).unwrap();
    let f3 = fig3();
    assert_eq!((cfg.fibre, cfg.pulse), (f3.fibre, f3.pulse));
    let spec = NolmSpec::new(cfg.fibre, cfg.nolm.split_ratio, cfg.pulse.to_spec().unwrap()).unwrap();
    let (out, sigma) = nolm_output(&spec, &cfg.time_grid().unwrap(), &cfg.solver()).unwrap();
    let m = effective_single_mode(&out, &sigma).unwrap();
    let d_nolm = duan_criterion(&combine_on_beamsplitter(&m, &m, cfg.entanglement.phase)).value;
    outcome(
        (d_coh - 4.0).abs() < 1e-10 && (d_sq - 2.0).abs() < 1e-10 && d_nolm < DUAN_BOUND,
        format!(
            "coherent {d_coh:.12}, V=0.5 {d_sq:.12}, NOLM pair (ρ = {}, 15.8 pJ, V11 = {:.3}) {d_nolm:.4} (< 4)",
            cfg.nolm.split_ratio,
            m.covariance[(0, 0)]
        ),
    )
}

fn c9_qkd() -> Outcome {
    let start = Instant::now();
    let s = SingleModeState::amplitude_squeezed(Complex64::new(1.0, 0.0), 0.5);
    let pair = combine_on_beamsplitter(&s, &s, DEFAULT_PHASE);
    let clean_ch = ChannelSpec::default();
    let attack = beamsplit_attack(&clean_ch, 0.5).unwrap();
    let clean_cv = analytic_conditional_variances(&pair, &clean_ch).unwrap();
    let tapped_cv = analytic_conditional_variances(&pair, &attack).unwrap();
    let threshold = 0.5 * (clean_cv.0.max(clean_cv.1) + tapped_cv.0.min(tapped_cv.1));

    let spec = SessionSpec { n_slots: 10_000, pulses_per_slot: 256, seed: 7 };
    let rec = run_session(&pair, &clean_ch, &spec).unwrap();
    let frac = rec.matched_fraction();
    let sigma = (0.25f64 / spec.n_slots as f64).sqrt();
    let sift = sift_key(&rec, 256).unwrap();
    let clean_flag = detect_eavesdropper(&rec, threshold).unwrap().flag;
    drop(rec);

    let sessions = 100u64;
    let flagged = (0..sessions)
        .into_par_iter()
        .filter(|&seed| {
            let rec = run_session(&pair, &attack, &SessionSpec { seed: 1000 + seed, ..spec }).unwrap();
            detect_eavesdropper(&rec, threshold).unwrap().flag
        })
        .count();
    let power = flagged as f64 / sessions as f64;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        (frac - 0.5).abs() <= 3.0 * sigma
            && sift.keys_agree()
            && sift.key_length() > 0
            && !clean_flag
            && power > 0.99
            && secs < 120.0,
        format!(
            "match {frac:.4} (0.5 ± {:.4}), clean keys agree: {} ({} bits), attack power {power:.2} over {sessions} \
             sessions (> 0.99, threshold {threshold:.4}), {secs:.1} s (< 120 s)",
            3.0 * sigma,
            sift.keys_agree(),
            sift.key_length()
        ),
    )
}

fn c10_rates() -> Outcome {
    let a = raw_bit_rate(82e6, 0.1, 0.0).unwrap();
    let b = raw_bit_rate(100e9, 0.1, 0.0).unwrap();
    outcome(a == 8.2e6 && b == 1e10, format!("82 MHz × 10% = {a} bit/s, 100 GHz × 10% = {b} bit/s"))
}

fn read_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn c11_reproducibility() -> Outcome {
    let reg = Registry::builtin();
    let tmp = tempfile::tempdir().unwrap();
    let mut checked = Vec::new();
    let mut mismatched = Vec::new();
    for (name, _) in reg.list() {
        let mut cfg = reg.get(name).unwrap().config.clone();
        if name == "nolm-scan" {
            // the full sweep is exercised elsewhere; a short one keeps the harness quick
            cfg.nolm.energies_pj = vec![2.0, 6.0, 10.0, 14.0];
        }
        let first = cfg.resolve(&Overrides::default()).unwrap();
        let a = run_scenario(&first, &tmp.path().join("a")).unwrap();
        let manifest = std::fs::read_to_string(a.dir.join("manifest.toml")).unwrap();
        let file = parse_config(&manifest, "manifest.toml").unwrap();
        let again = file.scenario[0].resolve(&Overrides::default()).unwrap();
        let b = run_scenario(&again, &tmp.path().join("b")).unwrap();
        let (ra, rb) = (read_outputs(&a.dir), read_outputs(&b.dir));
        if ra.is_empty() || ra != rb {
            mismatched.push(name.to_string());
        }
        checked.push(format!("{name} ({} csv)", ra.len()));
    }
    outcome(
        mismatched.is_empty(),
        format!("byte-identical reruns from manifest: {}; mismatched: {mismatched:?}", checked.join(", ")),
    )
}

fn main() {
    let maps = quantum_matrix();
    let (c6, c7) = c6_c7_fig3();
    let results = [
        ("1 soliton invariance", c1_soliton()),
        ("2 dispersion and SPM oracles", c2_dispersion_and_spm()),
        ("3 symplecticity", c3_symplectic(&maps)),
        ("4 conservation regression", c4_conservation(&maps)),
        ("5 single-mode Kerr oracle", c5_kerr_oracle()),
        ("6 spectral-filtering squeezing", c6),
        ("7 shot-noise linearity", c7),
        ("8 entanglement boundary", c8_entanglement()),
        ("9 key distribution statistics", c9_qkd()),
        ("10 rate accounting", c10_rates()),
        ("11 reproducibility", c11_reproducibility()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("criterion {name}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
