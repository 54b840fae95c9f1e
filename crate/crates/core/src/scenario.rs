//! Config-driven experiment scenarios and their CSV/text outputs.
//!
//! A config file holds a `[[scenario]]` list. Each scenario resolves to a
//! fully specified [`ScenarioConfig`]; running it writes CSVs plus a
//! `manifest.toml` that reproduces the same bytes when run again.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detection::{
    balanced_detection, default_cutoffs, knife_edge, shot_noise_calibration, squeezing_scan, DetectorSpec,
};
use crate::entanglement::{
    combine_on_beamsplitter, duan_criterion, quadrature_correlations, stokes_covariance, TwoModeState, DEFAULT_PHASE,
};
use crate::error::{invalid, Error, Result};
use crate::linearization::{
    output_covariance, propagate_with_noise, spectral_correlation_matrix, uniform_bands, ModeSelector,
};
use crate::nlse::{propagate, soliton_order_of, SolverConfig};
use crate::nolm::{effective_single_mode_at, nolm_energy_scan, nolm_output, NolmSpec, SingleModeState};
use crate::pulse::{
    autocorrelation, fwhm, make_pulse, pulse_energy, spectrum, ComplexEnvelope, FibreSpec, PulseAmplitude,
    PulseShape, PulseSpec, TimeGrid,
};
use crate::qkd::{
    analytic_conditional_variances, beamsplit_attack, detect_eavesdropper, raw_bit_rate, run_session, sift_key,
    ChannelSpec, SessionSpec,
};
use crate::units::pj_to_mw;

const BUILTINS: [&str; 6] = [
    include_str!("../scenarios/fig2.toml"),
    include_str!("../scenarios/fig3.toml"),
    include_str!("../scenarios/nolm-scan.toml"),
    include_str!("../scenarios/entangle.toml"),
    include_str!("../scenarios/qkd-clean.toml"),
    include_str!("../scenarios/qkd-attack.toml"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Classical propagation: envelopes, spectra, autocorrelations.
    Propagation,
    /// Quantum propagation plus knife-edge squeezing scan.
    Squeezing,
    NolmScan,
    Entangle,
    Qkd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_samples: usize,
    pub window_ps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseConfig {
    pub shape: PulseShape,
    pub fwhm_fs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_pj: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_power_w: Option<f64>,
    pub chirp: f64,
    pub center_offset_ps: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self {
            shape: PulseShape::Sech,
            fwhm_fs: 130.0,
            energy_pj: None,
            peak_power_w: None,
            chirp: 0.0,
            center_offset_ps: 0.0,
        }
    }
}

impl PulseConfig {
    pub fn to_spec(&self) -> Result<PulseSpec> {
        let amplitude = match (self.energy_pj, self.peak_power_w) {
            (Some(e), None) => PulseAmplitude::Energy(e),
            (None, Some(p)) => PulseAmplitude::PeakPower(p),
            (Some(_), Some(_)) => return Err(invalid("pulse: give energy_pj or peak_power_w, not both")),
            (None, None) => return Err(invalid("pulse: energy_pj or peak_power_w is required")),
        };
        let spec = PulseSpec {
            shape: self.shape,
            fwhm_fs: self.fwhm_fs,
            amplitude,
            chirp: self.chirp,
            center_offset_ps: self.center_offset_ps,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    /// Explicit cutoffs in rad/ps; when empty, `n_cutoffs` evenly spaced
    /// cutoffs from the all-pass edge up to where `min_transmission` of the
    /// energy still passes.
    pub cutoffs: Vec<f64>,
    pub n_cutoffs: usize,
    pub min_transmission: f64,
    /// Frequency bands for the photon-number correlation matrix.
    pub n_bands: usize,
    /// Neutral-density transmissions for the shot-noise calibration.
    pub attenuations: Vec<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            cutoffs: Vec::new(),
            n_cutoffs: 200,
            min_transmission: 0.01,
            n_bands: 16,
            attenuations: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NolmConfig {
    pub split_ratio: f64,
    pub energies_pj: Vec<f64>,
}

impl Default for NolmConfig {
    fn default() -> Self {
        Self {
            split_ratio: crate::nolm::DEFAULT_SPLIT_RATIO,
            energies_pj: vec![2.0, 6.0, 10.0, 14.0, 18.0, 22.0, 26.0, 30.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSource {
    /// Two independent loop mirrors fed with the scenario pulse.
    Nolm,
    /// Two ideal amplitude-squeezed states with `amplitude_variance`.
    Squeezed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntanglementConfig {
    pub source: PairSource,
    pub amplitude_variance: f64,
    /// Interference phase on the second beam, rad.
    pub phase: f64,
}

impl Default for EntanglementConfig {
    fn default() -> Self {
        Self { source: PairSource::Squeezed, amplitude_variance: 0.5, phase: DEFAULT_PHASE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionConfig {
    pub n_slots: usize,
    pub pulses_per_slot: usize,
    pub block_size: usize,
    /// Conditional-variance alarm level; midway between the clean and the
    /// half-tapped channel predictions when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Fraction of slots net of protocol overhead, for the rate estimate.
    pub overhead: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { n_slots: 1000, pulses_per_slot: 256, block_size: 256, threshold: None, overhead: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub kind: ScenarioKind,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub fibre: FibreSpec,
    #[serde(default)]
    pub pulse: PulseConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub detection: DetectorSpec,
    #[serde(default)]
    pub nolm: NolmConfig,
    #[serde(default)]
    pub entanglement: EntanglementConfig,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub session: SessionConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub scenario: Vec<ScenarioConfig>,
}

/// Command-line overrides applied before resolution.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid_samples: Option<usize>,
}

const DEFAULT_ENERGY_PJ: f64 = 15.8;

impl ScenarioConfig {
    /// Fills kind-specific defaults, applies overrides and validates every
    /// parameter group the scenario uses.
    pub fn resolve(&self, ov: &Overrides) -> Result<ScenarioConfig> {
        let mut c = self.clone();
        if c.name.is_empty() || c.name.contains(['/', '\\']) {
            return Err(invalid(format!("scenario name {:?} must be non-empty and contain no path separators", c.name)));
        }
        let (grid, solver) = match c.kind {
            ScenarioKind::Propagation => (GridConfig { n_samples: 4096, window_ps: 20.0 }, SolverConfig::default()),
            ScenarioKind::NolmScan => (
                GridConfig { n_samples: 512, window_ps: 6.0 },
                SolverConfig { max_nonlinear_phase_per_step: 0.02, ..Default::default() },
            ),
            _ => (
                GridConfig { n_samples: 256, window_ps: 5.0 },
                SolverConfig { max_nonlinear_phase_per_step: 0.01, ..Default::default() },
            ),
        };
        let mut grid = c.grid.unwrap_or(grid);
        if let Some(n) = ov.grid_samples {
            grid.n_samples = n;
        }
        c.grid = Some(grid);
        c.solver = Some(c.solver.unwrap_or(solver));
        if let Some(seed) = ov.seed {
            c.seed = seed;
        }
        if c.pulse.energy_pj.is_none() && c.pulse.peak_power_w.is_none() {
            c.pulse.energy_pj = Some(DEFAULT_ENERGY_PJ);
        }
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        let grid = self.time_grid()?;
        if matches!(self.kind, ScenarioKind::Squeezing | ScenarioKind::NolmScan | ScenarioKind::Entangle)
            && grid.n_samples() > crate::linearization::MAX_QUANTUM_SAMPLES
        {
            return Err(Error::GridTooLarge(grid.n_samples()));
        }
        self.fibre.validate()?;
        self.pulse.to_spec()?;
        self.solver().validate()?;
        self.detection.validate()?;
        self.channel.validate()?;
        if self.scan.cutoffs.is_empty() && self.scan.n_cutoffs < 8 {
            return Err(invalid("scan.n_cutoffs must be >= 8"));
        }
        if !self.scan.cutoffs.is_empty() && self.scan.cutoffs.len() < 8 {
            return Err(invalid("scan.cutoffs needs >= 8 entries"));
        }
        if !(self.scan.min_transmission > 0.0 && self.scan.min_transmission < 1.0) {
            return Err(invalid("scan.min_transmission must lie in (0, 1)"));
        }
        if self.scan.n_bands == 0 {
            return Err(invalid("scan.n_bands must be >= 1"));
        }
        if matches!(self.kind, ScenarioKind::NolmScan | ScenarioKind::Entangle)
            || self.entanglement.source == PairSource::Nolm && self.kind == ScenarioKind::Qkd
        {
            self.nolm_spec(self.pulse.to_spec()?)?;
        }
        if self.kind == ScenarioKind::NolmScan && self.nolm.energies_pj.len() < 4 {
            return Err(invalid("nolm.energies_pj needs >= 4 entries"));
        }
        if !(self.entanglement.amplitude_variance > 0.0) {
            return Err(invalid("entanglement.amplitude_variance must be > 0"));
        }
        let s = &self.session;
        SessionSpec { n_slots: s.n_slots, pulses_per_slot: s.pulses_per_slot, seed: self.seed }.validate()?;
        if s.block_size < 16 || s.block_size > s.pulses_per_slot {
            return Err(invalid("session.block_size must lie in [16, pulses_per_slot]"));
        }
        if !(0.0..1.0).contains(&s.overhead) {
            return Err(invalid("session.overhead must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        let g = self.grid.ok_or_else(|| invalid("scenario grid not resolved"))?;
        TimeGrid::new(g.n_samples, g.window_ps)
    }

    pub fn solver(&self) -> SolverConfig {
        self.solver.unwrap_or_default()
    }

    fn nolm_spec(&self, pulse: PulseSpec) -> Result<NolmSpec> {
        NolmSpec::new(self.fibre, self.nolm.split_ratio, pulse)
    }

    /// TOML text of this (resolved) scenario as a one-entry config file.
    pub fn to_manifest(&self) -> Result<String> {
        let file = ScenarioFile { scenario: vec![self.clone()] };
        toml::to_string(&file).map_err(|e| Error::InvalidInput(format!("cannot serialize manifest: {e}")))
    }
}

/// Config parse failure with the offending file and line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source: String,
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.source, l, self.message),
            None => write!(f, "{}: {}", self.source, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses a config file's text; `source` names it in error messages.
pub fn parse_config(text: &str, source: &str) -> std::result::Result<ScenarioFile, ConfigError> {
    toml::from_str::<ScenarioFile>(text).map_err(|e| ConfigError {
        source: source.to_string(),
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })
}

/// Line of the `name = "..."` entry of a scenario, for anchoring
/// validation errors.
pub fn scenario_line(text: &str, name: &str) -> Option<usize> {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("name") {
            let v = rest.trim_start().strip_prefix('=').map(str::trim);
            if v == Some(&format!("\"{name}\"")) || v == Some(&format!("'{name}'")) {
                return Some(line_of(text, offset));
            }
        }
        offset += line.len();
    }
    None
}

/// A scenario together with where it was defined.
#[derive(Debug, Clone)]
pub struct RegistryEntry {
    pub config: ScenarioConfig,
    pub origin: String,
}

/// Built-in scenarios plus any loaded from a user directory.
#[derive(Debug, Clone)]
pub struct Registry {
    entries: BTreeMap<String, RegistryEntry>,
}

impl Registry {
    pub fn builtin() -> Self {
        let mut entries = BTreeMap::new();
        for text in BUILTINS {
            let file = parse_config(text, "<builtin>").expect("built-in scenarios parse");
            for config in file.scenario {
                let origin = format!("builtin:{}", config.name);
                entries.insert(config.name.clone(), RegistryEntry { config, origin });
            }
        }
        Self { entries }
    }

    /// Adds every `*.toml` in `dir` (sorted by file name). Name collisions
    /// with built-ins or between files are errors.
    pub fn load_dir(&mut self, dir: &Path) -> std::result::Result<(), ConfigError> {
        let io_err = |e: std::io::Error| ConfigError { source: dir.display().to_string(), line: None, message: e.to_string() };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        for path in paths {
            let source = path.display().to_string();
            let text = fs::read_to_string(&path)
                .map_err(|e| ConfigError { source: source.clone(), line: None, message: e.to_string() })?;
            for config in parse_config(&text, &source)?.scenario {
                if let Some(prev) = self.entries.get(&config.name) {
                    return Err(ConfigError {
                        source: source.clone(),
                        line: scenario_line(&text, &config.name),
                        message: format!("scenario '{}' already defined by {}", config.name, prev.origin),
                    });
                }
                let origin = source.clone();
                self.entries.insert(config.name.clone(), RegistryEntry { config, origin });
            }
        }
        Ok(())
    }

    /// Sorted (name, description) pairs.
    pub fn list(&self) -> Vec<(&str, &str)> {
        self.entries.values().map(|e| (e.config.name.as_str(), e.config.description.as_str())).collect()
    }

    pub fn get(&self, name: &str) -> Option<&RegistryEntry> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Files written by one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut s = header.join(",");
        s.push('\n');
        for row in rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        self.write(name, &s)
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn key_values(pairs: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

/// Runs a resolved scenario, writing into `out_root/<name>/`.
pub fn run_scenario(cfg: &ScenarioConfig, out_root: &Path) -> Result<RunOutput> {
    let mut cfg = cfg.clone();
    let dir = out_root.join(&cfg.name);
    fs::create_dir_all(&dir).map_err(|e| Error::InvalidInput(format!("cannot create {}: {e}", dir.display())))?;
    let mut w = Writer { dir: dir.clone(), files: Vec::new() };
    log::info!("running scenario '{}' ({:?})", cfg.name, cfg.kind);
    match cfg.kind {
        ScenarioKind::Propagation => run_propagation(&cfg, &mut w)?,
        ScenarioKind::Squeezing => run_squeezing(&cfg, &mut w)?,
        ScenarioKind::NolmScan => run_nolm_scan(&cfg, &mut w)?,
        ScenarioKind::Entangle => run_entangle(&cfg, &mut w)?,
        ScenarioKind::Qkd => run_qkd(&mut cfg, &mut w)?,
    }
    w.write("manifest.toml", &cfg.to_manifest()?)?;
    Ok(RunOutput { dir, files: w.files })
}

fn envelope_rows(env: &ComplexEnvelope) -> Vec<Vec<String>> {
    let g = env.grid();
    env.samples()
        .iter()
        .enumerate()
        .map(|(k, a)| vec![num(g.time(k)), num(a.re), num(a.im), num(a.norm_sqr())])
        .collect()
}

fn spectrum_rows(env: &ComplexEnvelope) -> Vec<Vec<String>> {
    let (w, p) = spectrum(env).power_spectrum();
    w.into_iter().zip(p).map(|(w, p)| vec![num(w), num(p)]).collect()
}

fn run_propagation(cfg: &ScenarioConfig, w: &mut Writer) -> Result<()> {
    let grid = cfg.time_grid()?;
    let spec = cfg.pulse.to_spec()?;
    let input = make_pulse(&spec, &grid)?;
    let output = propagate(&input, &cfg.fibre, &cfg.solver())?;
    const ENV: [&str; 4] = ["time_ps", "re_sqrt_w", "im_sqrt_w", "power_w"];
    const SPEC: [&str; 2] = ["omega_rad_per_ps", "spectral_density_pj_ps"];
    const AC: [&str; 2] = ["delay_ps", "intensity_autocorrelation"];
    w.csv("envelope_in.csv", &ENV, envelope_rows(&input))?;
    w.csv("envelope_out.csv", &ENV, envelope_rows(&output))?;
    w.csv("spectrum_in.csv", &SPEC, spectrum_rows(&input))?;
    w.csv("spectrum_out.csv", &SPEC, spectrum_rows(&output))?;
    let ac_in = autocorrelation(&input);
    let ac_out = autocorrelation(&output);
    let ac_rows = |ac: &crate::pulse::AutocorrelationTrace| {
        ac.delays.iter().zip(&ac.values).map(|(d, v)| vec![num(*d), num(*v)]).collect::<Vec<_>>()
    };
    w.csv("autocorrelation_in.csv", &AC, ac_rows(&ac_in))?;
    w.csv("autocorrelation_out.csv", &AC, ac_rows(&ac_out))?;
    let energy_out = pulse_energy(&output);
    let order = soliton_order_of(&spec, &cfg.fibre).map(|o| num(o.value)).unwrap_or_else(|_| "undefined".into());
    let width = |xs: &[f64], ys: &[f64]| fwhm(xs, ys).map(|x| num(x * 1e3)).unwrap_or_else(|| "undefined".into());
    let (wi, pi) = spectrum(&input).power_spectrum();
    let (wo, po) = spectrum(&output).power_spectrum();
    w.write(
        "summary.txt",
        &key_values(&[
            ("energy_in_pj", num(pulse_energy(&input))),
            ("energy_out_pj", num(energy_out)),
            ("average_power_out_mw", num(pj_to_mw(energy_out, cfg.detection.repetition_rate_hz))),
            ("soliton_order", order),
            ("intensity_fwhm_in_fs", width(&grid.times(), &input.power())),
            ("intensity_fwhm_out_fs", width(&grid.times(), &output.power())),
            ("autocorrelation_fwhm_in_fs", width(&ac_in.delays, &ac_in.values)),
            ("autocorrelation_fwhm_out_fs", width(&ac_out.delays, &ac_out.values)),
            ("spectral_fwhm_in_rad_per_ps", fwhm(&wi, &pi).map(num).unwrap_or_else(|| "undefined".into())),
            ("spectral_fwhm_out_rad_per_ps", fwhm(&wo, &po).map(num).unwrap_or_else(|| "undefined".into())),
        ]),
    )
}

/// Frequency span holding all but `tail` of the energy on each side.
fn spectral_extent(env: &ComplexEnvelope, tail: f64) -> (f64, f64) {
    let (w, p) = spectrum(env).power_spectrum();
    let total: f64 = p.iter().sum();
    let mut acc = 0.0;
    let mut lo = w[0];
    let mut hi = w[w.len() - 1];
    let mut lo_set = false;
    for (wi, pi) in w.iter().zip(&p) {
        acc += pi;
        if !lo_set && acc / total > tail {
            lo = *wi;
            lo_set = true;
        }
        if acc / total >= 1.0 - tail {
            hi = *wi;
            break;
        }
    }
    (lo, hi)
}

fn run_squeezing(cfg: &ScenarioConfig, w: &mut Writer) -> Result<()> {
    let grid = cfg.time_grid()?;
    let input = make_pulse(&cfg.pulse.to_spec()?, &grid)?;
    let (output, map) = propagate_with_noise(&input, &cfg.fibre, &cfg.solver())?;
    let sigma = output_covariance(&map);
    let cutoffs = if cfg.scan.cutoffs.is_empty() {
        default_cutoffs(&output, cfg.scan.n_cutoffs, cfg.scan.min_transmission)
    } else {
        cfg.scan.cutoffs.clone()
    };
    let curve = squeezing_scan(&output, &sigma, &cutoffs, &cfg.detection)?;
    w.csv(
        "squeezing_curve.csv",
        &["cutoff_rad_per_ps", "ratio_db", "mean_power_mw"],
        curve.points.iter().map(|p| vec![num(p.cutoff), num(p.ratio_db), num(p.mean_power_mw)]),
    )?;

    let (lo, hi) = spectral_extent(&output, 1e-3);
    let bands = uniform_bands(lo, hi + grid.d_omega(), cfg.scan.n_bands);
    let corr = spectral_correlation_matrix(&output, &sigma, &bands)?;
    let mut header = vec!["band".to_string(), "lo_rad_per_ps".into(), "hi_rad_per_ps".into()];
    header.extend((0..bands.len()).map(|j| format!("c{j}")));
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    w.csv(
        "band_correlation.csv",
        &header_ref,
        bands.iter().enumerate().map(|(i, (lo, hi))| {
            let mut row = vec![i.to_string(), num(*lo), num(*hi)];
            row.extend((0..bands.len()).map(|j| num(corr.matrix[(i, j)])));
            row
        }),
    )?;

    let best = curve.minimum();
    let sel = knife_edge(best.cutoff, &grid);
    let per_photon_mw = pj_to_mw(1.0, cfg.detection.repetition_rate_hz)
        / crate::units::photons_per_pj(cfg.detection.wavelength_nm);
    let mut cal_rows = Vec::new();
    for &a in &cfg.scan.attenuations {
        let det = DetectorSpec { efficiency: cfg.detection.efficiency * a, ..cfg.detection };
        let rec = balanced_detection(&output, &sigma, &sel, &det)?;
        cal_rows.push(vec![
            num(a),
            num(rec.mean_power_mw),
            num(rec.difference_variance * per_photon_mw),
            num(rec.sum_variance * per_photon_mw),
        ]);
    }
    w.csv("shot_noise.csv", &["attenuation", "mean_power_mw", "difference_noise_mw", "sum_noise_mw"], cal_rows)?;
    let fit = shot_noise_calibration(&output, &sigma, &sel, &cfg.detection, &cfg.scan.attenuations)?;
    let all_pass = balanced_detection(&output, &sigma, &ModeSelector::all_pass(grid.n_samples()), &cfg.detection)?;
    let windows = curve
        .windows_below(-1e-6)
        .iter()
        .map(|(a, b)| format!("[{}, {}]", num(*a), num(*b)))
        .collect::<Vec<_>>()
        .join(", ");
    w.write(
        "summary.txt",
        &key_values(&[
            ("energy_pj", num(curve.energy_pj)),
            ("min_ratio_db", num(best.ratio_db)),
            ("best_cutoff_rad_per_ps", num(best.cutoff)),
            ("all_pass_ratio_db", num(all_pass.ratio_db())),
            ("squeezed_windows_rad_per_ps", format!("[{windows}]")),
            ("calibration_slope", num(fit.slope)),
            ("calibration_intercept_mw", num(fit.intercept)),
            ("calibration_r_squared", num(fit.r_squared)),
        ]),
    )
}

fn run_nolm_scan(cfg: &ScenarioConfig, w: &mut Writer) -> Result<()> {
    let grid = cfg.time_grid()?;
    let spec = cfg.nolm_spec(cfg.pulse.to_spec()?)?;
    let scan = nolm_energy_scan(&spec, &cfg.nolm.energies_pj, &grid, &cfg.solver())?;
    w.csv("nolm_scan.csv", &["energy_pj", "ratio_db"], scan.iter().map(|(e, r)| vec![num(*e), num(*r)]))?;
    let best = scan.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1)).expect("scan has >= 4 points");
    w.write(
        "summary.txt",
        &key_values(&[
            ("split_ratio", num(spec.split_ratio)),
            ("best_energy_pj", num(best.0)),
            ("best_ratio_db", num(best.1)),
        ]),
    )
}

/// The two single-mode inputs of the entangling beamsplitter.
fn pair_inputs(cfg: &ScenarioConfig) -> Result<(SingleModeState, SingleModeState)> {
    match cfg.entanglement.source {
        PairSource::Squeezed => {
            let s = SingleModeState::amplitude_squeezed(Complex64::new(1.0, 0.0), cfg.entanglement.amplitude_variance);
            Ok((s, s))
        }
        PairSource::Nolm => {
            let grid = cfg.time_grid()?;
            let spec = cfg.nolm_spec(cfg.pulse.to_spec()?)?;
            let (out, sigma) = nolm_output(&spec, &grid, &cfg.solver())?;
            let s = effective_single_mode_at(&out, &sigma, cfg.detection.wavelength_nm)?;
            // two independent loops with identical settings give identical states
            Ok((s, s))
        }
    }
}

fn run_entangle(cfg: &ScenarioConfig, w: &mut Writer) -> Result<()> {
    let (a, b) = pair_inputs(cfg)?;
    let pair = combine_on_beamsplitter(&a, &b, cfg.entanglement.phase);
    let duan = duan_criterion(&pair);
    let q = quadrature_correlations(&pair)?;
    // polarization variant: squeezed mode on x, the second beam on y at π/2
    let y = SingleModeState { alpha: b.alpha * Complex64::i(), ..b };
    let stokes = stokes_covariance(&a, &y)?;
    let shot = stokes.mean[0];
    w.csv(
        "entanglement.csv",
        &["duan_value", "corr_xx", "corr_pp", "cond_var_x", "cond_var_p", "var_s1", "var_s2", "var_s3"],
        [vec![
            num(duan.value),
            num(q.corr_xx),
            num(q.corr_pp),
            num(q.cond_var_x),
            num(q.cond_var_p),
            num(stokes.variances[0] / shot),
            num(stokes.variances[1] / shot),
            num(stokes.variances[2] / shot),
        ]],
    )?;
    w.write(
        "summary.txt",
        &key_values(&[
            ("input_amplitude_variance", num(a.covariance[(0, 0)])),
            ("input_phase_variance", num(a.covariance[(1, 1)])),
            ("duan_value", num(duan.value)),
            ("separable_excluded", duan.separable_excluded.to_string()),
            ("epr_product", num(q.cond_var_x * q.cond_var_p)),
        ]),
    )
}

fn run_qkd(cfg: &mut ScenarioConfig, w: &mut Writer) -> Result<()> {
    let (a, b) = pair_inputs(cfg)?;
    let pair: TwoModeState = combine_on_beamsplitter(&a, &b, cfg.entanglement.phase);
    let threshold = match cfg.session.threshold {
        Some(t) => t,
        None => {
            let clean = analytic_conditional_variances(&pair, &cfg.channel.without_attack())?;
            let tapped = analytic_conditional_variances(&pair, &beamsplit_attack(&cfg.channel.without_attack(), 0.5)?)?;
            let t = 0.5 * (clean.0.max(clean.1) + tapped.0.min(tapped.1));
            cfg.session.threshold = Some(t);
            t
        }
    };
    let s = &cfg.session;
    let spec = SessionSpec { n_slots: s.n_slots, pulses_per_slot: s.pulses_per_slot, seed: cfg.seed };
    let rec = run_session(&pair, &cfg.channel, &spec)?;
    let mut log = String::from("slot,alice_basis,bob_basis,alice_value,bob_value\n");
    for slot in &rec.slots {
        for (x, y) in slot.alice_values.iter().zip(&slot.bob_values) {
            let _ = writeln!(log, "{},{},{},{},{}", slot.index, slot.alice_basis, slot.bob_basis, x, y);
        }
    }
    w.write("session_log.csv", &log)?;
    let sift = sift_key(&rec, s.block_size)?;
    let mut pairs = vec![
        ("n_slots", s.n_slots.to_string()),
        ("matched_fraction", num(rec.matched_fraction())),
        ("sift_rate", num(sift.sift_rate)),
        ("key_length", sift.key_length().to_string()),
        ("keys_agree", sift.keys_agree().to_string()),
        ("threshold", num(threshold)),
    ];
    match detect_eavesdropper(&rec, threshold) {
        Ok(r) => {
            pairs.push(("flag", r.flag.to_string()));
            pairs.push(("unusable", r.unusable.to_string()));
            pairs.push(("cond_var_x", num(r.cond_var_x)));
            pairs.push(("cond_var_p", num(r.cond_var_p)));
        }
        Err(Error::Inconclusive(msg)) => {
            pairs.push(("flag", "inconclusive".into()));
            pairs.push(("reason", format!("{msg:?}")));
        }
        Err(e) => return Err(e),
    }
    let rate = raw_bit_rate(cfg.detection.repetition_rate_hz, sift.sift_rate, s.overhead)?;
    pairs.push(("raw_bit_rate_bps", num(rate)));
    if let Some(d) = &sift.diagnostic {
        pairs.push(("diagnostic", format!("{d:?}")));
    }
    w.write("sift_report.txt", &key_values(&pairs))
}
