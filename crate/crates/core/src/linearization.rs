//! Linearized quantum fluctuations transported alongside the classical field.
//!
//! Each time sample `k` is a bosonic mode `a_k = (X_k + iP_k)/2` with vacuum
//! variance `Var(X) = Var(P) = 1`. Quadrature vectors are stacked as
//! `(X_1..X_M, P_1..P_M)` in the lab frame. The fluctuation map is carried as
//! a Bogoliubov pair `δa_out = U·δa_in + V·δa_in*` and exposed as the real
//! `2M×2M` symplectic matrix.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::fft::UnitaryDft;
use crate::nlse::{run_split_step, SolverConfig, SplitStepObserver};
use crate::pulse::{ComplexEnvelope, FibreSpec};

/// Largest grid for which dense covariance propagation is allowed.
pub const MAX_QUANTUM_SAMPLES: usize = 4096;

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Real symplectic map acting on `(X_1..X_M, P_1..P_M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticMap {
    matrix: DMatrix<f64>,
}

/// Standard symplectic form `[[0, I], [-I, 0]]` for `m` modes.
pub fn symplectic_form(m: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * m, 2 * m);
    for k in 0..m {
        omega[(k, m + k)] = 1.0;
        omega[(m + k, k)] = -1.0;
    }
    omega
}

impl SymplecticMap {
    pub fn identity(m: usize) -> Self {
        Self { matrix: DMatrix::identity(2 * m, 2 * m) }
    }

    /// Wraps a `2M×2M` matrix, checking symplecticity to 1e-8.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || !matrix.nrows().is_multiple_of(2) {
            return Err(invalid("symplectic map must be square with even dimension"));
        }
        let map = Self { matrix };
        let defect = map.symplectic_defect();
        if defect > 1e-8 {
            return Err(invalid(format!("matrix is not symplectic (defect {defect:.3e})")));
        }
        Ok(map)
    }

    /// Real form of `δa ↦ U δa + V δa*` (U, V row-major `m×m`).
    pub(crate) fn from_bogoliubov(m: usize, u: &[Complex64], v: &[Complex64]) -> Self {
        let mut s = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            for j in 0..m {
                let (a, b) = (u[i * m + j], v[i * m + j]);
                let sum = a + b;
                let diff = a - b;
                s[(i, j)] = sum.re;
                s[(i, m + j)] = -diff.im;
                s[(m + i, j)] = sum.im;
                s[(m + i, m + j)] = diff.re;
            }
        }
        Self { matrix: s }
    }

    pub fn n_modes(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// ‖S Ω Sᵀ − Ω‖∞ (maximum absolute row sum).
    pub fn symplectic_defect(&self) -> f64 {
        let m = self.n_modes();
        let omega = symplectic_form(m);
        let d = &self.matrix * &omega * self.matrix.transpose() - omega;
        max_row_sum(&d)
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &SymplecticMap) -> SymplecticMap {
        SymplecticMap { matrix: &self.matrix * &first.matrix }
    }

    /// S σ Sᵀ.
    pub fn transform(&self, sigma: &CovarianceMatrix) -> CovarianceMatrix {
        CovarianceMatrix::from_matrix_unchecked(&self.matrix * &sigma.matrix * self.matrix.transpose())
    }

    /// Map expressed in amplitude/phase quadratures local to the input and
    /// output mean fields.
    pub fn to_local_frame(&self, input: &ComplexEnvelope, output: &ComplexEnvelope) -> SymplecticMap {
        let r_out = local_rotation(output);
        let r_in = local_rotation(input);
        SymplecticMap { matrix: &r_out * &self.matrix * r_in.transpose() }
    }
}

fn max_row_sum(d: &DMatrix<f64>) -> f64 {
    d.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Rotation taking lab quadratures to quadratures aligned with each sample's
/// mean-field phase (zero-amplitude samples keep the lab frame).
fn local_rotation(env: &ComplexEnvelope) -> DMatrix<f64> {
    let m = env.samples().len();
    let mut r = DMatrix::zeros(2 * m, 2 * m);
    for (k, a) in env.samples().iter().enumerate() {
        let theta = if a.norm() > 0.0 { a.arg() } else { 0.0 };
        let (s, c) = theta.sin_cos();
        r[(k, k)] = c;
        r[(k, m + k)] = s;
        r[(m + k, k)] = -s;
        r[(m + k, m + k)] = c;
    }
    r
}

/// Real symmetric quadrature covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    matrix: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn vacuum(m: usize) -> Self {
        Self { matrix: DMatrix::identity(2 * m, 2 * m) }
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || !matrix.nrows().is_multiple_of(2) {
            return Err(invalid("covariance must be square with even dimension"));
        }
        let asym = (&matrix - matrix.transpose()).abs().max();
        if asym > 1e-10 * matrix.abs().max().max(1.0) {
            return Err(invalid(format!("covariance is not symmetric (asymmetry {asym:.3e})")));
        }
        Ok(Self { matrix })
    }

    pub(crate) fn from_matrix_unchecked(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }

    pub fn n_modes(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// 2×2 block (X_k, P_k).
    pub fn mode_block(&self, k: usize) -> Matrix2<f64> {
        let m = self.n_modes();
        Matrix2::new(
            self.matrix[(k, k)],
            self.matrix[(k, m + k)],
            self.matrix[(m + k, k)],
            self.matrix[(m + k, m + k)],
        )
    }

    /// Smallest eigenvalue of the Hermitian matrix σ + iΩ; the uncertainty
    /// principle requires it to be non-negative.
    pub fn uncertainty_min_eigenvalue(&self) -> f64 {
        let m = self.n_modes();
        let omega = symplectic_form(m);
        let h = DMatrix::from_fn(2 * m, 2 * m, |i, j| Complex64::new(self.matrix[(i, j)], omega[(i, j)]));
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Covariance of two linear functionals `2·Re⟨c, δa⟩` (c over the modes).
    pub fn functional_covariance(&self, c1: &[Complex64], c2: &[Complex64]) -> f64 {
        let u1 = real_functional(c1);
        let u2 = real_functional(c2);
        let su2 = &self.matrix * &u2;
        u1.dot(&su2)
    }

    pub fn functional_variance(&self, c: &[Complex64]) -> f64 {
        let u = real_functional(c);
        (&self.matrix * &u).dot(&u)
    }

    pub fn to_local_frame(&self, env: &ComplexEnvelope) -> CovarianceMatrix {
        let r = local_rotation(env);
        CovarianceMatrix { matrix: &r * &self.matrix * r.transpose() }
    }
}

/// `2·Re⟨c, δa⟩ = Σ Re(c_k)X_k + Im(c_k)P_k`.
fn real_functional(c: &[Complex64]) -> nalgebra::DVector<f64> {
    let m = c.len();
    nalgebra::DVector::from_fn(2 * m, |i, _| if i < m { c[i].re } else { c[i - m].im })
}

/// Per-frequency-bin transmission weights (FFT order), 1 = transmitted.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSelector {
    weights: Vec<f64>,
}

impl ModeSelector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(invalid(format!("selector weight {w} outside [0, 1]")));
        }
        Ok(Self { weights })
    }

    pub fn all_pass(n: usize) -> Self {
        Self { weights: vec![1.0; n] }
    }

    pub fn all_block(n: usize) -> Self {
        Self { weights: vec![0.0; n] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Classical propagation plus the linearized fluctuation map.
pub fn propagate_with_noise(
    env: &ComplexEnvelope,
    fibre: &FibreSpec,
    cfg: &SolverConfig,
) -> Result<(ComplexEnvelope, SymplecticMap)> {
    let (out, bog) = propagate_bogoliubov(env, fibre, cfg)?;
    let map = bog.to_symplectic();
    Ok((out, map))
}

/// σ = S Sᵀ for vacuum input fluctuations.
pub fn output_covariance(map: &SymplecticMap) -> CovarianceMatrix {
    CovarianceMatrix { matrix: &map.matrix * map.matrix.transpose() }
}

/// Bogoliubov pair with `m×m` complex matrices stored column-major.
pub(crate) struct Bogoliubov {
    m: usize,
    u: Vec<Complex64>,
    v: Vec<Complex64>,
}

impl Bogoliubov {
    fn identity(m: usize) -> Self {
        let mut u = vec![C0; m * m];
        for j in 0..m {
            u[j * m + j] = Complex64::new(1.0, 0.0);
        }
        Self { m, u, v: vec![C0; m * m] }
    }

    pub(crate) fn to_symplectic(&self) -> SymplecticMap {
        let m = self.m;
        // column-major -> row-major
        let mut u = vec![C0; m * m];
        let mut v = vec![C0; m * m];
        for j in 0..m {
            for i in 0..m {
                u[i * m + j] = self.u[j * m + i];
                v[i * m + j] = self.v[j * m + i];
            }
        }
        SymplecticMap::from_bogoliubov(m, &u, &v)
    }
}

struct FluctuationTransport {
    bog: Bogoliubov,
    dft: UnitaryDft,
    pending: Option<Vec<Complex64>>,
}

/// Columns per parallel work item.
const COLUMN_BATCH: usize = 8;

impl FluctuationTransport {
    fn flush(&mut self) {
        let Some(factors) = self.pending.take() else { return };
        let m = self.bog.m;
        let dft = &self.dft;
        let work = |chunk: &mut [Complex64]| {
            dft.forward(chunk);
            for col in chunk.chunks_exact_mut(m) {
                for (a, f) in col.iter_mut().zip(&factors) {
                    *a *= f;
                }
            }
            dft.inverse(chunk);
        };
        self.bog.u.par_chunks_mut(m * COLUMN_BATCH).for_each(work);
        self.bog.v.par_chunks_mut(m * COLUMN_BATCH).for_each(work);
    }
}

impl SplitStepObserver for FluctuationTransport {
    fn half_dispersion(&mut self, factors: &[Complex64]) {
        match &mut self.pending {
            Some(p) => p.iter_mut().zip(factors).for_each(|(a, f)| *a *= f),
            None => self.pending = Some(factors.to_vec()),
        }
    }

    fn kerr(&mut self, field: &[Complex64], gamma_dz: f64) {
        self.flush();
        let m = self.bog.m;
        // δa' = e^{iφ}[(1+iΦ)δa + iΦ e^{2iθ} δa*], Φ = γ|A|²dz, φ = Φ
        let coeffs: Vec<(Complex64, Complex64)> = field
            .iter()
            .map(|a| {
                let phi = gamma_dz * a.norm_sqr();
                let rot = Complex64::from_polar(1.0, phi);
                let e2 = if a.norm_sqr() > 0.0 { (a / a.norm()).powi(2) } else { Complex64::new(1.0, 0.0) };
                (rot * Complex64::new(1.0, phi), rot * Complex64::new(0.0, phi) * e2)
            })
            .collect();
        self.bog
            .u
            .par_chunks_mut(m)
            .zip(self.bog.v.par_chunks_mut(m))
            .for_each(|(uc, vc)| {
                for ((u, v), (al, be)) in uc.iter_mut().zip(vc.iter_mut()).zip(&coeffs) {
                    let (u0, v0) = (*u, *v);
                    *u = al * u0 + be * v0.conj();
                    *v = al * v0 + be * u0.conj();
                }
            });
    }
}

pub(crate) fn propagate_bogoliubov(
    env: &ComplexEnvelope,
    fibre: &FibreSpec,
    cfg: &SolverConfig,
) -> Result<(ComplexEnvelope, Bogoliubov)> {
    let m = env.grid().n_samples();
    if m > MAX_QUANTUM_SAMPLES {
        return Err(Error::GridTooLarge(m));
    }
    let mut transport = FluctuationTransport {
        bog: Bogoliubov::identity(m),
        dft: UnitaryDft::new(m),
        pending: None,
    };
    let out = run_split_step(env, fibre, cfg, &mut transport, None)?;
    transport.flush();
    Ok((out, transport.bog))
}

/// Mean-field amplitudes in frequency modes, FFT order (√pJ units; the
/// photon-number scale cancels in every noise ratio).
pub(crate) fn mean_modes_freq(env: &ComplexEnvelope) -> Vec<Complex64> {
    let dt = env.grid().dt().sqrt();
    let mut b: Vec<Complex64> = env.samples().iter().map(|a| a * dt).collect();
    UnitaryDft::new(b.len()).forward(&mut b);
    b
}

/// Time-domain coefficient of the functional `2Re⟨d, δb⟩` on frequency modes.
pub(crate) fn freq_functional_to_time(d: &[Complex64]) -> Vec<Complex64> {
    let mut c = d.to_vec();
    UnitaryDft::new(c.len()).inverse(&mut c);
    c
}

fn check_shapes(env: &ComplexEnvelope, sigma: &CovarianceMatrix, n_sel: Option<usize>) -> Result<()> {
    let m = env.grid().n_samples();
    if sigma.n_modes() != m {
        return Err(invalid(format!("covariance has {} modes, envelope {}", sigma.n_modes(), m)));
    }
    if let Some(n) = n_sel {
        if n != m {
            return Err(invalid(format!("selector has {n} bins, grid {m}")));
        }
    }
    Ok(())
}

/// Photon-number statistics of the filtered beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilteredNoise {
    /// Var(δN)/⟨N⟩, 1 = shot noise.
    pub ratio: f64,
    /// Energy transmitted by the selector, pJ.
    pub energy: f64,
}

/// Var(δN)/⟨N⟩ of the beam after the selector; unselected light is replaced
/// by vacuum (beamsplitter model).
pub fn photon_number_noise(env: &ComplexEnvelope, sigma: &CovarianceMatrix, sel: &ModeSelector) -> Result<f64> {
    filtered_noise(env, sigma, sel).map(|f| f.ratio)
}

pub fn filtered_noise(env: &ComplexEnvelope, sigma: &CovarianceMatrix, sel: &ModeSelector) -> Result<FilteredNoise> {
    check_shapes(env, sigma, Some(sel.len()))?;
    let beta = mean_modes_freq(env);
    let w = sel.weights();
    let mean: f64 = beta.iter().zip(w).map(|(b, w)| w * b.norm_sqr()).sum();
    if !(mean > 0.0) {
        return Err(Error::Undefined("filtered beam carries no mean field".into()));
    }
    let d: Vec<Complex64> = beta.iter().zip(w).map(|(b, w)| b * *w).collect();
    let signal = sigma.functional_variance(&freq_functional_to_time(&d));
    let vacuum_port: f64 = beta.iter().zip(w).map(|(b, w)| w * (1.0 - w) * b.norm_sqr()).sum();
    Ok(FilteredNoise { ratio: (signal + vacuum_port) / mean, energy: mean })
}

/// Photon-number correlation coefficients between frequency bands.
#[derive(Debug, Clone, PartialEq)]
pub struct BandCorrelation {
    /// `C_ij`; rows/columns of undefined bands are NaN.
    pub matrix: DMatrix<f64>,
    /// `false` for bands without mean field.
    pub defined: Vec<bool>,
}

/// Bands are half-open `[lo, hi)` intervals of angular frequency (rad/ps).
pub fn spectral_correlation_matrix(
    env: &ComplexEnvelope,
    sigma: &CovarianceMatrix,
    bands: &[(f64, f64)],
) -> Result<BandCorrelation> {
    check_shapes(env, sigma, None)?;
    let mut sorted: Vec<(f64, f64)> = bands.to_vec();
    if sorted.iter().any(|(lo, hi)| !(lo < hi)) {
        return Err(invalid("each band needs lo < hi"));
    }
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if sorted.windows(2).any(|w| w[1].0 < w[0].1) {
        return Err(invalid("frequency bands overlap"));
    }
    let grid = env.grid();
    let beta = mean_modes_freq(env);
    let functionals: Vec<Vec<Complex64>> = bands
        .iter()
        .map(|&(lo, hi)| {
            let d: Vec<Complex64> = beta
                .iter()
                .enumerate()
                .map(|(m, b)| {
                    let w = grid.omega(m);
                    if w >= lo && w < hi {
                        *b
                    } else {
                        C0
                    }
                })
                .collect();
            freq_functional_to_time(&d)
        })
        .collect();
    let means: Vec<f64> = functionals.iter().map(|c| c.iter().map(|x| x.norm_sqr()).sum()).collect();
    let defined: Vec<bool> = means.iter().map(|&m| m > 0.0).collect();
    let k = bands.len();
    let var: Vec<f64> = functionals.iter().map(|c| sigma.functional_variance(c)).collect();
    let mut c = DMatrix::from_element(k, k, f64::NAN);
    for i in 0..k {
        if !defined[i] {
            continue;
        }
        c[(i, i)] = 1.0;
        for j in 0..i {
            if !defined[j] {
                continue;
            }
            let cov = sigma.functional_covariance(&functionals[i], &functionals[j]);
            let r = (cov / (var[i] * var[j]).sqrt()).clamp(-1.0, 1.0);
            c[(i, j)] = r;
            c[(j, i)] = r;
        }
    }
    Ok(BandCorrelation { matrix: c, defined })
}

/// `count` equal-width contiguous bands covering `[lo, hi)`.
pub fn uniform_bands(lo: f64, hi: f64, count: usize) -> Vec<(f64, f64)> {
    let w = (hi - lo) / count as f64;
    (0..count).map(|i| (lo + i as f64 * w, lo + (i + 1) as f64 * w)).collect()
}
