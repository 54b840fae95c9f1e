//! Two-mode Gaussian states built from squeezed beams: beamsplitter
//! combination, Duan sum, conditional variances and linearized Stokes
//! parameters.
//!
//! Ordering is `(X_A, P_A, X_B, P_B)` with vacuum variance 1, so the
//! separable bound of the Duan sum is 4.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::nolm::SingleModeState;

/// Interference phase turning two amplitude-squeezed inputs into amplitude
/// anti-correlated, phase-correlated outputs.
pub const DEFAULT_PHASE: f64 = FRAC_PI_2;

/// Vacuum-normalized separable bound of the Duan sum.
pub const DUAN_BOUND: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeState {
    pub alpha_a: Complex64,
    pub alpha_b: Complex64,
    /// Lab-frame covariance over `(X_A, P_A, X_B, P_B)`.
    pub covariance: Matrix4<f64>,
}

fn omega4() -> Matrix4<f64> {
    let j = Matrix2::new(0.0, 1.0, -1.0, 0.0);
    let mut o = Matrix4::zeros();
    o.fixed_view_mut::<2, 2>(0, 0).copy_from(&j);
    o.fixed_view_mut::<2, 2>(2, 2).copy_from(&j);
    o
}

impl TwoModeState {
    pub fn new(alpha_a: Complex64, alpha_b: Complex64, covariance: Matrix4<f64>) -> Result<Self> {
        if (covariance - covariance.transpose()).abs().max() > 1e-12 {
            return Err(invalid("two-mode covariance must be symmetric"));
        }
        let s = Self { alpha_a, alpha_b, covariance };
        if s.uncertainty_min_eigenvalue() < -1e-8 {
            return Err(invalid("two-mode covariance violates the uncertainty relation"));
        }
        Ok(s)
    }

    /// Uncorrelated product of two single-mode states (lab frame).
    pub fn product(a: &SingleModeState, b: &SingleModeState) -> Self {
        let mut c = Matrix4::zeros();
        c.fixed_view_mut::<2, 2>(0, 0).copy_from(&a.lab_covariance());
        c.fixed_view_mut::<2, 2>(2, 2).copy_from(&b.lab_covariance());
        Self { alpha_a: a.alpha, alpha_b: b.alpha, covariance: c }
    }

    /// Smallest eigenvalue of σ + iΩ₄.
    pub fn uncertainty_min_eigenvalue(&self) -> f64 {
        let o = omega4();
        let h = nalgebra::Matrix4::<Complex64>::from_fn(|i, j| {
            Complex64::new(self.covariance[(i, j)], o[(i, j)])
        });
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Var(u·(X_A, P_A, X_B, P_B)).
    pub fn variance(&self, u: [f64; 4]) -> f64 {
        let u = Vector4::from(u);
        (u.transpose() * self.covariance * u)[0]
    }

    pub fn swapped(&self) -> Self {
        let p = Matrix4::new(
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, //
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0,
        );
        Self { alpha_a: self.alpha_b, alpha_b: self.alpha_a, covariance: p * self.covariance * p.transpose() }
    }

    pub fn mode_a(&self) -> Matrix2<f64> {
        self.covariance.fixed_view::<2, 2>(0, 0).into_owned()
    }

    pub fn mode_b(&self) -> Matrix2<f64> {
        self.covariance.fixed_view::<2, 2>(2, 2).into_owned()
    }

    pub fn cross(&self) -> Matrix2<f64> {
        self.covariance.fixed_view::<2, 2>(0, 2).into_owned()
    }

    /// Loss η on mode B: σ_B → ησ_B + (1−η)I, cross terms ×√η.
    pub fn with_loss_on_b(&self, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(invalid(format!("transmittance must lie in [0, 1], got {eta}")));
        }
        let mut c = self.covariance;
        let sb = self.mode_b() * eta + Matrix2::identity() * (1.0 - eta);
        c.fixed_view_mut::<2, 2>(2, 2).copy_from(&sb);
        let x = self.cross() * eta.sqrt();
        c.fixed_view_mut::<2, 2>(0, 2).copy_from(&x);
        c.fixed_view_mut::<2, 2>(2, 0).copy_from(&x.transpose());
        Ok(Self { alpha_b: self.alpha_b * eta.sqrt(), covariance: c, ..*self })
    }
}

/// Real symplectic matrix of `A = (a + e^{iθ} b)/√2`, `B = (a − e^{iθ} b)/√2`.
pub fn beamsplitter_matrix(theta: f64) -> Matrix4<f64> {
    let (s, c) = theta.sin_cos();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Matrix4::new(
        h, 0.0, h * c, -h * s, //
        0.0, h, h * s, h * c, //
        h, 0.0, -h * c, h * s, //
        0.0, h, -h * s, -h * c,
    )
}

/// Interferes the two inputs on a 50:50 beamsplitter with phase `theta` on `b`.
pub fn combine_on_beamsplitter(a: &SingleModeState, b: &SingleModeState, theta: f64) -> TwoModeState {
    let input = TwoModeState::product(a, b);
    let s = beamsplitter_matrix(theta);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let rotated = b.alpha * Complex64::from_polar(1.0, theta);
    TwoModeState {
        alpha_a: (a.alpha + rotated) * h,
        alpha_b: (a.alpha - rotated) * h,
        covariance: s * input.covariance * s.transpose(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuanResult {
    pub value: f64,
    /// Set when the value is below the separable bound.
    pub separable_excluded: bool,
}

/// min over signs of Var(X_A ± X_B) + Var(P_A ∓ P_B).
pub fn duan_criterion(s: &TwoModeState) -> DuanResult {
    let plus = s.variance([1.0, 0.0, 1.0, 0.0]) + s.variance([0.0, 1.0, 0.0, -1.0]);
    let minus = s.variance([1.0, 0.0, -1.0, 0.0]) + s.variance([0.0, 1.0, 0.0, 1.0]);
    let value = plus.min(minus);
    DuanResult { value, separable_excluded: value < DUAN_BOUND }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureCorrelations {
    pub corr_xx: f64,
    pub corr_pp: f64,
    /// V(X_B | X_A).
    pub cond_var_x: f64,
    /// V(P_B | P_A).
    pub cond_var_p: f64,
}

/// Gaussian conditional variance Var(u) − Cov(u,v)²/Var(v).
pub fn conditional_variance(var_u: f64, var_v: f64, cov: f64) -> Result<f64> {
    if !(var_v > 0.0) {
        return Err(Error::Undefined("conditioning variable has zero variance".into()));
    }
    Ok(var_u - cov * cov / var_v)
}

pub fn quadrature_correlations(s: &TwoModeState) -> Result<QuadratureCorrelations> {
    let c = &s.covariance;
    let corr = |i: usize, j: usize| {
        let d = (c[(i, i)] * c[(j, j)]).sqrt();
        if d > 0.0 {
            (c[(i, j)] / d).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    };
    Ok(QuadratureCorrelations {
        corr_xx: corr(0, 2),
        corr_pp: corr(1, 3),
        cond_var_x: conditional_variance(c[(2, 2)], c[(0, 0)], c[(0, 2)])?,
        cond_var_p: conditional_variance(c[(3, 3)], c[(1, 1)], c[(1, 3)])?,
    })
}

/// Mean Stokes vector and variances of one beam with polarization modes x, y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesRecord {
    /// ⟨S₀⟩..⟨S₃⟩ in photon units.
    pub mean: [f64; 4],
    /// Var(S₁), Var(S₂), Var(S₃).
    pub variances: [f64; 3],
}

/// Linear functionals of the lab quadratures `(X_x, P_x, X_y, P_y)` giving
/// δS₁..δS₃, from δS = 2Re⟨c, δa⟩ around the means.
fn stokes_functionals(ax: Complex64, ay: Complex64) -> [[f64; 4]; 3] {
    // 2Re(conj(c)·δa) = Re c·X + Im c·P
    let row = |cx: Complex64, cy: Complex64| [cx.re, cx.im, cy.re, cy.im];
    let i = Complex64::i();
    [row(ax, -ay), row(ay, ax), row(-i * ay, i * ax)]
}

fn stokes_means(ax: Complex64, ay: Complex64) -> [f64; 4] {
    let cross = ax.conj() * ay;
    [ax.norm_sqr() + ay.norm_sqr(), ax.norm_sqr() - ay.norm_sqr(), 2.0 * cross.re, 2.0 * cross.im]
}

fn joint_polarization_covariance(x: &SingleModeState, y: &SingleModeState) -> Matrix4<f64> {
    TwoModeState::product(x, y).covariance
}

/// Linearized Stokes statistics of a beam whose x and y polarization modes
/// are given (each covariance in its own amplitude frame, uncorrelated).
pub fn stokes_covariance(x: &SingleModeState, y: &SingleModeState) -> Result<StokesRecord> {
    if x.alpha.norm() == 0.0 && y.alpha.norm() == 0.0 {
        return Err(Error::Undefined("Stokes linearization needs a bright polarization mode".into()));
    }
    let cov = joint_polarization_covariance(x, y);
    let f = stokes_functionals(x.alpha, y.alpha);
    let var = |u: [f64; 4]| {
        let u = Vector4::from(u);
        (u.transpose() * cov * u)[0]
    };
    Ok(StokesRecord { mean: stokes_means(x.alpha, y.alpha), variances: [var(f[0]), var(f[1]), var(f[2])] })
}

/// Stokes records of two beams whose x modes are entangled (`xs`) and y modes
/// are entangled (`ys`), plus the cross-beam correlation coefficients of
/// S₁, S₂, S₃.
pub fn stokes_pair(xs: &TwoModeState, ys: &TwoModeState) -> Result<(StokesRecord, StokesRecord, [f64; 3])> {
    if xs.alpha_a.norm() + ys.alpha_a.norm() == 0.0 || xs.alpha_b.norm() + ys.alpha_b.norm() == 0.0 {
        return Err(Error::Undefined("Stokes linearization needs a bright polarization mode".into()));
    }
    // full ordering (X_xA, P_xA, X_yA, P_yA, X_xB, P_xB, X_yB, P_yB)
    let mut cov = nalgebra::SMatrix::<f64, 8, 8>::zeros();
    let place = |cov: &mut nalgebra::SMatrix<f64, 8, 8>, s: &TwoModeState, off: usize| {
        let idx = [off, off + 1, off + 4, off + 5];
        for (i, &ri) in idx.iter().enumerate() {
            for (j, &cj) in idx.iter().enumerate() {
                cov[(ri, cj)] = s.covariance[(i, j)];
            }
        }
    };
    place(&mut cov, xs, 0);
    place(&mut cov, ys, 2);
    let fa = stokes_functionals(xs.alpha_a, ys.alpha_a);
    let fb = stokes_functionals(xs.alpha_b, ys.alpha_b);
    let embed = |u: [f64; 4], off: usize| {
        let mut v = nalgebra::SVector::<f64, 8>::zeros();
        for (k, x) in u.iter().enumerate() {
            v[off + k] = *x;
        }
        v
    };
    let mut va = [0.0; 3];
    let mut vb = [0.0; 3];
    let mut corr = [0.0; 3];
    for i in 0..3 {
        let (ua, ub) = (embed(fa[i], 0), embed(fb[i], 4));
        va[i] = (ua.transpose() * cov * ua)[0];
        vb[i] = (ub.transpose() * cov * ub)[0];
        let c = (ua.transpose() * cov * ub)[0];
        let d = (va[i] * vb[i]).sqrt();
        corr[i] = if d > 0.0 { (c / d).clamp(-1.0, 1.0) } else { 0.0 };
    }
    let a = StokesRecord { mean: stokes_means(xs.alpha_a, ys.alpha_a), variances: va };
    let b = StokesRecord { mean: stokes_means(xs.alpha_b, ys.alpha_b), variances: vb };
    Ok((a, b, corr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn vacua_stay_vacua() {
        let v = SingleModeState::coherent(c(0.0));
        let s = combine_on_beamsplitter(&v, &v, DEFAULT_PHASE);
        assert_abs_diff_eq!(s.covariance, Matrix4::identity(), epsilon = 1e-15);
    }

    #[test]
    fn squeezed_inputs_give_reduced_sums() {
        let v = 0.5;
        let a = SingleModeState::amplitude_squeezed(c(3.0), v);
        let s = combine_on_beamsplitter(&a, &a, DEFAULT_PHASE);
        assert_abs_diff_eq!(s.variance([1.0, 0.0, 1.0, 0.0]), 2.0 * v, epsilon = 1e-12);
        assert_abs_diff_eq!(s.variance([0.0, 1.0, 0.0, -1.0]), 2.0 * v, epsilon = 1e-12);
        let d = duan_criterion(&s);
        assert_abs_diff_eq!(d.value, 2.0, epsilon = 1e-10);
        assert!(d.separable_excluded);
        assert!(s.uncertainty_min_eigenvalue() > -1e-8);
    }

    #[test]
    fn coherent_inputs_sit_on_the_bound() {
        let s = combine_on_beamsplitter(
            &SingleModeState::coherent(c(2.0)),
            &SingleModeState::coherent(Complex64::new(0.3, -1.0)),
            DEFAULT_PHASE,
        );
        let d = duan_criterion(&s);
        assert_abs_diff_eq!(d.value, 4.0, epsilon = 1e-10);
        assert!(!d.separable_excluded);
    }

    #[test]
    fn conditional_variances_of_half_squeezed_pair() {
        // Var(X_A) = (V + 1/V)/2 = 1.25, Cov = (V − 1/V)/2 = −0.75
        let a = SingleModeState::amplitude_squeezed(c(1.0), 0.5);
        let s = combine_on_beamsplitter(&a, &a, DEFAULT_PHASE);
        let q = quadrature_correlations(&s).unwrap();
        assert_abs_diff_eq!(q.cond_var_x, 1.25 - 0.5625 / 1.25, epsilon = 1e-12);
        assert_abs_diff_eq!(q.cond_var_p, 0.8, epsilon = 1e-12);
        assert!(q.cond_var_x * q.cond_var_p < 1.0);
        assert!(q.corr_xx < 0.0 && q.corr_pp > 0.0);
        assert_abs_diff_eq!(q.corr_xx, -0.6, epsilon = 1e-12);
    }

    #[test]
    fn product_state_has_no_correlation() {
        let s = TwoModeState::product(
            &SingleModeState::amplitude_squeezed(c(1.0), 0.3),
            &SingleModeState::coherent(c(1.0)),
        );
        let q = quadrature_correlations(&s).unwrap();
        assert_eq!((q.corr_xx, q.corr_pp), (0.0, 0.0));
        assert_abs_diff_eq!(q.cond_var_x, 1.0);
        assert_abs_diff_eq!(q.cond_var_p, 1.0);
    }

    #[test]
    fn zero_variance_conditioning_is_undefined() {
        assert!(conditional_variance(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn one_sided_loss_approaches_bound() {
        let a = SingleModeState::amplitude_squeezed(c(1.0), 0.5);
        let s = combine_on_beamsplitter(&a, &a, DEFAULT_PHASE);
        let mut last = duan_criterion(&s).value;
        for k in 1..=10 {
            let eta = 1.0 - k as f64 / 10.0;
            let v = duan_criterion(&s.with_loss_on_b(eta).unwrap()).value;
            assert!(v >= last - 1e-12);
            last = v;
        }
        // fully lost B: 2 + Var(X_A) + Var(P_A)
        assert_abs_diff_eq!(last, 2.0 + 2.5, epsilon = 1e-12);
        assert!(last >= DUAN_BOUND);
    }

    #[test]
    fn stokes_of_coherent_beam_is_shot_noise() {
        let x = SingleModeState::coherent(Complex64::new(3.0, 1.0));
        let y = SingleModeState::coherent(Complex64::new(-1.0, 2.0));
        let r = stokes_covariance(&x, &y).unwrap();
        for v in r.variances {
            assert_abs_diff_eq!(v, r.mean[0], epsilon = 1e-12);
        }
        let m = r.mean;
        assert_abs_diff_eq!(m[0] * m[0], m[1] * m[1] + m[2] * m[2] + m[3] * m[3], epsilon = 1e-9);
    }

    #[test]
    fn dark_y_mode() {
        let r = stokes_covariance(&SingleModeState::coherent(c(2.0)), &SingleModeState::coherent(c(0.0))).unwrap();
        assert_eq!(r.mean, [4.0, 4.0, 0.0, 0.0]);
        assert!(stokes_covariance(&SingleModeState::coherent(c(0.0)), &SingleModeState::coherent(c(0.0))).is_err());
    }

    #[test]
    fn squeezed_x_reduces_s1() {
        let r = stokes_covariance(
            &SingleModeState::amplitude_squeezed(c(2.0), 0.4),
            &SingleModeState::coherent(Complex64::new(0.0, 2.0)),
        )
        .unwrap();
        assert!(r.variances[0] < r.mean[0]);
    }

    #[test]
    fn stokes_pair_correlations_in_range() {
        let a = SingleModeState::amplitude_squeezed(c(2.0), 0.5);
        let xs = combine_on_beamsplitter(&a, &a, DEFAULT_PHASE);
        let ys = combine_on_beamsplitter(&SingleModeState::coherent(c(1.0)), &SingleModeState::coherent(c(1.0)), 0.0);
        let (ra, rb, corr) = stokes_pair(&xs, &ys).unwrap();
        assert!(ra.variances.iter().chain(&rb.variances).all(|v| *v >= 0.0));
        assert!(corr.iter().all(|c| c.abs() <= 1.0));
        assert!(corr.iter().any(|c| c.abs() > 0.1));
    }

    fn arb_state() -> impl Strategy<Value = SingleModeState> {
        (0.05f64..5.0, -3.0f64..3.0, -3.0f64..3.0, 0.0f64..std::f64::consts::PI, 1.0f64..3.0).prop_map(
            |(v, re, im, rot, thermal)| {
                let (s, c) = rot.sin_cos();
                let r = Matrix2::new(c, -s, s, c);
                let cov = r * Matrix2::new(v * thermal, 0.0, 0.0, thermal / v) * r.transpose();
                SingleModeState::new(Complex64::new(re, im), cov).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn splitter_is_symplectic_and_invertible(a in arb_state(), b in arb_state(), theta in -3.0f64..3.0) {
            let s = combine_on_beamsplitter(&a, &b, theta);
            prop_assert!(s.uncertainty_min_eigenvalue() > -1e-8);
            let m = beamsplitter_matrix(theta);
            let back = m.transpose() * s.covariance * m;
            let orig = TwoModeState::product(&a, &b).covariance;
            prop_assert!((back - orig).abs().max() < 1e-10);
            let o = omega4();
            prop_assert!((m * o * m.transpose() - o).abs().max() < 1e-12);
            let n_in = a.mean_photons() + b.mean_photons();
            let n_out = s.alpha_a.norm_sqr() + s.alpha_b.norm_sqr();
            prop_assert!((n_in - n_out).abs() < 1e-10 * (1.0 + n_in));
        }

        #[test]
        fn duan_is_label_symmetric(a in arb_state(), b in arb_state(), theta in -3.0f64..3.0) {
            let s = combine_on_beamsplitter(&a, &b, theta);
            let d1 = duan_criterion(&s).value;
            let d2 = duan_criterion(&s.swapped()).value;
            prop_assert!((d1 - d2).abs() < 1e-10 * d1.max(1.0));
        }

        #[test]
        fn pure_equal_squeezing_duan(v in 0.05f64..20.0) {
            let a = SingleModeState::amplitude_squeezed(c(1.0), v);
            let s = combine_on_beamsplitter(&a, &a, DEFAULT_PHASE);
            prop_assert!((duan_criterion(&s).value - 4.0 * v.min(1.0 / v)).abs() < 1e-10 * (1.0 + v + 1.0 / v));
        }

        #[test]
        fn correlations_bounded(a in arb_state(), b in arb_state(), theta in -3.0f64..3.0) {
            let q = quadrature_correlations(&combine_on_beamsplitter(&a, &b, theta)).unwrap();
            prop_assert!(q.corr_xx.abs() <= 1.0 - 1e-12 && q.corr_pp.abs() <= 1.0 - 1e-12);
        }
    }
}
