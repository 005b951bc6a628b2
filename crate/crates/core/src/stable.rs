//! Stable 3-forms in six dimensions and SU(3)-structures built from a
//! compatible pair `(omega, psi_plus)`.
//!
//! `K_rho(v) = A((i_v rho) ^ rho)`, where `A` inverts `w -> i_w e^{123456}`;
//! the top degree is trivialised by `e^{123456} -> 1`, so `K_rho` is a plain
//! matrix and `lambda(rho) = tr(K_rho^2) / 6` is a number in units of
//! `(e^{123456})^2`. For `lambda < 0`, `J_rho = -K_rho / sqrt(-lambda)`,
//! where the square root is taken in the orientation making `omega^3`
//! positive. When `omega^3` is negative against `e^{123456}` the volume sign
//! is flipped (and with it `J`), and [`Su3Structure::orientation_flipped`]
//! records the fact.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::forms::{contract, pullback, w, Endomorphism, KForm, MetricData};

/// Scale-aware stability threshold: `lambda < -STABILITY_EPS * |rho|^4`.
pub const STABILITY_EPS: f64 = 1e-10;

const COMPAT_TOL: f64 = 1e-9;
const NORMALIZATION_TOL: f64 = 1e-9;

fn require_six(f: &KForm, degree: usize) -> Result<()> {
    if f.dim() != 6 {
        return Err(Error::InvalidDimension(f.dim()));
    }
    if f.degree() != degree {
        return Err(Error::DegreeMismatch { expected: degree, got: f.degree() });
    }
    Ok(())
}

/// Volume-trivialised `K_rho`.
pub fn k_endomorphism(rho: &KForm) -> Result<Endomorphism> {
    require_six(rho, 3)?;
    let mut m = DMatrix::zeros(6, 6);
    let mut v = [0.0; 6];
    for j in 0..6 {
        v.iter_mut().for_each(|x| *x = 0.0);
        v[j] = 1.0;
        let xi = w(&contract(&v, rho)?, rho);
        // degree-5 monomials are ordered by the missing index, descending:
        // position p omits index 5 - p.
        for (p, c) in xi.coeffs().iter().enumerate() {
            let missing = 5 - p;
            let sign = if missing % 2 == 0 { 1.0 } else { -1.0 };
            m[(missing, j)] = sign * c;
        }
    }
    Endomorphism::new(m)
}

/// `lambda(rho) = tr(K_rho^2) / 6`.
pub fn lambda_invariant(rho: &KForm) -> Result<f64> {
    let k = k_endomorphism(rho)?;
    Ok(k.compose(&k).matrix().trace() / 6.0)
}

/// True when `lambda(rho)` is negative beyond the scale-aware threshold.
pub fn is_stable_negative(rho: &KForm, lambda: f64) -> bool {
    lambda < -STABILITY_EPS * rho.norm().powi(4)
}

/// `lambda`, `K` and (when `lambda < 0`) `J` for a 3-form.
#[derive(Clone, Debug)]
pub struct StableFormReport {
    pub lambda: f64,
    pub k_matrix: Endomorphism,
    pub j_matrix: Option<Endomorphism>,
}

pub fn stable_form_report(rho: &KForm) -> Result<StableFormReport> {
    let k = k_endomorphism(rho)?;
    let lambda = k.compose(&k).matrix().trace() / 6.0;
    let j_matrix = is_stable_negative(rho, lambda).then(|| k.scaled(-1.0 / (-lambda).sqrt()));
    Ok(StableFormReport { lambda, k_matrix: k, j_matrix })
}

/// `J_rho` for the positive orientation `e^{123456}`.
pub fn almost_complex(rho: &KForm) -> Result<Endomorphism> {
    almost_complex_oriented(rho, 1.0)
}

/// `J_rho` with `orientation = +1` or `-1` fixing the sign of `sqrt(-lambda)`.
pub fn almost_complex_oriented(rho: &KForm, orientation: f64) -> Result<Endomorphism> {
    let k = k_endomorphism(rho)?;
    let lambda = k.compose(&k).matrix().trace() / 6.0;
    if !is_stable_negative(rho, lambda) {
        return Err(Error::NotStable(lambda));
    }
    let sign = if orientation < 0.0 { -1.0 } else { 1.0 };
    Ok(k.scaled(-sign / (-lambda).sqrt()))
}

/// A normalized SU(3)-structure with everything derived from `(omega, psi_plus)`.
#[derive(Clone, Debug)]
pub struct Su3Structure {
    pub omega: KForm,
    pub psi_plus: KForm,
    pub psi_minus: KForm,
    pub j: Endomorphism,
    pub metric: MetricData,
    /// Set when `omega^3` is negative against `e^{123456}`.
    pub orientation_flipped: bool,
}

/// Antisymmetric matrix `omega(e_i, e_j)`.
pub(crate) fn two_form_matrix(omega: &KForm) -> DMatrix<f64> {
    let n = omega.dim();
    let mut m = DMatrix::zeros(n, n);
    for (c, labels) in omega.terms() {
        let (i, j) = (labels[0] - 1, labels[1] - 1);
        m[(i, j)] = c;
        m[(j, i)] = -c;
    }
    m
}

/// `h(X, Y) = omega(X, J Y)` as a matrix.
pub(crate) fn induced_metric_matrix(omega: &KForm, j: &Endomorphism) -> DMatrix<f64> {
    two_form_matrix(omega) * j.matrix()
}

fn omega_cubed(omega: &KForm) -> f64 {
    w(&w(omega, omega), omega).top_coeff()
}

/// Checks compatibility, stability and positivity, and returns the ratio
/// `(psi_plus ^ psi_minus) / (2/3 omega^3)` along with the data built so far.
fn assemble(omega: &KForm, psi_plus: &KForm, compat_tol: f64) -> Result<(f64, Endomorphism, KForm, MetricData, bool)> {
    require_six(omega, 2)?;
    require_six(psi_plus, 3)?;
    let o3 = omega_cubed(omega);
    let on = omega.norm();
    if !(o3.abs() > 1e-12 * on.powi(3)) {
        return Err(Error::DegenerateOmega(o3));
    }
    let compat = w(omega, psi_plus).norm();
    if compat > compat_tol * on * psi_plus.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::Incompatible(compat));
    }
    let orientation = o3.signum();
    let j = almost_complex_oriented(psi_plus, orientation)?;
    let psi_minus = pullback(&j, psi_plus)?;
    let h = induced_metric_matrix(omega, &j);
    let sym = (&h + h.transpose()) * 0.5;
    let min_eig = sym.clone().symmetric_eigenvalues().min();
    if !(min_eig > 1e-12 * sym.amax()) {
        return Err(Error::MetricIndefinite(min_eig));
    }
    let metric = MetricData::new(sym, orientation).map_err(|e| match e {
        Error::MetricNotPositiveDefinite(v) => Error::MetricIndefinite(v),
        other => other,
    })?;
    let ratio = w(psi_plus, &psi_minus).top_coeff() / (2.0 / 3.0 * o3);
    Ok((ratio, j, psi_minus, metric, orientation < 0.0))
}

/// Completes `(omega, psi_plus)` to a full SU(3)-structure.
pub fn complete_su3(omega: &KForm, psi_plus: &KForm) -> Result<Su3Structure> {
    complete_su3_tol(omega, psi_plus, COMPAT_TOL, NORMALIZATION_TOL)
}

/// [`complete_su3`] with explicit relative tolerances for compatibility and
/// normalization, for states that drift slightly along a numerical flow.
pub fn complete_su3_tol(omega: &KForm, psi_plus: &KForm, compat_tol: f64, norm_tol: f64) -> Result<Su3Structure> {
    let (ratio, j, psi_minus, metric, flipped) = assemble(omega, psi_plus, compat_tol)?;
    if (ratio - 1.0).abs() > norm_tol {
        let scale = if ratio > 0.0 { 1.0 / ratio.sqrt() } else { f64::NAN };
        return Err(Error::Unnormalized { ratio, scale });
    }
    Ok(Su3Structure {
        omega: omega.clone(),
        psi_plus: psi_plus.clone(),
        psi_minus,
        j,
        metric,
        orientation_flipped: flipped,
    })
}

/// Scale `s > 0` such that `(omega, s * psi_plus)` is normalized.
pub fn normalization_scale(omega: &KForm, psi_plus: &KForm) -> Result<f64> {
    normalization_scale_tol(omega, psi_plus, COMPAT_TOL)
}

/// [`normalization_scale`] with an explicit compatibility tolerance.
pub fn normalization_scale_tol(omega: &KForm, psi_plus: &KForm, compat_tol: f64) -> Result<f64> {
    let (ratio, ..) = assemble(omega, psi_plus, compat_tol)?;
    if ratio > 0.0 {
        Ok(1.0 / ratio.sqrt())
    } else {
        Err(Error::Unnormalized { ratio, scale: f64::NAN })
    }
}

/// `omega = e^{12} + e^{34} + e^{56}`.
pub fn standard_omega() -> KForm {
    KForm::from_terms(6, 2, &[(1.0, &[1, 2]), (1.0, &[3, 4]), (1.0, &[5, 6])]).expect("valid")
}

/// `psi_plus = e^{135} - e^{146} - e^{236} - e^{245}`.
pub fn standard_psi_plus() -> KForm {
    KForm::from_terms(6, 3, &[(1.0, &[1, 3, 5]), (-1.0, &[1, 4, 6]), (-1.0, &[2, 3, 6]), (-1.0, &[2, 4, 5])])
        .expect("valid")
}

/// `psi_minus = e^{136} + e^{145} + e^{235} - e^{246}`.
pub fn standard_psi_minus() -> KForm {
    KForm::from_terms(6, 3, &[(1.0, &[1, 3, 6]), (1.0, &[1, 4, 5]), (1.0, &[2, 3, 5]), (-1.0, &[2, 4, 6])])
        .expect("valid")
}

/// The adapted-frame structure `(e^{12}+e^{34}+e^{56}, Re((e^1+ie^2)(e^3+ie^4)(e^5+ie^6)))`.
pub fn standard_structure() -> Su3Structure {
    complete_su3(&standard_omega(), &standard_psi_plus()).expect("standard pair is valid")
}

impl Su3Structure {
    /// `(r^2 omega, r^3 psi_plus)`; the metric scales by `r^2`.
    pub fn rescale(&self, r: f64) -> Result<Su3Structure> {
        if r == 0.0 || !r.is_finite() {
            return Err(Error::ZeroRescale);
        }
        complete_su3(&self.omega.scaled(r * r), &self.psi_plus.scaled(r * r * r))
    }

    /// `omega^3` coefficient against `e^{123456}`.
    pub fn omega_cubed(&self) -> f64 {
        omega_cubed(&self.omega)
    }
}
