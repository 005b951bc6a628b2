//! Intrinsic torsion of an SU(3)-structure on a coframe algebra.
//!
//! The seven components are found jointly: with the module bases fixed,
//!
//! ```text
//! d omega    = -3/2 w1- psi+ + 3/2 w1+ psi- + w3 + w4 ^ omega
//! d psi_plus = w1+ omega^2 - w2+ ^ omega + w5 ^ psi+
//! d psi_minus= w1- omega^2 - w2- ^ omega + J w5 ^ psi+
//! ```
//!
//! is a 50 x 42 linear system, solved by least squares. The fit residual is
//! the correctness check.

use nalgebra::{DMatrix, DVector};

use crate::algebra::CoframeAlgebra;
use crate::error::{Error, Result};
use crate::forms::{hodge_star, norm_sq, pullback, w, KForm, MetricData};
use crate::linalg::{lstsq, nullspace};
use crate::stable::{almost_complex_oriented, Su3Structure};

/// Relative tolerance on the reconstruction of `(d omega, d psi+, d psi-)`.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct TorsionForms {
    pub w1_plus: f64,
    pub w1_minus: f64,
    pub w2_plus: KForm,
    pub w2_minus: KForm,
    pub w3: KForm,
    pub w4: KForm,
    pub w5: KForm,
}

impl TorsionForms {
    pub fn zero() -> Self {
        TorsionForms {
            w1_plus: 0.0,
            w1_minus: 0.0,
            w2_plus: KForm::zero(6, 2),
            w2_minus: KForm::zero(6, 2),
            w3: KForm::zero(6, 3),
            w4: KForm::zero(6, 1),
            w5: KForm::zero(6, 1),
        }
    }

    /// Coefficient magnitudes of each component, in the order
    /// `w1+, w1-, w2+, w2-, w3, w4, w5`.
    pub fn magnitudes(&self) -> [f64; 7] {
        [
            self.w1_plus.abs(),
            self.w1_minus.abs(),
            self.w2_plus.norm(),
            self.w2_minus.norm(),
            self.w3.norm(),
            self.w4.norm(),
            self.w5.norm(),
        ]
    }

    /// Coupled constant `c = -3/2 w1-`.
    pub fn coupled_constant(&self) -> f64 {
        -1.5 * self.w1_minus
    }
}

pub const COMPONENT_NAMES: [&str; 7] = ["W1+", "W1-", "W2+", "W2-", "W3", "W4", "W5"];

/// Basis of primitive (1,1)-forms: `J beta = beta`, `beta ^ omega^2 = 0`.
pub(crate) fn primitive_11_basis(s: &Su3Structure) -> Vec<KForm> {
    let o2 = w(&s.omega, &s.omega);
    let o2 = o2.scaled(1.0 / o2.norm());
    let mut m = DMatrix::zeros(16, 15);
    for i in 0..15 {
        let mut b = KForm::zero(6, 2);
        b.coeffs_mut()[i] = 1.0;
        let jb = pullback(&s.j, &b).expect("2-form");
        for (r, (x, y)) in jb.coeffs().iter().zip(b.coeffs()).enumerate() {
            m[(r, i)] = x - y;
        }
        m[(15, i)] = w(&b, &o2).top_coeff();
    }
    columns_to_forms(&nullspace(&m, 8), 2)
}

/// Basis of primitive (2,1)+(1,2)-forms: `gamma ^ omega = 0`, `gamma ^ psi_pm = 0`.
pub(crate) fn primitive_21_basis(s: &Su3Structure) -> Vec<KForm> {
    let o = s.omega.scaled(1.0 / s.omega.norm());
    let pp = s.psi_plus.scaled(1.0 / s.psi_plus.norm());
    let pm = s.psi_minus.scaled(1.0 / s.psi_minus.norm());
    let mut m = DMatrix::zeros(20, 20);
    for i in 0..20 {
        let mut g = KForm::zero(6, 3);
        g.coeffs_mut()[i] = 1.0;
        for (r, x) in w(&g, &o).coeffs().iter().enumerate() {
            m[(r, i)] = *x;
        }
        m[(6, i)] = w(&g, &pp).top_coeff();
        m[(7, i)] = w(&g, &pm).top_coeff();
    }
    columns_to_forms(&nullspace(&m, 12), 3)
}

fn columns_to_forms(n: &DMatrix<f64>, degree: usize) -> Vec<KForm> {
    n.column_iter()
        .map(|c| KForm::from_coeffs(6, degree, c.iter().copied().collect()).expect("basis column"))
        .collect()
}

/// Forward map: the exterior derivatives determined by a set of torsion forms.
pub fn reconstruct(t: &TorsionForms, s: &Su3Structure) -> [KForm; 3] {
    let o2 = w(&s.omega, &s.omega);
    let domega = &(&(&s.psi_plus.scaled(-1.5 * t.w1_minus) + &s.psi_minus.scaled(1.5 * t.w1_plus)) + &t.w3)
        + &w(&t.w4, &s.omega);
    let dpp = &(&o2.scaled(t.w1_plus) - &w(&t.w2_plus, &s.omega)) + &w(&t.w5, &s.psi_plus);
    let jw5 = pullback(&s.j, &t.w5).expect("1-form");
    let dpm = &(&o2.scaled(t.w1_minus) - &w(&t.w2_minus, &s.omega)) + &w(&jw5, &s.psi_plus);
    [domega, dpp, dpm]
}

fn check_dims(s: &Su3Structure, alg: &CoframeAlgebra) -> Result<()> {
    if alg.dim() != 6 {
        return Err(Error::DimensionMismatch(6, alg.dim()));
    }
    if s.omega.dim() != 6 {
        return Err(Error::DimensionMismatch(6, s.omega.dim()));
    }
    Ok(())
}

fn stack(forms: &[&KForm]) -> DVector<f64> {
    DVector::from_iterator(50, forms.iter().flat_map(|f| f.coeffs().iter().copied()))
}

/// Extracts the intrinsic torsion forms of `s` on `alg`.
pub fn torsion_forms(s: &Su3Structure, alg: &CoframeAlgebra) -> Result<TorsionForms> {
    check_dims(s, alg)?;
    let domega = alg.d(&s.omega);
    let dpp = alg.d(&s.psi_plus);
    let dpm = alg.d(&s.psi_minus);
    let b = stack(&[&domega, &dpp, &dpm]);

    let b11 = primitive_11_basis(s);
    let b21 = primitive_21_basis(s);
    let o2 = w(&s.omega, &s.omega);
    let zero3 = KForm::zero(6, 3);
    let zero4 = KForm::zero(6, 4);

    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(42);
    cols.push(stack(&[&s.psi_minus.scaled(1.5), &o2, &zero4]));
    cols.push(stack(&[&s.psi_plus.scaled(-1.5), &zero4, &o2]));
    for beta in &b11 {
        cols.push(stack(&[&zero3, &-&w(beta, &s.omega), &zero4]));
    }
    for beta in &b11 {
        cols.push(stack(&[&zero3, &zero4, &-&w(beta, &s.omega)]));
    }
    for gamma in &b21 {
        cols.push(stack(&[gamma, &zero4, &zero4]));
    }
    let unit = |i: usize| {
        let mut v = [0.0; 6];
        v[i] = 1.0;
        KForm::one_form(&v).expect("6 components")
    };
    for i in 0..6 {
        cols.push(stack(&[&w(&unit(i), &s.omega), &zero4, &zero4]));
    }
    for i in 0..6 {
        let e = unit(i);
        let je = pullback(&s.j, &e).expect("1-form");
        cols.push(stack(&[&zero3, &w(&e, &s.psi_plus), &w(&je, &s.psi_plus)]));
    }
    let a = DMatrix::from_columns(&cols);
    let x = lstsq(&a, &b);
    let residual = (&a * &x - &b).norm();
    if residual > RECONSTRUCTION_TOL * b.norm() + 1e-14 {
        return Err(Error::TorsionReconstruction(residual / b.norm().max(f64::MIN_POSITIVE)));
    }

    let combine = |basis: &[KForm], coeffs: &[f64], degree: usize| {
        basis.iter().zip(coeffs).fold(KForm::zero(6, degree), |acc, (f, &c)| acc.axpy(c, f))
    };
    let xs = x.as_slice();
    Ok(TorsionForms {
        w1_plus: xs[0],
        w1_minus: xs[1],
        w2_plus: combine(&b11, &xs[2..10], 2),
        w2_minus: combine(&b11, &xs[10..18], 2),
        w3: combine(&b21, &xs[18..30], 3),
        w4: KForm::one_form(&xs[30..36])?,
        w5: KForm::one_form(&xs[36..42])?,
    })
}

/// `w1-` computed independently from `d psi- ^ omega` and from `d omega ^ psi-`.
pub fn w1_minus_routes(s: &Su3Structure, alg: &CoframeAlgebra) -> Result<(f64, f64)> {
    check_dims(s, alg)?;
    let via_dpm = hodge_star(&w(&alg.d(&s.psi_minus), &s.omega), &s.metric)?.coeffs()[0] / 6.0;
    let via_domega = -hodge_star(&w(&alg.d(&s.omega), &s.psi_minus), &s.metric)?.coeffs()[0] / 6.0;
    Ok((via_dpm, via_domega))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct TorsionClass {
    pub calabi_yau: bool,
    pub nearly_kahler: bool,
    pub half_flat: bool,
    pub coupled: bool,
    /// Non-vanishing components, indexed like [`COMPONENT_NAMES`].
    pub nonzero: [bool; 7],
}

impl TorsionClass {
    pub fn nonzero_names(&self) -> Vec<&'static str> {
        COMPONENT_NAMES.iter().zip(self.nonzero).filter(|(_, z)| *z).map(|(n, _)| *n).collect()
    }
}

/// Default relative tolerance for deciding that a component vanishes.
pub const CLASSIFY_TOL: f64 = 1e-8;

pub fn classify(t: &TorsionForms) -> TorsionClass {
    classify_with(t, CLASSIFY_TOL)
}

/// Components below `tol * max(magnitudes)` (and below `1e-12` absolutely
/// when everything is tiny) count as zero.
pub fn classify_with(t: &TorsionForms, tol: f64) -> TorsionClass {
    let mags = t.magnitudes();
    let largest = mags.iter().copied().fold(0.0, f64::max);
    let cut = if largest < 1e-12 { 1e-12 } else { tol * largest };
    let mut nonzero = [false; 7];
    for (z, m) in nonzero.iter_mut().zip(mags) {
        *z = m > cut;
    }
    let [w1p, w1m, w2p, w2m, w3, w4, w5] = nonzero;
    let half_flat = !(w1p || w2p || w4 || w5);
    TorsionClass {
        calabi_yau: !nonzero.iter().any(|&z| z),
        nearly_kahler: w1m && half_flat && !w2m && !w3,
        half_flat,
        coupled: w1m && half_flat && !w3,
        nonzero,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledDiagnostics {
    pub c: f64,
    pub w2_norm_sq: f64,
    pub dw2_proportional: bool,
    pub dw2_factor: f64,
    /// `|dw2 - factor psi+| / |dw2|`, zero when `dw2 = 0`.
    pub dw2_nonproportionality: f64,
    pub susy_inequality: bool,
    pub scal: f64,
    /// Conclusive as an Einstein test only when `dw2_proportional`.
    pub einstein_residual: f64,
    /// `|*d*w2-|`, zero for coupled structures.
    pub w2_codifferential: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledReport {
    pub is_coupled: bool,
    pub details: Option<CoupledDiagnostics>,
}

/// `*d*` on a form.
pub fn codifferential(beta: &KForm, alg: &CoframeAlgebra, metric: &MetricData) -> Result<KForm> {
    let s = hodge_star(beta, metric)?;
    hodge_star(&alg.exterior_d(&s)?, metric)
}

pub fn coupled_report(s: &Su3Structure, alg: &CoframeAlgebra) -> Result<CoupledReport> {
    let t = torsion_forms(s, alg)?;
    coupled_report_from(s, alg, &t)
}

pub fn coupled_report_from(s: &Su3Structure, alg: &CoframeAlgebra, t: &TorsionForms) -> Result<CoupledReport> {
    if !classify(t).coupled {
        return Ok(CoupledReport { is_coupled: false, details: None });
    }
    let g = &s.metric;
    let w2 = &t.w2_minus;
    let dw2 = alg.d(w2);
    let pp_sq = norm_sq(&s.psi_plus, g)?;
    let factor = crate::forms::inner(&dw2, &s.psi_plus, g)? / pp_sq;
    let dw2_norm = norm_sq(&dw2, g)?.sqrt();
    let off = norm_sq(&dw2.axpy(-factor, &s.psi_plus), g)?.sqrt();
    let nonprop = if dw2_norm > 0.0 { off / dw2_norm } else { 0.0 };
    let (scal, einstein_residual) = torsion_scal_einstein(t.w1_minus, w2, &s.omega, &s.psi_plus, g)?;
    let w2_norm_sq = norm_sq(w2, g)?;
    let cod = codifferential(w2, alg, g)?;
    Ok(CoupledReport {
        is_coupled: true,
        details: Some(CoupledDiagnostics {
            c: t.coupled_constant(),
            w2_norm_sq,
            dw2_proportional: off <= 1e-8 * dw2_norm,
            dw2_factor: factor,
            dw2_nonproportionality: nonprop,
            susy_inequality: 3.0 * t.w1_minus * t.w1_minus >= w2_norm_sq * (1.0 - 1e-12),
            scal,
            einstein_residual,
            w2_codifferential: norm_sq(&cod, g)?.sqrt(),
        }),
    })
}

/// `Scal = 15/2 w1^2 - 1/2 |w2|^2` and `|*(w2 ^ w2) - w1 w2 + |w2|^2/3 omega|`.
pub fn torsion_scal_einstein(
    w1: f64,
    w2: &KForm,
    omega: &KForm,
    psi_plus: &KForm,
    metric: &MetricData,
) -> Result<(f64, f64)> {
    if w2.dim() != 6 || w2.degree() != 2 {
        return Err(Error::DegreeMismatch { expected: 2, got: w2.degree() });
    }
    let j = almost_complex_oriented(psi_plus, metric.orientation())?;
    let scale = w2.norm() * omega.norm() * omega.norm() + f64::MIN_POSITIVE;
    let trace = w(&w(w2, omega), omega).norm();
    let anti = (&pullback(&j, w2)? - w2).norm();
    let defect = (trace / scale).max(anti / (w2.norm() + f64::MIN_POSITIVE));
    if defect > 1e-8 {
        return Err(Error::NotPrimitive11(defect));
    }
    let n2 = norm_sq(w2, metric)?;
    let scal = 7.5 * w1 * w1 - 0.5 * n2;
    let e = &(&hodge_star(&w(w2, w2), metric)? - &w2.scaled(w1)) + &omega.scaled(n2 / 3.0);
    Ok((scal, norm_sq(&e, metric)?.sqrt()))
}

/// Torsion data of the twistor-space coupled structure, in the adapted frame.
pub fn twistor_fixture(sigma: f64) -> (f64, KForm) {
    let w1 = 2.0 / 3.0 * (sigma + 2.0);
    let a = -4.0 / 3.0 * (sigma - 1.0);
    let w2 = KForm::from_terms(6, 2, &[(a, &[1, 2]), (a, &[3, 4]), (-2.0 * a, &[5, 6])]).expect("valid");
    (w1, w2)
}

/// Closed-form membership of `sigma` in `[(10 - 6 sqrt 2)/7, (10 + 6 sqrt 2)/7]`.
pub fn susy_inequality_range_check(sigma: f64) -> bool {
    let r = 6.0 * 2f64.sqrt();
    let (lo, hi) = ((10.0 - r) / 7.0, (10.0 + r) / 7.0);
    lo <= sigma && sigma <= hi
}

/// `(r^2 omega, r^3 psi+)`.
pub fn rescale(s: &Su3Structure, r: f64) -> Result<Su3Structure> {
    s.rescale(r)
}
