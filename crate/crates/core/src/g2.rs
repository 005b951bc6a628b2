//! G2-structures on `I x N` built from an SU(3)-structure on `N`:
//! `phi = Re(F^3 Psi) + G |F|^2 omega ^ dt` with `Psi = psi+ + i psi-`.
//!
//! The 7D coframe is `e0 = dt, e1..e6`, oriented by `e0123456`. Since
//! `omega ^ dt = dt ^ omega` and `psi ^ dt = -dt ^ psi`,
//!
//! ```text
//! phi  = Re(F^3) psi+ - Im(F^3) psi- + G|F|^2 e0 ^ omega
//! *phi = -G Im(F^3) e0 ^ psi+ - G Re(F^3) e0 ^ psi- + 1/2 |F|^4 omega^2
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::algebra::CoframeAlgebra;
use crate::error::{Error, Result};
use crate::forms::{contract, hodge_star, w, KForm, MetricData};
use crate::linalg::{lstsq, nullspace};
use crate::stable::Su3Structure;

/// Default central-difference step for profiles without analytic derivatives.
pub const DEFAULT_DT_STEP: f64 = 1e-4;

type ComplexFn = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;
type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied `(F, G)` pair on the open interval `(lo, hi)`.
#[derive(Clone)]
pub struct CustomProfile {
    pub f: ComplexFn,
    pub g: RealFn,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone)]
pub enum Profile {
    /// `F = G = 1`, metric `dt^2 + h`.
    Cylinder,
    /// `F = t`, metric `dt^2 + t^2 h`.
    Cone,
    /// `F = sin(t) e^{it/3}`, metric `dt^2 + sin^2(t) h`.
    SinCone,
    Custom(CustomProfile),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Profile {
    pub fn name(&self) -> &'static str {
        match self {
            Profile::Cylinder => "cylinder",
            Profile::Cone => "cone",
            Profile::SinCone => "sincone",
            Profile::Custom(_) => "custom",
        }
    }

    pub fn parse(name: &str) -> Option<Profile> {
        match name {
            "cylinder" => Some(Profile::Cylinder),
            "cone" => Some(Profile::Cone),
            "sincone" | "sin-cone" => Some(Profile::SinCone),
            _ => None,
        }
    }

    fn check(&self, t: f64) -> Result<()> {
        let ok = t.is_finite()
            && match self {
                Profile::Cylinder => true,
                Profile::Cone => t > 0.0,
                Profile::SinCone => t > 0.0 && t < PI,
                Profile::Custom(p) => t > p.lo && t < p.hi,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::OutsideInterval { profile: self.name(), t })
        }
    }

    /// `(F, G)` at `t`.
    pub fn eval(&self, t: f64) -> (Complex64, f64) {
        match self {
            Profile::Cylinder => (Complex64::new(1.0, 0.0), 1.0),
            Profile::Cone => (Complex64::new(t, 0.0), 1.0),
            Profile::SinCone => (Complex64::from_polar(t.sin(), t / 3.0), 1.0),
            Profile::Custom(p) => ((p.f)(t), (p.g)(t)),
        }
    }

    /// `(F', G')` for the built-in profiles.
    fn derivative(&self, t: f64) -> Option<(Complex64, f64)> {
        match self {
            Profile::Cylinder => Some((Complex64::new(0.0, 0.0), 0.0)),
            Profile::Cone => Some((Complex64::new(1.0, 0.0), 0.0)),
            Profile::SinCone => {
                let e = Complex64::from_polar(1.0, t / 3.0);
                Some((e * t.cos() + Complex64::i() / 3.0 * e * t.sin(), 0.0))
            }
            Profile::Custom(_) => None,
        }
    }
}

/// Coefficients `[phi: psi+, psi-, e0^omega, *phi: e0^psi+, e0^psi-, omega^2]`.
fn coefficients(f: Complex64, g: f64) -> [f64; 6] {
    let f3 = f * f * f;
    let n2 = f.norm_sqr();
    [f3.re, -f3.im, g * n2, -g * f3.im, -g * f3.re, 0.5 * n2 * n2]
}

fn coefficient_derivatives(f: Complex64, g: f64, df: Complex64, dg: f64) -> [f64; 6] {
    let f3 = f * f * f;
    let df3 = 3.0 * f * f * df;
    let n2 = f.norm_sqr();
    let dn2 = 2.0 * (f.conj() * df).re;
    [
        df3.re,
        -df3.im,
        dg * n2 + g * dn2,
        -(dg * f3.im + g * df3.im),
        -(dg * f3.re + g * df3.re),
        n2 * dn2,
    ]
}

/// Lifted building blocks `psi+, psi-, e0^omega, e0^psi+, e0^psi-, omega^2`.
fn blocks(s: &Su3Structure) -> [KForm; 6] {
    let e0 = KForm::one_form(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).expect("7 components");
    let pp = s.psi_plus.lift7();
    let pm = s.psi_minus.lift7();
    let o = s.omega.lift7();
    [pp.clone(), pm.clone(), w(&e0, &o), w(&e0, &pp), w(&e0, &pm), w(&o, &o)]
}

fn combine(b: &[KForm], c: &[f64]) -> KForm {
    b.iter().zip(c).skip(1).fold(b[0].scaled(c[0]), |acc, (f, &x)| acc.axpy(x, f))
}

#[derive(Clone, Debug)]
pub struct G2Slice {
    pub t: f64,
    pub phi: KForm,
    pub metric: MetricData,
    pub star_phi: KForm,
}

pub fn g2_slice(s: &Su3Structure, profile: &Profile, t: f64) -> Result<G2Slice> {
    profile.check(t)?;
    let (f, g) = profile.eval(t);
    let c = coefficients(f, g);
    let b = blocks(s);
    let mut m = DMatrix::zeros(7, 7);
    m[(0, 0)] = g * g;
    m.view_mut((1, 1), (6, 6)).copy_from(&(s.metric.matrix() * f.norm_sqr()));
    let orientation = s.metric.orientation() * g.signum();
    Ok(G2Slice {
        t,
        phi: combine(&b[..3], &c[..3]),
        metric: MetricData::new(m, orientation)?,
        star_phi: combine(&b[3..], &c[3..]),
    })
}

/// `g_phi` recovered from `phi` alone via `g(X,Y) dV = 1/6 i_X phi ^ i_Y phi ^ phi`.
pub fn metric_from_phi(phi: &KForm) -> DMatrix<f64> {
    let n = phi.dim();
    let mut b = DMatrix::zeros(n, n);
    let hooks: Vec<KForm> = (0..n)
        .map(|i| {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            contract(&v, phi).expect("degree 3")
        })
        .collect();
    for i in 0..n {
        for j in i..n {
            let x = w(&w(&hooks[i], &hooks[j]), phi).top_coeff() / 6.0;
            b[(i, j)] = x;
            b[(j, i)] = x;
        }
    }
    let det = b.determinant();
    // odd root keeps the sign, so a reversed orientation still yields a positive metric
    b * (det.signum() / det.abs().powf(1.0 / 9.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct G2Class {
    pub parallel: bool,
    pub calibrated: bool,
    pub locally_conformal_calibrated: bool,
    pub integrable: bool,
}

#[derive(Clone, Debug)]
pub struct G2Torsion {
    pub tau0: f64,
    pub tau1: KForm,
    pub tau2: KForm,
    pub tau3: KForm,
    pub class: G2Class,
}

impl G2Torsion {
    fn from_parts(tau0: f64, tau1: KForm, tau2: KForm, tau3: KForm) -> Self {
        let mut t = G2Torsion { tau0, tau1, tau2, tau3, class: G2Class::default() };
        t.class = g2_classify(&t);
        t
    }

    pub fn magnitudes(&self) -> [f64; 4] {
        [self.tau0.abs(), self.tau1.norm(), self.tau2.norm(), self.tau3.norm()]
    }

    /// Largest componentwise coefficient difference.
    pub fn max_difference(&self, other: &G2Torsion) -> f64 {
        [
            (self.tau0 - other.tau0).abs(),
            (&self.tau1 - &other.tau1).max_abs(),
            (&self.tau2 - &other.tau2).max_abs(),
            (&self.tau3 - &other.tau3).max_abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn g2_classify(t: &G2Torsion) -> G2Class {
    g2_classify_with(t, 1e-7)
}

pub fn g2_classify_with(t: &G2Torsion, tol: f64) -> G2Class {
    let mags = t.magnitudes();
    let largest = mags.iter().copied().fold(0.0, f64::max);
    let cut = if largest < 1e-12 { 1e-12 } else { tol * largest };
    let [z0, z1, z2, z3] = mags.map(|m| m <= cut);
    G2Class {
        parallel: z0 && z1 && z2 && z3,
        calibrated: z0 && z1 && z3,
        locally_conformal_calibrated: z0 && z3,
        integrable: z2,
    }
}

fn unit_forms(degree: usize) -> Vec<KForm> {
    let n = crate::forms::binomial(7, degree);
    (0..n)
        .map(|i| {
            let mut c = vec![0.0; n];
            c[i] = 1.0;
            KForm::from_coeffs(7, degree, c).expect("unit")
        })
        .collect()
}

fn to_forms(n: &DMatrix<f64>, degree: usize) -> Vec<KForm> {
    n.column_iter()
        .map(|c| KForm::from_coeffs(7, degree, c.iter().copied().collect()).expect("column"))
        .collect()
}

/// `Lambda^2_14 = { beta : *(phi ^ beta) = -beta }`.
fn lambda2_14(slice: &G2Slice) -> Result<Vec<KForm>> {
    let mut m = DMatrix::zeros(21, 21);
    for (i, b) in unit_forms(2).iter().enumerate() {
        let v = &hodge_star(&w(&slice.phi, b), &slice.metric)? + b;
        m.set_column(i, &DVector::from_column_slice(v.coeffs()));
    }
    Ok(to_forms(&nullspace(&m, 14), 2))
}

/// `Lambda^3_27 = { rho : phi ^ rho = 0, *phi ^ rho = 0 }`.
fn lambda3_27(slice: &G2Slice) -> Vec<KForm> {
    let p = slice.phi.scaled(1.0 / slice.phi.norm());
    let sp = slice.star_phi.scaled(1.0 / slice.star_phi.norm());
    let mut m = DMatrix::zeros(35, 35);
    for (i, r) in unit_forms(3).iter().enumerate() {
        for (row, x) in w(&p, r).coeffs().iter().enumerate() {
            m[(row, i)] = *x;
        }
        m[(7, i)] = w(&sp, r).top_coeff();
    }
    to_forms(&nullspace(&m, 27), 3)
}

/// `(d phi, d *phi)` on the slice at `t`.
fn derivatives(
    s: &Su3Structure,
    alg7: &CoframeAlgebra,
    profile: &Profile,
    t: f64,
    dt_step: Option<f64>,
) -> Result<(KForm, KForm, G2Slice)> {
    let slice = g2_slice(s, profile, t)?;
    let (f, g) = profile.eval(t);
    let dc = match (dt_step, profile.derivative(t)) {
        (None, Some((df, dg))) => coefficient_derivatives(f, g, df, dg),
        (step, _) => {
            let h = step.unwrap_or(DEFAULT_DT_STEP);
            let at = |x: f64| {
                let (f, g) = profile.eval(x);
                coefficients(f, g)
            };
            let central = |h: f64| {
                let (a, b) = (at(t + h), at(t - h));
                let mut d = [0.0; 6];
                for k in 0..6 {
                    d[k] = (a[k] - b[k]) / (2.0 * h);
                }
                d
            };
            let (d1, d2) = (central(h), central(h / 2.0));
            let mut d = [0.0; 6];
            for k in 0..6 {
                d[k] = (4.0 * d2[k] - d1[k]) / 3.0;
            }
            d
        }
    };
    let b = blocks(s);
    let e0 = KForm::one_form(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).expect("7 components");
    let dphi = &alg7.d(&slice.phi) + &w(&e0, &combine(&b[..3], &dc[..3]));
    let dstar = &alg7.d(&slice.star_phi) + &w(&e0, &combine(&b[3..], &dc[3..]));
    Ok((dphi, dstar, slice))
}

fn stack(a: &KForm, b: &KForm) -> DVector<f64> {
    DVector::from_iterator(56, a.coeffs().iter().chain(b.coeffs()).copied())
}

/// Torsion forms of the G2-structure at `t`. `dt_step = None` uses the
/// analytic profile derivative when there is one.
pub fn g2_torsion(
    s: &Su3Structure,
    alg: &CoframeAlgebra,
    profile: &Profile,
    t: f64,
    dt_step: Option<f64>,
) -> Result<G2Torsion> {
    if alg.dim() != 6 {
        return Err(Error::DimensionMismatch(6, alg.dim()));
    }
    let alg7 = alg.lift7();
    let (dphi, dstar, slice) = derivatives(s, &alg7, profile, t, dt_step)?;
    let b = stack(&dphi, &dstar);
    let l214 = lambda2_14(&slice)?;
    let l327 = lambda3_27(&slice);
    let g = &slice.metric;
    let z4 = KForm::zero(7, 4);
    let z5 = KForm::zero(7, 5);
    let mut cols = Vec::with_capacity(49);
    cols.push(stack(&slice.star_phi, &z5));
    for e in unit_forms(1) {
        cols.push(stack(&w(&e, &slice.phi).scaled(3.0), &w(&e, &slice.star_phi).scaled(4.0)));
    }
    for beta in &l214 {
        cols.push(stack(&z4, &w(beta, &slice.phi)));
    }
    for rho in &l327 {
        cols.push(stack(&hodge_star(rho, g)?, &z5));
    }
    let a = DMatrix::from_columns(&cols);
    let x = lstsq(&a, &b);
    let residual = (&a * &x - &b).norm();
    let tol = if dt_step.is_none() && profile.derivative(t).is_some() { 1e-8 } else { 1e-6 };
    if residual > tol * b.norm() + 1e-13 {
        return Err(Error::TorsionReconstruction(residual / b.norm().max(f64::MIN_POSITIVE)));
    }
    let xs = x.as_slice();
    let fold = |basis: &[KForm], c: &[f64], degree: usize| {
        basis.iter().zip(c).fold(KForm::zero(7, degree), |acc, (f, &x)| acc.axpy(x, f))
    };
    Ok(G2Torsion::from_parts(
        xs[0],
        KForm::one_form(&xs[1..8])?,
        fold(&l214, &xs[8..22], 2),
        fold(&l327, &xs[22..49], 3),
    ))
}

/// `dphi ^ phi = 7 tau0 dV`, the pairing route for `tau0`.
pub fn tau0_pairing(s: &Su3Structure, alg: &CoframeAlgebra, profile: &Profile, t: f64) -> Result<f64> {
    let (dphi, _, slice) = derivatives(s, &alg.lift7(), profile, t, None)?;
    Ok(hodge_star(&w(&dphi, &slice.phi), &slice.metric)?.coeffs()[0] / 7.0)
}

fn e0_form(x: f64) -> KForm {
    KForm::one_form(&[x, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).expect("7 components")
}

/// Closed-form cone torsion over a coupled structure with constant `c`.
pub fn expected_cone_torsion(c: f64, w2: &KForm, t: f64) -> G2Torsion {
    G2Torsion::from_parts(
        0.0,
        e0_form((1.0 - c / 3.0) / t),
        w2.lift7().scaled(-t),
        KForm::zero(7, 3),
    )
}

/// Closed-form sin-cone torsion over a coupled structure with constant `c`.
pub fn expected_sincone_torsion(
    c: f64,
    w2: &KForm,
    omega: &KForm,
    psi_plus: &KForm,
    psi_minus: &KForm,
    t: f64,
) -> G2Torsion {
    let (s, co) = t.sin_cos();
    let e0 = e0_form(1.0);
    let w2l = w2.lift7();
    let bracket = &(&psi_minus.lift7().scaled(s.powi(4)) - &psi_plus.lift7().scaled(s.powi(3) * co))
        + &w(&e0, &omega.lift7()).scaled(4.0 / 3.0 * s * s);
    let tau3 = &bracket.scaled((c - 3.0) / 7.0) - &w(&e0, &w2l).scaled(s * s);
    G2Torsion::from_parts(
        (8.0 * c + 4.0) / 7.0,
        e0_form((1.0 - c / 3.0) * co / s),
        w2l.scaled(-(2.0 * t).sin() / 2.0),
        tau3,
    )
}
