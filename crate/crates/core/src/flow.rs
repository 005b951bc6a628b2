//! Hitchin flow `d/dt psi+ = d omega`, `(d/dt omega) ^ omega = -d psi-`,
//! and the restricted flow that carries `(c, w2-)` alongside the forms.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::algebra::CoframeAlgebra;
use crate::error::{Error, Result};
use crate::forms::{basis_labels, lefschetz_solve, norm_sq, pullback, w, KForm};
use crate::ode::{dopri45, OdeOptions, OdeStop};
use crate::stable::{complete_su3, complete_su3_tol, standard_omega, standard_psi_plus, Su3Structure};
use crate::torsion::{classify, torsion_forms};

/// Half-flatness required of initial data (relative).
pub const HALF_FLAT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub omega: KForm,
    pub psi_plus: KForm,
}

impl FlowState {
    pub fn new(t: f64, omega: KForm, psi_plus: KForm) -> Self {
        FlowState { t, omega, psi_plus }
    }

    pub fn from_structure(s: &Su3Structure) -> Self {
        FlowState { t: 0.0, omega: s.omega.clone(), psi_plus: s.psi_plus.clone() }
    }

    /// Completion checking stability and metric positivity only; the flow
    /// preserves compatibility and normalization, but numerically they drift.
    pub fn structure(&self) -> Result<Su3Structure> {
        loose_structure(&self.omega, &self.psi_plus)
    }

    fn pack(&self) -> DVector<f64> {
        DVector::from_iterator(35, self.omega.coeffs().iter().chain(self.psi_plus.coeffs()).copied())
    }

    fn unpack(t: f64, y: &DVector<f64>) -> Self {
        FlowState {
            t,
            omega: KForm::from_coeffs(6, 2, y.as_slice()[..15].to_vec()).expect("15 coefficients"),
            psi_plus: KForm::from_coeffs(6, 3, y.as_slice()[15..35].to_vec()).expect("20 coefficients"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    ReachedTEnd,
    BlowupDetected,
    StructureInvalid(String),
    StepLimit,
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::ReachedTEnd => "reached_t_end",
            Termination::BlowupDetected => "blowup_detected",
            Termination::StructureInvalid(_) => "structure_invalid",
            Termination::StepLimit => "step_limit",
        }
    }

    fn from_stop(stop: OdeStop) -> Self {
        match stop {
            OdeStop::Reached => Termination::ReachedTEnd,
            OdeStop::StepCollapse | OdeStop::Overflow => Termination::BlowupDetected,
            OdeStop::Invalid(m) => Termination::StructureInvalid(m),
            OdeStop::MaxSteps => Termination::StepLimit,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowTrace {
    pub states: Vec<FlowState>,
    /// `min_c |d omega - c psi+|` per state.
    pub coupled_residuals: Vec<f64>,
    pub c_fits: Vec<f64>,
    pub termination: Termination,
    /// Largest relative `|d psi+|` and `|d(omega^2)|` seen along the trace.
    pub max_half_flat_drift: f64,
}

/// `(|d psi+| / |psi+|, |d(omega^2)| / |omega^2|)`.
pub fn half_flat_defect(omega: &KForm, psi_plus: &KForm, alg: &CoframeAlgebra) -> (f64, f64) {
    let o2 = w(omega, omega);
    let dpsi = alg.d(psi_plus).norm() / psi_plus.norm().max(f64::MIN_POSITIVE);
    let do2 = alg.d(&o2).norm() / o2.norm().max(f64::MIN_POSITIVE);
    (dpsi, do2)
}

/// Least-squares `c` in `d omega ~ c psi+` and the remaining residual norm.
pub fn coupled_residual(omega: &KForm, psi_plus: &KForm, alg: &CoframeAlgebra) -> (f64, f64) {
    let domega = alg.d(omega);
    let pp = psi_plus.dot(psi_plus);
    let c = if pp > 0.0 { domega.dot(psi_plus) / pp } else { 0.0 };
    (domega.axpy(-c, psi_plus).norm(), c)
}

/// Completion without compatibility or normalization checks. Runge-Kutta
/// stage points sit slightly off the constraint set; the accepted states are
/// validated separately.
fn loose_structure(omega: &KForm, psi_plus: &KForm) -> Result<Su3Structure> {
    complete_su3_tol(omega, psi_plus, f64::INFINITY, f64::INFINITY)
}

/// `(d/dt omega, d/dt psi+)`.
pub fn hitchin_rhs(s: &FlowState, alg: &CoframeAlgebra) -> Result<(KForm, KForm)> {
    if alg.dim() != 6 {
        return Err(Error::DimensionMismatch(6, alg.dim()));
    }
    let st = loose_structure(&s.omega, &s.psi_plus)?;
    let domega = lefschetz_solve(&-&alg.d(&st.psi_minus), &s.omega)?;
    Ok((domega, alg.d(&s.omega)))
}

pub fn integrate(s0: &FlowState, alg: &CoframeAlgebra, t_end: f64, tol: f64) -> Result<FlowTrace> {
    integrate_with(s0, alg, t_end, &OdeOptions::new(tol))
}

/// [`integrate`] with full integrator options (checkpoints, step limits).
pub fn integrate_with(s0: &FlowState, alg: &CoframeAlgebra, t_end: f64, opts: &OdeOptions) -> Result<FlowTrace> {
    complete_su3(&s0.omega, &s0.psi_plus)?;
    let (dpsi, domega2) = half_flat_defect(&s0.omega, &s0.psi_plus, alg);
    if dpsi > HALF_FLAT_TOL || domega2 > HALF_FLAT_TOL {
        return Err(Error::NotHalfFlat { dpsi, domega2 });
    }
    let drift_tol = (10.0 * opts.rtol).max(HALF_FLAT_TOL);
    let rhs = |t: f64, y: &DVector<f64>| {
        let (a, b) = hitchin_rhs(&FlowState::unpack(t, y), alg).ok()?;
        Some(DVector::from_iterator(35, a.coeffs().iter().chain(b.coeffs()).copied()))
    };
    let accept = |t: f64, y: &DVector<f64>| {
        let s = FlowState::unpack(t, y);
        s.structure().map_err(|e| e.to_string())?;
        let (a, b) = half_flat_defect(&s.omega, &s.psi_plus, alg);
        if a.max(b) > drift_tol {
            return Err(format!("half-flatness drift {:e} at t = {t}", a.max(b)));
        }
        Ok(())
    };
    let (path, stop) = dopri45(rhs, accept, s0.t, s0.pack(), t_end, opts);
    let states: Vec<FlowState> = path.iter().map(|(t, y)| FlowState::unpack(*t, y)).collect();
    let mut coupled_residuals = Vec::with_capacity(states.len());
    let mut c_fits = Vec::with_capacity(states.len());
    let mut drift: f64 = 0.0;
    for s in &states {
        let (r, c) = coupled_residual(&s.omega, &s.psi_plus, alg);
        coupled_residuals.push(r);
        c_fits.push(c);
        let (a, b) = half_flat_defect(&s.omega, &s.psi_plus, alg);
        drift = drift.max(a).max(b);
    }
    Ok(FlowTrace { states, coupled_residuals, c_fits, termination: Termination::from_stop(stop), max_half_flat_drift: drift })
}

/// `(t, residual, c_fit)` per state.
pub fn coupled_residual_series(trace: &FlowTrace) -> Vec<(f64, f64, f64)> {
    trace.states.iter().zip(&trace.coupled_residuals).zip(&trace.c_fits).map(|((s, r), c)| (s.t, *r, *c)).collect()
}

impl FlowTrace {
    pub fn final_state(&self) -> &FlowState {
        self.states.last().expect("a trace holds at least its initial state")
    }

    /// State recorded exactly at `t`, if any.
    pub fn state_at(&self, t: f64) -> Option<&FlowState> {
        self.states.iter().find(|s| s.t == t)
    }

    /// Largest `|J(t) - J(0)|` (entrywise) along the trace.
    pub fn j_drift(&self) -> Result<f64> {
        let j0 = self.states[0].structure()?.j;
        let mut worst: f64 = 0.0;
        for s in &self.states[1..] {
            worst = worst.max(s.structure()?.j.distance(&j0));
        }
        Ok(worst)
    }

    /// Header `t, omega_e12.., psi_plus_e123.., coupled_residual, c_fit`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for l in basis_labels(6, 2) {
            let _ = write!(out, ",omega_{l}");
        }
        for l in basis_labels(6, 3) {
            let _ = write!(out, ",psi_plus_{l}");
        }
        out.push_str(",coupled_residual,c_fit\n");
        for ((s, r), c) in self.states.iter().zip(&self.coupled_residuals).zip(&self.c_fits) {
            write_row(&mut out, s.t, &[s.omega.coeffs(), s.psi_plus.coeffs(), &[*r, *c]]);
        }
        out
    }
}

fn write_row(out: &mut String, t: f64, groups: &[&[f64]]) {
    let _ = write!(out, "{t:.17e}");
    for g in groups {
        for x in *g {
            let _ = write!(out, ",{x:.17e}");
        }
    }
    out.push('\n');
}

/// Closed-form coupled solution on the Iwasawa algebra from the standard pair:
/// `omega = s^{2/3}(e12 + e34) + s^{-2/3} e56`, `psi+ = s^{1/3} psi+(0)`, `s = 1 - 3t`.
pub fn iwasawa_exact(t: f64) -> FlowState {
    let s = 1.0 - 3.0 * t;
    let a1 = s.powf(2.0 / 3.0);
    let a3 = s.powf(-2.0 / 3.0);
    let omega = KForm::from_terms(6, 2, &[(a1, &[1, 2]), (a1, &[3, 4]), (a3, &[5, 6])]).expect("valid");
    FlowState { t, omega, psi_plus: standard_psi_plus().scaled(s.cbrt()) }
}

/// `c(t) = -(1 - 3t)^{-1}` along [`iwasawa_exact`].
pub fn iwasawa_exact_c(t: f64) -> f64 {
    -1.0 / (1.0 - 3.0 * t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestrictedFlowState {
    pub t: f64,
    pub omega: KForm,
    pub psi_plus: KForm,
    pub psi_minus: KForm,
    pub c: f64,
    pub w2: KForm,
}

impl RestrictedFlowState {
    /// Seeds from a coupled structure, reading `c` and `w2-` off its torsion.
    pub fn from_structure(s: &Su3Structure, alg: &CoframeAlgebra) -> Result<Self> {
        let t = torsion_forms(s, alg)?;
        if !classify(&t).coupled {
            return Err(Error::RestrictedPrecondition("seed structure is not coupled".into()));
        }
        Ok(RestrictedFlowState {
            t: 0.0,
            omega: s.omega.clone(),
            psi_plus: s.psi_plus.clone(),
            psi_minus: s.psi_minus.clone(),
            c: t.coupled_constant(),
            w2: t.w2_minus,
        })
    }

    fn pack(&self) -> DVector<f64> {
        DVector::from_iterator(
            51,
            self.omega.coeffs().iter().chain(self.psi_plus.coeffs()).chain(&[self.c]).chain(self.w2.coeffs()).copied(),
        )
    }

    /// Rebuilds a state; `psi-` is recomputed from `(omega, psi+)`.
    fn unpack(t: f64, y: &DVector<f64>) -> Result<Self> {
        let v = y.as_slice();
        let omega = KForm::from_coeffs(6, 2, v[..15].to_vec())?;
        let psi_plus = KForm::from_coeffs(6, 3, v[15..35].to_vec())?;
        let st = loose_structure(&omega, &psi_plus)?;
        Ok(RestrictedFlowState { t, omega, psi_plus, psi_minus: st.psi_minus, c: v[35], w2: KForm::from_coeffs(6, 2, v[36..51].to_vec())? })
    }

    pub fn structure(&self) -> Result<Su3Structure> {
        loose_structure(&self.omega, &self.psi_plus)
    }

    /// `|d omega - c psi+|`.
    pub fn rho_norm(&self, alg: &CoframeAlgebra) -> f64 {
        alg.d(&self.omega).axpy(-self.c, &self.psi_plus).norm()
    }

    /// `|d w2 + |w2|^2/4 psi+ + c gamma|`.
    pub fn constraint_residual(&self, alg: &CoframeAlgebra, gamma: &KForm) -> Result<f64> {
        let st = self.structure()?;
        let n2 = norm_sq(&self.w2, &st.metric)?;
        Ok((&alg.d(&self.w2).axpy(0.25 * n2, &self.psi_plus) + &gamma.scaled(self.c)).norm())
    }

    /// Relative failure of `w2` to be primitive of type (1,1) for the current structure.
    pub fn w2_type_defect(&self) -> Result<f64> {
        let st = self.structure()?;
        let n = self.w2.norm();
        if n == 0.0 {
            return Ok(0.0);
        }
        let anti = (&pullback(&st.j, &self.w2)? - &self.w2).norm() / n;
        let on = self.omega.norm();
        let trace = w(&w(&self.w2, &self.omega), &self.omega).norm() / (n * on * on);
        Ok(anti.max(trace))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestrictedDerivative {
    pub omega: KForm,
    pub psi_plus: KForm,
    pub psi_minus: KForm,
    pub c: f64,
    pub w2: KForm,
}

fn check_gamma(s: &Su3Structure, alg: &CoframeAlgebra, gamma: &KForm) -> Result<()> {
    if gamma.dim() != 6 || gamma.degree() != 3 {
        return Err(Error::InvalidGamma("expected a 3-form in six dimensions".into()));
    }
    if gamma.max_abs() == 0.0 {
        return Ok(());
    }
    let n = gamma.norm();
    let tol = 1e-9 * n;
    let type_defect = w(gamma, &s.omega).norm() / s.omega.norm();
    let pp = w(gamma, &s.psi_plus).norm() / s.psi_plus.norm();
    let pm = w(gamma, &s.psi_minus).norm() / s.psi_minus.norm();
    if type_defect.max(pp).max(pm) > tol {
        return Err(Error::InvalidGamma("not primitive of type (2,1)+(1,2)".into()));
    }
    if alg.d(gamma).norm() > tol {
        return Err(Error::InvalidGamma("not closed".into()));
    }
    if alg.d(&pullback(&s.j, gamma)?).norm() > tol {
        return Err(Error::InvalidGamma("J gamma is not closed".into()));
    }
    Ok(())
}

fn check_restricted(s: &RestrictedFlowState, alg: &CoframeAlgebra, gamma: &KForm) -> Result<Su3Structure> {
    if alg.dim() != 6 {
        return Err(Error::DimensionMismatch(6, alg.dim()));
    }
    let st = complete_su3(&s.omega, &s.psi_plus)?;
    check_gamma(&st, alg, gamma)?;
    if s.c.abs() < 1e-12 {
        return Err(Error::RestrictedPrecondition("coupled constant c must be nonzero".into()));
    }
    let domega = alg.d(&s.omega);
    let scale = domega.norm().max(s.c.abs() * s.psi_plus.norm());
    let rho = s.rho_norm(alg);
    if rho > 1e-8 * scale {
        return Err(Error::RestrictedPrecondition(format!("d omega - c psi+ has norm {rho:e}")));
    }
    let k = s.constraint_residual(alg, gamma)?;
    let kscale = alg.d(&s.w2).norm().max(s.c.abs() * gamma.norm()).max(1e-300);
    if k > 1e-8 * kscale.max(s.psi_plus.norm() * s.w2.norm() * s.w2.norm()) {
        return Err(Error::RestrictedPrecondition(format!("dw2 constraint residual {k:e}")));
    }
    Ok(st)
}

/// Restricted-flow derivatives after checking the preconditions on `s` and `gamma`.
pub fn restricted_rhs(s: &RestrictedFlowState, alg: &CoframeAlgebra, nu: f64, gamma: &KForm) -> Result<RestrictedDerivative> {
    check_restricted(s, alg, gamma)?;
    restricted_rhs_unchecked(s, nu, gamma)
}

/// Restricted-flow derivatives with no consistency checks; used for perturbed seeds.
pub fn restricted_rhs_unchecked(s: &RestrictedFlowState, nu: f64, gamma: &KForm) -> Result<RestrictedDerivative> {
    let st = loose_structure(&s.omega, &s.psi_plus)?;
    let n2 = norm_sq(&s.w2, &st.metric)?;
    let o2 = w(&s.omega, &s.omega);
    let target = &(&o2.scaled(nu * n2 / 6.0) - &w(&s.w2, &s.omega).scaled(nu * s.c)) - &w(&s.w2, &s.w2).scaled(nu);
    let dw2 = lefschetz_solve(&target, &s.omega)?;
    Ok(RestrictedDerivative {
        omega: s.omega.scaled(2.0 / 3.0 * nu * s.c).axpy(nu, &s.w2),
        psi_plus: s.psi_plus.scaled(nu * s.c).axpy(-nu, gamma),
        psi_minus: s.psi_minus.scaled(nu * s.c).axpy(nu, &pullback(&st.j, gamma)?),
        c: -nu * (s.c * s.c / 3.0 + 0.25 * n2),
        w2: dw2,
    })
}

#[derive(Clone, Debug)]
pub struct RestrictedTrace {
    pub states: Vec<RestrictedFlowState>,
    pub rho_norms: Vec<f64>,
    pub constraint_residuals: Vec<f64>,
    pub w2_type_defects: Vec<f64>,
    pub termination: Termination,
}

pub fn restricted_integrate(
    s0: &RestrictedFlowState,
    alg: &CoframeAlgebra,
    nu: &dyn Fn(f64) -> f64,
    gamma: &KForm,
    t_end: f64,
    tol: f64,
) -> Result<RestrictedTrace> {
    check_restricted(s0, alg, gamma)?;
    restricted_integrate_unchecked(s0, alg, nu, gamma, t_end, &OdeOptions::new(tol))
}

/// [`restricted_integrate`] with full options.
pub fn restricted_integrate_with(
    s0: &RestrictedFlowState,
    alg: &CoframeAlgebra,
    nu: &dyn Fn(f64) -> f64,
    gamma: &KForm,
    t_end: f64,
    opts: &OdeOptions,
) -> Result<RestrictedTrace> {
    check_restricted(s0, alg, gamma)?;
    restricted_integrate_unchecked(s0, alg, nu, gamma, t_end, opts)
}

/// Integrates without checking the seed; the coupled residual `rho` is still recorded.
pub fn restricted_integrate_unchecked(
    s0: &RestrictedFlowState,
    alg: &CoframeAlgebra,
    nu: &dyn Fn(f64) -> f64,
    gamma: &KForm,
    t_end: f64,
    opts: &OdeOptions,
) -> Result<RestrictedTrace> {
    s0.structure()?;
    let rhs = |t: f64, y: &DVector<f64>| {
        let s = RestrictedFlowState::unpack(t, y).ok()?;
        let d = restricted_rhs_unchecked(&s, nu(t), gamma).ok()?;
        Some(DVector::from_iterator(
            51,
            d.omega.coeffs().iter().chain(d.psi_plus.coeffs()).chain(&[d.c]).chain(d.w2.coeffs()).copied(),
        ))
    };
    let accept = |t: f64, y: &DVector<f64>| RestrictedFlowState::unpack(t, y).map(|_| ()).map_err(|e| e.to_string());
    let (path, stop) = dopri45(rhs, accept, s0.t, s0.pack(), t_end, opts);
    let mut trace = RestrictedTrace {
        states: Vec::with_capacity(path.len()),
        rho_norms: Vec::new(),
        constraint_residuals: Vec::new(),
        w2_type_defects: Vec::new(),
        termination: Termination::from_stop(stop),
    };
    for (i, (t, y)) in path.iter().enumerate() {
        let s = if i == 0 { s0.clone() } else { RestrictedFlowState::unpack(*t, y)? };
        trace.rho_norms.push(s.rho_norm(alg));
        trace.constraint_residuals.push(s.constraint_residual(alg, gamma)?);
        trace.w2_type_defects.push(s.w2_type_defect()?);
        trace.states.push(s);
    }
    Ok(trace)
}

impl RestrictedTrace {
    pub fn state_at(&self, t: f64) -> Option<&RestrictedFlowState> {
        self.states.iter().find(|s| s.t == t)
    }

    /// Header `t, omega_*, psi_plus_*, c, w2_*, rho_norm, constraint_residual, w2_type_defect`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for l in basis_labels(6, 2) {
            let _ = write!(out, ",omega_{l}");
        }
        for l in basis_labels(6, 3) {
            let _ = write!(out, ",psi_plus_{l}");
        }
        out.push_str(",c");
        for l in basis_labels(6, 2) {
            let _ = write!(out, ",w2_{l}");
        }
        out.push_str(",rho_norm,constraint_residual,w2_type_defect\n");
        for (i, s) in self.states.iter().enumerate() {
            let tail = [self.rho_norms[i], self.constraint_residuals[i], self.w2_type_defects[i]];
            write_row(&mut out, s.t, &[s.omega.coeffs(), s.psi_plus.coeffs(), &[s.c], s.w2.coeffs(), &tail]);
        }
        out
    }
}

/// The standard pair as a flow seed.
pub fn standard_seed() -> FlowState {
    FlowState::new(0.0, standard_omega(), standard_psi_plus())
}
