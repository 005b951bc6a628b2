//! Multistart search for coupled structures parametrized by
//! `x = (omega, c)` with `psi+ = c d omega`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::algebra::CoframeAlgebra;
use crate::error::{Error, Result};
use crate::forms::{compound, compounds_upto, lefschetz_solve_lu, w, KForm};
use crate::optim::{levenberg_marquardt, nelder_mead};
use crate::stable::{almost_complex_oriented, complete_su3, lambda_invariant, normalization_scale_tol, two_form_matrix, Su3Structure};
use crate::torsion::{classify, coupled_report_from, torsion_forms, CoupledReport};

/// Weight on the stability, positivity and orientation hinges.
pub const HARD_WEIGHT: f64 = 1e3;
/// Hinge threshold on the scale-free inequality measures.
pub const HINGE_EPS: f64 = 1e-6;
pub const CERTIFY_TOL: f64 = 1e-8;
pub const DEFAULT_MIN_METRIC_RATIO: f64 = 1e-2;
/// Number of residual entries: 6 compatibility, 15 type, 3 hinges, 1 for `dw2`.
pub const RESIDUAL_LEN: usize = 25;

const NM_EVALS: usize = 600;
const LM_ITERS: usize = 60;

#[derive(Clone, Debug)]
pub struct SearchProblem {
    pub algebra: CoframeAlgebra,
    pub require_dw2_prop: bool,
    pub starts: usize,
    pub seed: u64,
    /// Box `[-bound, bound]` for the coefficients of `omega`.
    pub bound: f64,
    /// `|c|` is drawn from `[c_min, c_max]` with a random sign.
    pub c_min: f64,
    pub c_max: f64,
    /// Lower bound on `min/max` eigenvalue of the induced metric. The
    /// parametrization is scale-free, so this is what keeps the search domain
    /// away from degenerating metrics.
    pub min_metric_ratio: f64,
}

impl SearchProblem {
    pub fn new(algebra: CoframeAlgebra) -> Self {
        SearchProblem { algebra, require_dw2_prop: false, starts: 50, seed: 0, bound: 3.0, c_min: 0.05, c_max: 3.0, min_metric_ratio: DEFAULT_MIN_METRIC_RATIO }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algebra.dim() != 6 {
            return Err(Error::DimensionMismatch(6, self.algebra.dim()));
        }
        let ok = self.starts >= 1
            && self.bound.is_finite()
            && self.bound > 0.0
            && self.c_min.is_finite()
            && self.c_max.is_finite()
            && 0.0 < self.c_min
            && self.c_min <= self.c_max
            && (0.0..1.0).contains(&self.min_metric_ratio);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSearch("need starts >= 1, finite bounds with 0 < c_min <= c_max and a metric ratio in [0, 1)".into()))
        }
    }
}

/// `(omega, psi+ = c d omega)` from a parameter vector.
pub fn pair_from_params(x: &[f64], alg: &CoframeAlgebra) -> (KForm, KForm) {
    let omega = KForm::from_coeffs(6, 2, x[..15].to_vec()).expect("15 coefficients");
    let psi = alg.d(&omega).scaled(x[15]);
    (omega, psi)
}

/// Scale-free residual vector; zero exactly on valid coupled pairs (with
/// `dw2 ~ psi+` when the problem asks for it) inside the search domain.
pub fn residuals(x: &[f64], prob: &SearchProblem) -> DVector<f64> {
    let alg = &prob.algebra;
    let require_dw2_prop = prob.require_dw2_prop;
    let mut r = DVector::zeros(RESIDUAL_LEN);
    let hard = HARD_WEIGHT.sqrt();
    let (omega, psi) = pair_from_params(x, alg);
    let on = omega.norm();
    let pn = psi.norm();
    if !(on > 1e-12) || !(pn > 1e-12 * on.max(1.0)) {
        // psi+ vanishes: nothing to stabilize
        r[21] = hard;
        r[22] = hard;
        r[23] = hard;
        r[24] = if require_dw2_prop { 1.0 } else { 0.0 };
        return r;
    }
    let compat = w(&omega, &psi);
    for (i, c) in compat.coeffs().iter().enumerate() {
        r[i] = c / (on * pn);
    }
    let lambda = lambda_invariant(&psi).unwrap_or(0.0) / pn.powi(4);
    r[21] = hard * (lambda + HINGE_EPS).max(0.0);
    let o3 = w(&w(&omega, &omega), &omega).top_coeff();
    let orientation = if o3 < 0.0 { -1.0 } else { 1.0 };
    let Ok(j) = almost_complex_oriented(&psi, orientation) else {
        r[22] = hard;
        r[23] = hard;
        r[24] = if require_dw2_prop { 1.0 } else { 0.0 };
        return r;
    };
    let cj = compounds_upto(j.matrix(), 3);
    let jw = cj[2].tr_mul(&DVector::from_column_slice(omega.coeffs()));
    for (i, (a, b)) in jw.iter().zip(omega.coeffs()).enumerate() {
        r[6 + i] = (a - b) / on;
    }
    let h = two_form_matrix(&omega) * j.matrix();
    let sym = (&h + h.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigenvalues();
    let min_eig = eig.min() / sym.norm().max(f64::MIN_POSITIVE);
    let spread = eig.min() / eig.max().max(f64::MIN_POSITIVE);
    r[22] = hard * ((HINGE_EPS - min_eig).max(0.0) + (prob.min_metric_ratio - spread).max(0.0));
    let psi_minus = cj[3].tr_mul(&DVector::from_column_slice(psi.coeffs()));
    let psi_minus = KForm::from_coeffs(6, 3, psi_minus.as_slice().to_vec()).expect("20 coefficients");
    let ratio = w(&psi, &psi_minus).top_coeff() * o3 / (pn * pn * on.powi(3));
    r[23] = hard * (HINGE_EPS - ratio).max(0.0);
    if require_dw2_prop {
        r[24] = if eig.min() > 0.0 {
            sym.try_inverse().map_or(1.0, |ginv| dw2_sine(&omega, &psi, &psi_minus, &compound(&ginv, 3), alg))
        } else {
            1.0
        };
    }
    r
}

/// Sine of the angle, in the induced metric, between `dw2` and `psi+`, with
/// `w2` read off as the primitive part of the Lefschetz preimage of `d psi-`.
fn dw2_sine(omega: &KForm, psi: &KForm, psi_minus: &KForm, g3: &DMatrix<f64>, alg: &CoframeAlgebra) -> f64 {
    let Some(beta) = lefschetz_solve_lu(&alg.d(psi_minus), omega) else {
        return 1.0;
    };
    let o2 = w(omega, omega);
    let a = w(&beta, &o2).top_coeff() / w(&o2, omega).top_coeff();
    let w2 = beta.axpy(-a, omega);
    let dw2 = alg.d(&w2);
    let ip = |a: &KForm, b: &KForm| (g3 * DVector::from_column_slice(b.coeffs())).dot(&DVector::from_column_slice(a.coeffs()));
    let (nd, np) = (ip(&dw2, &dw2), ip(psi, psi));
    if !(nd > 0.0) {
        return 0.0;
    }
    // from the rejection, not 1 - cos^2, to keep small angles accurate
    let rej = dw2.axpy(-ip(&dw2, psi) / np, psi);
    (ip(&rej, &rej).max(0.0) / nd).sqrt().min(1.0)
}

/// Sum of squared residuals.
pub fn objective(x: &[f64], prob: &SearchProblem) -> f64 {
    residuals(x, prob).norm_squared()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StartLog {
    pub index: usize,
    /// Residual norm after the local descent.
    pub residual: f64,
    pub evals: usize,
}

/// A candidate in the gauge `|omega| = sqrt(3)`; `psi_plus` is normalized
/// whenever the pair allows it.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub omega: KForm,
    pub psi_plus: KForm,
    /// Least-squares `c` with `d omega ~ c psi+`.
    pub c: f64,
    /// Raw parameters `(omega, c)` as found.
    pub params: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Certificate {
    pub certified: bool,
    pub reason: Option<String>,
    pub structure: Option<Su3Structure>,
    pub report: Option<CoupledReport>,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    /// Norm of the residual vector at the best candidate.
    pub best_residual: f64,
    pub best_start: usize,
    pub candidate: Candidate,
    pub certificate: Certificate,
    pub starts: Vec<StartLog>,
}

impl SearchResult {
    pub fn certified(&self) -> bool {
        self.certificate.certified
    }
}

fn start_point(prob: &SearchProblem, index: usize) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(prob.seed);
    rng.set_stream(index as u64);
    let mut x = DVector::zeros(16);
    for i in 0..15 {
        x[i] = rng.gen_range(-prob.bound..=prob.bound);
    }
    let mag = rng.gen_range(prob.c_min..=prob.c_max);
    x[15] = if rng.gen::<bool>() { mag } else { -mag };
    x
}

fn local_search(prob: &SearchProblem, index: usize) -> (DVector<f64>, StartLog) {
    let x0 = start_point(prob, index);
    let nm = nelder_mead(|x| objective(x.as_slice(), prob), &x0, 0.5, NM_EVALS, 1e-12);
    let lm = levenberg_marquardt(|x| residuals(x.as_slice(), prob), &nm.x, LM_ITERS, 1e-30);
    let (x, value) = if lm.value <= nm.value { (lm.x, lm.value) } else { (nm.x, nm.value) };
    (x, StartLog { index, residual: value.sqrt(), evals: nm.evals + lm.evals })
}

/// Moves `x` into the gauge `|omega| = sqrt(3)`. The objective is invariant
/// under positive rescaling of `omega` and under any nonzero rescaling of `c`.
pub fn canonicalize(x: &[f64], alg: &CoframeAlgebra) -> Candidate {
    let (omega, psi) = pair_from_params(x, alg);
    let on = omega.norm();
    let r2 = if on > 0.0 { 3f64.sqrt() / on } else { 1.0 };
    let omega = omega.scaled(r2);
    let psi = psi.scaled(r2);
    let psi = match normalization_scale_tol(&omega, &psi, f64::INFINITY) {
        Ok(s) => psi.scaled(s),
        Err(_) => psi,
    };
    let domega = alg.d(&omega);
    let pp = psi.dot(&psi);
    let c = if pp > 0.0 { domega.dot(&psi) / pp } else { 0.0 };
    Candidate { omega, psi_plus: psi, c, params: x.to_vec() }
}

/// Full validation of a candidate: completion, torsion, classification at
/// [`CERTIFY_TOL`], and `dw2 ~ psi+` when the problem asks for it.
pub fn certify(cand: &Candidate, prob: &SearchProblem) -> Certificate {
    let fail = |reason: String, structure: Option<Su3Structure>| Certificate {
        certified: false,
        reason: Some(reason),
        structure,
        report: None,
    };
    let s = match complete_su3(&cand.omega, &cand.psi_plus) {
        Ok(s) => s,
        Err(e) => return fail(e.to_string(), None),
    };
    let t = match torsion_forms(&s, &prob.algebra) {
        Ok(t) => t,
        Err(e) => return fail(e.to_string(), Some(s)),
    };
    if !classify(&t).coupled {
        let names = classify(&t).nonzero_names().join(", ");
        return fail(format!("not coupled: nonzero torsion {names}"), Some(s));
    }
    let report = match coupled_report_from(&s, &prob.algebra, &t) {
        Ok(r) => r,
        Err(e) => return fail(e.to_string(), Some(s)),
    };
    let rho = prob.algebra.d(&s.omega).axpy(-t.coupled_constant(), &s.psi_plus).norm();
    if rho > CERTIFY_TOL * prob.algebra.d(&s.omega).norm().max(1.0) {
        return fail(format!("d omega - c psi+ has norm {rho:e}"), Some(s));
    }
    if prob.require_dw2_prop {
        let prop = report.details.as_ref().map(|d| d.dw2_proportional).unwrap_or(false);
        if !prop {
            return Certificate {
                certified: false,
                reason: Some("dw2 is not proportional to psi+".into()),
                structure: Some(s),
                report: Some(report),
            };
        }
    }
    Certificate { certified: true, reason: None, structure: Some(s), report: Some(report) }
}

/// Runs every start (in parallel), keeps the best by `(residual, index)`
/// and certifies it.
pub fn search(prob: &SearchProblem) -> Result<SearchResult> {
    prob.validate()?;
    let runs: Vec<(DVector<f64>, StartLog)> = (0..prob.starts).into_par_iter().map(|i| local_search(prob, i)).collect();
    let (best_x, best) = runs
        .iter()
        .min_by(|a, b| a.1.residual.total_cmp(&b.1.residual).then(a.1.index.cmp(&b.1.index)))
        .map(|(x, l)| (x.clone(), l.clone()))
        .expect("at least one start");
    let candidate = canonicalize(best_x.as_slice(), &prob.algebra);
    let certificate = certify(&candidate, prob);
    Ok(SearchResult {
        best_residual: best.residual,
        best_start: best.index,
        candidate,
        certificate,
        starts: runs.into_iter().map(|(_, l)| l).collect(),
    })
}
