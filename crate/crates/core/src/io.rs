//! JSON file formats for algebras and forms, report builders, and the
//! number formatting shared by every machine-readable output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::algebra::{CoframeAlgebra, DiffTerm};
use crate::error::Error;
use crate::flow::{FlowTrace, RestrictedTrace};
use crate::forms::KForm;
use crate::g2::{g2_torsion, G2Torsion, Profile};
use crate::search::SearchResult;
use crate::stable::{complete_su3, lambda_invariant, Su3Structure};
use crate::torsion::{classify, coupled_report_from, torsion_forms, CoupledReport, TorsionClass, TorsionForms, COMPONENT_NAMES};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IoError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl IoError {
    /// 2 for unreadable or malformed input, 1 for well-formed but invalid input.
    pub fn exit_code(&self) -> i32 {
        match self {
            IoError::Read { .. } | IoError::Parse(_) => 2,
            IoError::Validation(_) => 1,
        }
    }
}

/// Exit code for a failure inside the algorithms: 3 when the numerics broke
/// down, 1 when the input was simply not valid for the operation.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::SingularLefschetz(_)
        | Error::TorsionReconstruction(_)
        | Error::NonFinite(_)
        | Error::MetricNotPositiveDefinite(_)
        | Error::MetricNotSymmetric(_) => 3,
        _ => 1,
    }
}

/// `{"dim": 6, "differential": {"5": [[1, [1, 4]], ...]}}`; keys are 1-based
/// coframe indices, absent keys mean `d e^i = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraFile {
    pub dim: usize,
    pub differential: BTreeMap<String, Vec<(f64, [usize; 2])>>,
}

/// `{"degree": 2, "terms": [[1, [1, 2]], ...]}` with strictly increasing indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormFile {
    pub degree: usize,
    pub terms: Vec<(f64, Vec<usize>)>,
}

fn read(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| IoError::Read { path: path.display().to_string(), message: e.to_string() })
}

fn json_error(what: &str, e: serde_json::Error) -> IoError {
    IoError::Parse(format!("{what}: {e}"))
}

pub fn parse_algebra(path: &Path) -> Result<CoframeAlgebra, IoError> {
    parse_algebra_str(&read(path)?)
}

pub fn parse_algebra_str(text: &str) -> Result<CoframeAlgebra, IoError> {
    let file: AlgebraFile = serde_json::from_str(text).map_err(|e| json_error("algebra file", e))?;
    algebra_from_file(&file)
}

pub fn algebra_from_file(file: &AlgebraFile) -> Result<CoframeAlgebra, IoError> {
    let dim = file.dim;
    if dim != 6 && dim != 7 {
        return Err(IoError::Validation(format!("dim must be 6 or 7, got {dim}")));
    }
    let mut table = vec![Vec::new(); dim];
    for (key, terms) in &file.differential {
        let i: usize = key
            .trim()
            .parse()
            .map_err(|_| IoError::Parse(format!("differential key `{key}` is not an integer index")))?;
        if i < 1 || i > dim {
            return Err(IoError::Validation(format!("differential key {i} is outside 1..={dim}")));
        }
        for (n, &(coeff, [j, k])) in terms.iter().enumerate() {
            let field = format!("differential.{key}[{n}]");
            if j >= k {
                return Err(IoError::Parse(format!("{field}: indices [{j}, {k}] are not increasing")));
            }
            if j < 1 || k > dim {
                return Err(IoError::Validation(format!("{field}: indices [{j}, {k}] are outside 1..={dim}")));
            }
            if table[i - 1].iter().any(|t: &DiffTerm| t.j == j && t.k == k) {
                return Err(IoError::Parse(format!("{field}: duplicate term e{j}{k}")));
            }
            table[i - 1].push(DiffTerm::new(coeff, j, k));
        }
    }
    CoframeAlgebra::new(dim, table).map_err(|e| IoError::Validation(e.to_string()))
}

/// Canonical file for an algebra: numeric key order, zero terms dropped,
/// terms in lexicographic order.
pub fn algebra_to_file(alg: &CoframeAlgebra) -> AlgebraFile {
    let mut differential = BTreeMap::new();
    for (i, terms) in alg.table().iter().enumerate() {
        let mut t: Vec<(f64, [usize; 2])> = terms.iter().filter(|t| t.coeff != 0.0).map(|t| (t.coeff, [t.j, t.k])).collect();
        if t.is_empty() {
            continue;
        }
        t.sort_by_key(|x| x.1);
        differential.insert((i + 1).to_string(), t);
    }
    AlgebraFile { dim: alg.dim(), differential }
}

pub fn parse_form(path: &Path, dim: usize) -> Result<KForm, IoError> {
    parse_form_str(&read(path)?, dim)
}

pub fn parse_form_str(text: &str, dim: usize) -> Result<KForm, IoError> {
    let file: FormFile = serde_json::from_str(text).map_err(|e| json_error("form file", e))?;
    form_from_file(&file, dim)
}

pub fn form_from_file(file: &FormFile, dim: usize) -> Result<KForm, IoError> {
    if file.degree > dim {
        return Err(IoError::Validation(format!("degree {} exceeds dimension {dim}", file.degree)));
    }
    let mut seen: Vec<&[usize]> = Vec::new();
    for (n, (_, idx)) in file.terms.iter().enumerate() {
        if idx.len() != file.degree {
            return Err(IoError::Parse(format!("terms[{n}]: expected {} indices, got {}", file.degree, idx.len())));
        }
        if idx.windows(2).any(|p| p[0] >= p[1]) {
            return Err(IoError::Parse(format!("terms[{n}]: indices {idx:?} are not strictly increasing")));
        }
        if seen.contains(&idx.as_slice()) {
            return Err(IoError::Parse(format!("terms[{n}]: duplicate monomial {idx:?}")));
        }
        if idx.iter().any(|&i| i < 1 || i > dim) {
            return Err(IoError::Validation(format!("terms[{n}]: indices {idx:?} are outside 1..={dim}")));
        }
        seen.push(idx);
    }
    let terms: Vec<(f64, &[usize])> = file.terms.iter().map(|(c, i)| (*c, i.as_slice())).collect();
    KForm::from_terms(dim, file.degree, &terms).map_err(|e| IoError::Validation(e.to_string()))
}

/// Nonzero terms in lexicographic order.
pub fn form_to_file(f: &KForm) -> FormFile {
    FormFile { degree: f.degree(), terms: f.terms().collect() }
}

/// Writes finite floats as `{:.16e}` (17 significant digits); non-finite
/// values become `null` before reaching the formatter.
#[derive(Clone, Copy, Debug, Default)]
pub struct SeventeenDigits;

impl Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with [`SeventeenDigits`] number formatting.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SeventeenDigits);
    value.serialize(&mut ser).expect("report types serialize infallibly");
    String::from_utf8(out).expect("serde_json writes UTF-8")
}

/// `p/q` with `q <= 64` when `x` is that rational to 1e-9, else a decimal.
pub fn fraction(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    for q in 1..=64i64 {
        let p = (x * q as f64).round();
        if (x * q as f64 - p).abs() <= 1e-9 * (q as f64).max(x.abs() * q as f64) {
            let p = p as i64;
            return if q == 1 { format!("{p}") } else { format!("{p}/{q}") };
        }
    }
    format!("{x:.10}")
}

/// `-4/3 e12 - 4/3 e34 + 8/3 e56`; terms below `1e-12 * max(1, largest)` are dropped.
pub fn render_form(f: &KForm) -> String {
    let cutoff = 1e-12 * f.max_abs().max(1.0);
    let mut out = String::new();
    for (c, idx) in f.terms().filter(|(c, _)| c.abs() > cutoff) {
        let digits: String = idx.iter().map(|i| i.to_string()).collect();
        let mag = fraction(c.abs());
        let coef = if mag == "1" { String::new() } else { format!("{mag} ") };
        if out.is_empty() {
            let sign = if c < 0.0 { "-" } else { "" };
            let _ = write!(out, "{sign}{coef}e{digits}");
        } else {
            let sign = if c < 0.0 { " - " } else { " + " };
            let _ = write!(out, "{sign}{coef}e{digits}");
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct StructureJson {
    pub omega: FormFile,
    pub psi_plus: FormFile,
    pub psi_minus: FormFile,
    pub lambda: f64,
    pub orientation_flipped: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TorsionJson {
    pub w1_plus: f64,
    pub w1_minus: f64,
    pub w2_plus: FormFile,
    pub w2_minus: FormFile,
    pub w3: FormFile,
    pub w4: FormFile,
    pub w5: FormFile,
    pub magnitudes: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassJson {
    pub calabi_yau: bool,
    pub nearly_kahler: bool,
    pub half_flat: bool,
    pub coupled: bool,
    pub nonzero: Vec<String>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CoupledJson {
    pub is_coupled: bool,
    pub c: Option<f64>,
    pub w2_norm_sq: Option<f64>,
    pub dw2_proportional: Option<bool>,
    pub dw2_factor: Option<f64>,
    pub dw2_nonproportionality: Option<f64>,
    pub susy_inequality: Option<bool>,
    pub scal: Option<f64>,
    pub einstein_residual: Option<f64>,
    pub w2_codifferential: Option<f64>,
}

/// Everything `analyze` reports about one structure.
#[derive(Clone, Debug, Serialize)]
pub struct AnalyzeReport {
    pub structure: StructureJson,
    pub torsion: TorsionJson,
    pub class: ClassJson,
    pub coupled: CoupledJson,
}

pub fn structure_json(s: &Su3Structure) -> StructureJson {
    StructureJson {
        omega: form_to_file(&s.omega),
        psi_plus: form_to_file(&s.psi_plus),
        psi_minus: form_to_file(&s.psi_minus),
        lambda: lambda_invariant(&s.psi_plus).unwrap_or(f64::NAN),
        orientation_flipped: s.orientation_flipped,
    }
}

pub fn torsion_json(t: &TorsionForms) -> TorsionJson {
    TorsionJson {
        w1_plus: t.w1_plus,
        w1_minus: t.w1_minus,
        w2_plus: form_to_file(&t.w2_plus),
        w2_minus: form_to_file(&t.w2_minus),
        w3: form_to_file(&t.w3),
        w4: form_to_file(&t.w4),
        w5: form_to_file(&t.w5),
        magnitudes: COMPONENT_NAMES.iter().map(|n| n.to_string()).zip(t.magnitudes()).collect(),
    }
}

pub fn class_json(c: &TorsionClass) -> ClassJson {
    ClassJson {
        calabi_yau: c.calabi_yau,
        nearly_kahler: c.nearly_kahler,
        half_flat: c.half_flat,
        coupled: c.coupled,
        nonzero: c.nonzero_names().into_iter().map(String::from).collect(),
    }
}

pub fn coupled_json(r: &CoupledReport) -> CoupledJson {
    match &r.details {
        None => CoupledJson { is_coupled: r.is_coupled, ..CoupledJson::default() },
        Some(d) => CoupledJson {
            is_coupled: r.is_coupled,
            c: Some(d.c),
            w2_norm_sq: Some(d.w2_norm_sq),
            dw2_proportional: Some(d.dw2_proportional),
            dw2_factor: Some(d.dw2_factor),
            dw2_nonproportionality: Some(d.dw2_nonproportionality),
            susy_inequality: Some(d.susy_inequality),
            scal: Some(d.scal),
            einstein_residual: Some(d.einstein_residual),
            w2_codifferential: Some(d.w2_codifferential),
        },
    }
}

/// Validation, torsion, classification and the coupled report in one go.
pub fn analyze(alg: &CoframeAlgebra, omega: &KForm, psi_plus: &KForm) -> Result<AnalyzeReport, Error> {
    let s = complete_su3(omega, psi_plus)?;
    let t = torsion_forms(&s, alg)?;
    let report = coupled_report_from(&s, alg, &t)?;
    Ok(AnalyzeReport {
        structure: structure_json(&s),
        torsion: torsion_json(&t),
        class: class_json(&classify(&t)),
        coupled: coupled_json(&report),
    })
}

fn file_to_form(f: &FormFile, dim: usize) -> KForm {
    let terms: Vec<(f64, &[usize])> = f.terms.iter().map(|(c, i)| (*c, i.as_slice())).collect();
    KForm::from_terms(dim, f.degree, &terms).expect("emitted from a valid form")
}

fn opt(x: Option<f64>) -> String {
    x.map_or("-".into(), fraction)
}

pub fn render_analyze(r: &AnalyzeReport) -> String {
    let mut out = String::new();
    let t = &r.torsion;
    let _ = writeln!(out, "structure");
    let _ = writeln!(out, "  omega      = {}", render_form(&file_to_form(&r.structure.omega, 6)));
    let _ = writeln!(out, "  psi_plus   = {}", render_form(&file_to_form(&r.structure.psi_plus, 6)));
    let _ = writeln!(out, "  psi_minus  = {}", render_form(&file_to_form(&r.structure.psi_minus, 6)));
    let _ = writeln!(out, "  lambda     = {}", fraction(r.structure.lambda));
    if r.structure.orientation_flipped {
        let _ = writeln!(out, "  orientation flipped (omega^3 < 0)");
    }
    let _ = writeln!(out, "torsion");
    let _ = writeln!(out, "  w1_plus    = {}", fraction(t.w1_plus));
    let _ = writeln!(out, "  w1_minus   = {}", fraction(t.w1_minus));
    for (name, f, dim) in [("w2_plus", &t.w2_plus, 6), ("w2_minus", &t.w2_minus, 6), ("w3", &t.w3, 6), ("w4", &t.w4, 6), ("w5", &t.w5, 6)] {
        let _ = writeln!(out, "  {name:<10} = {}", render_form(&file_to_form(f, dim)));
    }
    let c = &r.class;
    let nz = if c.nonzero.is_empty() { "none".to_string() } else { c.nonzero.join(", ") };
    let _ = writeln!(out, "class");
    let _ = writeln!(out, "  nonzero    : {nz}");
    let _ = writeln!(
        out,
        "  calabi_yau={} nearly_kahler={} half_flat={} coupled={}",
        c.calabi_yau, c.nearly_kahler, c.half_flat, c.coupled
    );
    let k = &r.coupled;
    if k.is_coupled {
        let _ = writeln!(out, "coupled");
        let _ = writeln!(out, "  c          = {}", opt(k.c));
        let _ = writeln!(out, "  |w2|^2     = {}", opt(k.w2_norm_sq));
        let prop = k.dw2_proportional.unwrap_or(false);
        if prop {
            let _ = writeln!(out, "  dw2        = {} psi_plus", opt(k.dw2_factor));
        } else {
            let _ = writeln!(out, "  dw2 not proportional to psi_plus (relative residual {})", opt(k.dw2_nonproportionality));
        }
        let _ = writeln!(out, "  scal       = {}", opt(k.scal));
        let _ = writeln!(out, "  susy       = {}", k.susy_inequality.unwrap_or(false));
        let _ = writeln!(out, "  einstein residual = {:e}", k.einstein_residual.unwrap_or(f64::NAN));
    } else {
        let _ = writeln!(out, "not coupled");
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowSummary {
    pub restricted: bool,
    pub termination: String,
    pub message: Option<String>,
    pub states: usize,
    pub t_final: f64,
    pub max_coupled_residual: f64,
    pub final_c: f64,
    /// Hitchin flow only.
    pub max_half_flat_drift: Option<f64>,
    /// Restricted flow only.
    pub max_w2_type_defect: Option<f64>,
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

fn termination_parts(t: &crate::flow::Termination) -> (String, Option<String>) {
    let msg = match t {
        crate::flow::Termination::StructureInvalid(m) => Some(m.clone()),
        _ => None,
    };
    (t.name().to_string(), msg)
}

pub fn flow_summary(tr: &FlowTrace) -> FlowSummary {
    let (termination, message) = termination_parts(&tr.termination);
    FlowSummary {
        restricted: false,
        termination,
        message,
        states: tr.states.len(),
        t_final: tr.final_state().t,
        max_coupled_residual: max_of(tr.coupled_residuals.iter().copied()),
        final_c: *tr.c_fits.last().unwrap_or(&f64::NAN),
        max_half_flat_drift: Some(tr.max_half_flat_drift),
        max_w2_type_defect: None,
    }
}

pub fn restricted_summary(tr: &RestrictedTrace) -> FlowSummary {
    let (termination, message) = termination_parts(&tr.termination);
    let last = tr.states.last().expect("a trace holds its seed");
    FlowSummary {
        restricted: true,
        termination,
        message,
        states: tr.states.len(),
        t_final: last.t,
        max_coupled_residual: max_of(tr.rho_norms.iter().copied()),
        final_c: last.c,
        max_half_flat_drift: None,
        max_w2_type_defect: Some(max_of(tr.w2_type_defects.iter().copied())),
    }
}

pub fn render_flow(s: &FlowSummary) -> String {
    let mut out = String::new();
    let kind = if s.restricted { "restricted flow" } else { "hitchin flow" };
    let _ = writeln!(out, "{kind}: {} after {} states, t = {}", s.termination, s.states, s.t_final);
    if let Some(m) = &s.message {
        let _ = writeln!(out, "  reason: {m}");
    }
    let _ = writeln!(out, "  max coupled residual = {:e}", s.max_coupled_residual);
    let _ = writeln!(out, "  final c = {}", s.final_c);
    if let Some(d) = s.max_half_flat_drift {
        let _ = writeln!(out, "  max half-flat drift = {d:e}");
    }
    if let Some(d) = s.max_w2_type_defect {
        let _ = writeln!(out, "  max w2 type defect = {d:e}");
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct G2SliceJson {
    pub t: f64,
    pub tau0: f64,
    pub tau1: FormFile,
    pub tau2: FormFile,
    pub tau3: FormFile,
    pub magnitudes: [f64; 4],
    pub parallel: bool,
    pub calibrated: bool,
    pub locally_conformal_calibrated: bool,
    pub integrable: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct G2Report {
    pub mode: String,
    pub slices: Vec<G2SliceJson>,
}

pub fn g2_slice_json(t: f64, g: &G2Torsion) -> G2SliceJson {
    G2SliceJson {
        t,
        tau0: g.tau0,
        tau1: form_to_file(&g.tau1),
        tau2: form_to_file(&g.tau2),
        tau3: form_to_file(&g.tau3),
        magnitudes: g.magnitudes(),
        parallel: g.class.parallel,
        calibrated: g.class.calibrated,
        locally_conformal_calibrated: g.class.locally_conformal_calibrated,
        integrable: g.class.integrable,
    }
}

/// Torsion of the product G2-structure at each `t`.
pub fn g2_report(s: &Su3Structure, alg: &CoframeAlgebra, profile: &Profile, ts: &[f64]) -> Result<G2Report, Error> {
    let slices = ts
        .iter()
        .map(|&t| g2_torsion(s, alg, profile, t, None).map(|g| g2_slice_json(t, &g)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(G2Report { mode: profile.name().to_string(), slices })
}

pub fn render_g2(r: &G2Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} over the structure (coframe e0 = dt, e1..e6)", r.mode);
    for s in &r.slices {
        let _ = writeln!(out, "t = {}", s.t);
        let _ = writeln!(out, "  tau0 = {}", fraction(s.tau0));
        for (name, f, deg) in [("tau1", &s.tau1, 1), ("tau2", &s.tau2, 2), ("tau3", &s.tau3, 3)] {
            let form = KForm::from_terms(7, deg, &f.terms.iter().map(|(c, i)| (*c, i.as_slice())).collect::<Vec<_>>())
                .expect("emitted from a valid form");
            let _ = writeln!(out, "  {name} = {}", render_form(&form));
        }
        let _ = writeln!(
            out,
            "  parallel={} calibrated={} locally_conformal_calibrated={} integrable={}",
            s.parallel, s.calibrated, s.locally_conformal_calibrated, s.integrable
        );
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct StartJson {
    pub index: usize,
    pub residual: f64,
    pub evals: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SearchJson {
    pub starts_run: usize,
    pub seed: u64,
    pub require_dw2_prop: bool,
    pub min_metric_ratio: f64,
    pub best_residual: f64,
    pub best_start: usize,
    pub certified: bool,
    pub reason: Option<String>,
    /// "certified" or "residual floor over N starts (evidence, not a proof)".
    pub verdict: String,
    pub omega: FormFile,
    pub psi_plus: FormFile,
    pub c: f64,
    pub coupled: Option<CoupledJson>,
    pub starts: Vec<StartJson>,
}

pub fn search_json(r: &SearchResult, prob: &crate::search::SearchProblem) -> SearchJson {
    let verdict = if r.certified() {
        "certified".to_string()
    } else {
        format!("residual floor {:e} over {} starts (evidence, not a proof)", r.best_residual, r.starts.len())
    };
    SearchJson {
        starts_run: r.starts.len(),
        seed: prob.seed,
        require_dw2_prop: prob.require_dw2_prop,
        min_metric_ratio: prob.min_metric_ratio,
        best_residual: r.best_residual,
        best_start: r.best_start,
        certified: r.certified(),
        reason: r.certificate.reason.clone(),
        verdict,
        omega: form_to_file(&r.candidate.omega),
        psi_plus: form_to_file(&r.candidate.psi_plus),
        c: r.candidate.c,
        coupled: r.certificate.report.as_ref().map(coupled_json),
        starts: r.starts.iter().map(|l| StartJson { index: l.index, residual: l.residual, evals: l.evals }).collect(),
    }
}

pub fn render_search(s: &SearchJson) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "search: {} starts, seed {}, dw2 constraint {}", s.starts_run, s.seed, s.require_dw2_prop);
    let _ = writeln!(out, "  best residual = {:e} (start {})", s.best_residual, s.best_start);
    let _ = writeln!(out, "  verdict: {}", s.verdict);
    if let Some(r) = &s.reason {
        let _ = writeln!(out, "  reason: {r}");
    }
    let _ = writeln!(out, "  omega    = {}", render_form(&file_to_form(&s.omega, 6)));
    let _ = writeln!(out, "  psi_plus = {}", render_form(&file_to_form(&s.psi_plus, 6)));
    let _ = writeln!(out, "  c        = {}", s.c);
    out
}
