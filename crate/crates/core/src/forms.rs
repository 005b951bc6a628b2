//! Dense alternating forms on a 6- or 7-dimensional coframe.
//!
//! A degree-`k` form stores `C(n,k)` coefficients against the basis monomials
//! `e^{i_1 ... i_k}` with strictly increasing indices, in lexicographic order.
//! Internally a monomial is a bitmask over the coframe (bit `b` is the `b`-th
//! basis covector). Six-dimensional coframes are labelled `e^1 .. e^6`; the
//! seven-dimensional coframe used for G2 products is labelled `e^0 .. e^6`,
//! with `e^0 = dt`.
//!
//! Orientation: `e^1 ^ ... ^ e^n` is positive unless a [`MetricData`] carries
//! an explicit negative orientation.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 7;

/// Binomial coefficient for the small arguments used here.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r = 1usize;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

pub(crate) struct Basis {
    /// `masks[k]` lists the degree-`k` monomials in lexicographic order.
    masks: Vec<Vec<u8>>,
    /// Position of a mask inside its degree block.
    index: Vec<usize>,
}

impl Basis {
    fn build(n: usize) -> Self {
        let mut masks = vec![Vec::new(); n + 1];
        for k in 0..=n {
            let mut combo: Vec<usize> = (0..k).collect();
            loop {
                masks[k].push(combo.iter().fold(0u8, |m, &b| m | (1 << b)));
                // advance to the next lexicographic combination
                let mut i = k;
                while i > 0 && combo[i - 1] == n - k + i - 1 {
                    i -= 1;
                }
                if i == 0 {
                    break;
                }
                combo[i - 1] += 1;
                for j in i..k {
                    combo[j] = combo[j - 1] + 1;
                }
            }
        }
        let mut index = vec![usize::MAX; 1 << n];
        for block in &masks {
            for (pos, &m) in block.iter().enumerate() {
                index[m as usize] = pos;
            }
        }
        Basis { masks, index }
    }

    pub(crate) fn masks(&self, k: usize) -> &[u8] {
        &self.masks[k]
    }

    pub(crate) fn index(&self, mask: u8) -> usize {
        self.index[mask as usize]
    }
}

pub(crate) fn basis(n: usize) -> &'static Basis {
    static TABLES: [OnceLock<Basis>; MAX_DIM + 1] = [const { OnceLock::new() }; MAX_DIM + 1];
    TABLES[n].get_or_init(|| Basis::build(n))
}

/// Sign of `e^a ^ e^b` relative to `e^{a|b}`; `None` when the monomials share an index.
pub(crate) fn wedge_sign(a: u8, b: u8) -> Option<f64> {
    if a & b != 0 {
        return None;
    }
    let mut swaps = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        swaps += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    Some(if swaps % 2 == 0 { 1.0 } else { -1.0 })
}

/// First label of the coframe: `e^1` in six dimensions, `e^0 = dt` in seven.
pub fn label_base(dim: usize) -> usize {
    if dim == 7 {
        0
    } else {
        1
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 6 || dim == 7 {
        Ok(())
    } else {
        Err(Error::InvalidDimension(dim))
    }
}

fn labels_to_mask(dim: usize, labels: &[usize]) -> Result<u8> {
    let base = label_base(dim);
    let mut mask = 0u8;
    let mut prev: Option<usize> = None;
    for &l in labels {
        if l < base || l - base >= dim {
            return Err(Error::InvalidIndex(labels.to_vec(), "index out of range"));
        }
        if let Some(p) = prev {
            if l <= p {
                return Err(Error::InvalidIndex(labels.to_vec(), "indices not strictly increasing"));
            }
        }
        prev = Some(l);
        mask |= 1 << (l - base);
    }
    Ok(mask)
}

pub(crate) fn mask_labels(dim: usize, mask: u8) -> Vec<usize> {
    let base = label_base(dim);
    (0..dim).filter(|b| mask & (1 << b) != 0).map(|b| b + base).collect()
}

/// Basis monomial names (`e12`, `e135`, ...) in coefficient order.
pub fn basis_labels(dim: usize, degree: usize) -> Vec<String> {
    basis(dim)
        .masks(degree)
        .iter()
        .map(|&m| {
            let digits: String = mask_labels(dim, m).iter().map(|l| l.to_string()).collect();
            format!("e{digits}")
        })
        .collect()
}

/// A degree-`k` alternating form with constant coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct KForm {
    dim: usize,
    degree: usize,
    coeffs: Vec<f64>,
}

impl KForm {
    /// Zero form. Panics on an unsupported dimension or degree; use
    /// [`KForm::from_coeffs`] for checked construction.
    pub fn zero(dim: usize, degree: usize) -> Self {
        assert!(dim == 6 || dim == 7, "unsupported dimension {dim}");
        assert!(degree <= dim, "degree {degree} > {dim}");
        KForm { dim, degree, coeffs: vec![0.0; binomial(dim, degree)] }
    }

    pub fn from_coeffs(dim: usize, degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if degree > dim {
            return Err(Error::InvalidDegree { dim, degree });
        }
        let expected = binomial(dim, degree);
        if coeffs.len() != expected {
            return Err(Error::LengthMismatch { expected, got: coeffs.len() });
        }
        if let Some(pos) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(KForm { dim, degree, coeffs })
    }

    /// Builds a form from `(coefficient, labels)` pairs. Labels follow
    /// [`label_base`]; repeated monomials accumulate.
    pub fn from_terms(dim: usize, degree: usize, terms: &[(f64, &[usize])]) -> Result<Self> {
        check_dim(dim)?;
        if degree > dim {
            return Err(Error::InvalidDegree { dim, degree });
        }
        let mut out = KForm::zero(dim, degree);
        for (c, labels) in terms {
            if labels.len() != degree {
                return Err(Error::InvalidIndex(labels.to_vec(), "wrong number of indices"));
            }
            let mask = labels_to_mask(dim, labels)?;
            if !c.is_finite() {
                return Err(Error::NonFinite(out.index_of(mask)));
            }
            let i = out.index_of(mask);
            out.coeffs[i] += c;
        }
        Ok(out)
    }

    pub fn monomial(dim: usize, labels: &[usize]) -> Result<Self> {
        Self::from_terms(dim, labels.len(), &[(1.0, labels)])
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        let mut f = KForm::zero(dim, 0);
        f.coeffs[0] = value;
        f
    }

    /// `e^1 ^ ... ^ e^n` (positively oriented top monomial).
    pub fn top(dim: usize) -> Self {
        let mut f = KForm::zero(dim, dim);
        f.coeffs[0] = 1.0;
        f
    }

    /// One-form with the given components.
    pub fn one_form(components: &[f64]) -> Result<Self> {
        Self::from_coeffs(components.len(), 1, components.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub(crate) fn index_of(&self, mask: u8) -> usize {
        basis(self.dim).index(mask)
    }

    pub(crate) fn masks(&self) -> &'static [u8] {
        basis(self.dim).masks(self.degree)
    }

    /// Coefficient of the monomial with the given labels (sorted ascending).
    pub fn coeff(&self, labels: &[usize]) -> f64 {
        match labels_to_mask(self.dim, labels) {
            Ok(m) if labels.len() == self.degree => self.coeffs[self.index_of(m)],
            _ => 0.0,
        }
    }

    /// Nonzero terms as `(coefficient, labels)`.
    pub fn terms(&self) -> impl Iterator<Item = (f64, Vec<usize>)> + '_ {
        self.masks()
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| **c != 0.0)
            .map(|(&m, &c)| (c, mask_labels(self.dim, m)))
    }

    /// Euclidean norm of the coefficient vector (unit-monomial convention).
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Coefficient-space inner product.
    pub fn dot(&self, other: &KForm) -> f64 {
        debug_assert_eq!(self.coeffs.len(), other.coeffs.len());
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, s: f64) -> KForm {
        KForm { dim: self.dim, degree: self.degree, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &KForm) -> KForm {
        assert_eq!((self.dim, self.degree), (other.dim, other.degree), "axpy on mismatched forms");
        KForm {
            dim: self.dim,
            degree: self.degree,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + s * b).collect(),
        }
    }

    /// True when every coefficient is negligible against `scale` under `tol`.
    pub fn is_zero(&self, tol: &Tolerance, scale: f64) -> bool {
        tol.is_zero(self.max_abs(), scale)
    }

    /// Component of a top-degree form against `e^1 ^ ... ^ e^n`.
    pub fn top_coeff(&self) -> f64 {
        assert_eq!(self.degree, self.dim, "top_coeff on a non-top form");
        self.coeffs[0]
    }

    /// Embeds a six-dimensional form into the seven-dimensional coframe
    /// `(dt, e^1, ..., e^6)`.
    pub fn lift7(&self) -> KForm {
        assert_eq!(self.dim, 6, "lift7 expects a six-dimensional form");
        let mut out = KForm::zero(7, self.degree);
        for (&m, &c) in self.masks().iter().zip(&self.coeffs) {
            let i = out.index_of(m << 1);
            out.coeffs[i] = c;
        }
        out
    }
}

impl Add for &KForm {
    type Output = KForm;
    fn add(self, rhs: &KForm) -> KForm {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &KForm {
    type Output = KForm;
    fn sub(self, rhs: &KForm) -> KForm {
        self.axpy(-1.0, rhs)
    }
}

impl Neg for &KForm {
    type Output = KForm;
    fn neg(self) -> KForm {
        self.scaled(-1.0)
    }
}

impl Mul<&KForm> for f64 {
    type Output = KForm;
    fn mul(self, rhs: &KForm) -> KForm {
        rhs.scaled(self)
    }
}

impl fmt::Display for KForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (c, labels) in self.terms() {
            let name: String = labels.iter().map(|l| l.to_string()).collect();
            let sign = if c < 0.0 { "-" } else { "+" };
            if first {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            if self.degree == 0 {
                write!(f, "{}", c.abs())?;
            } else {
                write!(f, "{} e{}", c.abs(), name)?;
            }
            first = false;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Zero test: relative to a reference magnitude with an absolute floor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rel: 1e-9, abs: 1e-12 }
    }
}

impl Tolerance {
    pub fn new(rel: f64, abs: f64) -> Self {
        Tolerance { rel, abs }
    }

    pub fn is_zero(&self, value: f64, scale: f64) -> bool {
        value.abs() <= (self.rel * scale.abs()).max(self.abs)
    }
}

fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(a, b))
    }
}

/// Exterior product.
pub fn wedge(a: &KForm, b: &KForm) -> Result<KForm> {
    check_same_dim(a.dim, b.dim)?;
    let n = a.dim;
    if a.degree + b.degree > n {
        return Err(Error::DegreeOverflow(a.degree, b.degree, n));
    }
    let mut out = KForm::zero(n, a.degree + b.degree);
    let bs = basis(n);
    for (&ma, &ca) in a.masks().iter().zip(&a.coeffs) {
        if ca == 0.0 {
            continue;
        }
        for (&mb, &cb) in b.masks().iter().zip(&b.coeffs) {
            if cb == 0.0 {
                continue;
            }
            if let Some(s) = wedge_sign(ma, mb) {
                out.coeffs[bs.index(ma | mb)] += s * ca * cb;
            }
        }
    }
    Ok(out)
}

/// Wedge product for operands already known to be compatible.
pub(crate) fn w(a: &KForm, b: &KForm) -> KForm {
    wedge(a, b).expect("wedge of compatible forms")
}

/// Interior product `i_v a`, acting on the first slot.
pub fn contract(v: &[f64], a: &KForm) -> Result<KForm> {
    check_same_dim(v.len(), a.dim)?;
    if a.degree == 0 {
        return Err(Error::ContractDegreeZero);
    }
    let n = a.dim;
    let bs = basis(n);
    let mut out = KForm::zero(n, a.degree - 1);
    for (&m, &c) in a.masks().iter().zip(&a.coeffs) {
        if c == 0.0 {
            continue;
        }
        for (p, &vp) in v.iter().enumerate() {
            if vp == 0.0 || m & (1 << p) == 0 {
                continue;
            }
            let below = (m & ((1u8 << p) - 1)).count_ones();
            let s = if below % 2 == 0 { 1.0 } else { -1.0 };
            out.coeffs[bs.index(m & !(1 << p))] += s * vp * c;
        }
    }
    Ok(out)
}

/// `k`-th compound matrix: entry `(I, L)` is the minor of `m` on rows `I`, columns `L`.
pub(crate) fn compound(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    compounds_upto(m, k).pop().expect("k + 1 entries")
}

/// Compound matrices of degrees `0..=kmax`, each built from the previous one
/// by Laplace expansion along the first row of the minor.
pub(crate) fn compounds_upto(m: &DMatrix<f64>, kmax: usize) -> Vec<DMatrix<f64>> {
    let n = m.nrows();
    let b = basis(n);
    let mut out = vec![DMatrix::from_element(1, 1, 1.0)];
    for k in 1..=kmax {
        let masks = b.masks(k);
        let prev = &out[k - 1];
        let mut c = DMatrix::zeros(masks.len(), masks.len());
        for (i, &mi) in masks.iter().enumerate() {
            let r0 = mi.trailing_zeros() as usize;
            let ri = b.index(mi & (mi - 1));
            for (l, &ml) in masks.iter().enumerate() {
                let mut acc = 0.0;
                let mut sign = 1.0;
                let mut rest = ml;
                while rest != 0 {
                    let c0 = rest.trailing_zeros() as usize;
                    acc += sign * m[(r0, c0)] * prev[(ri, b.index(ml & !(1 << c0)))];
                    sign = -sign;
                    rest &= rest - 1;
                }
                c[(i, l)] = acc;
            }
        }
        out.push(c);
    }
    out
}

/// Riemannian metric on the coframe together with an oriented volume form.
#[derive(Clone, Debug)]
pub struct MetricData {
    matrix: DMatrix<f64>,
    volume: KForm,
    orientation: f64,
    /// Compound matrices of the inverse metric, one per degree.
    inverse_compounds: Vec<DMatrix<f64>>,
}

impl MetricData {
    /// Validates symmetry and positive definiteness. `orientation` is `+1`
    /// when `e^1 ^ ... ^ e^n` is positively oriented, `-1` otherwise.
    pub fn new(matrix: DMatrix<f64>, orientation: f64) -> Result<Self> {
        let n = matrix.nrows();
        check_dim(n)?;
        check_same_dim(n, matrix.ncols())?;
        if let Some(pos) = matrix.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-9 * scale {
            return Err(Error::MetricNotSymmetric(asym));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let min_eig = sym.clone().symmetric_eigenvalues().min();
        if min_eig <= 1e-12 * scale {
            return Err(Error::MetricNotPositiveDefinite(min_eig));
        }
        let inverse = sym.clone().try_inverse().ok_or(Error::MetricNotPositiveDefinite(min_eig))?;
        let det = sym.determinant();
        let sign = if orientation < 0.0 { -1.0 } else { 1.0 };
        let mut volume = KForm::zero(n, n);
        volume.coeffs[0] = sign * det.sqrt();
        let inverse_compounds = compounds_upto(&inverse, n);
        Ok(MetricData { matrix: sym, volume, orientation: sign, inverse_compounds })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim), 1.0)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn volume(&self) -> &KForm {
        &self.volume
    }

    /// `+1` or `-1`.
    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    /// `g(x, y)` on tangent vectors.
    pub fn apply(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += x[i] * self.matrix[(i, j)] * y[j];
            }
        }
        s
    }

    /// Metric scaled by `factor > 0`, same orientation.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.matrix * factor, self.orientation)
    }
}

/// Induced inner product on forms of equal degree.
pub fn inner(a: &KForm, b: &KForm, g: &MetricData) -> Result<f64> {
    check_same_dim(a.dim, g.dim())?;
    check_same_dim(b.dim, g.dim())?;
    if a.degree != b.degree {
        return Err(Error::DegreeMismatch { expected: a.degree, got: b.degree });
    }
    let c = &g.inverse_compounds[a.degree];
    let bv = DVector::from_column_slice(&b.coeffs);
    let gb = c * bv;
    Ok(a.coeffs.iter().zip(gb.iter()).map(|(x, y)| x * y).sum())
}

/// `|a|^2` in the metric `g`; basis monomials are unit for the identity metric.
pub fn norm_sq(a: &KForm, g: &MetricData) -> Result<f64> {
    inner(a, a, g)
}

/// Hodge star, characterised by `alpha ^ *beta = <alpha, beta> vol`.
pub fn hodge_star(a: &KForm, g: &MetricData) -> Result<KForm> {
    check_same_dim(a.dim, g.dim())?;
    let n = a.dim;
    let k = a.degree;
    let full: u8 = ((1u16 << n) - 1) as u8;
    let c = &g.inverse_compounds[k];
    let raised = c * DVector::from_column_slice(&a.coeffs);
    let vol = g.volume.coeffs[0];
    let mut out = KForm::zero(n, n - k);
    for (i, &m) in a.masks().iter().enumerate() {
        let comp = full & !m;
        let s = wedge_sign(m, comp).expect("complementary monomials");
        let j = out.index_of(comp);
        out.coeffs[j] += vol * s * raised[i];
    }
    Ok(out)
}

/// Endomorphism of the tangent space; column `j` is the image of `e_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Endomorphism {
    matrix: DMatrix<f64>,
}

impl Endomorphism {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        check_same_dim(matrix.nrows(), matrix.ncols())?;
        if let Some(pos) = matrix.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Endomorphism { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Endomorphism { matrix: DMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(v)).iter().copied().collect()
    }

    pub fn compose(&self, other: &Endomorphism) -> Endomorphism {
        Endomorphism { matrix: &self.matrix * &other.matrix }
    }

    pub fn scaled(&self, s: f64) -> Endomorphism {
        Endomorphism { matrix: &self.matrix * s }
    }

    /// Max-entry distance to another endomorphism.
    pub fn distance(&self, other: &Endomorphism) -> f64 {
        (&self.matrix - &other.matrix).amax()
    }
}

/// `(J.a)(X_1, ..., X_k) = a(J X_1, ..., J X_k)`.
pub fn pullback(j: &Endomorphism, a: &KForm) -> Result<KForm> {
    check_same_dim(j.dim(), a.dim)?;
    if a.degree == 0 {
        return Ok(a.clone());
    }
    let c = compound(&j.matrix, a.degree);
    let out = c.transpose() * DVector::from_column_slice(&a.coeffs);
    Ok(KForm { dim: a.dim, degree: a.degree, coeffs: out.iter().copied().collect() })
}

/// Matrix of `beta -> beta ^ omega` from 2-forms to 4-forms in six dimensions.
pub(crate) fn lefschetz_matrix(omega: &KForm) -> DMatrix<f64> {
    let n = omega.dim;
    let masks = basis(n).masks(2);
    let rows = binomial(n, 4);
    let mut m = DMatrix::zeros(rows, masks.len());
    for j in 0..masks.len() {
        let mut e = KForm::zero(n, 2);
        e.coeffs[j] = 1.0;
        let img = w(&e, omega);
        for (i, v) in img.coeffs.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

/// Solves `beta ^ omega = target` for a 2-form `beta` (six dimensions).
pub fn lefschetz_solve(target: &KForm, omega: &KForm) -> Result<KForm> {
    if omega.dim != 6 {
        return Err(Error::InvalidDimension(omega.dim));
    }
    check_same_dim(target.dim, 6)?;
    if omega.degree != 2 {
        return Err(Error::DegreeMismatch { expected: 2, got: omega.degree });
    }
    if target.degree != 4 {
        return Err(Error::DegreeMismatch { expected: 4, got: target.degree });
    }
    let d = crate::linalg::svd(&lefschetz_matrix(omega));
    let ratio = d.ratio();
    if ratio < 1e-12 {
        return Err(Error::SingularLefschetz(ratio));
    }
    let sol = d.solve(&DVector::from_column_slice(&target.coeffs), 0.0);
    Ok(KForm { dim: 6, degree: 2, coeffs: sol.iter().copied().collect() })
}

/// Unguarded LU variant of [`lefschetz_solve`] for hot loops that tolerate
/// a rough answer near degenerate `omega`.
pub(crate) fn lefschetz_solve_lu(target: &KForm, omega: &KForm) -> Option<KForm> {
    let sol = lefschetz_matrix(omega).lu().solve(&DVector::from_column_slice(&target.coeffs))?;
    sol.iter().all(|x| x.is_finite()).then(|| KForm { dim: 6, degree: 2, coeffs: sol.iter().copied().collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn e(labels: &[usize]) -> KForm {
        KForm::monomial(6, labels).unwrap()
    }

    fn psi_plus() -> KForm {
        KForm::from_terms(6, 3, &[(1.0, &[1, 3, 5]), (-1.0, &[1, 4, 6]), (-1.0, &[2, 3, 6]), (-1.0, &[2, 4, 5])])
            .unwrap()
    }

    fn psi_minus() -> KForm {
        KForm::from_terms(6, 3, &[(1.0, &[1, 3, 6]), (1.0, &[1, 4, 5]), (1.0, &[2, 3, 5]), (-1.0, &[2, 4, 6])])
            .unwrap()
    }

    fn omega() -> KForm {
        KForm::from_terms(6, 2, &[(1.0, &[1, 2]), (1.0, &[3, 4]), (1.0, &[5, 6])]).unwrap()
    }

    fn standard_j() -> Endomorphism {
        let mut m = DMatrix::zeros(6, 6);
        for i in [0, 2, 4] {
            m[(i + 1, i)] = 1.0;
            m[(i, i + 1)] = -1.0;
        }
        Endomorphism::new(m).unwrap()
    }

    #[test]
    fn basis_is_lexicographic() {
        let b = basis(6);
        assert_eq!(b.masks(2).len(), 15);
        assert_eq!(b.masks(3).len(), 20);
        assert_eq!(b.masks(2)[0], 0b11);
        assert_eq!(b.masks(2)[1], 0b101);
        assert_eq!(b.masks(2)[14], 0b110000);
        assert_eq!(basis(7).masks(3).len(), 35);
    }

    #[test]
    fn wedge_examples() {
        assert_eq!(wedge(&e(&[1]), &e(&[2])).unwrap(), e(&[1, 2]));
        assert_eq!(wedge(&e(&[1, 2]), &e(&[1, 2])).unwrap(), KForm::zero(6, 4));
        let v = wedge(&psi_plus(), &psi_minus()).unwrap();
        assert_abs_diff_eq!(v.top_coeff(), 4.0, epsilon = 1e-14);
        // omega^3 = 6 e^{123456}
        let o3 = wedge(&wedge(&omega(), &omega()).unwrap(), &omega()).unwrap();
        assert_abs_diff_eq!(o3.top_coeff(), 6.0, epsilon = 1e-14);
    }

    #[test]
    fn wedge_errors() {
        let a = KForm::zero(6, 4);
        assert!(matches!(wedge(&a, &KForm::zero(6, 3)), Err(Error::DegreeOverflow(4, 3, 6))));
        assert!(matches!(wedge(&a, &KForm::zero(7, 1)), Err(Error::DimensionMismatch(6, 7))));
    }

    #[test]
    fn contraction_examples() {
        let v1 = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let v3 = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        assert_eq!(contract(&v1, &e(&[1])).unwrap(), KForm::scalar(6, 1.0));
        assert_eq!(contract(&v3, &e(&[1, 2])).unwrap(), KForm::zero(6, 1));
        let expected = KForm::from_terms(6, 2, &[(1.0, &[3, 5]), (-1.0, &[4, 6])]).unwrap();
        assert_eq!(contract(&v1, &psi_plus()).unwrap(), expected);
        assert!(matches!(contract(&v1, &KForm::scalar(6, 2.0)), Err(Error::ContractDegreeZero)));
    }

    #[test]
    fn hodge_examples() {
        let g = MetricData::identity(6).unwrap();
        assert_eq!(hodge_star(&e(&[1, 2]), &g).unwrap(), e(&[3, 4, 5, 6]));
        assert_eq!(hodge_star(&KForm::scalar(6, 1.0), &g).unwrap(), KForm::top(6));
        // *e^{1256} = e^{34}
        assert_eq!(hodge_star(&e(&[1, 2, 5, 6]), &g).unwrap(), e(&[3, 4]));
    }

    #[test]
    fn negative_orientation_flips_star() {
        let g = MetricData::new(DMatrix::identity(6, 6), -1.0).unwrap();
        assert_eq!(hodge_star(&KForm::scalar(6, 1.0), &g).unwrap(), KForm::top(6).scaled(-1.0));
    }

    #[test]
    fn indefinite_metric_rejected() {
        let mut m = DMatrix::identity(6, 6);
        m[(2, 2)] = -1.0;
        assert!(matches!(MetricData::new(m, 1.0), Err(Error::MetricNotPositiveDefinite(_))));
    }

    #[test]
    fn pullback_examples() {
        let j = standard_j();
        assert_eq!(pullback(&j, &omega()).unwrap(), omega());
        assert_eq!(pullback(&j, &psi_plus()).unwrap(), psi_minus());
        assert_eq!(pullback(&j, &e(&[1])).unwrap(), e(&[2]).scaled(-1.0));
    }

    #[test]
    fn lefschetz_examples() {
        let target = KForm::from_terms(6, 4, &[(2.0, &[1, 2, 3, 4]), (2.0, &[1, 2, 5, 6]), (2.0, &[3, 4, 5, 6])])
            .unwrap();
        let beta = lefschetz_solve(&target, &omega()).unwrap();
        assert!((&beta - &omega()).max_abs() < 1e-12);
        assert!(matches!(lefschetz_solve(&target, &e(&[1, 2])), Err(Error::SingularLefschetz(_))));
    }

    #[test]
    fn norm_examples() {
        let g = MetricData::identity(6).unwrap();
        assert_abs_diff_eq!(norm_sq(&omega(), &g).unwrap(), 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(norm_sq(&psi_plus(), &g).unwrap(), 4.0, epsilon = 1e-14);
        let w2 = KForm::from_terms(6, 2, &[(-4.0 / 3.0, &[1, 2]), (-4.0 / 3.0, &[3, 4]), (8.0 / 3.0, &[5, 6])])
            .unwrap();
        assert_abs_diff_eq!(norm_sq(&w2, &g).unwrap(), 32.0 / 3.0, epsilon = 1e-13);
    }

    #[test]
    fn from_terms_rejects_bad_indices() {
        assert!(KForm::from_terms(6, 2, &[(1.0, &[2, 1])]).is_err());
        assert!(KForm::from_terms(6, 2, &[(1.0, &[1, 7])]).is_err());
        assert!(KForm::from_terms(6, 2, &[(1.0, &[0, 1])]).is_err());
        assert!(KForm::from_coeffs(6, 2, vec![0.0; 14]).is_err());
        assert!(KForm::from_coeffs(5, 2, vec![0.0; 10]).is_err());
        let mut c = vec![0.0; 15];
        c[3] = f64::NAN;
        assert!(matches!(KForm::from_coeffs(6, 2, c), Err(Error::NonFinite(3))));
    }

    #[test]
    fn display_uses_labels() {
        assert_eq!(format!("{}", psi_plus()), "1 e135 - 1 e146 - 1 e236 - 1 e245");
        assert_eq!(format!("{}", e(&[1]).lift7()), "1 e1");
    }
}
