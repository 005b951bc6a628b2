#![allow(dead_code)]

use hitchin_core::stable::{complete_su3, standard_omega, standard_psi_plus};
use hitchin_core::{CoframeAlgebra, DiffTerm, Endomorphism, KForm, MetricData, Su3Structure};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Structure equations in the usual shorthand: `(0,0,0,0,12,13)` is
/// `de5 = e12, de6 = e13`. Each entry lists `(coeff, j, k)`.
pub type Equations = &'static [&'static [(f64, usize, usize)]];

pub const BASE_ALGEBRAS: [Equations; 9] = [
    // torus
    &[&[], &[], &[], &[], &[], &[]],
    // Iwasawa
    &[&[], &[], &[], &[], &[(1.0, 1, 4), (1.0, 2, 3)], &[(1.0, 1, 3), (-1.0, 2, 4)]],
    // the 3-step algebra with de4 = e13
    &[&[], &[], &[], &[(1.0, 1, 3)], &[(1.0, 1, 4), (1.0, 2, 3)], &[(1.0, 1, 3), (-1.0, 1, 5), (-1.0, 2, 4)]],
    // (0,0,0,0,12,13)
    &[&[], &[], &[], &[], &[(1.0, 1, 2)], &[(1.0, 1, 3)]],
    // (0,0,0,12,13,23)
    &[&[], &[], &[], &[(1.0, 1, 2)], &[(1.0, 1, 3)], &[(1.0, 2, 3)]],
    // filiform (0,0,12,13,14,15)
    &[&[], &[], &[(1.0, 1, 2)], &[(1.0, 1, 3)], &[(1.0, 1, 4)], &[(1.0, 1, 5)]],
    // h3 + h3
    &[&[], &[], &[(1.0, 1, 2)], &[], &[], &[(1.0, 4, 5)]],
    // (0,0,0,12,14,24)
    &[&[], &[], &[], &[(1.0, 1, 2)], &[(1.0, 1, 4)], &[(1.0, 2, 4)]],
    // solvable, not nilpotent: de2 = e12, de3 = -e13
    &[&[], &[(1.0, 1, 2)], &[(-1.0, 1, 3)], &[], &[], &[]],
];

pub fn table(eq: Equations) -> Vec<Vec<DiffTerm>> {
    eq.iter().map(|row| row.iter().map(|&(c, j, k)| DiffTerm::new(c, j, k)).collect()).collect()
}

/// The algebra in the coframe `f = A e`, with `d` scaled by `s`.
pub fn conjugate(eq: Equations, a: &DMatrix<f64>, s: f64) -> CoframeAlgebra {
    let b = a.clone().try_inverse().expect("invertible");
    let n = 6;
    let mut out = vec![Vec::new(); n];
    for i in 0..n {
        for p in 0..n {
            for q in p + 1..n {
                let mut coeff = 0.0;
                for (j, row) in eq.iter().enumerate() {
                    for &(c, k, l) in *row {
                        let (k, l) = (k - 1, l - 1);
                        coeff += a[(i, j)] * c * (b[(k, p)] * b[(l, q)] - b[(k, q)] * b[(l, p)]);
                    }
                }
                if coeff != 0.0 {
                    out[i].push(DiffTerm::new(s * coeff, p + 1, q + 1));
                }
            }
        }
    }
    CoframeAlgebra::from_table(n, out).expect("well-formed table")
}

/// Generic frame change of a form, used to produce random structures.
pub fn transform_form(a: &DMatrix<f64>, f: &KForm) -> KForm {
    hitchin_core::forms::pullback(&Endomorphism::new(a.clone()).unwrap(), f).unwrap()
}

/// `I + eps * U` with `U` entries in `[-1, 1]`.
pub fn near_identity(n: usize, eps: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, n * n)
        .prop_map(move |v| DMatrix::from_row_slice(n, n, &v) * eps + DMatrix::identity(n, n))
}

pub fn random_form(dim: usize, degree: usize) -> impl Strategy<Value = KForm> {
    let len = hitchin_core::forms::binomial(dim, degree);
    prop::collection::vec(-2.0..2.0f64, len).prop_map(move |c| KForm::from_coeffs(dim, degree, c).unwrap())
}

pub fn random_metric(dim: usize) -> impl Strategy<Value = MetricData> {
    (prop::collection::vec(-1.0..1.0f64, dim * dim), prop::bool::ANY).prop_map(move |(v, flip)| {
        let a = DMatrix::from_row_slice(dim, dim, &v);
        let m = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.5;
        MetricData::new(m, if flip { -1.0 } else { 1.0 }).unwrap()
    })
}

/// Standard pair pushed through a random change of frame.
pub fn random_structure() -> impl Strategy<Value = Su3Structure> {
    near_identity(6, 0.6).prop_filter_map("degenerate frame", |p| {
        if p.determinant().abs() < 0.05 {
            return None;
        }
        complete_su3(&transform_form(&p, &standard_omega()), &transform_form(&p, &standard_psi_plus())).ok()
    })
}

/// A random algebra from the pool together with a random structure on it.
pub fn random_algebra_and_structure() -> impl Strategy<Value = (CoframeAlgebra, Su3Structure)> {
    (0..BASE_ALGEBRAS.len(), near_identity(6, 0.5), 0.3..2.0f64, random_structure()).prop_filter_map(
        "singular basis change",
        |(k, a, s, st)| {
            if a.determinant().abs() < 0.05 {
                return None;
            }
            Some((conjugate(BASE_ALGEBRAS[k], &a, s), st))
        },
    )
}

/// Coupled structure on a conjugated Iwasawa (`k = 1`) or 3-step (`k = 2`)
/// algebra: the standard pair moved by the same frame change.
pub fn conjugated_coupled(k: usize, a: &DMatrix<f64>) -> (CoframeAlgebra, Su3Structure) {
    let alg = conjugate(BASE_ALGEBRAS[k], a, 1.0);
    // forms written in e transform to the f frame through B = A^{-1}
    let b = a.clone().try_inverse().unwrap();
    let s = complete_su3(&to_f_frame(&b, &standard_omega()), &to_f_frame(&b, &standard_psi_plus())).unwrap();
    (alg, s)
}

/// Rewrites a form given on `e` in the frame `f = A e` using `e = B f`.
pub fn to_f_frame(b: &DMatrix<f64>, form: &KForm) -> KForm {
    // pullback by B sends e^k to sum_p B[k,p] e^p, read here as the f-coframe
    hitchin_core::forms::pullback(&Endomorphism::new(b.clone()).unwrap(), form).unwrap()
}

pub fn rel_err(a: &KForm, b: &KForm) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}
