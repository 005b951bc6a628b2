//! Constant-coefficient exterior differentials on a coframe (the
//! Chevalley-Eilenberg complex of a Lie algebra) and the built-in fixtures.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forms::{basis, binomial, wedge_sign, KForm};

/// One term `coeff * e^{jk}` of `d e^i`, with 1-based `j < k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffTerm {
    pub coeff: f64,
    pub j: usize,
    pub k: usize,
}

impl DiffTerm {
    pub fn new(coeff: f64, j: usize, k: usize) -> Self {
        DiffTerm { coeff, j, k }
    }
}

/// A coframe with constant structure coefficients, `d e^i = sum c e^{jk}`.
#[derive(Clone, Debug)]
pub struct CoframeAlgebra {
    dim: usize,
    table: Vec<Vec<DiffTerm>>,
    /// `d` on degree-`k` forms as a `C(n,k+1) x C(n,k)` matrix, for `k < n`.
    dmats: Vec<DMatrix<f64>>,
}

impl CoframeAlgebra {
    /// Builds the algebra after structural checks only (index ranges, `j < k`,
    /// duplicates). `d^2 = 0` is not enforced; see [`CoframeAlgebra::new`].
    pub fn from_table(dim: usize, table: Vec<Vec<DiffTerm>>) -> Result<Self> {
        if dim != 6 && dim != 7 {
            return Err(Error::InvalidDimension(dim));
        }
        if table.len() != dim {
            return Err(Error::LengthMismatch { expected: dim, got: table.len() });
        }
        for terms in &table {
            let mut seen = Vec::new();
            for t in terms {
                if t.j < 1 || t.k > dim || t.j >= t.k {
                    return Err(Error::InvalidIndex(vec![t.j, t.k], "need 1 <= j < k <= dim"));
                }
                if seen.contains(&(t.j, t.k)) {
                    return Err(Error::InvalidIndex(vec![t.j, t.k], "duplicate term"));
                }
                if !t.coeff.is_finite() {
                    return Err(Error::NonFinite(seen.len()));
                }
                seen.push((t.j, t.k));
            }
        }
        let d1: Vec<KForm> = table
            .iter()
            .map(|terms| {
                let mut f = KForm::zero(dim, 2);
                for t in terms {
                    let m = (1u8 << (t.j - 1)) | (1u8 << (t.k - 1));
                    let i = f.index_of(m);
                    f.coeffs_mut()[i] += t.coeff;
                }
                f
            })
            .collect();
        let dmats = (0..dim).map(|k| differential_matrix(dim, k, &d1)).collect();
        Ok(CoframeAlgebra { dim, table, dmats })
    }

    /// Builds the algebra and rejects it unless `d^2 = 0` to `1e-12`.
    pub fn new(dim: usize, table: Vec<Vec<DiffTerm>>) -> Result<Self> {
        let alg = Self::from_table(dim, table)?;
        let r = alg.check_d_squared();
        if r > 1e-12 {
            return Err(Error::NotClosed(r));
        }
        Ok(alg)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Structure table with 1-based indices.
    pub fn table(&self) -> &[Vec<DiffTerm>] {
        &self.table
    }

    /// `d e^i` for 1-based `i`.
    pub fn d_basis(&self, i: usize) -> KForm {
        let mut e = KForm::zero(self.dim, 1);
        e.coeffs_mut()[i - 1] = 1.0;
        self.d(&e)
    }

    /// Exterior derivative; the input dimension must match.
    pub fn exterior_d(&self, a: &KForm) -> Result<KForm> {
        if a.dim() != self.dim {
            return Err(Error::DimensionMismatch(a.dim(), self.dim));
        }
        if a.degree() == self.dim {
            return Err(Error::TopDegreeDerivative);
        }
        Ok(self.d(a))
    }

    /// Unchecked exterior derivative for internal callers.
    pub(crate) fn d(&self, a: &KForm) -> KForm {
        let m = &self.dmats[a.degree()];
        let out = m * DVector::from_column_slice(a.coeffs());
        KForm::from_coeffs(self.dim, a.degree() + 1, out.iter().copied().collect())
            .expect("finite exterior derivative")
    }

    /// `max_i |d(d e^i)|`, zero exactly when the Jacobi identity holds.
    pub fn check_d_squared(&self) -> f64 {
        (1..=self.dim).map(|i| self.d(&self.d_basis(i)).norm()).fold(0.0, f64::max)
    }

    /// True when every `d e^i` vanishes.
    pub fn is_abelian(&self) -> bool {
        self.table.iter().all(|t| t.iter().all(|x| x.coeff == 0.0))
    }

    /// The product coframe `(dt, e^1, ..., e^6)` with `d(dt) = 0`.
    pub fn lift7(&self) -> CoframeAlgebra {
        assert_eq!(self.dim, 6, "lift7 expects a six-dimensional algebra");
        let mut table = vec![Vec::new()];
        for terms in &self.table {
            table.push(terms.iter().map(|t| DiffTerm::new(t.coeff, t.j + 1, t.k + 1)).collect());
        }
        CoframeAlgebra::from_table(7, table).expect("lifted table is well-formed")
    }

    /// Built-in fixtures: `iwasawa`, `n-algebra`, `torus6`.
    pub fn builtin(name: &str) -> Result<Self> {
        let t = DiffTerm::new;
        let table = match name {
            "iwasawa" => vec![
                vec![],
                vec![],
                vec![],
                vec![],
                vec![t(1.0, 1, 4), t(1.0, 2, 3)],
                vec![t(1.0, 1, 3), t(-1.0, 2, 4)],
            ],
            "n-algebra" => vec![
                vec![],
                vec![],
                vec![],
                vec![t(1.0, 1, 3)],
                vec![t(1.0, 1, 4), t(1.0, 2, 3)],
                vec![t(1.0, 1, 3), t(-1.0, 1, 5), t(-1.0, 2, 4)],
            ],
            "torus6" => vec![vec![]; 6],
            other => return Err(Error::UnknownAlgebra(other.to_string())),
        };
        Self::new(6, table)
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["iwasawa", "n-algebra", "torus6"]
    }
}

/// Leibniz expansion of `d` on every degree-`k` monomial.
fn differential_matrix(n: usize, k: usize, d1: &[KForm]) -> DMatrix<f64> {
    let bs = basis(n);
    let src = bs.masks(k);
    let mut m = DMatrix::zeros(binomial(n, k + 1), src.len());
    for (col, &mask) in src.iter().enumerate() {
        let bits: Vec<usize> = (0..n).filter(|b| mask & (1 << b) != 0).collect();
        // d(e^{i1} ^ ... ^ e^{ik}) = sum_p (-1)^p e^{i1..i(p-1)} ^ de^{ip} ^ e^{i(p+1)..ik}
        for (p, &b) in bits.iter().enumerate() {
            let rest = mask & !(1u8 << b);
            let sign_p = if p % 2 == 0 { 1.0 } else { -1.0 };
            for (&m2, &c) in bs.masks(2).iter().zip(d1[b].coeffs()) {
                if c == 0.0 {
                    continue;
                }
                let before = rest & ((1u8 << b) - 1);
                let after = rest & !((1u8 << b) - 1);
                // e^{before} ^ m2 ^ e^{after}
                let Some(s1) = wedge_sign(before, m2) else { continue };
                let Some(s2) = wedge_sign(before | m2, after) else { continue };
                m[(bs.index(rest | m2), col)] += sign_p * s1 * s2 * c;
            }
        }
    }
    m
}

impl std::fmt::Display for CoframeAlgebra {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = (1..=self.dim)
            .map(|i| {
                let d = self.d_basis(i);
                if d.max_abs() == 0.0 {
                    "0".to_string()
                } else {
                    d.to_string()
                }
            })
            .collect();
        write!(f, "({})", parts.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::wedge;

    fn std_omega() -> KForm {
        KForm::from_terms(6, 2, &[(1.0, &[1, 2]), (1.0, &[3, 4]), (1.0, &[5, 6])]).unwrap()
    }

    fn std_psi_plus() -> KForm {
        KForm::from_terms(6, 3, &[(1.0, &[1, 3, 5]), (-1.0, &[1, 4, 6]), (-1.0, &[2, 3, 6]), (-1.0, &[2, 4, 5])])
            .unwrap()
    }

    #[test]
    fn iwasawa_differentials() {
        let iw = CoframeAlgebra::builtin("iwasawa").unwrap();
        assert_eq!(iw.d_basis(1), KForm::zero(6, 2));
        let de5 = KForm::from_terms(6, 2, &[(1.0, &[1, 4]), (1.0, &[2, 3])]).unwrap();
        let de6 = KForm::from_terms(6, 2, &[(1.0, &[1, 3]), (-1.0, &[2, 4])]).unwrap();
        assert_eq!(iw.d_basis(5), de5);
        assert_eq!(iw.d_basis(6), de6);
        let domega = iw.exterior_d(&std_omega()).unwrap();
        assert!((&domega + &std_psi_plus()).max_abs() < 1e-15);
        assert_eq!(iw.exterior_d(&std_psi_plus()).unwrap(), KForm::zero(6, 4));
    }

    #[test]
    fn n_algebra_table() {
        let n = CoframeAlgebra::builtin("n-algebra").unwrap();
        let de4 = KForm::from_terms(6, 2, &[(1.0, &[1, 3])]).unwrap();
        let de6 = KForm::from_terms(6, 2, &[(1.0, &[1, 3]), (-1.0, &[1, 5]), (-1.0, &[2, 4])]).unwrap();
        assert_eq!(n.d_basis(4), de4);
        assert_eq!(n.d_basis(6), de6);
        assert_eq!(n.check_d_squared(), 0.0);
    }

    #[test]
    fn torus_is_abelian() {
        let t = CoframeAlgebra::builtin("torus6").unwrap();
        assert!(t.is_abelian());
        assert_eq!(t.check_d_squared(), 0.0);
        assert!(matches!(CoframeAlgebra::builtin("heisenberg"), Err(Error::UnknownAlgebra(_))));
    }

    #[test]
    fn perturbed_tables() {
        // Scaling one term of the Iwasawa de5 keeps d^2 = 0: all generators of
        // the terms are closed.
        let t = DiffTerm::new;
        let iw = CoframeAlgebra::new(
            6,
            vec![
                vec![],
                vec![],
                vec![],
                vec![],
                vec![t(1.0 + 1e-3, 1, 4), t(1.0, 2, 3)],
                vec![t(1.0, 1, 3), t(-1.0, 2, 4)],
            ],
        );
        assert_eq!(iw.unwrap().check_d_squared(), 0.0);
        // Replacing e15 by e25 in the de6 of the n-algebra breaks Jacobi:
        // d(de6) = -e124 - e123.
        let bad = vec![
            vec![],
            vec![],
            vec![],
            vec![t(1.0, 1, 3)],
            vec![t(1.0, 1, 4), t(1.0, 2, 3)],
            vec![t(1.0, 1, 3), t(-1.0, 2, 5), t(-1.0, 2, 4)],
        ];
        let alg = CoframeAlgebra::from_table(6, bad.clone()).unwrap();
        let dd = alg.d(&alg.d_basis(6));
        let expected = KForm::from_terms(6, 3, &[(-1.0, &[1, 2, 3]), (-1.0, &[1, 2, 4])]).unwrap();
        assert!((&dd - &expected).max_abs() < 1e-15);
        assert!((alg.check_d_squared() - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(CoframeAlgebra::new(6, bad), Err(Error::NotClosed(_))));
    }

    #[test]
    fn structural_errors() {
        let t = DiffTerm::new;
        let mut table = vec![vec![]; 6];
        table[4] = vec![t(1.0, 4, 1)];
        assert!(CoframeAlgebra::from_table(6, table.clone()).is_err());
        table[4] = vec![t(1.0, 1, 7)];
        assert!(CoframeAlgebra::from_table(6, table.clone()).is_err());
        table[4] = vec![t(1.0, 1, 4), t(2.0, 1, 4)];
        assert!(CoframeAlgebra::from_table(6, table).is_err());
        assert!(CoframeAlgebra::from_table(6, vec![vec![]; 5]).is_err());
    }

    #[test]
    fn top_degree_is_rejected() {
        let iw = CoframeAlgebra::builtin("iwasawa").unwrap();
        assert!(matches!(iw.exterior_d(&KForm::top(6)), Err(Error::TopDegreeDerivative)));
        assert!(matches!(iw.exterior_d(&KForm::zero(7, 1)), Err(Error::DimensionMismatch(7, 6))));
    }

    #[test]
    fn leibniz_on_monomials() {
        let n = CoframeAlgebra::builtin("n-algebra").unwrap();
        let a = KForm::from_terms(6, 1, &[(1.0, &[5]), (2.0, &[6])]).unwrap();
        let b = KForm::from_terms(6, 2, &[(1.0, &[4, 6]), (-3.0, &[1, 5])]).unwrap();
        let lhs = n.d(&wedge(&a, &b).unwrap());
        let rhs = &wedge(&n.d(&a), &b).unwrap() - &wedge(&a, &n.d(&b)).unwrap();
        assert!((&lhs - &rhs).max_abs() < 1e-14);
    }

    #[test]
    fn lift_keeps_dt_closed() {
        let iw = CoframeAlgebra::builtin("iwasawa").unwrap().lift7();
        assert_eq!(iw.dim(), 7);
        assert_eq!(iw.d_basis(1), KForm::zero(7, 2));
        let de5 = KForm::from_terms(7, 2, &[(1.0, &[1, 4]), (1.0, &[2, 3])]).unwrap();
        // 1-based table index 6 is the coframe label e^5
        assert_eq!(iw.d_basis(6), de5);
    }

    #[test]
    fn display_structure_equations() {
        let iw = CoframeAlgebra::builtin("iwasawa").unwrap();
        assert_eq!(iw.to_string(), "(0, 0, 0, 0, 1 e14 + 1 e23, 1 e13 - 1 e24)");
    }
}
