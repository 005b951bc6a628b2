mod common;

use common::*;
use hitchin_core::forms::{norm_sq, pullback, wedge};
use hitchin_core::io::{form_to_file, parse_form_str, to_json};
use hitchin_core::stable::{complete_su3, lambda_invariant, standard_psi_minus, standard_structure};
use hitchin_core::torsion::{
    classify, coupled_report, reconstruct, rescale, torsion_forms, torsion_scal_einstein, twistor_fixture, w1_minus_routes,
};
use hitchin_core::{CoframeAlgebra, KForm};
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn standard_pair_completes_to_the_flat_metric() {
    let s = standard_structure();
    assert!((s.metric.matrix() - DMatrix::identity(6, 6)).amax() < 1e-14);
    assert!((&s.psi_minus - &standard_psi_minus()).max_abs() < 1e-14);
}

#[test]
fn conjugated_standard_pair_stays_coupled() {
    let a = DMatrix::from_fn(6, 6, |i, j| if i == j { 1.0 } else { 0.1 * ((i * 6 + j) as f64).sin() });
    for (k, c, scal) in [(1, -1.0, -2.0), (2, -1.0, -3.0)] {
        let (alg, s) = conjugated_coupled(k, &a);
        let d = coupled_report(&s, &alg).unwrap().details.expect("coupled");
        assert!((d.c - c).abs() < 1e-10, "{}", d.c);
        assert!((d.scal - scal).abs() < 1e-10);
    }
}

#[test]
fn w1_minus_routes_agree_on_fixtures() {
    for name in CoframeAlgebra::builtin_names() {
        let alg = CoframeAlgebra::builtin(name).unwrap();
        let (a, b) = w1_minus_routes(&standard_structure(), &alg).unwrap();
        assert!((a - b).abs() < 1e-12, "{name}: {a} vs {b}");
        let t = torsion_forms(&standard_structure(), &alg).unwrap();
        assert!((t.w1_minus - a).abs() < 1e-12);
    }
}

#[test]
fn susy_implies_positive_scalar_curvature_on_twistor_fixtures() {
    let s = standard_structure();
    for i in 0..=120 {
        let sigma = -1.0 + 6.0 * i as f64 / 120.0;
        let (w1, w2) = twistor_fixture(sigma);
        let (scal, _) = torsion_scal_einstein(w1, &w2, &s.omega, &s.psi_plus, &s.metric).unwrap();
        let susy = 3.0 * w1 * w1 >= norm_sq(&w2, &s.metric).unwrap();
        if susy {
            assert!(scal > 0.0, "sigma = {sigma}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn torsion_round_trip((alg, s) in random_algebra_and_structure()) {
        let t = torsion_forms(&s, &alg).unwrap();
        let [domega, dpp, dpm] = reconstruct(&t, &s);
        let exact = [alg.exterior_d(&s.omega).unwrap(), alg.exterior_d(&s.psi_plus).unwrap(), alg.exterior_d(&s.psi_minus).unwrap()];
        for (r, e) in [domega, dpp, dpm].iter().zip(&exact) {
            prop_assert!((r - e).norm() <= 1e-8 * e.norm().max(1.0), "{} vs {}", r, e);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn completion_is_j_invariant(s in random_structure()) {
        let back = pullback(&s.j, &s.omega).unwrap();
        prop_assert!(rel_err(&back, &s.omega) < 1e-9);
        let again = complete_su3(&s.omega, &s.psi_plus).unwrap();
        prop_assert!(rel_err(&again.psi_minus, &s.psi_minus) < 1e-12);
    }

    #[test]
    fn lambda_is_homogeneous_of_degree_four(rho in random_form(6, 3), x in prop_oneof![-3.0..-0.1f64, 0.1..3.0f64]) {
        let l = lambda_invariant(&rho).unwrap();
        let ls = lambda_invariant(&rho.scaled(x)).unwrap();
        prop_assert!((ls - x.powi(4) * l).abs() <= 1e-12 * (1.0 + ls.abs()));
    }

    #[test]
    fn classification_survives_rescaling((alg, s) in random_algebra_and_structure(), r in prop_oneof![-3.0..-0.2f64, 0.2..3.0f64]) {
        let c0 = classify(&torsion_forms(&s, &alg).unwrap());
        let c1 = classify(&torsion_forms(&rescale(&s, r).unwrap(), &alg).unwrap());
        prop_assert_eq!(c0, c1);
    }

    #[test]
    fn coupled_constant_scales_inversely(k in 1..=2usize, a in near_identity(6, 0.3), r in prop_oneof![Just(-2.0), Just(0.5), Just(3.0)]) {
        prop_assume!(a.determinant().abs() > 0.1);
        let (alg, s) = conjugated_coupled(k, &a);
        let c = coupled_report(&s, &alg).unwrap().details.unwrap().c;
        let rescaled = coupled_report(&rescale(&s, r).unwrap(), &alg).unwrap().details.unwrap();
        prop_assert!((rescaled.c - c / r).abs() <= 1e-9 * c.abs().max(1.0));
    }

    #[test]
    fn coupled_invariants(k in 1..=2usize, a in near_identity(6, 0.3)) {
        prop_assume!(a.determinant().abs() > 0.1);
        let (alg, s) = conjugated_coupled(k, &a);
        let d = coupled_report(&s, &alg).unwrap().details.unwrap();
        // w2 is co-closed on coupled structures
        prop_assert!(d.w2_codifferential <= 1e-8 * d.w2_norm_sq.sqrt().max(1.0));
        if d.dw2_proportional {
            prop_assert!((d.dw2_factor + d.w2_norm_sq / 4.0).abs() <= 1e-8 * d.w2_norm_sq.max(1.0));
        }
        if d.susy_inequality {
            prop_assert!(d.scal > 0.0);
        }
        prop_assert_eq!(k == 1, d.dw2_proportional);
    }

    #[test]
    fn form_files_round_trip_exactly(f in (0..=6usize).prop_flat_map(|k| random_form(6, k)), mask in prop::collection::vec(prop::bool::ANY, 20)) {
        // sparse forms exercise the omitted-term path
        let c: Vec<f64> = f.coeffs().iter().zip(mask.iter().cycle()).map(|(x, &keep)| if keep { *x / 3.0 } else { 0.0 }).collect();
        let f = KForm::from_coeffs(6, f.degree(), c).unwrap();
        let text = to_json(&form_to_file(&f));
        let back = parse_form_str(&text, 6).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(to_json(&form_to_file(&back)), text);
    }
}

#[test]
fn wedge_with_structure_forms_vanishes() {
    let s = standard_structure();
    assert_eq!(wedge(&s.omega, &s.psi_plus).unwrap().max_abs(), 0.0);
}
