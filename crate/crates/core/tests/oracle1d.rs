use std::f64::consts::PI;

use approx::assert_relative_eq;
use ergolab::oracle1d::*;
use ergolab::{BlowupCase, Error, ExponentPair, ScalarField};

fn pair(a: f64, b: f64) -> ExponentPair {
    ExponentPair::new(a, b).unwrap()
}

fn zero() -> ScalarField {
    ScalarField::constant(0.0)
}

#[test]
fn cosine_case_blows_up_at_one() {
    let r = shoot_blowup(&pair(0.0, 2.0), -PI * PI / 4.0, &zero()).unwrap();
    assert!((r.x_star.unwrap() - 1.0).abs() < 1e-6, "{r:?}");
}

#[test]
fn tangent_case_blows_up_at_half_pi() {
    let r = shoot_blowup(&pair(0.0, 2.0), -1.0, &zero()).unwrap();
    assert!((r.x_star.unwrap() - PI / 2.0).abs() < 1e-6, "{r:?}");
}

/// Fixed-step RK4 on `p' = p^{1.5} + 1` up to `p = 1e4`, then the tail integral.
fn fixed_step_three_halves(h: f64) -> f64 {
    let rhs = |p: f64| p.abs().powf(1.5) + 1.0;
    let (mut x, mut p) = (0.0, 0.0);
    while p < 1e4 {
        let k1 = rhs(p);
        let k2 = rhs(p + 0.5 * h * k1);
        let k3 = rhs(p + 0.5 * h * k2);
        let k4 = rhs(p + h * k3);
        p += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        x += h;
    }
    x + 2.0 / p.sqrt() - 0.5 / (p * p)
}

#[test]
fn three_halves_agrees_with_dense_fixed_step() {
    let r = shoot_blowup(&pair(0.0, 1.5), -1.0, &zero()).unwrap();
    let x = r.x_star.unwrap();
    let dense = fixed_step_three_halves(1e-6);
    assert!((x - dense).abs() < 1e-5, "{x} vs {dense}");
    // ∫₀^∞ dp/(1 + p^{3/2}) = 4π/(3√3)
    assert!((x - 4.0 * PI / (3.0 * 3f64.sqrt())).abs() < 1e-6);
}

#[test]
fn constant_source_blowup_matches_closed_form() {
    for (a, b, c) in [(1.0, 2.5, -2.0), (-0.5, 1.2, -0.7), (0.5, 2.3, -5.0), (0.0, 1.8, -0.3)] {
        let e = pair(a, b);
        let x = shoot_blowup(&e, c, &zero()).unwrap().x_star.unwrap();
        let exact = blowup_location_constant(&e, -c).unwrap();
        assert_relative_eq!(x, exact, max_relative = 1e-6);
    }
}

#[test]
fn ergodic_constant_examples() {
    let e2 = pair(0.0, 2.0);
    let c = ergodic_constant_1d(&e2, &zero()).unwrap();
    assert!((c + PI * PI / 4.0).abs() < 1e-6, "{c}");
    let c1 = ergodic_constant_1d(&e2, &ScalarField::constant(1.0)).unwrap();
    assert!((c1 - (-1.0 - PI * PI / 4.0)).abs() < 1e-6, "{c1}");
}

#[test]
fn three_halves_constant_is_stable_under_refinement() {
    let e = pair(0.0, 1.5);
    let coarse = ergodic_constant_1d_with(&e, &zero(), &ShootOptions::default()).unwrap();
    let fine = ergodic_constant_1d_with(&e, &zero(), &ShootOptions::default().refined()).unwrap();
    assert!((coarse.c - fine.c).abs() < 1e-6);
    // x*(c) = |c|^{−1/3}·(2π/3)/sin(2π/3) = 1
    let exact = -(1.5 * (2.0 * PI / 3.0).sin() / PI).powi(-3);
    assert!((fine.c - exact).abs() < 1e-5, "{} vs {exact}", fine.c);
}

#[test]
fn blowup_location_decreases_with_depth() {
    let e = pair(0.0, 1.5);
    let xs: Vec<f64> = (1..=10)
        .map(|k| shoot_blowup(&e, -1.5 * k as f64, &zero()).unwrap().x_star.unwrap())
        .collect();
    assert!(xs.windows(2).all(|w| w[1] < w[0]), "{xs:?}");
}

#[test]
fn shift_identity_for_nonconstant_source() {
    let e = pair(0.0, 2.0);
    let f = ScalarField::parse("0.5*cos(pi*x)").unwrap();
    let c = ergodic_constant_1d(&e, &f).unwrap();
    let c_shift = ergodic_constant_1d(&e, &f.shifted(0.75)).unwrap();
    assert!((c_shift - (c - 0.75)).abs() < 1e-6, "{c} {c_shift}");
}

#[test]
fn shoot_result_json_has_expected_keys() {
    let r = shoot_blowup(&pair(0.0, 2.0), -1.0, &zero()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    for key in ["alpha", "beta", "c", "x_star", "steps", "tolerances"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn cosine_profile_fit_amplitude() {
    // u = −log cos(πx/2) near x = 1
    let samples: Vec<(f64, f64)> = (0..=20)
        .map(|k| 1e-4 * 10f64.powf(2.0 * k as f64 / 20.0))
        .map(|d| (d, -(PI * (1.0 - d) / 2.0).cos().ln()))
        .collect();
    let fit = blowup_profile_fit(&samples, BlowupCase::Logarithmic).unwrap();
    assert!((fit.c_hat - 1.0).abs() < 0.02, "{fit:?}");
}

#[test]
fn shot_profile_matches_cosine_solution() {
    let opts = ShootOptions::default();
    let (_, states) = shoot_profile(&pair(0.0, 2.0), -PI * PI / 4.0, &zero(), &opts).unwrap();
    for s in states.iter().filter(|s| s.x < 0.99) {
        let u = -(PI * s.x / 2.0).cos().ln();
        assert!((s.u - u).abs() < 1e-8 * (1.0 + u), "at {}: {} vs {u}", s.x, s.u);
    }
}

#[test]
fn bracket_failure_when_source_is_too_deep() {
    // deep well at the origin: the shot blows up before 1 even at the top of the bracket
    let e = pair(0.0, 2.0);
    let r = ergodic_constant_1d(&e, &ScalarField::parse("1000*x^2 - 1000").unwrap());
    assert!(matches!(r, Err(Error::BracketFailure(_))), "{r:?}");
}
