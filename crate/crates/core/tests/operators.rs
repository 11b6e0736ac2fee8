use approx::assert_relative_eq;
use ergolab::operators::*;
use proptest::prelude::*;

fn sym2(p: f64, r: f64, q: f64) -> SymMatrix {
    SymMatrix::from_rows(&[vec![p, r], vec![r, q]]).unwrap()
}

/// Eigenvalues of `[[p, r], [r, q]]` from the quadratic formula.
fn eig2(p: f64, r: f64, q: f64) -> [f64; 2] {
    let m = 0.5 * (p + q);
    let s = (0.25 * (p - q) * (p - q) + r * r).sqrt();
    [m - s, m + s]
}

fn pucci_plus_ref(a: f64, big_a: f64, l: [f64; 2]) -> f64 {
    l.iter().map(|&x| if x > 0.0 { big_a * x } else { a * x }).sum()
}

fn bellman() -> OperatorSpec {
    let ms = vec![SymMatrix::diag(&[1.0, 1.0]).unwrap(), SymMatrix::diag(&[2.0, 1.0]).unwrap()];
    OperatorSpec::bellman_max(1.0, 2.0, ms).unwrap()
}

#[test]
fn pucci_on_indefinite_diagonal() {
    let m = SymMatrix::diag(&[1.0, -1.0]).unwrap();
    let plus = OperatorSpec::pucci_plus(1.0, 2.0).unwrap();
    let minus = OperatorSpec::pucci_minus(1.0, 2.0).unwrap();
    assert_relative_eq!(eval_operator(&plus, &m).unwrap(), 1.0, epsilon = 1e-14);
    assert_relative_eq!(eval_operator(&minus, &m).unwrap(), -1.0, epsilon = 1e-14);
    assert_relative_eq!(eval_operator(&plus, &m.scale(3.0)).unwrap(), 3.0, epsilon = 1e-14);
    assert_eq!(eval_operator(&plus, &m.scale(1.0)).unwrap(), eval_operator(&plus, &m).unwrap());
}

#[test]
fn trace_of_identity() {
    let tr = OperatorSpec::trace(1.0).unwrap();
    assert_relative_eq!(eval_operator(&tr, &SymMatrix::identity(2).unwrap()).unwrap(), 2.0);
    assert_relative_eq!(eval_operator(&tr, &SymMatrix::identity(3).unwrap()).unwrap(), 3.0);
}

#[test]
fn bellman_takes_the_larger_branch() {
    let f = bellman();
    assert_relative_eq!(f.eval(&SymMatrix::diag(&[1.0, 0.0]).unwrap()).unwrap(), 2.0);
    assert_relative_eq!(f.eval(&SymMatrix::diag(&[-1.0, 0.0]).unwrap()).unwrap(), -1.0);
}

#[test]
fn invalid_bounds_and_matrices() {
    assert!(OperatorSpec::pucci_plus(2.0, 1.0).is_err());
    assert!(OperatorSpec::pucci_plus(0.0, 1.0).is_err());
    let wide = vec![SymMatrix::diag(&[3.0, 1.0]).unwrap()];
    assert!(OperatorSpec::bellman_max(1.0, 2.0, wide).is_err());
    assert_eq!(SymMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 1.0]]).unwrap().get(1, 0), 2.5);
    assert!(SymMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
}

#[test]
fn property_checks_pass_in_full() {
    let specs = [
        OperatorSpec::trace(1.0).unwrap(),
        OperatorSpec::pucci_plus(1.0, 2.0).unwrap(),
        OperatorSpec::pucci_minus(1.0, 2.0).unwrap(),
        bellman(),
    ];
    for (k, spec) in specs.iter().enumerate() {
        let seed = 100 + k as u64;
        for r in [
            check_uniform_ellipticity(spec, 1000, seed).unwrap(),
            check_homogeneity(spec, 1000, seed).unwrap(),
            check_pucci_sandwich(spec, 1000, seed).unwrap(),
        ] {
            assert_eq!((r.trials, r.passed), (1000, 1000), "{r:?}");
        }
    }
    let d = check_pucci_duality(EllipticityBounds::new(1.0, 2.0).unwrap(), 1000, 7).unwrap();
    assert!(d.all_passed(), "{d:?}");
}

#[test]
fn reports_are_seed_deterministic() {
    let spec = OperatorSpec::pucci_plus(0.5, 3.0).unwrap();
    let a = check_uniform_ellipticity(&spec, 200, 9).unwrap();
    let b = check_uniform_ellipticity(&spec, 200, 9).unwrap();
    assert_eq!(a, b);
}

fn entry() -> impl Strategy<Value = f64> {
    -50.0f64..50.0
}

proptest! {
    #[test]
    fn pucci_matches_eigen_formula(p in entry(), r in entry(), q in entry(), a in 0.1f64..2.0, k in 1.0f64..5.0) {
        let big_a = a * k;
        let l = eig2(p, r, q);
        let m = sym2(p, r, q);
        let plus = OperatorSpec::pucci_plus(a, big_a).unwrap().eval(&m).unwrap();
        let minus = OperatorSpec::pucci_minus(a, big_a).unwrap().eval(&m).unwrap();
        let tol = 1e-9 * (1.0 + p.abs() + q.abs() + r.abs()) * big_a;
        prop_assert!((plus - pucci_plus_ref(a, big_a, l)).abs() < tol);
        prop_assert!((minus + pucci_plus_ref(a, big_a, [-l[1], -l[0]])).abs() < tol);
        prop_assert!(minus <= plus + tol);
    }

    #[test]
    fn sandwich_and_ellipticity_for_bellman(p in entry(), r in entry(), q in entry(), g in prop::array::uniform3(-3.0f64..3.0)) {
        let f = bellman();
        let m = sym2(p, r, q);
        let v = f.eval(&m).unwrap();
        let b = f.bounds();
        let lo = OperatorSpec::PucciMinus(b).eval(&m).unwrap();
        let hi = OperatorSpec::PucciPlus(b).eval(&m).unwrap();
        let tol = 1e-9 * (1.0 + v.abs());
        prop_assert!(lo <= v + tol && v <= hi + tol);
        // N = GᵀG ⪰ 0 with G = [[g0, g1], [0, g2]]
        let n = sym2(g[0] * g[0], g[0] * g[1], g[1] * g[1] + g[2] * g[2]);
        let diff = f.eval(&m.add(&n).unwrap()).unwrap() - v;
        let tr = n.trace();
        prop_assert!(diff >= b.a * tr - 1e-9 * (1.0 + v.abs() + tr));
        prop_assert!(diff <= b.big_a * tr + 1e-9 * (1.0 + v.abs() + tr));
    }

    #[test]
    fn outer_product_values_within_bounds(theta in 0.0f64..std::f64::consts::TAU, a in 0.1f64..2.0, k in 1.0f64..5.0) {
        let nn = SymMatrix::outer(&[theta.cos(), theta.sin()]).unwrap();
        for spec in [OperatorSpec::pucci_plus(a, a * k).unwrap(), OperatorSpec::pucci_minus(a, a * k).unwrap(), OperatorSpec::trace(a).unwrap()] {
            let v = spec.eval(&nn).unwrap();
            prop_assert!(v >= a - 1e-12 && v <= a * k + 1e-12);
        }
    }

    #[test]
    fn homogeneity_positive_scalars(p in entry(), r in entry(), q in entry(), t in 0.01f64..100.0) {
        let m = sym2(p, r, q);
        for spec in [OperatorSpec::pucci_plus(1.0, 2.0).unwrap(), bellman()] {
            let lhs = spec.eval(&m.scale(t)).unwrap();
            let rhs = t * spec.eval(&m).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }
    }
}
