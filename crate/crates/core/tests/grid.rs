use approx::assert_relative_eq;
use ergolab::grid::*;
use ergolab::Error;
use proptest::prelude::*;

fn line(n: usize, a: f64, b: f64) -> UniformGrid {
    UniformGrid::new(&[n], &[a], &[b]).unwrap()
}

fn square(n: usize) -> UniformGrid {
    UniformGrid::new(&[n, n], &[0.0, 0.0], &[1.0, 1.0]).unwrap()
}

fn node_near(g: &UniformGrid, p: &[f64]) -> usize {
    (0..g.len())
        .min_by(|&a, &b| {
            let da: f64 = g.coords(a).iter().zip(p).map(|(x, y)| (x - y).powi(2)).sum();
            let db: f64 = g.coords(b).iter().zip(p).map(|(x, y)| (x - y).powi(2)).sum();
            da.total_cmp(&db)
        })
        .unwrap()
}

#[test]
fn construction_rules() {
    assert!(UniformGrid::new(&[2], &[0.0], &[1.0]).is_err());
    assert!(UniformGrid::new(&[5], &[1.0], &[1.0]).is_err());
    let g = line(11, 0.0, 1.0);
    assert_eq!(g.spacing()[0], 0.1);
    assert_eq!(g.interior_nodes().len(), 9);
    assert_eq!(square(5).boundary_nodes().len(), 16);
}

#[test]
fn affine_and_quadratic_gradients() {
    let g = line(11, 0.0, 1.0);
    let u = g.sample(|x| x[0]);
    for n in g.interior_nodes() {
        assert_relative_eq!(gradient(&u, n).unwrap().as_slice()[0], 1.0, epsilon = 1e-12);
    }
    let q = g.sample(|x| x[0] * x[0]);
    assert_relative_eq!(gradient(&q, 5).unwrap().as_slice()[0], 1.0, epsilon = 1e-12);
    assert!(matches!(gradient(&q, 0), Err(Error::BoundaryNode(0))));

    let s = square(9);
    let v = s.sample(|x| x[0] + 2.0 * x[1]);
    let gv = gradient(&v, node_near(&s, &[0.5, 0.25])).unwrap();
    assert_relative_eq!(gv.as_slice()[0], 1.0, epsilon = 1e-12);
    assert_relative_eq!(gv.as_slice()[1], 2.0, epsilon = 1e-12);
}

#[test]
fn quadratic_hessians() {
    let g = line(11, 0.0, 1.0);
    let h = hessian(&g.sample(|x| x[0] * x[0]), 4).unwrap();
    assert_relative_eq!(h.get(0, 0), 2.0, epsilon = 1e-10);

    let s = square(9);
    let n = node_near(&s, &[0.5, 0.5]);
    let xy = hessian(&s.sample(|x| x[0] * x[1]), n).unwrap();
    assert_relative_eq!(xy.get(0, 1), 1.0, epsilon = 1e-10);
    assert_relative_eq!(xy.get(0, 0), 0.0, epsilon = 1e-10);
    assert_relative_eq!(xy.get(1, 1), 0.0, epsilon = 1e-10);
    let saddle = hessian(&s.sample(|x| x[0] * x[0] - x[1] * x[1]), n).unwrap();
    assert_relative_eq!(saddle.get(0, 0), 2.0, epsilon = 1e-10);
    assert_relative_eq!(saddle.get(1, 1), -2.0, epsilon = 1e-10);
    assert_relative_eq!(saddle.get(0, 1), 0.0, epsilon = 1e-10);
}

#[test]
fn centered_differences_are_second_order() {
    let err = |n: usize| {
        let g = line(n + 1, 0.0, 2.0);
        let u = g.sample(|x| x[0].sin() + (0.5 * x[0]).exp());
        g.interior_nodes()
            .into_iter()
            .map(|k| {
                let x = g.coords(k)[0];
                let d1 = (gradient(&u, k).unwrap().as_slice()[0] - (x.cos() + 0.5 * (0.5 * x).exp())).abs();
                let d2 = (hessian(&u, k).unwrap().get(0, 0) - (-x.sin() + 0.25 * (0.5 * x).exp())).abs();
                d1.max(d2)
            })
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (err(32), err(64));
    assert!((e1 / e2).log2() >= 1.9, "{e1} {e2}");
}

#[test]
fn seminorm_examples() {
    let g = line(65, 0.0, 1.0);
    let whole = Region::whole(&g);
    let c = VectorField::from_scalar(&g.sample(|_| 3.0));
    assert_eq!(holder_seminorm(&c, 0.3, &whole).unwrap().value, 0.0);
    let id = VectorField::from_scalar(&g.sample(|x| x[0]));
    assert_relative_eq!(holder_seminorm(&id, 1.0, &whole).unwrap().value, 1.0, epsilon = 1e-12);
    let root = VectorField::from_scalar(&g.sample(|x| x[0].sqrt()));
    let r = holder_seminorm(&root, 0.5, &whole).unwrap().value;
    assert!((r - 1.0).abs() <= 0.05, "{r}");
    assert!(holder_seminorm(&root, 0.0, &whole).is_err());

    assert_relative_eq!(lipschitz_seminorm(&g.sample(|x| 3.0 * x[0]), &whole).unwrap().value, 3.0, epsilon = 1e-12);
    let sym = line(41, -1.0, 1.0);
    assert_relative_eq!(lipschitz_seminorm(&sym.sample(|x| x[0].abs()), &Region::whole(&sym)).unwrap().value, 1.0, epsilon = 1e-12);
}

#[test]
fn large_regions_are_strided() {
    let s = square(101);
    let r = lipschitz_seminorm(&s.sample(|x| x[0] - x[1]), &Region::whole(&s)).unwrap();
    assert!(r.stride > 1 && r.nodes_used <= SEMINORM_NODE_CAP);
    assert!(r.value <= 2f64.sqrt() + 1e-9);
}

#[test]
fn layers() {
    let s = square(41);
    let layer = BoundaryLayer::new(&s, 0.1).unwrap();
    let dom = s.domain();
    for &n in &layer.nodes {
        let d = dom.distance(&s.coords(n));
        assert!((0.1 - 1e-9..=0.2 + 1e-9).contains(&d));
    }
    assert!(BoundaryLayer::new(&s, 0.0).is_err());
    assert!(matches!(BoundaryLayer::new(&s, 0.6), Err(Error::EmptyRegion(_))));
}

#[test]
fn snapshot_round_trip() {
    let s = UniformGrid::new(&[7, 5], &[-1.0, 0.0], &[2.0, 0.5]).unwrap();
    let u = s.sample(|x| (x[0] * x[1]).sin() + 1e-17);
    let mut buf = Vec::new();
    u.write_snapshot(&mut buf).unwrap();
    let back = GridFunction::read_snapshot(buf.as_slice()).unwrap();
    assert_eq!(back, u);
    assert!(GridFunction::read_snapshot(&buf[..buf.len() - 3]).is_err());
}

proptest! {
    #[test]
    fn seminorm_is_homogeneous(k in -5.0f64..5.0, w in 0.5f64..6.0, gamma in 0.2f64..1.0) {
        let g = line(33, 0.0, 1.0);
        let f = VectorField::from_scalar(&g.sample(|x| (w * x[0]).sin()));
        let whole = Region::whole(&g);
        let base = holder_seminorm(&f, gamma, &whole).unwrap().value;
        let scaled = holder_seminorm(&f.scaled(k), gamma, &whole).unwrap().value;
        prop_assert!((scaled - k.abs() * base).abs() <= 1e-12 * (1.0 + base * k.abs()));
    }

    #[test]
    fn seminorm_is_monotone_in_region(lo in 0.0f64..0.4, hi in 0.6f64..1.0, w in 0.5f64..6.0) {
        let g = line(33, 0.0, 1.0);
        let f = VectorField::from_scalar(&g.sample(|x| (w * x[0]).cos() * x[0]));
        let inner = Region { lower: vec![lo], upper: vec![hi] };
        let a = holder_seminorm(&f, 0.5, &inner).unwrap().value;
        let b = holder_seminorm(&f, 0.5, &Region::whole(&g)).unwrap().value;
        prop_assert!(a <= b + 1e-15);
    }

    #[test]
    fn gradient_exact_on_quadratics(c in prop::array::uniform6(-3.0f64..3.0)) {
        let s = square(9);
        let u = s.sample(|x| c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[0] * x[0] + c[4] * x[0] * x[1] + c[5] * x[1] * x[1]);
        for n in s.interior_nodes() {
            let p = s.coords(n);
            let gv = gradient(&u, n).unwrap();
            prop_assert!((gv.as_slice()[0] - (c[1] + 2.0 * c[3] * p[0] + c[4] * p[1])).abs() < 1e-9);
            prop_assert!((gv.as_slice()[1] - (c[2] + c[4] * p[0] + 2.0 * c[5] * p[1])).abs() < 1e-9);
            let h = hessian(&u, n).unwrap();
            prop_assert!((h.get(0, 0) - 2.0 * c[3]).abs() < 1e-8);
            prop_assert!((h.get(0, 1) - c[4]).abs() < 1e-8);
            prop_assert!((h.get(1, 1) - 2.0 * c[5]).abs() < 1e-8);
        }
    }
}
