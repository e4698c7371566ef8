use kolmo_core::group::{
    ball_sandwich_constant, compose_kinetic_alt, inverse_kinetic_alt, kinetic_alt_operator_fd, nesting_constant,
    BlockStructure, Cylinder, GroupPoint, LieStructure,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn structures() -> Vec<LieStructure> {
    vec![
        LieStructure::kinetic(1),
        LieStructure::kinetic(2),
        LieStructure::parabolic(2),
        LieStructure::new(BlockStructure::chain(3)),
        LieStructure::new(
            BlockStructure::new(
                vec![2, 1],
                vec![DMatrix::from_row_slice(1, 2, &[0.7, -1.3])],
            )
            .unwrap(),
        ),
    ]
}

fn point(n: usize, c: &[f64]) -> GroupPoint {
    GroupPoint::new(c[..n].to_vec(), c[n])
}

prop_compose! {
    fn coords()(c in prop::collection::vec(-3.0f64..3.0, 7)) -> Vec<f64> { c }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn group_axioms(a in coords(), b in coords(), c in coords(), which in 0usize..5) {
        let l = &structures()[which];
        let n = l.dim();
        let (za, zb, zc) = (point(n, &a), point(n, &b), point(n, &c));
        let left = l.compose(&l.compose(&za, &zb), &zc);
        let right = l.compose(&za, &l.compose(&zb, &zc));
        prop_assert!(left.max_abs_diff(&right) <= 1e-12 * (1.0 + left.x.amax()));
        let e = GroupPoint::origin(n);
        prop_assert!(l.compose(&e, &za).max_abs_diff(&za) == 0.0);
        prop_assert!(l.compose(&za, &e).max_abs_diff(&za) == 0.0);
        prop_assert!(l.compose(&za, &l.inverse(&za)).max_abs_diff(&e) <= 1e-12);
        prop_assert!(l.compose(&l.inverse(&za), &za).max_abs_diff(&e) <= 1e-12);
        prop_assert!(l.inverse(&l.inverse(&za)).max_abs_diff(&za) <= 1e-12);
    }

    #[test]
    fn alternative_law_axioms(a in coords(), b in coords(), c in coords()) {
        let (za, zb, zc) = (point(2, &a), point(2, &b), point(2, &c));
        let left = compose_kinetic_alt(&compose_kinetic_alt(&za, &zb).unwrap(), &zc).unwrap();
        let right = compose_kinetic_alt(&za, &compose_kinetic_alt(&zb, &zc).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) <= 1e-12);
        let inv = inverse_kinetic_alt(&za).unwrap();
        prop_assert!(compose_kinetic_alt(&za, &inv).unwrap().max_abs_diff(&GroupPoint::origin(2)) <= 1e-12);
        prop_assert!(compose_kinetic_alt(&inv, &za).unwrap().max_abs_diff(&GroupPoint::origin(2)) <= 1e-12);
    }

    #[test]
    fn exponential_is_unimodular_group(s in -5.0f64..5.0, u in -5.0f64..5.0, which in 0usize..5) {
        let l = &structures()[which];
        let n = l.dim();
        let prod = l.exp_group(s) * l.exp_group(-s);
        prop_assert!((prod - DMatrix::identity(n, n)).amax() < 1e-12);
        prop_assert!((l.exp_group(s).determinant() - 1.0).abs() < 1e-12);
        let sum = l.exp_group(s) * l.exp_group(u) - l.exp_group(s + u);
        prop_assert!(sum.amax() < 1e-10);
    }

    #[test]
    fn dilations_compose_and_scale_the_norm(a in coords(), r in 0.1f64..10.0, s in 0.1f64..10.0, which in 0usize..5) {
        let l = &structures()[which];
        let z = point(l.dim(), &a);
        let lhs = l.dilate(r, &l.dilate(s, &z).unwrap()).unwrap();
        let rhs = l.dilate(r * s, &z).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * (1.0 + rhs.x.amax().max(rhs.t.abs())));
        let nz = l.homogeneous_norm(&z);
        let ndz = l.homogeneous_norm(&l.dilate(r, &z).unwrap());
        prop_assert!((ndz - r * nz).abs() <= 1e-10 * r * nz);
    }

    #[test]
    fn distance_is_left_invariant(a in coords(), b in coords(), c in coords(), which in 0usize..5) {
        let l = &structures()[which];
        let n = l.dim();
        let (z, w, zeta) = (point(n, &a), point(n, &b), point(n, &c));
        let d = l.distance(&z, &w);
        let dt = l.distance(&l.compose(&zeta, &z), &l.compose(&zeta, &w));
        prop_assert!((d - dt).abs() <= 1e-10 * (1.0 + d));
        prop_assert!(l.distance(&z, &z) == 0.0);
    }

    #[test]
    fn covariance_exact_matches_quadrature(t in 0.01f64..3.0, a in 0.2f64..3.0, b in -0.5f64..0.5, which in 0usize..5) {
        let l = &structures()[which];
        let m0 = l.m0();
        let mut a0 = DMatrix::identity(m0, m0) * a;
        if m0 > 1 {
            a0[(0, 1)] = b;
            a0[(1, 0)] = b;
        }
        let exact = l.covariance(&a0, t).unwrap();
        let quad = l.covariance_quadrature(&a0, t, 64).unwrap();
        prop_assert!((&exact - &quad).amax() <= 1e-12 * (1.0 + exact.amax()));
        prop_assert!((&exact - exact.transpose()).amax() == 0.0);
    }
}

#[test]
fn homogeneous_norm_matches_independent_bisection() {
    // oracle: plain bisection on r in linear scale
    let l = LieStructure::kinetic(1);
    let mut rng = kolmo_core::fundsol::study_rng(11);
    use rand::RngExt;
    for _ in 0..500 {
        let c: Vec<f64> = (0..3).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
        let z = GroupPoint::from_slice(&c);
        let f = |r: f64| (c[0] / r).powi(2) + (c[1] / r.powi(3)).powi(2) + (c[2] / (r * r)).powi(2) - 1.0;
        let (mut lo, mut hi) = (1e-6, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((l.homogeneous_norm(&z) - lo).abs() < 1e-10);
    }
}

fn smooth_test_function(p: &GroupPoint) -> f64 {
    let v: Vec<f64> = p.x.iter().copied().collect();
    let s: f64 = v.iter().enumerate().map(|(i, x)| (1.0 + 0.3 * i as f64) * x).sum();
    s.sin() * (0.5 * p.t).cos() + v[0] * v[0] * p.t + (-(v.iter().map(|x| x * x).sum::<f64>())).exp()
}

fn order_fit(h: &[f64], r: &[f64]) -> f64 {
    let n = h.len() as f64;
    let lx: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

#[test]
fn principal_operator_is_left_invariant() {
    for l in structures() {
        let n = l.dim();
        let zeta = GroupPoint::new((0..n).map(|i| 0.4 - 0.3 * i as f64).collect(), 0.7);
        let z = GroupPoint::new((0..n).map(|i| -0.2 + 0.25 * i as f64).collect(), -0.3);
        let hs = [0.08, 0.04, 0.02, 0.01];
        let res: Vec<f64> = hs.iter().map(|&h| l.left_invariance_residual(&smooth_test_function, &zeta, &z, h)).collect();
        if res.iter().all(|&r| r < 1e-12) {
            // translation-invariant case (B = 0): the stencils coincide exactly
            continue;
        }
        let order = order_fit(&hs, &res);
        assert!(order >= 1.9, "order {order} residuals {res:?}");
    }
}

#[test]
fn alternative_law_is_left_invariant_for_reversed_transport() {
    let zeta = GroupPoint::new(vec![0.6, -0.4], 0.3);
    let z = GroupPoint::new(vec![-0.1, 0.2], -0.5);
    let hs = [0.08, 0.04, 0.02, 0.01];
    let res: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let tr = |p: &GroupPoint| smooth_test_function(&compose_kinetic_alt(&zeta, p).unwrap());
            let lhs = kinetic_alt_operator_fd(&tr, &z, h);
            let rhs = kinetic_alt_operator_fd(&smooth_test_function, &compose_kinetic_alt(&zeta, &z).unwrap(), h);
            (lhs - rhs).abs()
        })
        .collect();
    assert!(order_fit(&hs, &res) >= 1.9, "{res:?}");
    // the same law paired with the opposite transport sign is not invariant
    let l = LieStructure::kinetic(1);
    let tr = |p: &GroupPoint| smooth_test_function(&compose_kinetic_alt(&zeta, p).unwrap());
    let wrong = (l.principal_operator_fd(&tr, &z, 0.01)
        - l.principal_operator_fd(&smooth_test_function, &compose_kinetic_alt(&zeta, &z).unwrap(), 0.01))
    .abs();
    assert!(wrong > 1e-2, "{wrong}");
}

#[test]
fn cylinder_measure_scales_with_homogeneous_dimension() {
    let l = LieStructure::kinetic(1);
    let z0 = GroupPoint::new(vec![0.5, -0.3], 0.2);
    let unit = Cylinder::slanted(z0.clone(), 1.0).unwrap();
    let (m1, _) = unit.measure_monte_carlo(&l, 1_000_000, 1);
    assert!((m1 - unit.measure(&l)).abs() < 0.02 * unit.measure(&l));
    for r in [0.5, 2.0] {
        let cyl = Cylinder::slanted(z0.clone(), r).unwrap();
        let (mr, _) = cyl.measure_monte_carlo(&l, 1_000_000, 2);
        let ratio = mr / m1;
        let expect = r.powi(6);
        assert!((ratio - expect).abs() < 0.02 * expect, "r={r} ratio {ratio}");
    }
}

#[test]
fn empirical_cylinder_constants_are_finite() {
    let l = LieStructure::kinetic(1);
    let c = ball_sandwich_constant(&l, &GroupPoint::origin(2), 1.0, 2000, 5).unwrap();
    assert!((1.0..10.0).contains(&c), "{c}");
    let ct = nesting_constant(&l, 0.5, 1.0, 200, 6).unwrap();
    assert!(ct > 0.0 && ct <= 1.0, "{ct}");
}

#[test]
fn norm_equivalence_constants() {
    let l = LieStructure::kinetic(1);
    let mut rng = kolmo_core::fundsol::study_rng(9);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..10_000 {
        let z = l.sample_unit_cylinder(&mut rng);
        let nz = l.homogeneous_norm(&z);
        if nz == 0.0 {
            continue;
        }
        let r = l.norm1(&z) / nz;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    assert!(lo > 0.5 && hi < 4.0, "{lo} {hi}");
}
