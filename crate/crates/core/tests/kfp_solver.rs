use std::sync::Arc;

use kolmo_core::fundsol::GammaEvaluator;
use kolmo_core::grid::{Axis, GridField};
use kolmo_core::group::GroupPoint;
use kolmo_core::kfp::*;
use kolmo_core::Error;
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn gamma_field(pole: &GroupPoint, nodes: [usize; 3]) -> GridField {
    let g = GammaEvaluator::kinetic(1, 1.0).unwrap();
    let axes = kinetic_axes(1, 2.5, 2.5, (-1.0, 0.0), nodes).unwrap();
    GridField::from_fn(axes, |c| g.gamma(&GroupPoint::from_slice(c), pole).unwrap())
}

fn constant_field(value: f64, nodes: [usize; 3]) -> GridField {
    let axes = kinetic_axes(1, 2.5, 9.0, (-1.5, 0.0), nodes).unwrap();
    GridField::from_fn(axes, |_| value)
}

#[test]
fn gamma_slice_is_propagated_at_first_order() {
    let gamma = GammaEvaluator::kinetic(1, 1.0).unwrap();
    let pole = GroupPoint::new(vec![0.2, -0.1], -1.5);
    let spec = OperatorSpec::constant(1, 1.0);
    let mut errs = Vec::new();
    let mut hs = Vec::new();
    for nodes in [21, 41, 81, 161] {
        let axes = kinetic_axes(1, 4.0, 4.0, (-1.0, 0.0), [nodes, nodes, 11]).unwrap();
        let g0 = gamma.clone();
        let p0 = pole.clone();
        let init = Coefficient::space_time(move |z| g0.gamma(&GroupPoint::from_slice(z), &p0).unwrap());
        let bc = BoundaryCondition::GammaMatched { gamma: gamma.clone(), pole: pole.clone() };
        let u = solve(&spec, &axes, &init, &bc, None).unwrap();
        let cfl = u.cfl.clone().unwrap();
        assert!(cfl.dt <= cfl.dt_reference && cfl.dt <= cfl.dt_monotone);
        errs.push(final_slice_error(&u, |z| gamma.gamma(&GroupPoint::from_slice(z), &pole).unwrap()));
        hs.push(axes[0].h());
    }
    let study = ConvergenceStudy::new(hs, errs.clone());
    // upwind transport: the observed order climbs towards 1 from below
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(study.orders.windows(2).all(|w| w[1] > w[0]), "{:?}", study.orders);
    assert!(*study.orders.last().unwrap() > 0.8, "{:?}", study.orders);
}

#[test]
fn constants_are_preserved() {
    let spec = OperatorSpec::with_diffusion(1, checkerboard(0.5, 2.0, 0.3, vec![0.0, 0.1]), 0.5, 2.0);
    let axes = kinetic_axes(1, 1.0, 1.0, (0.0, 0.2), [21, 21, 5]).unwrap();
    let u = solve(&spec, &axes, &Coefficient::Constant(3.0), &BoundaryCondition::Dirichlet(Coefficient::Constant(3.0)), None)
        .unwrap();
    assert!(u.values.iter().all(|v| (v - 3.0).abs() < 1e-14));
}

#[test]
fn quadratic_manufactured_solution_is_exact() {
    // u = v^2 + t: d_v^2 u + v d_x u - d_t u = 2 - 1, so f = 1
    let mut spec = OperatorSpec::constant(1, 1.0);
    spec.f = Coefficient::Constant(1.0);
    let exact = Coefficient::space_time(|z| z[0] * z[0] + z[2]);
    let axes = kinetic_axes(1, 1.0, 1.0, (0.0, 0.5), [17, 17, 6]).unwrap();
    let u = solve(&spec, &axes, &exact, &BoundaryCondition::Dirichlet(exact.clone()), None).unwrap();
    let mut c = vec![0.0; 3];
    for i in 0..u.len() {
        u.coords_into(i, &mut c);
        assert!((u.values[i] - exact.eval(&c)).abs() < 1e-12);
    }
}

fn variable_case() -> (OperatorSpec, Coefficient) {
    // u = e^{-t} sin v cos x with a = 1 + 0.5 cos v sin x
    let a = Coefficient::space(|z| 1.0 + 0.5 * z[0].cos() * z[1].sin());
    let f = Coefficient::space_time(|z| {
        let (v, x, t) = (z[0], z[1], z[2]);
        let e = (-t).exp();
        let a = 1.0 + 0.5 * v.cos() * x.sin();
        let av = -0.5 * v.sin() * x.sin();
        let div = e * x.cos() * (av * v.cos() - a * v.sin());
        div - v * e * v.sin() * x.sin() + e * v.sin() * x.cos()
    });
    let mut spec = OperatorSpec::with_diffusion(1, a, 0.5, 1.5);
    spec.f = f;
    (spec, Coefficient::space_time(|z| (-z[2]).exp() * z[0].sin() * z[1].cos()))
}

#[test]
fn variable_coefficient_convergence_is_first_order() {
    let (spec, exact) = variable_case();
    let mut errs = Vec::new();
    let mut hs = Vec::new();
    for n in [17, 33, 65] {
        let axes = kinetic_axes(1, 1.0, 1.0, (0.0, 0.5), [n, n, 5]).unwrap();
        let u = solve(&spec, &axes, &exact, &BoundaryCondition::Dirichlet(exact.clone()), None).unwrap();
        errs.push(final_slice_error(&u, |z| exact.eval(z)));
        hs.push(axes[0].h());
    }
    let study = ConvergenceStudy::new(hs, errs);
    assert!(study.orders.iter().all(|p| *p >= 0.9), "{study:?}");
}

#[test]
fn discrete_maximum_principle() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let data_axes = vec![Axis::new(-1.0, 1.0, 11).unwrap(), Axis::new(-1.0, 1.0, 11).unwrap()];
    let mut data = GridField::zeros(data_axes);
    data.values.iter_mut().for_each(|v| *v = rng.random::<f64>());
    let mut spec = OperatorSpec::with_diffusion(1, checkerboard(0.2, 2.0, 0.25, vec![0.05, 0.0]), 0.2, 2.0);
    spec.c = Coefficient::space(|z| -0.5 - 0.5 * z[0].abs());
    let axes = kinetic_axes(1, 1.0, 1.0, (0.0, 0.5), [33, 33, 11]).unwrap();
    let init = Coefficient::Grid(Arc::new(data));
    let u = solve(&spec, &axes, &init, &BoundaryCondition::Dirichlet(Coefficient::Constant(0.5)), None).unwrap();
    assert!(u.min() >= 0.0 && u.max() <= 1.0, "{} {}", u.min(), u.max());
}

#[test]
fn mass_is_conserved_away_from_the_boundary() {
    let spec = OperatorSpec::with_diffusion(1, checkerboard(0.5, 1.0, 0.4, vec![0.0, 0.0]), 0.5, 1.0);
    let init = Coefficient::space(|z| (-(z[0] * z[0] + z[1] * z[1]) / 0.05).exp());
    let mut drifts = Vec::new();
    for n in [41, 81] {
        let axes = kinetic_axes(1, 3.0, 3.0, (0.0, 0.1), [n, n, 3]).unwrap();
        let u = solve(&spec, &axes, &init, &BoundaryCondition::InflowDirichlet(Coefficient::zero()), None).unwrap();
        let m = mass_history(&u);
        drifts.push((m[m.len() - 1] - m[0]).abs() / m[0]);
        // the velocity profile at x = 0 carries the mass density
        let mid = u.last_axis_slice(u.axes[2].n - 1);
        let line = GridField::from_fn(vec![mid.axes[0]], |c| mid.interpolate(&[c[0], 0.0]).unwrap());
        let mom = moments(&line);
        assert!(mom.mass > 0.0 && !mom.negative);
    }
    assert!(drifts.iter().all(|d| *d < 1e-9), "{drifts:?}");
}

#[test]
fn refusals_and_failures() {
    let spec = OperatorSpec::constant(1, 1.0);
    let axes = kinetic_axes(1, 1.0, 1.0, (0.0, 0.1), [21, 21, 3]).unwrap();
    let zero = BoundaryCondition::Dirichlet(Coefficient::zero());
    match solve(&spec, &axes, &Coefficient::zero(), &zero, Some(0.1)) {
        Err(Error::Cfl { dt, suggested }) => {
            assert!(suggested < dt);
            assert!(solve(&spec, &axes, &Coefficient::zero(), &zero, Some(suggested)).is_ok());
        }
        other => panic!("expected a CFL refusal, got {other:?}"),
    }
    let mut bad = spec.clone();
    bad.f = Coefficient::space_time(|z| if z[2] > 0.05 { f64::NAN } else { 0.0 });
    assert!(matches!(solve(&bad, &axes, &Coefficient::zero(), &zero, None), Err(Error::Numerical { .. })));
    let mut low_q = spec.clone();
    low_q.q = 3.0;
    assert!(matches!(low_q.validate(), Err(Error::Exponent(_))));
    let out_of_bounds = OperatorSpec::with_diffusion(1, Coefficient::space(|z| 1.0 + z[0]), 0.5, 1.5);
    assert!(solve(&out_of_bounds, &axes, &Coefficient::zero(), &zero, None).is_err());
    let mut neg = spec.clone();
    neg.lambda = 0.0;
    assert!(neg.validate().is_err());
}

#[test]
fn moser_constant_field_formula() {
    let spec = OperatorSpec::constant(1, 1.0);
    let u = constant_field(1.0, [21, 21, 11]);
    let (rho, r) = (0.6, 0.9);
    let rep = moser_check(&spec, &u, &GroupPoint::origin(2), rho, r, 1.0).unwrap();
    let beta = spec.q / (spec.q - 1.0);
    let measure = 4.0 * r.powi(6);
    let oracle = measure.powf(-1.0 / beta) * (r - rho).powf(6.0 / beta);
    assert!((rep.fitted_constant - oracle).abs() < 1e-12 * oracle, "{} {oracle}", rep.fitted_constant);
    let o = GroupPoint::origin(2);
    for (rho, r) in [(0.9, 0.9), (0.5, 1.2), (0.2, 0.8)] {
        assert!(matches!(moser_check(&spec, &u, &o, rho, r, 1.0), Err(Error::Geometry(_))));
    }
}

fn random_poles(n: usize, seed: u64) -> Vec<GroupPoint> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            GroupPoint::new(
                vec![0.4 * rng.random::<f64>() - 0.2, 0.4 * rng.random::<f64>() - 0.2],
                -1.5 - rng.random::<f64>(),
            )
        })
        .collect()
}

#[test]
fn moser_constants_on_gamma_translates() {
    let spec = OperatorSpec::constant(1, 1.0);
    let o = GroupPoint::origin(2);
    let mut cs = Vec::new();
    for pole in random_poles(20, 3) {
        let coarse = moser_check(&spec, &gamma_field(&pole, [41, 41, 21]), &o, 0.75, 1.0, 1.0).unwrap();
        let fine = moser_check(&spec, &gamma_field(&pole, [81, 81, 41]), &o, 0.75, 1.0, 1.0).unwrap();
        let change = (fine.fitted_constant - coarse.fitted_constant).abs() / fine.fitted_constant;
        assert!(change < 0.05, "{change}");
        cs.push(fine.fitted_constant);
    }
    let max = cs.iter().cloned().fold(0.0, f64::max);
    let min = cs.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(max / min < 10.0, "{cs:?}");
}

#[test]
fn harnack_ratio_cases() {
    let geom = BatteryConfig::default().geometry;
    let one = harnack_ratio(&constant_field(1.0, [21, 41, 11]), &geom, 0.0).unwrap();
    assert!((one.ratio - 1.0).abs() < 1e-12);
    let zero = harnack_ratio(&constant_field(0.0, [21, 41, 11]), &geom, 0.0).unwrap();
    assert!(zero.infinite && zero.ratio.is_infinite());
    for pole in random_poles(5, 9) {
        let coarse = harnack_ratio(&gamma_field(&pole, [41, 41, 21]), &geom, 0.0).unwrap();
        let fine = harnack_ratio(&gamma_field(&pole, [81, 81, 41]), &geom, 0.0).unwrap();
        assert!(fine.ratio.is_finite());
        assert!((fine.ratio - coarse.ratio).abs() < 0.1 * fine.ratio, "{} {}", coarse.ratio, fine.ratio);
        let weak = weak_harnack_ratio(&gamma_field(&pole, [41, 41, 21]), &geom, 0.0, 0.5).unwrap();
        assert!(weak.ratio.is_finite() && weak.ratio > 0.0);
    }
    assert!(HarnackGeometry::new(0.5, 0.4, 0.5, 1.1, 0.5).is_err());
}

#[test]
fn harnack_chains() {
    let geom = BatteryConfig::default().geometry;
    let lie = kolmo_core::group::LieStructure::kinetic(1);
    let ones = constant_field(1.0, [21, 41, 21]);
    let pole = GroupPoint::new(vec![0.3, 0.0], -1.4);
    // the drift path of the pole, latest point first
    let path: Vec<GroupPoint> =
        (0..5).map(|j| lie.compose(&pole, &GroupPoint::new(vec![0.0, 0.0], 1.4 - 0.2 * j as f64))).collect();
    let flat = harnack_chain(&ones, &path, &geom).unwrap();
    assert!(flat.links.iter().all(|l| l.constant == 1.0) && flat.all_admissible);
    let g = gamma_field(&pole, [41, 41, 21]);
    let chain = harnack_chain(&g, &path, &geom).unwrap();
    assert!(chain.all_admissible && chain.product.is_finite() && chain.broken_at.is_none());
    let reversed: Vec<GroupPoint> = path.iter().rev().cloned().collect();
    let rev = harnack_chain(&g, &reversed, &geom).unwrap();
    assert!(rev.links.iter().all(|l| !l.admissible));
    let zeros = constant_field(0.0, [21, 41, 21]);
    assert_eq!(harnack_chain(&zeros, &path, &geom).unwrap().broken_at, Some(1));
}

#[test]
fn holder_estimates() {
    let flat = constant_field(2.0, [81, 41, 161]);
    let rep = holder_estimate(&flat, &Coefficient::zero(), 6.0).unwrap();
    assert_eq!(rep.alpha, 1.0);
    assert_eq!(rep.seminorm, 0.0);
    let axes = kinetic_axes(1, 2.5, 9.0, (-1.5, 0.0), [81, 41, 161]).unwrap();
    let smooth = GridField::from_fn(axes, |c| c[0] * c[0] + c[2]);
    let rep = holder_estimate(&smooth, &Coefficient::Constant(1.0), 6.0).unwrap();
    assert!(rep.alpha >= 0.9 && rep.fitted_constant > 0.0, "{rep:?}");
    let coarse = constant_field(1.0, [9, 9, 9]);
    assert!(matches!(holder_estimate(&coarse, &Coefficient::zero(), 6.0), Err(Error::Resolution(_))));
}

#[test]
fn dual_norm_cases() {
    let n = 2001;
    let h = 1.0 / (n - 1) as f64;
    let pi = std::f64::consts::PI;
    let g: Vec<f64> = (0..n).map(|i| (pi * i as f64 * h).sin()).collect();
    let l2 = (0.5f64).sqrt();
    let oracle = l2 / (pi * pi + 1.0).sqrt();
    let val = dual_norm_hm1(&g, h);
    assert!((val - oracle).abs() < 1e-5 * oracle, "{val} {oracle}");
    assert_eq!(dual_norm_hm1(&vec![0.0; n], h), 0.0);
    let scaled: Vec<f64> = g.iter().map(|v| -3.0 * v).collect();
    assert!((dual_norm_hm1(&scaled, h) - 3.0 * val).abs() < 1e-12);
}

#[test]
fn weak_poincare_cases() {
    let geom = BatteryConfig::default().geometry;
    let nodes = [65, 129, 65];
    let axes = kinetic_axes(1, 2.0 * geom.big_r, 8.0 * geom.big_r, (-1.0 - geom.eta * geom.eta, 0.0), nodes).unwrap();
    let zero = GridField::zeros(axes.clone());
    let rep = weak_poincare_check(&zero, &geom, &[0.5]).unwrap();
    assert_eq!(rep.lhs[0], 0.0);
    let full = GridField::from_fn(axes.clone(), |_| 1.0);
    assert!(matches!(weak_poincare_check(&full, &geom, &[0.5]), Err(Error::Precondition(_))));
    // smooth bump supported in v > 0: vanishes on half of the zero-set box
    let bump = GridField::from_fn(axes, |c| {
        let s = (c[0] - 0.7) / 0.7;
        let x = c[1] / 2.0;
        (1.0 - s * s).max(0.0).powi(3) * (1.0 - x * x).max(0.0).powi(3) * (1.0 + 0.5 * c[2])
    });
    let rep = weak_poincare_check(&bump, &geom, &[0.25, 0.5, 0.75]).unwrap();
    assert!(rep.zero_fraction >= 0.25);
    assert!(rep.lhs[1] > 0.0 && rep.rhs > 0.0 && rep.dv_norm > 0.0 && rep.yu_norm > 0.0);
    assert!(rep.ratios.iter().all(|r| r.is_finite()));
    assert!(rep.ratios.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn sobolev_embedding_cases() {
    assert_eq!(sobolev_exponent_range(3), (2.0, 6.0));
    assert!(sobolev_exponent_range(2).1.is_infinite());
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    let sf = SeparableField::random(&mut rng, 3, 4);
    let u = separable_field(&sf, 4, 33, 3).unwrap();
    assert!(matches!(sobolev_embedding_check(&u, 3, 7.0), Err(Error::Exponent(_))));
    assert!(matches!(sobolev_embedding_check(&u, 3, 1.5), Err(Error::Exponent(_))));
    for q in [2.0, 4.0, 6.0] {
        let rep = sobolev_embedding_check(&u, 3, q).unwrap();
        let (lhs, rhs) = separable_oracle(&sf, 4, q);
        assert!((rep.lhs - lhs).abs() <= 1e-6 * lhs, "q={q} {} {lhs}", rep.lhs);
        assert!((rep.rhs - rhs).abs() <= 1e-6 * rhs, "q={q} {} {rhs}", rep.rhs);
    }
    let zero = GridField::zeros(u.axes.clone());
    let rep = sobolev_embedding_check(&zero, 3, 6.0).unwrap();
    assert_eq!((rep.lhs, rep.rhs), (0.0, 0.0));
    // two velocity dimensions admit any finite q
    let sf2 = SeparableField { k: vec![1, 2], amplitude: 1.0, coeffs: vec![1.0, 0.5, -0.2, 0.1, 0.3, 0.0, 0.2, 0.1] };
    let u2 = separable_field(&sf2, 3, 33, 3).unwrap();
    let rep = sobolev_embedding_check(&u2, 2, 10.0).unwrap();
    let (lhs, rhs) = separable_oracle(&sf2, 3, 10.0);
    assert!((rep.lhs - lhs).abs() <= 1e-6 * lhs && (rep.rhs - rhs).abs() <= 1e-6 * rhs);
}

#[test]
fn gaussian_velocity_moments() {
    let ax = Axis::new(-12.0, 12.0, 2401).unwrap();
    let g = GridField::from_fn(vec![ax], |c| (-0.5 * c[0] * c[0]).exp() / (2.0 * std::f64::consts::PI).sqrt());
    let m = moments(&g);
    assert!((m.mass - 1.0).abs() < 1e-6 && (m.energy - 1.0).abs() < 1e-6);
    let oracle = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5;
    assert!((m.entropy - oracle).abs() < 1e-6);
    let zero = moments(&GridField::zeros(vec![ax]));
    assert_eq!((zero.mass, zero.energy, zero.entropy), (0.0, 0.0, 0.0));
    let neg = moments(&GridField::from_fn(vec![ax], |c| c[0]));
    assert!(neg.negative);
}

#[test]
fn reduced_battery_and_conditioning_trend() {
    let cfg = BatteryConfig { runs: 3, ..BatteryConfig::default() };
    let rep = run_battery(&cfg).unwrap();
    for s in &rep.summaries {
        assert!(s.pass, "{s:?}");
    }
    let [c, f] = rep.alpha_range;
    assert!(f[0] > 0.0 && f[1] <= 1.0);
    assert!((c[0] - f[0]).abs() <= 0.2 * f[0], "{:?}", rep.alpha_range);
    let contrasts: Vec<f64> = (1..=20).map(|k| k as f64).collect();
    let trend = trend_study(&cfg, &contrasts).unwrap();
    assert!(trend.spearman_moser >= 0.0 && trend.spearman_harnack >= 0.0, "{trend:?}");
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn harnack_ratio_is_scale_invariant(scale in 0.01f64..100.0, tau in -2.5f64..-1.5) {
        let geom = BatteryConfig::default().geometry;
        let u = gamma_field(&GroupPoint::new(vec![0.0, 0.1], tau), [21, 21, 11]);
        let a = harnack_ratio(&u, &geom, 0.0).unwrap();
        let b = harnack_ratio(&u.scaled(scale), &geom, 0.0).unwrap();
        prop_assert!((a.ratio - b.ratio).abs() <= 1e-12 * a.ratio);
    }

    #[test]
    fn sobolev_ratio_is_scale_invariant(scale in 0.1f64..10.0, seed in 0u64..1000) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let sf = SeparableField::random(&mut rng, 3, 4);
        let u = separable_field(&sf, 4, 9, 3).unwrap();
        let a = sobolev_embedding_check(&u, 3, 4.0).unwrap();
        let b = sobolev_embedding_check(&u.scaled(scale), 3, 4.0).unwrap();
        prop_assert!((a.ratio - b.ratio).abs() <= 1e-10 * a.ratio);
    }
}
