use kolmo_core::fundsol::GammaEvaluator;
use kolmo_core::stochastic::{
    density_vs_gamma, lorentz_compose, lorentz_identity_checks, lorentz_inverse, relativistic_diffusion_identity,
    relativistic_path_checks, simulate_langevin, simulate_relativistic, LangevinParams, RelativisticParams,
    RelativisticPoint,
};
use proptest::prelude::*;

#[test]
fn frictionless_second_moments() {
    let par = LangevinParams::new(1, 1.0, 1e-3, 100_000, 20);
    let ens = simulate_langevin(&par).unwrap();
    let mom = ens.moments(ens.n_records() - 1);
    // Var V = int_0^1 2 ds, Cov(V, X) = int_0^1 2 s ds, Var X = int_0^1 2 s^2 ds
    let oracle = [[2.0, 1.0], [1.0, 2.0 / 3.0]];
    // the same numbers from the group covariance, with the position reflected
    let c1 = GammaEvaluator::kinetic(1, 1.0).unwrap().lie().covariance(&nalgebra::DMatrix::identity(1, 1), 1.0).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let sign = if i == j { 1.0 } else { -1.0 };
            assert!((2.0 * sign * c1[(i, j)] - oracle[i][j]).abs() < 1e-14);
            let dev = (mom.covariance[(i, j)] - oracle[i][j]).abs();
            assert!(dev < 3.0 * mom.covariance_se[(i, j)], "({i},{j}) {} vs {}", mom.covariance[(i, j)], oracle[i][j]);
        }
    }
}

#[test]
fn zero_noise_reproduces_the_free_motion() {
    let mut par = LangevinParams::new(2, 1.0, 1e-3, 2, 1);
    par.noise = 0.0;
    par.v0 = vec![0.5, -2.0];
    par.x0 = vec![1.0, 0.25];
    let ens = simulate_langevin(&par).unwrap();
    let s = ens.state(1, ens.n_records() - 1);
    assert_eq!(&s[..2], &[0.5, -2.0]);
    assert!((s[2] - 1.5).abs() < 1e-12 && (s[3] + 1.75).abs() < 1e-12, "{s:?}");
}

#[test]
fn friction_mean_decays_exponentially() {
    let mut par = LangevinParams::new(1, 1.0, 1e-3, 20_000, 3);
    par.friction = true;
    par.v0 = vec![1.5];
    let ens = simulate_langevin(&par).unwrap();
    let mom = ens.moments(ens.n_records() - 1);
    let expect = 1.5 * (-1.0f64).exp();
    assert!((mom.mean[0] - expect).abs() < 3.0 * mom.mean_se[0], "{} vs {expect}", mom.mean[0]);
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(simulate_langevin(&LangevinParams::new(1, 1.0, 0.0, 10, 1)).is_err());
    assert!(simulate_langevin(&LangevinParams::new(1, 1.0, 1e-3, 0, 1)).is_err());
    assert!(simulate_langevin(&LangevinParams::new(1, 1.0, 0.05, 10, 1)).is_err());
    assert!(simulate_relativistic(&RelativisticParams::new(1, 1.0, -1.0, 10, 1)).is_err());
}

#[test]
fn kde_matches_gamma_in_l1() {
    let g = GammaEvaluator::kinetic(1, 1.0).unwrap();
    let mut par = LangevinParams::new(1, 1.0, 1e-3, 100_000, 21);
    par.record_every = 500;
    let ens = simulate_langevin(&par).unwrap();
    let rep = density_vs_gamma(&ens, &g, 1.0, 121).unwrap();
    assert!(rep.warning.is_none());
    assert!((rep.kde_mass - 1.0).abs() < 1e-3, "{}", rep.kde_mass);
    assert!((rep.gamma_mass - 1.0).abs() < 1e-3, "{}", rep.gamma_mass);
    assert!(rep.l1 < 0.05, "{}", rep.l1);
    let off = density_vs_gamma(&ens, &g, 0.7, 41).unwrap();
    assert!(off.warning.is_some() && off.time == 0.5);

    par.n_paths = 200_000;
    let bigger = density_vs_gamma(&simulate_langevin(&par).unwrap(), &g, 1.0, 121).unwrap();
    assert!(bigger.l1 < rep.l1 * 1.1, "{} then {}", rep.l1, bigger.l1);
}

#[test]
fn ensembles_are_reproducible_across_thread_counts() {
    let par = LangevinParams::new(1, 0.5, 1e-3, 500, 77);
    let a = simulate_langevin(&par).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| simulate_langevin(&par).unwrap());
    assert!(a.states.iter().zip(&b.states).all(|(x, y)| x.to_bits() == y.to_bits()));
    let other = simulate_langevin(&LangevinParams { seed: 78, ..par.clone() }).unwrap();
    assert_ne!(a.states, other.states);
}

#[test]
fn relativistic_zero_noise_and_speed_bound() {
    let mut par = RelativisticParams::new(1, 2.0, 1e-3, 3, 5);
    par.noise = 0.0;
    par.p0 = vec![0.75];
    par.t0 = 0.5;
    let ens = simulate_relativistic(&par).unwrap();
    let s = ens.state(0, ens.n_records() - 1);
    assert_eq!(s[0], 0.75);
    assert!((s[2] - (0.5 + 2.0 * 1.25)).abs() < 1e-12, "{}", s[2]);

    let mut par = RelativisticParams::new(2, 1.0, 1e-3, 2000, 6);
    par.p0 = vec![0.3, -0.2];
    par.record_every = 10;
    let ens = simulate_relativistic(&par).unwrap();
    assert_eq!(ens.blown_count(), 0);
    let (vmax, increasing) = relativistic_path_checks(&ens).unwrap();
    assert!(vmax < 1.0 && increasing);
    // Jensen: E[T_S] > t0 + S since sqrt(|P|^2+1) >= 1
    let last = ens.n_records() - 1;
    let mean_t: f64 = (0..ens.n_paths).map(|p| ens.state(p, last)[4]).sum::<f64>() / ens.n_paths as f64;
    assert!(mean_t > 1.0, "{mean_t}");
}

#[test]
fn blow_up_is_flagged() {
    let mut par = RelativisticParams::new(1, 1.0, 1e-2, 20, 2);
    par.noise = 50.0;
    par.p0 = vec![1.0];
    let ens = simulate_relativistic(&par).unwrap();
    assert!(ens.blown_count() > 0);
    assert!(ens.states.iter().all(|v| v.is_finite()));
}

#[test]
fn lorentz_law_checks() {
    let one = lorentz_identity_checks(1, 50, 4).unwrap();
    assert_eq!(one.left_identity_error, 0.0);
    assert!(one.inverse_error < 1e-10 && one.left_inverse_error < 1e-10 && one.associativity_defect < 1e-10, "{one:?}");
    let rep = lorentz_identity_checks(2, 50, 4).unwrap();
    assert_eq!(rep.left_identity_error, 0.0);
    assert!(rep.inverse_error < 1e-10, "{}", rep.inverse_error);
    // in several dimensions the law is not associative
    assert!(rep.associativity_defect > 1e-3 && rep.left_inverse_error > 1e-3);
    for r in [&one, &rep] {
        assert!((r.galilean_exponent - 2.0).abs() < 0.1, "{:?}", r.galilean);
    }
    // the inverse found by Newton agrees with the closed form (-p, ...)
    let a = RelativisticPoint::new(vec![0.4, -1.1], vec![0.2, 0.3], -0.7).unwrap();
    let b = lorentz_inverse(&a).unwrap();
    assert!((b.p[0] + 0.4).abs() < 1e-12 && (b.p[1] - 1.1).abs() < 1e-12);
    let e = lorentz_compose(&a, &b).unwrap();
    assert!(e.p.iter().chain(&e.x).all(|v| v.abs() < 1e-10) && e.t.abs() < 1e-10);
}

proptest! {
    #[test]
    fn relativistic_square_root(p in prop::collection::vec(-10.0f64..10.0, 1..=5)) {
        let scale = 1.0 + p.iter().map(|v| v * v).sum::<f64>();
        prop_assert!(relativistic_diffusion_identity(&p) <= 1e-12 * scale);
    }
}
