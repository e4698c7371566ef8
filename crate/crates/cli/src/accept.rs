//! The acceptance suite: twelve criteria, each writing its data under
//! `data/` and returning a verdict.

use std::fs;
use std::path::Path;
use std::time::Instant;

use kolmo_core::finance::{mc_asian_oracle, price_asian, toy_comparison, AsianGrid, AsianModel, Averaging, Payoff};
use kolmo_core::fundsol::{sample_interior_point, study_rng, GammaEvaluator};
use kolmo_core::group::{compose_kinetic_alt, inverse_kinetic_alt, kinetic_alt_operator_fd, BlockStructure, GroupPoint, LieStructure};
use kolmo_core::kfp::{run_battery, BatteryConfig};
use kolmo_core::nonlocal::{nonlocal_battery, post_collision, tail, Decay, FractionalParams};
use kolmo_core::stochastic::{
    density_vs_gamma, lorentz_identity_checks, relativistic_diffusion_identity, simulate_langevin, LangevinParams,
};
use nalgebra::DMatrix;
use rand::RngExt;
use serde::Serialize;

use crate::commands::{order_fit, smooth_test_function, sobolev_study, write_nonlocal};
use crate::config::{AcceptConfig, NonlocalBoundConfig, SobolevConfig};
use crate::error::Result;
use crate::output::{num, Output};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

#[derive(Serialize)]
struct Row<'a> {
    id: u32,
    name: &'a str,
    result: Verdict,
    detail: &'a str,
    budget_seconds: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    /// Verdict on the numbers alone.
    pub result: Verdict,
    pub detail: String,
    /// Runtime budget in seconds, if the criterion has one.
    pub budget: Option<f64>,
    pub seconds: f64,
}

impl Criterion {
    /// Numbers and runtime budget together.
    pub fn verdict(&self) -> Verdict {
        match (self.result, self.budget) {
            (Verdict::Pass, Some(b)) if self.seconds > b => Verdict::Fail,
            (v, _) => v,
        }
    }

    pub fn line(&self) -> String {
        let tag = match self.verdict() {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skipped => "SKIP",
        };
        let budget = self.budget.map(|b| format!(" (budget {b} s)")).unwrap_or_default();
        format!("criterion {:>2} {tag} [{:.1} s{budget}] {}: {}", self.id, self.seconds, self.name, self.detail)
    }
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

struct Check {
    result: Verdict,
    detail: String,
}

fn check(ok: bool, detail: String) -> Result<Check> {
    Ok(Check { result: verdict(ok), detail })
}

fn structures() -> Vec<(&'static str, LieStructure)> {
    let custom = BlockStructure::new(vec![2, 1], vec![DMatrix::from_row_slice(1, 2, &[0.7, -1.3])])
        .expect("valid block structure");
    vec![
        ("kinetic_1", LieStructure::kinetic(1)),
        ("kinetic_2", LieStructure::kinetic(2)),
        ("parabolic_2", LieStructure::parabolic(2)),
        ("chain_3", LieStructure::new(BlockStructure::chain(3))),
        ("blocks_2_1", LieStructure::new(custom)),
    ]
}

fn random_point(rng: &mut rand_chacha::ChaCha20Rng, d: usize) -> GroupPoint {
    let c: Vec<f64> = (0..=d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    GroupPoint::from_slice(&c)
}

fn group_calculus(seed: u64, out: &mut Output) -> Result<Check> {
    const TRIPLES: usize = 10_000;
    let mut rng = study_rng(seed);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (name, l) in structures() {
        let d = l.dim();
        let e = GroupPoint::origin(d);
        let (mut assoc, mut ident, mut inv) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..TRIPLES {
            let (a, b, c) = (random_point(&mut rng, d), random_point(&mut rng, d), random_point(&mut rng, d));
            assoc = assoc.max(l.compose(&l.compose(&a, &b), &c).max_abs_diff(&l.compose(&a, &l.compose(&b, &c))));
            ident = ident.max(l.compose(&e, &a).max_abs_diff(&a)).max(l.compose(&a, &e).max_abs_diff(&a));
            let ia = l.inverse(&a);
            inv = inv.max(l.compose(&a, &ia).max_abs_diff(&e)).max(l.compose(&ia, &a).max_abs_diff(&e));
        }
        worst = worst.max(assoc).max(ident).max(inv);
        rows.push(vec!["group".into(), name.into(), num(assoc), num(ident), num(inv)]);
    }
    let e = GroupPoint::origin(2);
    let (mut assoc, mut ident, mut inv) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..TRIPLES {
        let (a, b, c) = (random_point(&mut rng, 2), random_point(&mut rng, 2), random_point(&mut rng, 2));
        let ab_c = compose_kinetic_alt(&compose_kinetic_alt(&a, &b)?, &c)?;
        let a_bc = compose_kinetic_alt(&a, &compose_kinetic_alt(&b, &c)?)?;
        assoc = assoc.max(ab_c.max_abs_diff(&a_bc));
        ident = ident.max(compose_kinetic_alt(&e, &a)?.max_abs_diff(&a)).max(compose_kinetic_alt(&a, &e)?.max_abs_diff(&a));
        let ia = inverse_kinetic_alt(&a)?;
        inv = inv.max(compose_kinetic_alt(&a, &ia)?.max_abs_diff(&e)).max(compose_kinetic_alt(&ia, &a)?.max_abs_diff(&e));
    }
    worst = worst.max(assoc).max(ident).max(inv);
    rows.push(vec!["alternative".into(), "kinetic_1".into(), num(assoc), num(ident), num(inv)]);
    out.table("data/c01_group_laws.csv", &["law", "structure", "associativity", "identity", "inverse"], &rows)?;

    let hs = [0.08, 0.04, 0.02, 0.01];
    let mut rows = Vec::new();
    let mut min_order = f64::INFINITY;
    for (name, l) in structures() {
        let d = l.dim();
        let zeta = GroupPoint::new((0..d).map(|i| 0.4 - 0.3 * i as f64).collect(), 0.7);
        let z = GroupPoint::new((0..d).map(|i| -0.2 + 0.25 * i as f64).collect(), -0.3);
        let res: Vec<f64> = hs.iter().map(|&h| l.left_invariance_residual(&smooth_test_function, &zeta, &z, h)).collect();
        // B = 0: both stencils coincide and the residual is round-off
        let exact = res.iter().all(|&r| r < 1e-12);
        let order = if exact { f64::INFINITY } else { order_fit(&hs, &res) };
        min_order = min_order.min(order);
        for (h, r) in hs.iter().zip(&res) {
            rows.push(vec!["group".into(), name.into(), num(*h), num(*r)]);
        }
    }
    let zeta = GroupPoint::new(vec![0.6, -0.4], 0.3);
    let z = GroupPoint::new(vec![-0.1, 0.2], -0.5);
    let mut res = Vec::new();
    for &h in &hs {
        let tr = |p: &GroupPoint| smooth_test_function(&compose_kinetic_alt(&zeta, p).expect("n = 1"));
        let lhs = kinetic_alt_operator_fd(&tr, &z, h);
        let rhs = kinetic_alt_operator_fd(&smooth_test_function, &compose_kinetic_alt(&zeta, &z)?, h);
        res.push((lhs - rhs).abs());
        rows.push(vec!["alternative".into(), "kinetic_1".into(), num(h), num((lhs - rhs).abs())]);
    }
    min_order = min_order.min(order_fit(&hs, &res));
    out.table("data/c01_left_invariance.csv", &["law", "structure", "h", "residual"], &rows)?;
    check(
        worst <= 1e-12 && min_order >= 1.9,
        format!("max law error {worst:.3e} (<= 1e-12), min invariance order {min_order:.3} (>= 1.9)"),
    )
}

fn homogeneity(seed: u64, out: &mut Output) -> Result<Check> {
    let g = GammaEvaluator::kinetic(1, 1.0)?;
    let l = g.lie().clone();
    let mut rng = study_rng(seed);
    let (mut norm_err, mut gamma_err) = (0.0f64, 0.0f64);
    let mut rows = Vec::new();
    for k in 0..10_000 {
        let r = 0.25 + 3.75 * rng.random::<f64>();
        let z = random_point(&mut rng, 2);
        let nz = l.homogeneous_norm(&z);
        let en = (l.homogeneous_norm(&l.dilate(r, &z)?) - r * nz).abs() / (r * nz);
        let zi = sample_interior_point(&l, &mut rng, 0.1, 2.0);
        let eg = g.homogeneity_residual(&zi, r)?;
        norm_err = norm_err.max(en);
        gamma_err = gamma_err.max(eg);
        if k % 100 == 0 {
            rows.push(vec![k.to_string(), num(r), num(en), num(eg)]);
        }
    }
    out.table("data/c02_homogeneity.csv", &["sample", "r", "norm_error", "gamma_error"], &rows)?;
    check(
        l.q() == 4 && norm_err <= 1e-10 && gamma_err <= 1e-10,
        format!("Q = {}, max relative norm error {norm_err:.3e}, Γ error {gamma_err:.3e} (<= 1e-10)", l.q()),
    )
}

fn covariance(out: &mut Output) -> Result<Check> {
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (name, l) in structures() {
        let a0 = DMatrix::identity(l.m0(), l.m0());
        for t in [0.01, 0.25, 0.5, 1.0, 2.0, 3.0] {
            let exact = l.covariance(&a0, t)?;
            let quad = l.covariance_quadrature(&a0, t, 64)?;
            let err = (&exact - &quad).amax() / exact.amax();
            worst = worst.max(err);
            rows.push(vec!["quadrature".into(), name.into(), num(t), num(err)]);
        }
    }
    let l = LieStructure::kinetic(1);
    let mut det_err: f64 = 0.0;
    for t in [0.25f64, 0.5, 1.0, 2.0] {
        let det = l.covariance(&DMatrix::identity(1, 1), t)?.determinant();
        let err = (det - t.powi(4) / 12.0).abs() / (t.powi(4) / 12.0);
        det_err = det_err.max(err);
        rows.push(vec!["determinant".into(), "kinetic_1".into(), num(t), num(err)]);
    }
    out.table("data/c03_covariance.csv", &["check", "structure", "t", "relative_error"], &rows)?;
    check(
        worst <= 1e-12 && det_err <= 1e-12,
        format!("polynomial vs 64-node quadrature {worst:.3e}, det C(t) vs t^4/12 {det_err:.3e} (<= 1e-12)"),
    )
}

fn gamma_correctness(out: &mut Output) -> Result<Check> {
    let g = GammaEvaluator::kinetic(1, 1.0)?;
    let mut rows = Vec::new();
    let mut mass_err: f64 = 0.0;
    for t in [0.25, 0.5, 1.0, 2.0] {
        let m = g.mass(t, 24)?;
        mass_err = mass_err.max((m - 1.0).abs());
        rows.push(vec!["mass".into(), num(t), num(m)]);
    }
    let hs = [0.04, 0.02, 0.01, 0.005];
    let mut ratio_dev: f64 = 0.0;
    for z in [GroupPoint::new(vec![0.3, -0.2], 0.5), GroupPoint::new(vec![-0.4, 0.1], 1.0)] {
        let r: Vec<f64> = hs.iter().map(|&h| g.pde_residual(&z, h).map(f64::abs)).collect::<kolmo_core::Result<_>>()?;
        for (h, v) in hs.iter().zip(&r) {
            rows.push(vec!["fd_residual".into(), num(*h), num(*v)]);
        }
        for w in r.windows(2) {
            ratio_dev = ratio_dev.max((w[0] / w[1] - 4.0).abs());
        }
    }
    let z = GroupPoint::new(vec![0.3, -0.1], 1.0);
    let zeta0 = GroupPoint::new(vec![-0.2, 0.1], 0.0);
    let direct = g.gamma(&z, &zeta0)?;
    let mut ck_err: f64 = 0.0;
    for s in [0.3, 0.5, 0.8] {
        let ck = g.chapman_kolmogorov(&z, &zeta0, s, 16)?;
        ck_err = ck_err.max((ck - direct).abs() / direct);
        rows.push(vec!["chapman_kolmogorov".into(), num(s), num(ck)]);
    }
    out.table("data/c04_gamma.csv", &["check", "parameter", "value"], &rows)?;
    check(
        mass_err <= 1e-6 && ratio_dev <= 0.5 && ck_err <= 1e-3,
        format!(
            "mass error {mass_err:.3e} (<= 1e-6), residual ratio 4 +- {ratio_dev:.3} (<= 0.5), \
             Chapman-Kolmogorov {ck_err:.3e} (<= 1e-3)"
        ),
    )
}

fn sde_consistency(seed: u64, out: &mut Output) -> Result<Check> {
    let g = GammaEvaluator::kinetic(1, 1.0)?;
    let mut par = LangevinParams::new(1, 1.0, 1e-3, 100_000, seed);
    par.record_every = 500;
    let ens = simulate_langevin(&par)?;
    let mom = ens.moments(ens.n_records() - 1);
    let c1 = g.lie().covariance(g.a0(), 1.0)?;
    let mut rows = Vec::new();
    let mut worst_z: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            // the SDE transports x along -v, the group along +v
            let sign = if i == j { 1.0 } else { -1.0 };
            let target = 2.0 * sign * c1[(i, j)];
            let z = (mom.covariance[(i, j)] - target).abs() / mom.covariance_se[(i, j)];
            worst_z = worst_z.max(z);
            rows.push(vec![i.to_string(), j.to_string(), num(mom.covariance[(i, j)]), num(mom.covariance_se[(i, j)]), num(target)]);
        }
    }
    out.table("data/c05_moments.csv", &["i", "j", "sample", "standard_error", "target"], &rows)?;
    let kde = density_vs_gamma(&ens, &g, 1.0, 121)?;
    out.json("data/c05_density.json", &kde)?;
    check(
        worst_z <= 3.0 && kde.l1 < 0.05 && kde.warning.is_none(),
        format!("largest covariance deviation {worst_z:.2} SE (<= 3), KDE L1 {:.4} (< 0.05)", kde.l1),
    )
}

fn inequality_battery(seed: u64, out: &mut Output) -> Result<Check> {
    let cfg = BatteryConfig { seed, ..BatteryConfig::default() };
    let rep = run_battery(&cfg)?;
    let rows: Vec<Vec<String>> = rep
        .coarse
        .iter()
        .chain(&rep.fine)
        .map(|r| {
            vec![
                r.index.to_string(),
                format!("{}x{}x{}", r.nodes[0], r.nodes[1], r.nodes[2]),
                num(r.contrast),
                num(r.moser),
                num(r.harnack),
                num(r.weak_harnack),
                num(r.holder_alpha),
                num(r.holder),
                num(r.poincare),
            ]
        })
        .collect();
    out.table(
        "data/c06_battery.csv",
        &["member", "nodes", "contrast", "moser", "harnack", "weak_harnack", "holder_alpha", "holder", "weak_poincare"],
        &rows,
    )?;
    out.csv("data/c06_summary.csv", &rep.summaries)?;
    let detail = rep
        .summaries
        .iter()
        .map(|s| format!("{} C={:.4} drift {:.1}% viol {}", s.check, s.fitted_constant, 100.0 * s.drift, s.violations))
        .collect::<Vec<_>>()
        .join("; ");
    check(rep.pass, format!("{} members x 2 grids: {detail}", cfg.runs))
}

fn sobolev(seed: u64, out: &mut Output) -> Result<Check> {
    let cfg = SobolevConfig { seed, ..SobolevConfig::default() };
    let (rows, summary) = sobolev_study(&cfg)?;
    out.csv("data/c07_sobolev.csv", &rows)?;
    out.csv("data/c07_summary.csv", &summary)?;
    let oracle = summary.iter().map(|s| s.max_oracle_error).fold(0.0, f64::max);
    let ok = summary.iter().all(|s| s.violations == 0 && s.fitted_c.is_finite() && s.fitted_c > 0.0) && oracle <= 1e-6;
    let cs = summary.iter().map(|s| format!("q={} C={:.4}", s.q, s.fitted_c)).collect::<Vec<_>>().join(", ");
    check(ok, format!("{} fields, {cs}, oracle error {oracle:.3e} (<= 1e-6)", cfg.fields))
}

fn pricing(seed: u64, out: &mut Output) -> Result<Check> {
    let model = |averaging, sigma| AsianModel {
        s0: 100.0,
        sigma,
        rate: 0.05,
        maturity: 1.0,
        averaging,
        payoff: Payoff::Call { strike: 100.0 },
    };
    let mut rows = Vec::new();
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (averaging, name)) in [(Averaging::Geometric, "geometric"), (Averaging::Arithmetic, "arithmetic")].into_iter().enumerate() {
        let m = model(averaging, 0.2);
        let pde = price_asian(&m, &AsianGrid::default())?;
        let mc = mc_asian_oracle(&m, 1_000_000, 250, seed.wrapping_add(k as u64))?;
        let z = (pde.price - mc.price).abs() / mc.stderr;
        ok &= z <= 3.0;
        parts.push(format!("{name} {:.4} vs MC {:.4} ({z:.2} SE)", pde.price, mc.price));
        rows.push(vec![name.into(), "0.2".into(), num(pde.price), num(mc.price), num(mc.stderr), num(m.deterministic_price())]);
        // sigma = 0: Monte Carlo is the deterministic path
        let m0 = model(averaging, 0.0);
        let mc0 = mc_asian_oracle(&m0, 1000, 250, seed)?;
        let err = (mc0.price - m0.deterministic_price()).abs();
        ok &= err <= 1e-4;
        parts.push(format!("{name} MC sigma=0 error {err:.1e}"));
        rows.push(vec![name.into(), "0".into(), String::new(), num(mc0.price), num(mc0.stderr), num(m0.deterministic_price())]);
    }
    // the PDE needs sigma > 0; its degenerate limit is taken at sigma = 1e-4
    let m = model(Averaging::Geometric, 1e-4);
    let pde = price_asian(&m, &AsianGrid::default())?;
    let err = (pde.price - m.deterministic_price()).abs();
    ok &= err <= 1e-4;
    parts.push(format!("geometric PDE sigma=1e-4 error {err:.1e}"));
    rows.push(vec!["geometric".into(), "0.0001".into(), num(pde.price), String::new(), String::new(), num(m.deterministic_price())]);
    out.table("data/c08_pricing.csv", &["averaging", "sigma", "pde_price", "mc_price", "mc_stderr", "deterministic"], &rows)?;
    check(ok, parts.join("; "))
}

fn obstacle(out: &mut Output) -> Result<Check> {
    let toy = toy_comparison(201)?;
    let rows: Vec<Vec<String>> = (0..toy.v.len())
        .map(|i| vec![num(toy.v[i]), num(toy.penalized[i]), num(toy.psor[i]), num(toy.psi[i])])
        .collect();
    out.table("data/c09_obstacle.csv", &["v", "penalized", "psor", "psi"], &rows)?;
    let r = &toy.report;
    check(
        r.min_gap >= -1e-6 * r.scale && r.complementarity <= 1e-4 && toy.gap <= 1e-4,
        format!(
            "min(u - psi) {:.2e} (>= -1e-6 scale), complementarity {:.2e} (<= 1e-4), PSOR gap {:.2e} (<= 1e-4)",
            r.min_gap, r.complementarity, toy.gap
        ),
    )
}

fn relativistic(seed: u64, out: &mut Output) -> Result<Check> {
    let mut rng = study_rng(seed);
    let mut rows = Vec::new();
    let mut sigma_err: f64 = 0.0;
    for n in 1..=5 {
        let mut worst: f64 = 0.0;
        for _ in 0..2000 {
            let p: Vec<f64> = (0..n).map(|_| 20.0 * rng.random::<f64>() - 10.0).collect();
            let scale = 1.0 + p.iter().map(|v| v * v).sum::<f64>();
            worst = worst.max(relativistic_diffusion_identity(&p) / scale);
        }
        sigma_err = sigma_err.max(worst);
        rows.push(vec!["sigma_square".into(), n.to_string(), num(worst)]);
    }
    let mut id_err: f64 = 0.0;
    let mut exp_dev: f64 = 0.0;
    for n in 1..=3 {
        let rep = lorentz_identity_checks(n, 200, seed.wrapping_add(n as u64))?;
        id_err = id_err.max(rep.left_identity_error);
        exp_dev = exp_dev.max((rep.galilean_exponent - 2.0).abs());
        rows.push(vec!["left_identity".into(), n.to_string(), num(rep.left_identity_error)]);
        rows.push(vec!["galilean_exponent".into(), n.to_string(), num(rep.galilean_exponent)]);
    }
    out.table("data/c10_relativistic.csv", &["check", "n", "value"], &rows)?;
    check(
        sigma_err <= 1e-12 && id_err <= 1e-12 && exp_dev <= 0.1,
        format!(
            "sigma sigma^T = I + p p^T error {sigma_err:.2e} (<= 1e-12), left identity {id_err:.1e}, \
             Galilean exponent 2 +- {exp_dev:.3} (<= 0.1)"
        ),
    )
}

fn nonlocal(seed: u64, out: &mut Output) -> Result<Check> {
    let fp = FractionalParams::new(0.5, 2.0);
    let ind = |z: &[f64]| if z[0].abs() < 2.0 { 1.0 } else { 0.0 };
    let t = tail(&fp, &ind, &Decay::CompactSupport { radius: 2.0 }, &[0.0, 0.0, 0.0], 1.0)?;
    let tail_err = (t.value - 1.0).abs();

    let mut rng = study_rng(seed);
    let mut cons: f64 = 0.0;
    for n in [2usize, 3] {
        for _ in 0..10_000 {
            let v: Vec<f64> = (0..n).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
            let w: Vec<f64> = (0..n).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
            let mut sigma: Vec<f64> = (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let sn = sigma.iter().map(|a| a * a).sum::<f64>().sqrt();
            if sn < 1e-3 {
                continue;
            }
            sigma.iter_mut().for_each(|a| *a /= sn);
            let (vp, wp) = post_collision(&v, &w, &sigma)?;
            let sq = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>();
            let energy = sq(&v) + sq(&w);
            let de = (sq(&vp) + sq(&wp) - energy).abs() / energy;
            let mom_scale = sq(&v).sqrt() + sq(&w).sqrt();
            let dm = (0..n).map(|k| (vp[k] + wp[k] - v[k] - w[k]).abs()).fold(0.0, f64::max) / mom_scale;
            cons = cons.max(de).max(dm);
        }
    }

    let cfg = NonlocalBoundConfig { seed, ..NonlocalBoundConfig::default() };
    let combos: Vec<(f64, f64)> = cfg.combos.iter().map(|c| (c[0], c[1])).collect();
    let rep = nonlocal_battery(cfg.seed, cfg.runs, &combos, cfg.nodes)?;
    write_nonlocal(&rep, out, "data/c11_")?;
    out.table(
        "data/c11_checks.csv",
        &["check", "value"],
        &[vec!["tail_indicator".into(), num(t.value)], vec!["collision_conservation".into(), num(cons)]],
    )?;
    let cs = rep.combos.iter().map(|c| format!("({}, {}) C={:.4}", c.p, c.s, c.fitted_c)).collect::<Vec<_>>().join(" ");
    check(
        tail_err <= 1e-6 && cons <= 1e-14 && rep.pass,
        format!("tail of indicator {:.9} (1 +- 1e-6), conservation {cons:.1e} (<= 1e-14), battery {cs}", t.value),
    )
}

/// Files under `data/` of the two directories, compared byte for byte.
fn determinism(current: &Path, earlier: &Path) -> Result<Check> {
    fn listing(dir: &Path) -> Vec<String> {
        let mut v: Vec<String> = fs::read_dir(dir.join("data"))
            .map(|it| it.filter_map(|e| e.ok()).map(|e| e.file_name().to_string_lossy().into_owned()).collect())
            .unwrap_or_default();
        v.sort();
        v
    }
    let (a, b) = (listing(current), listing(earlier));
    if a.is_empty() || a != b {
        return check(false, format!("artifact sets differ: {} here, {} in {}", a.len(), b.len(), earlier.display()));
    }
    let differing: Vec<&String> = a
        .iter()
        .filter(|f| fs::read(current.join("data").join(f)).ok() != fs::read(earlier.join("data").join(f)).ok())
        .collect();
    check(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} data artifacts byte-identical to {}", a.len(), earlier.display())
        } else {
            format!("differing artifacts: {differing:?}")
        },
    )
}

type Job<'a> = Box<dyn FnOnce(&mut Output) -> Result<Check> + 'a>;

/// Runs every criterion, printing one line each, and writes acceptance.csv.
pub fn run(cfg: &AcceptConfig, out: &mut Output) -> Result<Vec<Criterion>> {
    let s = cfg.seed;
    out.seed(s);
    let jobs: Vec<(u32, &'static str, Option<f64>, Job)> = vec![
        (1, "group calculus", Some(10.0), Box::new(move |o| group_calculus(s, o))),
        (2, "homogeneity", Some(10.0), Box::new(move |o| homogeneity(s.wrapping_add(1), o))),
        (3, "covariance exactness", None, Box::new(covariance)),
        (4, "fundamental solution", Some(120.0), Box::new(gamma_correctness)),
        (5, "SDE-PDE consistency", Some(180.0), Box::new(move |o| sde_consistency(s.wrapping_add(5), o))),
        (6, "inequality battery", Some(900.0), Box::new(move |o| inequality_battery(s, o))),
        (7, "Sobolev embedding", Some(300.0), Box::new(move |o| sobolev(s.wrapping_add(7), o))),
        (8, "pricing", Some(300.0), Box::new(move |o| pricing(s.wrapping_add(8), o))),
        (9, "obstacle", None, Box::new(obstacle)),
        (10, "relativistic identities", None, Box::new(move |o| relativistic(s.wrapping_add(10), o))),
        (11, "nonlocal", Some(600.0), Box::new(move |o| nonlocal(s.wrapping_add(11), o))),
    ];
    let mut done = Vec::with_capacity(12);
    for (id, name, budget, job) in jobs {
        let start = Instant::now();
        let (result, detail) = match job(out) {
            Ok(c) => (c.result, c.detail),
            Err(e) => (Verdict::Fail, format!("error: {e}")),
        };
        let c = Criterion { id, name, result, detail, budget, seconds: start.elapsed().as_secs_f64() };
        println!("{}", c.line());
        done.push(c);
    }
    let start = Instant::now();
    let (result, detail) = match &cfg.compare_with {
        Some(dir) => {
            let c = determinism(out.dir(), dir)?;
            (c.result, c.detail)
        }
        None => (Verdict::Skipped, "no earlier run given (compare_with)".to_string()),
    };
    let c = Criterion { id: 12, name: "determinism", result, detail, budget: None, seconds: start.elapsed().as_secs_f64() };
    println!("{}", c.line());
    done.push(c);
    let rows: Vec<Row> = done
        .iter()
        .map(|c| Row { id: c.id, name: c.name, result: c.verdict(), detail: &c.detail, budget_seconds: c.budget })
        .collect();
    out.csv("acceptance.csv", &rows)?;
    Ok(done)
}
