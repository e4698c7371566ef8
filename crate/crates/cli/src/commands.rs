use std::str::FromStr;

use kolmo_core::finance::{mc_asian_oracle, obstacle_family, price_asian, stability_bound_check, toy_comparison, Averaging};
use kolmo_core::fundsol::GammaEvaluator;
use kolmo_core::grid::Axis;
use kolmo_core::group::{Cylinder, GroupPoint};
use kolmo_core::kfp::{
    battery_member_solution, checkerboard, cutoff_for_poincare, harnack_ratio, kinetic_axes, mass_history,
    separable_field, separable_oracle, sobolev_embedding_check, solve, weak_harnack_ratio, weak_poincare_check,
    BatteryConfig, BoundaryCondition, Coefficient, HarnackGeometry, OperatorSpec, SeparableField,
};
use kolmo_core::nonlocal::{nonlocal_battery, tail, tail_sup, BatteryReport as NonlocalReport};
use kolmo_core::stochastic::{
    density_vs_gamma, relativistic_path_checks, simulate_langevin, simulate_relativistic, write_klab, LangevinParams,
    PathEnsemble, RelativisticParams,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::*;
use crate::error::{CliError, Result};
use crate::output::{num, Output};

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Validation(msg.into()))
}

/// Smooth test function for the left-invariance residual.
pub fn smooth_test_function(p: &GroupPoint) -> f64 {
    let v: Vec<f64> = p.x.iter().copied().collect();
    let s: f64 = v.iter().enumerate().map(|(i, x)| (1.0 + 0.3 * i as f64) * x).sum();
    s.sin() * (0.5 * p.t).cos() + v[0] * v[0] * p.t + (-(v.iter().map(|x| x * x).sum::<f64>())).exp()
}

/// Least-squares slope of log r against log h.
pub fn order_fit(h: &[f64], r: &[f64]) -> f64 {
    let n = h.len() as f64;
    let lx: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

pub fn geometry(cfg: &GeometryConfig, out: &mut Output) -> Result<()> {
    out.seed(cfg.seed);
    let lie = cfg.structure.build()?;
    let d = lie.dim();
    let a0 = a0_matrix(lie.m0(), 1.0, &None)?;
    let hypo = lie.hypoellipticity_check(&a0)?;
    let b = lie.b_matrix();
    out.json(
        "structure.json",
        &json!({
            "dim": d,
            "m0": lie.m0(),
            "kappa": lie.kappa(),
            "homogeneous_dimension": lie.q(),
            "alpha": lie.alpha(),
            "trace_b": lie.trace_b(),
            "b": (0..d).map(|i| (0..d).map(|j| b[(i, j)]).collect::<Vec<f64>>()).collect::<Vec<_>>(),
            "hypoellipticity": hypo,
            "unit_cylinder_measure": lie.unit_cylinder_measure(),
        }),
    )?;

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.extend(["t", "norm1", "homogeneous_norm"].map(String::from));
    header.extend(cfg.radii.iter().map(|r| format!("dilation_residual_r{r}")));
    let mut rows = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let c: Vec<f64> = (0..=d).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
        let z = GroupPoint::from_slice(&c);
        let nz = lie.homogeneous_norm(&z);
        let mut row: Vec<String> = c.iter().map(|v| num(*v)).collect();
        row.push(num(lie.norm1(&z)));
        row.push(num(nz));
        for &r in &cfg.radii {
            let dz = lie.dilate(r, &z)?;
            row.push(num((lie.homogeneous_norm(&dz) - r * nz).abs() / (r * nz).max(f64::MIN_POSITIVE)));
        }
        rows.push(row);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.table("norms.csv", &header, &rows)?;

    let zeta = GroupPoint::new((0..d).map(|i| 0.4 - 0.3 * i as f64).collect(), 0.7);
    let z = GroupPoint::new((0..d).map(|i| -0.2 + 0.25 * i as f64).collect(), -0.3);
    let rows: Vec<Vec<String>> = cfg
        .steps
        .iter()
        .map(|&h| vec![num(h), num(lie.left_invariance_residual(&smooth_test_function, &zeta, &z, h))])
        .collect();
    out.table("left_invariance.csv", &["h", "residual"], &rows)?;

    let centre = GroupPoint::new((0..d).map(|i| 0.5 - 0.4 * i as f64).collect(), 0.2);
    let mut rows = Vec::new();
    for (k, &r) in std::iter::once(&1.0).chain(&cfg.radii).enumerate() {
        let cyl = Cylinder::slanted(centre.clone(), r)?;
        let (mc, se) = cyl.measure_monte_carlo(&lie, cfg.cylinder_samples, cfg.seed.wrapping_add(k as u64));
        rows.push(vec![num(r), num(cyl.measure(&lie)), num(mc), num(se)]);
    }
    out.table("cylinders.csv", &["r", "measure", "monte_carlo", "standard_error"], &rows)
}

pub fn fundsol(cfg: &FundsolConfig, out: &mut Output) -> Result<()> {
    let lie = cfg.structure.build()?;
    let d = lie.dim();
    let m0 = lie.m0();
    let g = GammaEvaluator::new(lie, a0_matrix(m0, cfg.a, &cfg.a0)?)?;
    if let Some(grid) = &cfg.grid {
        if d > 2 || grid.lo.len() != d || grid.hi.len() != d || grid.nodes.len() != d {
            return invalid(format!("grid: tabulation needs {d} bounds and node counts, and dim <= 2"));
        }
        let axes: Vec<Axis> =
            (0..d).map(|k| Axis::new(grid.lo[k], grid.hi[k], grid.nodes[k])).collect::<kolmo_core::Result<_>>()?;
        let total: usize = grid.nodes.iter().product();
        let mut rows = Vec::with_capacity(total);
        let mut x = vec![0.0; d];
        for flat in 0..total {
            let mut rem = flat;
            for k in 0..d {
                x[k] = axes[k].node(rem % axes[k].n);
                rem /= axes[k].n;
            }
            let mut row: Vec<String> = x.iter().map(|v| num(*v)).collect();
            row.push(num(g.gamma_rel(&x, cfg.t)?));
            rows.push(row);
        }
        let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        header.push("gamma".into());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        out.table("gamma.csv", &header, &rows)?;
    }
    let rows: Vec<Vec<String>> = cfg
        .mass_times
        .iter()
        .map(|&t| Ok(vec![num(t), num(g.mass(t, cfg.mass_panels)?)]))
        .collect::<Result<_>>()?;
    out.table("mass.csv", &["t", "mass"], &rows)?;
    let mut rows = Vec::new();
    for (i, p) in cfg.residual_points.iter().enumerate() {
        if p.len() != d + 1 {
            return invalid(format!("residual_points[{i}] needs {} coordinates", d + 1));
        }
        let z = GroupPoint::from_slice(p);
        let mut prev: Option<f64> = None;
        for &h in &cfg.residual_steps {
            let r = g.pde_residual(&z, h)?.abs();
            let ratio = prev.map(|q| q / r).unwrap_or(f64::NAN);
            rows.push(vec![i.to_string(), num(h), num(r), if ratio.is_nan() { String::new() } else { num(ratio) }]);
            prev = Some(r);
        }
    }
    out.table("residuals.csv", &["point", "h", "residual", "ratio_to_previous"], &rows)?;
    if let Some(ck) = &cfg.chapman_kolmogorov {
        if ck.z.len() != d + 1 || ck.zeta0.len() != d + 1 {
            return invalid(format!("chapman_kolmogorov points need {} coordinates", d + 1));
        }
        let z = GroupPoint::from_slice(&ck.z);
        let z0 = GroupPoint::from_slice(&ck.zeta0);
        let direct = g.gamma(&z, &z0)?;
        let rows: Vec<Vec<String>> = ck
            .s
            .iter()
            .map(|&s| {
                let v = g.chapman_kolmogorov(&z, &z0, s, ck.panels)?;
                Ok(vec![num(s), num(v), num(direct), num((v - direct).abs() / direct)])
            })
            .collect::<Result<_>>()?;
        out.table("chapman_kolmogorov.csv", &["s", "composed", "direct", "relative_error"], &rows)?;
    }
    Ok(())
}

fn moment_rows(ens: &PathEnsemble) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for rec in 0..ens.n_records() {
        let m = ens.moments(rec);
        let t = num(ens.times[rec]);
        let d = m.mean.len();
        for i in 0..d {
            rows.push(vec![t.clone(), "mean".into(), i.to_string(), String::new(), num(m.mean[i]), num(m.mean_se[i])]);
        }
        for i in 0..d {
            for j in i..d {
                rows.push(vec![
                    t.clone(),
                    "covariance".into(),
                    i.to_string(),
                    j.to_string(),
                    num(m.covariance[(i, j)]),
                    num(m.covariance_se[(i, j)]),
                ]);
            }
        }
    }
    rows
}

pub fn simulate(cfg: &SimulateConfig, out: &mut Output) -> Result<()> {
    out.seed(cfg.seed);
    let n = cfg.n;
    let v0 = cfg.initial_velocity.clone().unwrap_or(vec![0.0; n]);
    let x0 = cfg.initial_position.clone().unwrap_or(vec![0.0; n]);
    let ens = match cfg.model {
        ProcessKind::Langevin => {
            let par = LangevinParams {
                n,
                v0,
                x0,
                t_final: cfg.horizon,
                dt: cfg.dt,
                n_paths: cfg.paths,
                seed: cfg.seed,
                friction: cfg.friction,
                noise: cfg.noise,
                record_every: cfg.record_every,
            };
            simulate_langevin(&par)?
        }
        ProcessKind::Relativistic => {
            let par = RelativisticParams {
                n,
                p0: v0,
                x0,
                t0: cfg.initial_time,
                s_final: cfg.horizon,
                ds: cfg.dt,
                n_paths: cfg.paths,
                seed: cfg.seed,
                noise: cfg.noise,
                record_every: cfg.record_every,
            };
            simulate_relativistic(&par)?
        }
    };
    out.table("moments.csv", &["time", "statistic", "i", "j", "value", "standard_error"], &moment_rows(&ens))?;
    let mut summary = json!({ "paths": ens.n_paths, "steps": ens.n_steps, "records": ens.n_records(), "blown": ens.blown_count() });
    if cfg.model == ProcessKind::Relativistic {
        let (vmax, increasing) = relativistic_path_checks(&ens)?;
        summary["max_speed"] = json!(vmax);
        summary["time_increasing"] = json!(increasing);
    } else if cfg.density && !cfg.friction && n == 1 && cfg.noise > 0.0 {
        let g = GammaEvaluator::kinetic(1, 0.5 * cfg.noise * cfg.noise)?;
        summary["density"] = serde_json::to_value(density_vs_gamma(&ens, &g, cfg.horizon, cfg.density_grid)?)
            .expect("report serializes");
    }
    out.json("summary.json", &summary)?;
    if cfg.ensemble {
        let mut bytes = Vec::new();
        write_klab(&ens, &mut bytes)?;
        out.bytes("ensemble.klab", &bytes)?;
    }
    Ok(())
}

fn bump(spec: &BumpSpec, dims: usize) -> Result<Coefficient> {
    if spec.centre.len() != dims || spec.width.len() != dims || spec.width.iter().any(|w| !(*w > 0.0)) {
        return invalid(format!("initial bump needs {dims} centres and positive widths"));
    }
    let s = spec.clone();
    Ok(Coefficient::space(move |z| {
        s.amplitude
            * (0..dims)
                .map(|k| {
                    let r = (z[k] - s.centre[k]) / s.width[k];
                    (1.0 - r * r).max(0.0).powi(3)
                })
                .product::<f64>()
    }))
}

pub fn solve_cmd(cfg: &SolveConfig, out: &mut Output) -> Result<()> {
    let n = cfg.n;
    let mut spec = match &cfg.diffusion {
        DiffusionSpec::Constant { a } => OperatorSpec::constant(n, *a),
        DiffusionSpec::Checkerboard { lambda, big_lambda, scale, phase } => {
            let phase = if phase.is_empty() { vec![0.0; 2 * n] } else { phase.clone() };
            OperatorSpec::with_diffusion(n, checkerboard(*lambda, *big_lambda, *scale, phase), *lambda, *big_lambda)
        }
    };
    spec.f = Coefficient::Constant(cfg.source);
    spec.transport = cfg.transport;
    let axes = kinetic_axes(n, cfg.velocity_radius, cfg.position_radius, (cfg.time[0], cfg.time[1]), cfg.nodes)?;
    let initial = bump(&cfg.initial, 2 * n)?;
    let u = solve(&spec, &axes, &initial, &BoundaryCondition::InflowDirichlet(Coefficient::zero()), cfg.dt)?;
    let nt = axes[2 * n].n;
    let last = u.last_axis_slice(nt - 1);
    let mut header: Vec<String> = (0..n).map(|k| format!("v{k}")).chain((0..n).map(|k| format!("x{k}"))).collect();
    header.push("u".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..last.len())
        .map(|i| last.coords(i).iter().map(|c| num(*c)).chain(std::iter::once(num(last.values[i]))).collect())
        .collect();
    out.table("final.csv", &header, &rows)?;
    let t = axes[2 * n].nodes();
    let rows: Vec<Vec<String>> = mass_history(&u).iter().zip(&t).map(|(m, t)| vec![num(*t), num(*m)]).collect();
    out.table("mass.csv", &["t", "mass"], &rows)?;
    out.json("summary.json", &json!({ "cfl": u.cfl, "min": u.min(), "max": u.max(), "final_mass": last.integral() }))
}

/// `name=from:to:step` over one Harnack geometry parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub param: String,
    pub values: Vec<f64>,
}

impl FromStr for Sweep {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CliError::Validation(format!("sweep `{s}` must look like omega=0.1:0.5:0.05"));
        let (name, range) = s.split_once('=').ok_or_else(bad)?;
        let parts: Vec<f64> = range.split(':').map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        let [from, to, step] = parts[..] else { return Err(bad()) };
        if !["omega", "rho", "eta", "R", "theta0"].contains(&name) {
            return Err(CliError::Validation(format!("unknown sweep parameter `{name}` (omega, rho, eta, R, theta0)")));
        }
        if !(step > 0.0) || !(to >= from) || !from.is_finite() || !to.is_finite() {
            return Err(bad());
        }
        let count = ((to - from) / step + 1e-9).floor() as usize + 1;
        let values = (0..count).map(|k| ((from + k as f64 * step) * 1e12).round() / 1e12).collect();
        Ok(Sweep { param: name.to_string(), values })
    }
}

fn with_param(g: HarnackGeometry, name: &str, x: f64) -> HarnackGeometry {
    let mut g = g;
    match name {
        "omega" => g.omega = x,
        "rho" => g.rho = x,
        "eta" => g.eta = x,
        "R" => g.big_r = x,
        _ => g.theta0 = x,
    }
    g
}

#[derive(Serialize)]
struct HarnackRow {
    omega: f64,
    rho: f64,
    eta: f64,
    #[serde(rename = "R")]
    big_r: f64,
    theta0: f64,
    admissible: bool,
    sup_minus: Option<f64>,
    inf_plus: Option<f64>,
    ratio: Option<f64>,
    weak_ratio: Option<f64>,
    pass: bool,
    note: String,
}

pub fn harnack(cfg: &MemberConfig, sweep: Option<&Sweep>, out: &mut Output) -> Result<()> {
    out.seed(cfg.battery.seed);
    let base = cfg.geometry();
    let geoms: Vec<HarnackGeometry> = match sweep {
        None => vec![base],
        Some(s) => s.values.iter().map(|&x| with_param(base, &s.param, x)).collect(),
    };
    let mut cached: Option<((u64, u64), kolmo_core::grid::GridField)> = None;
    let mut rows = Vec::with_capacity(geoms.len());
    for g in geoms {
        let mut row = HarnackRow {
            omega: g.omega,
            rho: g.rho,
            eta: g.eta,
            big_r: g.big_r,
            theta0: g.theta0,
            admissible: false,
            sup_minus: None,
            inf_plus: None,
            ratio: None,
            weak_ratio: None,
            pass: false,
            note: String::new(),
        };
        let attempt = (|| -> Result<()> {
            let g = HarnackGeometry::new(g.omega, g.rho, g.eta, g.big_r, g.theta0)?;
            row.admissible = true;
            // the solution domain depends on R and eta only
            let key = (g.big_r.to_bits(), g.eta.to_bits());
            if cached.as_ref().map(|c| c.0) != Some(key) {
                let bc = BatteryConfig { geometry: g, ..cfg.battery.clone() };
                cached = Some((key, battery_member_solution(&bc, cfg.member, cfg.nodes)?.1));
            }
            let u = &cached.as_ref().expect("cached solution").1;
            let h = harnack_ratio(u, &g, cfg.f_norm)?;
            let w = weak_harnack_ratio(u, &g, cfg.f_norm, cfg.weak_p)?;
            row.sup_minus = Some(h.sup_minus);
            row.inf_plus = Some(h.inf_plus);
            row.ratio = Some(h.ratio);
            row.weak_ratio = Some(w.ratio);
            row.pass = h.ratio.is_finite() && !h.infinite && w.ratio.is_finite();
            Ok(())
        })();
        if let Err(e) = attempt {
            if sweep.is_none() {
                return Err(e);
            }
            row.note = e.to_string();
        }
        rows.push(row);
    }
    out.csv("harnack.csv", &rows)
}

pub fn poincare(cfg: &MemberConfig, out: &mut Output) -> Result<()> {
    out.seed(cfg.battery.seed);
    let g = HarnackGeometry::new(
        cfg.battery.geometry.omega,
        cfg.battery.geometry.rho,
        cfg.battery.geometry.eta,
        cfg.battery.geometry.big_r,
        cfg.battery.geometry.theta0,
    )?;
    let (_, u) = battery_member_solution(&cfg.battery, cfg.member, cfg.nodes)?;
    let rep = weak_poincare_check(&cutoff_for_poincare(&u, &g), &g, &cfg.battery.thetas)?;
    let rows: Vec<Vec<String>> = (0..rep.thetas.len())
        .map(|i| vec![num(rep.thetas[i]), num(rep.lhs[i]), num(rep.rhs), num(rep.ratios[i])])
        .collect();
    out.table("poincare.csv", &["theta", "lhs", "rhs", "ratio"], &rows)?;
    out.json("poincare.json", &rep)
}

#[derive(Clone, Debug, Serialize)]
pub struct SobolevRow {
    pub field: usize,
    pub q: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub oracle_lhs: f64,
    pub oracle_rhs: f64,
    /// Largest relative deviation of lhs and rhs from the oracle.
    pub oracle_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SobolevSummary {
    pub q: f64,
    pub fitted_c: f64,
    pub violations: usize,
    pub max_oracle_error: f64,
}

pub fn sobolev_study(cfg: &SobolevConfig) -> Result<(Vec<SobolevRow>, Vec<SobolevSummary>)> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let fields: Vec<SeparableField> = (0..cfg.fields).map(|_| SeparableField::random(&mut rng, cfg.m0, cfg.outer_dim)).collect();
    let per_field: Vec<Vec<SobolevRow>> = fields
        .par_iter()
        .enumerate()
        .map(|(i, sf)| {
            let u = separable_field(sf, cfg.outer_dim, cfg.nx, cfg.ny)?;
            cfg.q
                .iter()
                .map(|&q| {
                    let rep = sobolev_embedding_check(&u, cfg.m0, q)?;
                    let (ol, or) = separable_oracle(sf, cfg.outer_dim, q);
                    let err = ((rep.lhs - ol).abs() / ol.abs().max(f64::MIN_POSITIVE))
                        .max((rep.rhs - or).abs() / or.abs().max(f64::MIN_POSITIVE));
                    Ok(SobolevRow { field: i, q, lhs: rep.lhs, rhs: rep.rhs, ratio: rep.ratio, oracle_lhs: ol, oracle_rhs: or, oracle_error: err })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<SobolevRow> = per_field.into_iter().flatten().collect();
    let summary = cfg
        .q
        .iter()
        .map(|&q| {
            let sel: Vec<&SobolevRow> = rows.iter().filter(|r| r.q == q).collect();
            let c = sel.iter().map(|r| r.ratio).fold(0.0, f64::max);
            SobolevSummary {
                q,
                fitted_c: c,
                violations: sel.iter().filter(|r| !(r.lhs <= c * r.rhs * (1.0 + 1e-12))).count(),
                max_oracle_error: sel.iter().map(|r| r.oracle_error).fold(0.0, f64::max),
            }
        })
        .collect();
    Ok((rows, summary))
}

pub fn sobolev(cfg: &SobolevConfig, out: &mut Output) -> Result<()> {
    out.seed(cfg.seed);
    let (rows, summary) = sobolev_study(cfg)?;
    out.csv("sobolev.csv", &rows)?;
    out.csv("summary.csv", &summary)
}

pub fn price(cfg: &PriceConfig, out: &mut Output) -> Result<()> {
    if let Some(mc) = &cfg.monte_carlo {
        out.seed(mc.seed);
    }
    let pde = price_asian(&cfg.model, &cfg.grid)?;
    let mc = match &cfg.monte_carlo {
        Some(m) => Some(mc_asian_oracle(&cfg.model, m.paths, m.steps, m.seed)?),
        None => None,
    };
    let averaging = match cfg.model.averaging {
        Averaging::Geometric => "geometric",
        Averaging::Arithmetic => "arithmetic",
    };
    let within = mc.as_ref().map(|m| (pde.price - m.price).abs() <= 3.0 * m.stderr);
    let row = vec![
        averaging.to_string(),
        num(pde.price),
        num(pde.discretization_estimate),
        mc.as_ref().map(|m| num(m.price)).unwrap_or_default(),
        mc.as_ref().map(|m| num(m.stderr)).unwrap_or_default(),
        within.map(|w| w.to_string()).unwrap_or_default(),
    ];
    out.table(
        "price.csv",
        &["averaging", "pde_price", "discretization_estimate", "mc_price", "mc_stderr", "within_3_se"],
        &[row],
    )?;
    out.json("price.json", &json!({ "pde": pde, "monte_carlo": mc, "within_3_se": within }))
}

pub fn obstacle(cfg: &ObstacleConfig, out: &mut Output) -> Result<()> {
    if let Some(f) = &cfg.family {
        out.seed(f.seed);
    }
    let toy = toy_comparison(cfg.toy_nodes)?;
    let rows: Vec<Vec<String>> = (0..toy.v.len())
        .map(|i| vec![num(toy.v[i]), num(toy.penalized[i]), num(toy.psor[i]), num(toy.psi[i])])
        .collect();
    out.table("toy.csv", &["v", "penalized", "psor", "psi"], &rows)?;
    out.json("toy.json", &json!({ "gap": toy.gap, "report": toy.report }))?;
    if let Some(f) = &cfg.family {
        let problems = obstacle_family(f.seed, f.runs, f.nodes)?;
        let rep = stability_bound_check(&problems)?;
        out.csv("stability.csv", &rep.rows)?;
        out.json("stability.json", &rep)?;
    }
    Ok(())
}

pub fn tail_cmd(cfg: &TailConfig, out: &mut Output) -> Result<()> {
    let n = cfg.params.n;
    let field = cfg.field.clone();
    let u = move |z: &[f64]| field.eval(n, z);
    let rep = if cfg.sup {
        tail_sup(&cfg.params, &u, &cfg.decay, &cfg.z0, cfg.r)?
    } else {
        tail(&cfg.params, &u, &cfg.decay, &cfg.z0, cfg.r)?
    };
    out.json("tail.json", &json!({ "params": cfg.params, "field": cfg.field, "z0": cfg.z0, "report": rep }))
}

#[derive(Serialize)]
struct NonlocalRunRow {
    p: f64,
    s: f64,
    run: usize,
    lhs: f64,
    average_term: f64,
    tail_sup: f64,
    h_term: f64,
    needed_c: f64,
    minimizer: f64,
    holds: bool,
}

pub fn write_nonlocal(rep: &NonlocalReport, out: &mut Output, prefix: &str) -> Result<()> {
    let mut rows = Vec::new();
    for c in &rep.combos {
        for (i, r) in c.runs.iter().enumerate() {
            rows.push(NonlocalRunRow {
                p: c.p,
                s: c.s,
                run: i,
                lhs: r.lhs,
                average_term: r.average_term,
                tail_sup: r.tail_sup,
                h_term: r.h_term,
                needed_c: r.fitted_c,
                minimizer: r.minimizer,
                holds: r.holds_with(c.fitted_c),
            });
        }
    }
    out.csv(&format!("{prefix}runs.csv"), &rows)?;
    let summary: Vec<Vec<String>> = rep
        .combos
        .iter()
        .map(|c| vec![num(c.p), num(c.s), num(c.fitted_c), c.violations.to_string(), c.runs.len().to_string()])
        .collect();
    out.table(&format!("{prefix}summary.csv"), &["p", "s", "fitted_c", "violations", "runs"], &summary)
}

pub fn nonlocal_bound(cfg: &NonlocalBoundConfig, out: &mut Output) -> Result<()> {
    out.seed(cfg.seed);
    let combos: Vec<(f64, f64)> = cfg.combos.iter().map(|c| (c[0], c[1])).collect();
    let rep = nonlocal_battery(cfg.seed, cfg.runs, &combos, cfg.nodes)?;
    write_nonlocal(&rep, out, "")?;
    out.json("battery.json", &rep)
}
