//! Obstacle problems for the kinetic operator by penalization, a projected
//! Gauss-Seidel reference for velocity-only data, the obstacle energy
//! functional and a stability study in discrete W norms.

use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::grid::{Axis, GridField};
use crate::kfp::{checkerboard, dual_norm_hm1, solve_with_hook, BoundaryCondition, Coefficient, OperatorSpec};

/// max{K u - f, psi - u} = 0 in the interior with u = g on the Kolmogorov
/// boundary, where K u = d_v(a d_v u) + v D_x u - d_t u + b d_v u + c u and
/// f is `spec.f`.
#[derive(Clone, Debug)]
pub struct ObstacleProblem {
    pub spec: OperatorSpec,
    /// Axes (v_1..v_n, x_1..x_n, t).
    pub axes: Vec<Axis>,
    pub psi: Coefficient,
    /// Initial and inflow data.
    pub g: Coefficient,
    pub eps_start: f64,
    pub eps_min: f64,
    /// Clamp to the obstacle after every step on the final solve.
    pub project: bool,
    /// Discount rate, an extension: the problem as posed has none.
    pub rate: f64,
}

impl ObstacleProblem {
    pub fn new(spec: OperatorSpec, axes: Vec<Axis>, psi: Coefficient, g: Coefficient) -> Self {
        Self { spec, axes, psi, g, eps_start: 1e-1, eps_min: 1e-5, project: true, rate: 0.0 }
    }

    fn effective_spec(&self) -> OperatorSpec {
        let mut spec = self.spec.clone();
        if self.rate != 0.0 {
            let (c, r) = (spec.c.clone(), self.rate);
            spec.c = Coefficient::space_time(move |z| c.eval(z) - r);
        }
        spec
    }

    /// Epsilons halved from `eps_start` until at most `eps_min`.
    pub fn ladder(&self) -> Vec<f64> {
        let mut eps = vec![self.eps_start];
        while *eps.last().unwrap() > self.eps_min {
            let e = 0.5 * eps.last().unwrap();
            eps.push(e);
        }
        eps
    }
}

/// Spatial nodes on the Kolmogorov boundary for t > t0: the velocity faces
/// and the position faces with (v, -1) . N > 0, i.e. x = hi where v > 0 and
/// x = lo where v < 0.
pub fn kolmogorov_boundary(axes: &[Axis]) -> Vec<bool> {
    let d = axes.len() - 1;
    let n = d / 2;
    let spatial = GridField::zeros(axes[..d].to_vec());
    let shape = spatial.shape();
    (0..spatial.len())
        .map(|i| {
            let mi = spatial.multi_index(i);
            let c = spatial.coords(i);
            (0..n).any(|k| mi[k] == 0 || mi[k] + 1 == shape[k])
                || (0..n).any(|k| {
                    let j = mi[n + k];
                    (c[k] > 0.0 && j + 1 == shape[n + k]) || (c[k] < 0.0 && j == 0)
                })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ComplementarityReport {
    pub eps: Vec<f64>,
    /// sup |u_k - u_{k-1}| along the ladder.
    pub ladder_change: Vec<f64>,
    /// Largest decrease of a penalized solution when epsilon is halved.
    pub monotone_violation: f64,
    /// Data scale max(1, sup|g|, sup|max(psi, inf g)|).
    pub scale: f64,
    /// min(u - psi) over the grid.
    pub min_gap: f64,
    /// Largest |min(u - psi, -(K u - f))| over interior nodes and substeps,
    /// with the discrete operator of the scheme.
    pub complementarity: f64,
    /// Largest pointwise correction made by the projection.
    pub projection_correction: f64,
    /// Interior node updates where the penalty acted on the final solve.
    pub penalty_updates: usize,
    pub mechanism: String,
}

#[derive(Clone, Debug)]
pub struct ObstacleSolution {
    pub u: GridField,
    pub report: ComplementarityReport,
}

struct Tracker {
    penalty_updates: usize,
    projection: f64,
    complementarity: f64,
}

fn spatial_coords(axes: &[Axis]) -> Vec<Vec<f64>> {
    let d = axes.len() - 1;
    let g = GridField::zeros(axes[..d].to_vec());
    (0..g.len()).map(|i| g.coords(i)).collect()
}

fn penalized_solve(
    ob: &ObstacleProblem,
    spec: &OperatorSpec,
    eps: f64,
    project: bool,
    coords: &[Vec<f64>],
    interior: &[bool],
) -> Result<(GridField, Tracker)> {
    let mut tr = Tracker { penalty_updates: 0, projection: 0.0, complementarity: 0.0 };
    let static_psi: Option<Vec<f64>> = (!ob.psi.time_dependent()).then(|| {
        let mut z = vec![0.0; coords[0].len() + 1];
        coords
            .iter()
            .map(|c| {
                z[..c.len()].copy_from_slice(c);
                ob.psi.eval(&z)
            })
            .collect()
    });
    let mut z = vec![0.0; coords[0].len() + 1];
    let mut psi_t = vec![0.0; coords.len()];
    let mut hook = |t: f64, dt: f64, u: &mut [f64]| {
        let psi: &[f64] = match &static_psi {
            Some(p) => p,
            None => {
                for (i, c) in coords.iter().enumerate() {
                    z[..c.len()].copy_from_slice(c);
                    z[c.len()] = t;
                    psi_t[i] = ob.psi.eval(&z);
                }
                &psi_t
            }
        };
        let k = dt / eps;
        for i in 0..u.len() {
            if !interior[i] {
                continue;
            }
            let explicit = u[i];
            let mut v = explicit;
            if v < psi[i] {
                // implicit in the penalty: v = explicit + k (psi - v)
                v = (explicit + k * psi[i]) / (1.0 + k);
                tr.penalty_updates += 1;
            }
            if project && v < psi[i] {
                tr.projection = tr.projection.max(psi[i] - v);
                v = psi[i];
            }
            u[i] = v;
            // -(K u - f) = (u - explicit) / dt for this scheme
            let r = (v - psi[i]).min((v - explicit) / dt);
            tr.complementarity = tr.complementarity.max(r.abs());
        }
    };
    let u = solve_with_hook(spec, &ob.axes, &ob.g, &BoundaryCondition::InflowDirichlet(ob.g.clone()), None, &mut hook)?;
    Ok((u, tr))
}

fn sample(c: &Coefficient, axes: &[Axis]) -> GridField {
    GridField::from_fn(axes.to_vec(), |z| c.eval(z))
}

/// Runs the penalization ladder and a final solve at the smallest epsilon
/// (with projection when requested).
pub fn solve_obstacle(ob: &ObstacleProblem) -> Result<ObstacleSolution> {
    if !(ob.eps_start > 0.0 && ob.eps_min > 0.0 && ob.eps_min <= ob.eps_start) {
        return domain("need 0 < eps_min <= eps_start");
    }
    let spec = ob.effective_spec();
    spec.validate()?;
    let on_boundary = kolmogorov_boundary(&ob.axes);
    let interior: Vec<bool> = on_boundary.iter().map(|b| !b).collect();
    let psi = sample(&ob.psi, &ob.axes);
    let g = sample(&ob.g, &ob.axes);
    let slice = on_boundary.len();
    // an obstacle far below the data does not set the scale
    let floor = g.min();
    let scale = psi.values.iter().map(|p| p.max(floor).abs()).fold(g.max_abs(), f64::max).max(1.0);
    // psi <= g on the initial slice and on the lateral Kolmogorov boundary
    for i in 0..g.len() {
        let s = i % slice;
        let on = i < slice || on_boundary[s];
        if on && psi.values[i] > g.values[i] + 1e-12 * scale {
            let z = g.coords(i);
            return Err(Error::Precondition(format!("obstacle above the boundary data at {z:?}")));
        }
    }
    let coords = spatial_coords(&ob.axes);
    let eps = ob.ladder();
    let mut ladder_change = Vec::new();
    let mut monotone_violation: f64 = 0.0;
    let mut prev: Option<(GridField, Tracker)> = None;
    for &e in &eps {
        let (u, tr) = penalized_solve(ob, &spec, e, false, &coords, &interior)?;
        if let Some((p, _)) = &prev {
            let mut change: f64 = 0.0;
            for (a, b) in u.values.iter().zip(&p.values) {
                change = change.max((a - b).abs());
                monotone_violation = monotone_violation.max(b - a);
            }
            ladder_change.push(change);
        }
        prev = Some((u, tr));
    }
    let last_change = ladder_change.last().copied().unwrap_or(0.0);
    if last_change > 1e-3 * scale {
        return Err(Error::NoConvergence(format!(
            "penalization ladder did not settle: last changes {:?}",
            &ladder_change[ladder_change.len().saturating_sub(3)..]
        )));
    }
    let (u, tr) = if ob.project {
        penalized_solve(ob, &spec, *eps.last().unwrap(), true, &coords, &interior)?
    } else {
        prev.unwrap()
    };
    let min_gap = u.values.iter().zip(&psi.values).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min);
    let mechanism = match (ob.project, tr.projection > 0.0) {
        (true, true) => "penalty+projection",
        _ => "penalty",
    };
    Ok(ObstacleSolution {
        u,
        report: ComplementarityReport {
            eps,
            ladder_change,
            monotone_violation,
            scale,
            min_gap,
            complementarity: tr.complementarity,
            projection_correction: tr.projection,
            penalty_updates: tr.penalty_updates,
            mechanism: mechanism.to_string(),
        },
    })
}

/// Backward Euler in time for u_t = (a u_v)_v - f with u >= psi on a
/// velocity line, each step's complementarity problem solved by projected
/// SOR. End values stay at their initial values. `a_face[i]` sits at
/// v_i + h/2.
pub fn psor_obstacle_1d(
    v: &Axis,
    a_face: &[f64],
    f: &[f64],
    psi: &[f64],
    u0: &[f64],
    t_final: f64,
    steps: usize,
    omega: f64,
) -> Result<Vec<f64>> {
    let m = v.n;
    if a_face.len() + 1 != m || f.len() != m || psi.len() != m || u0.len() != m {
        return domain("psor: inconsistent lengths");
    }
    if !(omega > 0.0 && omega < 2.0) || steps == 0 {
        return domain("psor: need 0 < omega < 2 and at least one step");
    }
    let dt = t_final / steps as f64;
    let k = dt / (v.h() * v.h());
    let mut u = u0.to_vec();
    let mut rhs = vec![0.0; m];
    for step in 0..steps {
        for i in 1..m - 1 {
            rhs[i] = u[i] - dt * f[i];
        }
        let mut converged = false;
        for _ in 0..10_000 {
            let mut delta: f64 = 0.0;
            for i in 1..m - 1 {
                let diag = 1.0 + k * (a_face[i - 1] + a_face[i]);
                let gs = (rhs[i] + k * (a_face[i - 1] * u[i - 1] + a_face[i] * u[i + 1])) / diag;
                let next = (u[i] + omega * (gs - u[i])).max(psi[i]);
                delta = delta.max((next - u[i]).abs());
                u[i] = next;
            }
            if delta < 1e-14 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence(format!("projected SOR stalled at step {step}")));
        }
    }
    Ok(u)
}

/// Integrand 1/2 a |D_v u - J|^2 over the grid, after checking the
/// constraint div_v(a J) = f - Y u on interior nodes to relative `tol`.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    pub value: f64,
    pub constraint_residual: f64,
}

fn central(u: &GridField, i: usize, axis: usize, mi: &[usize], shape: &[usize], strides: &[usize]) -> f64 {
    let s = strides[axis];
    let h = u.spacing(axis);
    let j = mi[axis];
    if j == 0 {
        (u.values[i + s] - u.values[i]) / h
    } else if j + 1 == shape[axis] {
        (u.values[i] - u.values[i - s]) / h
    } else {
        (u.values[i + s] - u.values[i - s]) / (2.0 * h)
    }
}

/// Y u = v . D_x u - d_t u by central differences (one-sided at the edges).
fn transport(u: &GridField) -> GridField {
    let d = u.dim() - 1;
    let n = d / 2;
    let shape = u.shape();
    let strides = u.strides();
    let mut out = GridField::zeros(u.axes.clone());
    let mut c = vec![0.0; u.dim()];
    for i in 0..u.len() {
        let mi = u.multi_index(i);
        u.coords_into(i, &mut c);
        let mut y = -central(u, i, d, &mi, &shape, &strides);
        for k in 0..n {
            y += c[k] * central(u, i, n + k, &mi, &shape, &strides);
        }
        out.values[i] = y;
    }
    out
}

pub fn energy_functional(u: &GridField, flux: &[GridField], spec: &OperatorSpec, tol: f64) -> Result<EnergyReport> {
    let n = spec.n;
    if u.dim() != 2 * n + 1 || flux.len() != n || flux.iter().any(|j| j.shape() != u.shape()) {
        return domain("flux components must live on the grid of u");
    }
    let shape = u.shape();
    let strides = u.strides();
    let a = GridField::from_fn(u.axes.clone(), |z| spec.a.eval(z));
    let yu = transport(u);
    let mut resid: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let mut value = 0.0;
    let mut c = vec![0.0; u.dim()];
    let aj: Vec<GridField> = flux
        .iter()
        .map(|j| {
            let mut g = j.clone();
            g.values.iter_mut().zip(&a.values).for_each(|(v, a)| *v *= a);
            g
        })
        .collect();
    for i in 0..u.len() {
        let mi = u.multi_index(i);
        let mut w = 1.0;
        for (k, ax) in u.axes.iter().enumerate() {
            w *= ax.trapezoid_weight(mi[k]);
        }
        let mut e = 0.0;
        for k in 0..n {
            let diff = central(u, i, k, &mi, &shape, &strides) - flux[k].values[i];
            e += diff * diff;
        }
        value += w * 0.5 * a.values[i] * e;
        let inner = mi.iter().zip(&shape).all(|(&j, &s)| j > 0 && j + 1 < s);
        if inner {
            u.coords_into(i, &mut c);
            let target = spec.f.eval(&c) - yu.values[i];
            let div: f64 = (0..n).map(|k| central(&aj[k], i, k, &mi, &shape, &strides)).sum();
            resid = resid.max((div - target).abs());
            scale = scale.max(target.abs());
        }
    }
    let rel = if scale > 0.0 { resid / scale } else { resid };
    if rel > tol {
        return Err(Error::Constraint(format!("div_v(a J) = f - Y u violated: relative residual {rel:.3e} > {tol:.1e}")));
    }
    Ok(EnergyReport { value, constraint_residual: rel })
}

/// Discrete W norm for one velocity dimension:
/// (||u||^2 + ||d_v u||^2 + ||Y u||^2_{L^2 H^{-1}_v})^{1/2}.
pub fn w_norm(u: &GridField) -> Result<f64> {
    if u.dim() != 3 {
        return domain("w_norm needs a (v, x, t) grid");
    }
    let yu = transport(u);
    let (l2, dv) = l2_and_dv(u);
    Ok((l2 * l2 + dv * dv + hm1_lines(&yu).powi(2)).sqrt())
}

fn l2_and_dv(u: &GridField) -> (f64, f64) {
    let shape = u.shape();
    let strides = u.strides();
    let (mut l2, mut dv) = (0.0, 0.0);
    for i in 0..u.len() {
        let mi = u.multi_index(i);
        let w: f64 = u.axes.iter().enumerate().map(|(k, ax)| ax.trapezoid_weight(mi[k])).product();
        let g = central(u, i, 0, &mi, &shape, &strides);
        l2 += w * u.values[i] * u.values[i];
        dv += w * g * g;
    }
    (l2.sqrt(), dv.sqrt())
}

/// ||g||_{L^2(x, t; H^{-1}_v)} with zero velocity boundary values.
pub fn hm1_lines(g: &GridField) -> f64 {
    let shape = g.shape();
    let hv = g.spacing(0);
    let nv = shape[0];
    let mut total = 0.0;
    for line in 0..g.len() / nv {
        let vals = &g.values[line * nv..(line + 1) * nv];
        let nrm = dual_norm_hm1(vals, hv);
        let mut rem = line;
        let mut w = 1.0;
        for k in 1..shape.len() {
            w *= g.axes[k].trapezoid_weight(rem % shape[k]);
            rem /= shape[k];
        }
        total += w * nrm * nrm;
    }
    total.sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityRow {
    pub u_norm: f64,
    pub g_norm: f64,
    pub f_norm: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub fitted_constant: f64,
}

/// ||u||_W / (||g||_W + ||f||_{L^2 H^{-1}}) for each problem, with n = 1.
pub fn stability_bound_check(problems: &[ObstacleProblem]) -> Result<StabilityReport> {
    let mut rows = Vec::with_capacity(problems.len());
    for ob in problems {
        if ob.spec.n != 1 {
            return domain("stability check is implemented for one velocity dimension");
        }
        let sol = solve_obstacle(ob)?;
        let u_norm = w_norm(&sol.u)?;
        let g_norm = w_norm(&sample(&ob.g, &ob.axes))?;
        let f_norm = hm1_lines(&sample(&ob.spec.f, &ob.axes));
        let den = g_norm + f_norm;
        let ratio = if u_norm == 0.0 { 0.0 } else { u_norm / den };
        rows.push(StabilityRow { u_norm, g_norm, f_norm, ratio });
    }
    let fitted_constant = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(StabilityReport { rows, fitted_constant })
}

/// Random obstacle problems on (-1,1)^2 x (0, 1/4) with checkerboard
/// diffusion, smooth data and a constant source.
pub fn obstacle_family(seed: u64, runs: usize, nodes: [usize; 3]) -> Result<Vec<ObstacleProblem>> {
    (0..runs)
        .map(|i| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let amp = 0.5 + rng.random::<f64>();
            let tilt = 0.6 * rng.random::<f64>() - 0.3;
            let level = 0.2 + 0.3 * rng.random::<f64>();
            let f0 = 2.0 * rng.random::<f64>();
            let scale = 0.2 + 0.2 * rng.random::<f64>();
            let axes = vec![Axis::new(-1.0, 1.0, nodes[0])?, Axis::new(-1.0, 1.0, nodes[1])?, Axis::new(0.0, 0.25, nodes[2])?];
            let mut spec = OperatorSpec::with_diffusion(1, checkerboard(0.5, 2.0, scale, vec![0.0, 0.0]), 0.5, 2.0);
            spec.f = Coefficient::Constant(f0);
            let g = Coefficient::space(move |z| amp * (1.0 - z[0] * z[0]) * (1.0 + tilt * z[1]));
            let psi = Coefficient::space(move |z| amp * (level - z[0] * z[0]) * (1.0 + tilt * z[1]));
            Ok(ObstacleProblem::new(spec, axes, psi, g))
        })
        .collect()
}

/// The obstacle problem with the obstacle switched off (psi far below).
pub fn inactive(ob: &ObstacleProblem) -> ObstacleProblem {
    let mut out = ob.clone();
    out.psi = Coefficient::Constant(-1e6);
    out
}

/// The problem with obstacle taken from a sampled field.
pub fn with_grid_obstacle(ob: &ObstacleProblem, psi: GridField) -> ObstacleProblem {
    let mut out = ob.clone();
    out.psi = Coefficient::Grid(Arc::new(psi));
    out
}

/// Velocity-only toy on (-1,1) x (-1,1) x (0, 1/4): a = 1 + sin(pi v)/2,
/// f = 2, psi = 0.4 - v^2, g = (1 - v^2)/2. Data do not depend on x.
pub fn velocity_toy(nv: usize) -> Result<ObstacleProblem> {
    let axes = vec![Axis::new(-1.0, 1.0, nv)?, Axis::new(-1.0, 1.0, 21)?, Axis::new(0.0, 0.25, 2)?];
    let a = Coefficient::space(|z| 1.0 + 0.5 * (std::f64::consts::PI * z[0]).sin());
    let mut spec = OperatorSpec::with_diffusion(1, a, 0.5, 1.5);
    spec.f = Coefficient::Constant(2.0);
    Ok(ObstacleProblem::new(
        spec,
        axes,
        Coefficient::space(|z| 0.4 - z[0] * z[0]),
        Coefficient::space(|z| 0.5 * (1.0 - z[0] * z[0])),
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct ToyComparison {
    pub v: Vec<f64>,
    /// Penalized solution at t = 1/4 on the line x = 0.
    pub penalized: Vec<f64>,
    pub psor: Vec<f64>,
    pub psi: Vec<f64>,
    pub gap: f64,
    pub report: ComplementarityReport,
}

/// Penalized solve of the velocity toy against projected SOR with the same
/// number of time steps.
pub fn toy_comparison(nv: usize) -> Result<ToyComparison> {
    let ob = velocity_toy(nv)?;
    let sol = solve_obstacle(&ob)?;
    let v = ob.axes[0];
    let nodes = v.nodes();
    let a_face: Vec<f64> =
        (0..v.n - 1).map(|i| 1.0 + 0.5 * (std::f64::consts::PI * (v.node(i) + 0.5 * v.h())).sin()).collect();
    let psi: Vec<f64> = nodes.iter().map(|x| 0.4 - x * x).collect();
    let u0: Vec<f64> = nodes.iter().map(|x| 0.5 * (1.0 - x * x)).collect();
    let steps = sol.u.cfl.as_ref().map(|c| c.substeps).unwrap_or(1);
    let psor = psor_obstacle_1d(&v, &a_face, &vec![2.0; v.n], &psi, &u0, 0.25, steps, 1.5)?;
    let last = sol.u.last_axis_slice(1);
    let penalized: Vec<f64> = nodes
        .iter()
        .map(|x| last.interpolate(&[*x, 0.0]).ok_or_else(|| Error::Evaluation("toy line outside the grid".into())))
        .collect::<Result<_>>()?;
    let gap = penalized.iter().zip(&psor).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(ToyComparison { v: nodes, penalized, psor, psi, gap, report: sol.report })
}
