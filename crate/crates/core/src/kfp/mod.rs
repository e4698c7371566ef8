//! Explicit finite differences for kinetic Kolmogorov equations
//!
//! ```text
//! d_v . (a d_v u) + v . D_x u - d_t u + b . d_v u + c u = f
//! ```
//!
//! on a tensor grid with axes (v_1..v_n, x_1..x_n, t), together with the
//! numerical checks of the regularity inequalities built on top of it.

mod battery;
mod checks;
mod sobolev;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fundsol::GammaEvaluator;
use crate::grid::{Axis, BoundaryKind, CflRecord, GridField};
use crate::group::{GroupPoint, LieStructure};

pub use battery::{
    battery_member_solution, cutoff_for_poincare, run_battery, spearman, trend_study, BatteryConfig, BatteryReport, BatteryRow, CheckSummary, RunData, TrendReport,
};
pub use checks::{
    dual_norm_hm1, harnack_chain, harnack_ratio, holder_estimate, mass_history, moments, moser_check,
    weak_harnack_ratio, weak_poincare_check, BallBox, ChainLink, ChainReport, HarnackGeometry, HarnackReport,
    HolderReport, MomentsReport, MoserReport, PoincareReport,
};
pub use sobolev::{
    separable_field, separable_oracle, sobolev_embedding_check, sobolev_exponent_range, SeparableField,
    SobolevReport,
};

pub type FieldFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A coefficient of the operator. Closures and grids receive space-time
/// coordinates (v, x, t) with time last.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    /// Depends on the spatial coordinates only.
    Space(FieldFn),
    SpaceTime(FieldFn),
    /// Multilinear interpolation of samples on a spatial or space-time grid.
    Grid(Arc<GridField>),
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Space(_) => write!(f, "Space(<fn>)"),
            Coefficient::SpaceTime(_) => write!(f, "SpaceTime(<fn>)"),
            Coefficient::Grid(g) => write!(f, "Grid({:?})", g.shape()),
        }
    }
}

impl Coefficient {
    pub fn space(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Space(Arc::new(f))
    }

    pub fn space_time(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::SpaceTime(Arc::new(f))
    }

    pub fn zero() -> Self {
        Coefficient::Constant(0.0)
    }

    /// Value at the space-time point `z` (time last). Grid samples outside
    /// their box evaluate to NaN.
    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Space(f) => f(&z[..z.len() - 1]),
            Coefficient::SpaceTime(f) => f(z),
            Coefficient::Grid(g) => {
                let p = if g.dim() + 1 == z.len() { &z[..z.len() - 1] } else { z };
                g.interpolate(p).unwrap_or(f64::NAN)
            }
        }
    }

    pub fn time_dependent(&self) -> bool {
        match self {
            Coefficient::Constant(_) | Coefficient::Space(_) => false,
            Coefficient::SpaceTime(_) => true,
            // space-time grids carry 2n + 1 axes
            Coefficient::Grid(g) => g.dim() % 2 == 1,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Constant(c) if *c == 0.0)
    }

    /// L^q norm over a set given by quadrature points (z, w).
    pub fn lq_norm(&self, pts: &[(Vec<f64>, f64)], q: f64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        pts.iter().map(|(z, w)| w * self.eval(z).abs().powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// Spatial checkerboard with cells of side `scale`, shifted by `phase`,
/// taking `lambda` on even cells and `big_lambda` on odd ones.
pub fn checkerboard(lambda: f64, big_lambda: f64, scale: f64, phase: Vec<f64>) -> Coefficient {
    Coefficient::space(move |x| {
        let parity: i64 = x.iter().zip(&phase).map(|(xi, p)| ((xi - p) / scale).floor() as i64).sum();
        if parity.rem_euclid(2) == 0 {
            lambda
        } else {
            big_lambda
        }
    })
}

/// Discretization of v . D_x u.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    /// First-order upwind; the scheme is monotone.
    #[default]
    Upwind,
    /// Upwind flux with a van Leer limited slope correction, advanced by
    /// Heun's method: second order where u is smooth, total variation
    /// diminishing along x. Also used for b . d_v u where central
    /// differences would not be monotone.
    Limited,
}

/// Data of a kinetic operator in n velocity dimensions.
#[derive(Clone, Debug)]
pub struct OperatorSpec {
    pub n: usize,
    pub a: Coefficient,
    pub b: Vec<Coefficient>,
    pub c: Coefficient,
    pub f: Coefficient,
    pub q: f64,
    pub lambda: f64,
    pub big_lambda: f64,
    pub transport: Transport,
}

impl OperatorSpec {
    /// a = const, no lower order terms, q = Q + 2.
    pub fn constant(n: usize, a: f64) -> Self {
        Self {
            n,
            a: Coefficient::Constant(a),
            b: vec![Coefficient::zero(); n],
            c: Coefficient::zero(),
            f: Coefficient::zero(),
            q: (4 * n + 2) as f64,
            lambda: a,
            big_lambda: a,
            transport: Transport::Upwind,
        }
    }

    /// Coefficient a with ellipticity bounds [lambda, big_lambda].
    pub fn with_diffusion(n: usize, a: Coefficient, lambda: f64, big_lambda: f64) -> Self {
        Self { a, lambda, big_lambda, ..Self::constant(n, lambda) }
    }

    pub fn lie(&self) -> LieStructure {
        LieStructure::kinetic(self.n)
    }

    /// Homogeneous dimension Q = 4n.
    pub fn q_hom(&self) -> usize {
        4 * self.n
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return domain("velocity dimension must be positive");
        }
        if !(self.lambda > 0.0) || !(self.lambda <= self.big_lambda) || !self.big_lambda.is_finite() {
            return domain(format!(
                "ellipticity bounds need 0 < lambda <= Lambda, got {} and {}",
                self.lambda, self.big_lambda
            ));
        }
        let qmin = (self.q_hom() + 2) as f64 / 2.0;
        if !(self.q > qmin) {
            return Err(Error::Exponent(format!("q = {} must exceed (Q+2)/2 = {qmin}", self.q)));
        }
        if self.b.len() != self.n {
            return domain(format!("b needs {} components, got {}", self.n, self.b.len()));
        }
        if let Coefficient::Constant(a) = self.a {
            self.check_a(a)?;
        }
        Ok(())
    }

    fn check_a(&self, a: f64) -> Result<()> {
        let tol = 1e-12 * self.big_lambda;
        if !(a >= self.lambda - tol && a <= self.big_lambda + tol) {
            return domain(format!("sampled a = {a} outside [{}, {}]", self.lambda, self.big_lambda));
        }
        Ok(())
    }
}

/// Boundary data, evaluated at space-time points.
#[derive(Clone, Debug)]
pub enum BoundaryCondition {
    /// Data on every face.
    Dirichlet(Coefficient),
    /// Data on the velocity faces and on the inflow part of the position
    /// faces; outflow nodes are updated with one-sided differences.
    InflowDirichlet(Coefficient),
    /// Dirichlet data Γ(z, pole).
    GammaMatched { gamma: GammaEvaluator, pole: GroupPoint },
}

impl BoundaryCondition {
    fn value(&self, z: &[f64]) -> Result<f64> {
        match self {
            BoundaryCondition::Dirichlet(c) | BoundaryCondition::InflowDirichlet(c) => Ok(c.eval(z)),
            BoundaryCondition::GammaMatched { gamma, pole } => gamma.gamma(&GroupPoint::from_slice(z), pole),
        }
    }

    fn kind(&self) -> BoundaryKind {
        match self {
            BoundaryCondition::Dirichlet(_) => BoundaryKind::Dirichlet,
            BoundaryCondition::InflowDirichlet(_) => BoundaryKind::InflowDirichlet,
            BoundaryCondition::GammaMatched { .. } => BoundaryKind::GammaMatched,
        }
    }
}

/// Spatial grid bookkeeping shared by the stepper.
struct Mesh {
    n: usize,
    shape: Vec<usize>,
    strides: Vec<usize>,
    h: Vec<f64>,
    inv_h: Vec<f64>,
    inv_h2: Vec<f64>,
    coords: Vec<f64>,
    len: usize,
}

impl Mesh {
    fn new(n: usize, axes: &[Axis]) -> Self {
        let d = 2 * n;
        let shape: Vec<usize> = axes[..d].iter().map(|a| a.n).collect();
        let mut strides = vec![1; d];
        for k in 1..d {
            strides[k] = strides[k - 1] * shape[k - 1];
        }
        let len: usize = shape.iter().product();
        let nodes: Vec<Vec<f64>> = axes[..d].iter().map(|a| a.nodes()).collect();
        let mut coords = vec![0.0; len * d];
        for i in 0..len {
            let mut rem = i;
            for k in 0..d {
                coords[i * d + k] = nodes[k][rem % shape[k]];
                rem /= shape[k];
            }
        }
        let h: Vec<f64> = axes[..d].iter().map(|a| a.h()).collect();
        let inv_h = h.iter().map(|v| 1.0 / v).collect();
        let inv_h2 = h.iter().map(|v| 1.0 / (v * v)).collect();
        Self { n, shape, strides, h, inv_h, inv_h2, coords, len }
    }

    fn index(&self, i: usize, k: usize) -> usize {
        (i / self.strides[k]) % self.shape[k]
    }

    fn point(&self, i: usize, t: f64, out: &mut Vec<f64>) {
        let d = 2 * self.n;
        out.clear();
        out.extend_from_slice(&self.coords[i * d..(i + 1) * d]);
        out.push(t);
    }
}

/// Node roles: 0 interior, 1 prescribed, 2 outflow (one-sided update).
fn node_roles(mesh: &Mesh, inflow_only: bool) -> Vec<u8> {
    let n = mesh.n;
    let d = 2 * n;
    (0..mesh.len)
        .map(|i| {
            for k in 0..n {
                let j = mesh.index(i, k);
                if j == 0 || j + 1 == mesh.shape[k] {
                    return 1;
                }
            }
            let mut outflow = false;
            for k in 0..n {
                let j = mesh.index(i, n + k);
                let at_lo = j == 0;
                let at_hi = j + 1 == mesh.shape[n + k];
                if !(at_lo || at_hi) {
                    continue;
                }
                if !inflow_only {
                    return 1;
                }
                let v = mesh.coords[i * d + k];
                // characteristics move with velocity -v in x
                if (at_hi && v > 0.0) || (at_lo && v < 0.0) {
                    return 1;
                }
                outflow = true;
            }
            if outflow {
                2
            } else {
                0
            }
        })
        .collect()
}

struct Coeffs {
    /// a at (v_k + h_k/2), one array per velocity axis
    a_face: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<f64>,
    f: Vec<f64>,
}

impl Coeffs {
    fn new(n: usize, len: usize) -> Self {
        Self { a_face: vec![vec![0.0; len]; n], b: vec![vec![0.0; len]; n], c: vec![0.0; len], f: vec![0.0; len] }
    }

    fn refresh(&mut self, spec: &OperatorSpec, mesh: &Mesh, t: f64, first: bool) -> Result<()> {
        let n = mesh.n;
        let mut z = Vec::with_capacity(2 * n + 1);
        let fill = |coef: &Coefficient, out: &mut Vec<f64>, shift: Option<(usize, f64)>, z: &mut Vec<f64>| {
            if !(first || coef.time_dependent()) {
                return;
            }
            if let Coefficient::Constant(c) = coef {
                out.iter_mut().for_each(|v| *v = *c);
                return;
            }
            for i in 0..mesh.len {
                mesh.point(i, t, z);
                if let Some((k, dv)) = shift {
                    z[k] += dv;
                }
                out[i] = coef.eval(z);
            }
        };
        for k in 0..n {
            fill(&spec.a, &mut self.a_face[k], Some((k, 0.5 * mesh.h[k])), &mut z);
            fill(&spec.b[k], &mut self.b[k], None, &mut z);
        }
        fill(&spec.c, &mut self.c, None, &mut z);
        fill(&spec.f, &mut self.f, None, &mut z);
        if first || spec.a.time_dependent() {
            for k in 0..n {
                for (i, &a) in self.a_face[k].iter().enumerate() {
                    // the last face along axis k lies outside the grid
                    if mesh.index(i, k) + 1 < mesh.shape[k] {
                        spec.check_a(a)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Largest monotone explicit step.
    fn dt_monotone(&self, spec: &OperatorSpec, mesh: &Mesh) -> f64 {
        let n = mesh.n;
        let d = 2 * n;
        // the limited correction can double the transport increment
        let transport_weight = if spec.transport == Transport::Limited { 2.0 } else { 1.0 };
        let mut rate: f64 = 0.0;
        for i in 0..mesh.len {
            let mut r = 0.0;
            for k in 0..n {
                r += 2.0 * spec.big_lambda / (mesh.h[k] * mesh.h[k]);
                r += transport_weight * mesh.coords[i * d + k].abs() / mesh.h[n + k];
                r += transport_weight * self.b[k][i].abs() / mesh.h[k];
            }
            r += (-self.c[i]).max(0.0);
            rate = rate.max(r);
        }
        1.0 / rate
    }
}

/// Marches `initial` (evaluated at the first time node) forward to the
/// last time node of `axes`. Each time cell is split into equal substeps of
/// length <= `dt`; without `dt` the substep is 0.9 of the monotone bound.
pub fn solve(
    spec: &OperatorSpec,
    axes: &[Axis],
    initial: &Coefficient,
    boundary: &BoundaryCondition,
    dt: Option<f64>,
) -> Result<GridField> {
    solve_with_hook(spec, axes, initial, boundary, dt, &mut |_, _, _| {})
}

/// As [`solve`], calling `hook(t_new, dt, u)` after every explicit substep
/// and before the boundary nodes are reset. `u` is the spatial slice in grid
/// order.
pub fn solve_with_hook(
    spec: &OperatorSpec,
    axes: &[Axis],
    initial: &Coefficient,
    boundary: &BoundaryCondition,
    dt: Option<f64>,
    hook: &mut dyn FnMut(f64, f64, &mut [f64]),
) -> Result<GridField> {
    spec.validate()?;
    let n = spec.n;
    let d = 2 * n;
    if axes.len() != d + 1 {
        return domain(format!("kinetic grid needs {} axes, got {}", d + 1, axes.len()));
    }
    let lie = spec.lie();
    let report = lie.hypoellipticity_check(&nalgebra::DMatrix::identity(n, n))?;
    if !report.hypoelliptic {
        return Err(Error::Precondition("principal part is not hypoelliptic".into()));
    }
    if let BoundaryCondition::GammaMatched { pole, .. } = boundary {
        if pole.dim() != d {
            return domain("pole dimension does not match the grid");
        }
    }
    let mesh = Mesh::new(n, axes);
    let tax = axes[d];
    let roles = node_roles(&mesh, matches!(boundary, BoundaryCondition::InflowDirichlet(_)));
    let fixed: Vec<usize> = (0..mesh.len).filter(|&i| roles[i] == 1).collect();
    let active: Vec<(usize, u8)> = (0..mesh.len)
        .filter(|&i| roles[i] != 1)
        .map(|i| {
            let mut mask = 0u8;
            for k in 0..n {
                let j = mesh.index(i, n + k);
                if j + 1 < mesh.shape[n + k] {
                    mask |= 1 << (2 * k);
                }
                if j > 0 {
                    mask |= 1 << (2 * k + 1);
                }
            }
            (i, mask)
        })
        .collect();
    let lower = !(spec.b.iter().all(|b| b.is_zero()) && spec.c.is_zero() && spec.f.is_zero());

    let mut coeffs = Coeffs::new(n, mesh.len);
    coeffs.refresh(spec, &mesh, tax.lo, true)?;
    let dt_mon = coeffs.dt_monotone(spec, &mesh);
    let mut vmax: f64 = 0.0;
    for i in 0..mesh.len {
        for k in 0..n {
            vmax = vmax.max(mesh.coords[i * d + k].abs());
        }
    }
    let mut dt_ref = f64::INFINITY;
    for k in 0..n {
        dt_ref = dt_ref.min(mesh.h[k] * mesh.h[k] / (2.0 * spec.big_lambda));
        if vmax > 0.0 {
            dt_ref = dt_ref.min(mesh.h[n + k] / vmax);
        }
    }
    let ht = tax.h();
    let substeps = match dt {
        Some(dt) => {
            if !(dt > 0.0) {
                return domain(format!("time step must be positive, got {dt}"));
            }
            if dt > dt_mon * (1.0 + 1e-12) {
                return Err(Error::Cfl { dt, suggested: 0.9 * dt_mon });
            }
            (ht / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize
        }
        None => (ht / (0.9 * dt_mon)).ceil().max(1.0) as usize,
    };
    let step = ht / substeps as f64;

    let mut out = GridField::zeros(axes.to_vec());
    out.boundary = boundary.kind();
    let mut u = vec![0.0; mesh.len];
    let mut z = Vec::with_capacity(d + 1);
    for (i, ui) in u.iter_mut().enumerate() {
        mesh.point(i, tax.lo, &mut z);
        *ui = initial.eval(&z);
    }
    for &i in &fixed {
        mesh.point(i, tax.lo, &mut z);
        u[i] = boundary.value(&z)?;
    }
    if let Some(bad) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical { step: 0, reason: format!("non-finite initial or boundary value at node {bad}") });
    }
    out.values[..mesh.len].copy_from_slice(&u);

    let mut next = u.clone();
    let mut stage = if spec.transport == Transport::Limited { u.clone() } else { Vec::new() };
    let time_dependent = spec.a.time_dependent()
        || spec.b.iter().any(|b| b.time_dependent())
        || spec.c.time_dependent()
        || spec.f.time_dependent();
    let mut count = 0usize;
    for cell in 0..tax.n - 1 {
        let t_cell = tax.node(cell);
        for sub in 0..substeps {
            let t = t_cell + step * sub as f64;
            if count > 0 && time_dependent {
                coeffs.refresh(spec, &mesh, t, false)?;
                let now = coeffs.dt_monotone(spec, &mesh);
                if step > now * (1.0 + 1e-12) {
                    return Err(Error::Cfl { dt: step, suggested: 0.9 * now });
                }
            }
            count += 1;
            let t_new = if sub + 1 == substeps { tax.node(cell + 1) } else { t + step };
            if spec.transport == Transport::Limited {
                // Heun's method keeps the limited scheme second order in time
                for &(i, mask) in &active {
                    stage[i] = u[i] + step * rhs(&mesh, &coeffs, &u, i, mask, lower, spec.transport);
                }
                fill_fixed(&mesh, &fixed, boundary, t_new, &mut stage, count)?;
                if time_dependent {
                    coeffs.refresh(spec, &mesh, t_new, false)?;
                }
                for &(i, mask) in &active {
                    let r = rhs(&mesh, &coeffs, &stage, i, mask, lower, spec.transport);
                    next[i] = 0.5 * (u[i] + stage[i] + step * r);
                }
            } else if n == 1 && !lower {
                sweep_kinetic_1d(&mesh, &coeffs.a_face[0], &u, &mut next, &active, step);
            } else {
                for &(i, mask) in &active {
                    next[i] = u[i] + step * rhs(&mesh, &coeffs, &u, i, mask, lower, spec.transport);
                }
            }
            if let Some(&(i, _)) = active.iter().find(|&&(i, _)| !next[i].is_finite()) {
                return Err(Error::Numerical { step: count, reason: format!("non-finite value at node {i}") });
            }
            hook(t_new, step, &mut next);
            fill_fixed(&mesh, &fixed, boundary, t_new, &mut next, count)?;
            std::mem::swap(&mut u, &mut next);
        }
        let off = (cell + 1) * mesh.len;
        out.values[off..off + mesh.len].copy_from_slice(&u);
    }
    out.cfl = Some(CflRecord { dt: step, substeps, dt_monotone: dt_mon, dt_reference: dt_ref });
    Ok(out)
}

fn fill_fixed(mesh: &Mesh, fixed: &[usize], boundary: &BoundaryCondition, t: f64, vals: &mut [f64], step: usize) -> Result<()> {
    let mut z = Vec::with_capacity(2 * mesh.n + 1);
    for &i in fixed {
        mesh.point(i, t, &mut z);
        let v = boundary.value(&z)?;
        if !v.is_finite() {
            return Err(Error::Numerical { step, reason: format!("non-finite boundary value at node {i}") });
        }
        vals[i] = v;
    }
    Ok(())
}

/// Pure diffusion-transport update for one velocity dimension.
fn sweep_kinetic_1d(mesh: &Mesh, a: &[f64], u: &[f64], next: &mut [f64], active: &[(usize, u8)], step: f64) {
    let sv = 1;
    let sx = mesh.strides[1];
    let dv = step * mesh.inv_h2[0];
    let dx = step * mesh.inv_h[1];
    for &(i, mask) in active {
        let ui = u[i];
        let mut r = (a[i] * (u[i + sv] - ui) - a[i - sv] * (ui - u[i - sv])) * dv;
        let v = mesh.coords[2 * i];
        if v > 0.0 && mask & 1 == 1 {
            r += v * (u[i + sx] - ui) * dx;
        } else if v < 0.0 && mask & 2 == 2 {
            r += v * (ui - u[i - sx]) * dx;
        }
        next[i] = ui + r;
    }
}

/// Right-hand side of d_t u at node i; bit 2k of `xmask` marks a forward
/// neighbour along position axis k, bit 2k + 1 a backward one.
#[inline]
fn rhs(mesh: &Mesh, co: &Coeffs, u: &[f64], i: usize, xmask: u8, lower: bool, transport: Transport) -> f64 {
    let n = mesh.n;
    let d = 2 * n;
    let ui = u[i];
    let mut r = if lower { co.c[i] * ui - co.f[i] } else { 0.0 };
    for k in 0..n {
        let s = mesh.strides[k];
        let ap = co.a_face[k][i];
        let am = co.a_face[k][i - s];
        r += (ap * (u[i + s] - ui) - am * (ui - u[i - s])) * mesh.inv_h2[k];
        if lower {
            let b = co.b[k][i];
            // central where the cell Peclet number keeps the stencil monotone
            if b.abs() * mesh.h[k] <= 2.0 * ap.min(am) {
                r += 0.5 * b * (u[i + s] - u[i - s]) * mesh.inv_h[k];
            } else if transport == Transport::Limited {
                let (j, m) = (mesh.index(i, k), mesh.shape[k]);
                r += limited_transport(u, i, s, j, m, b) * mesh.inv_h[k];
            } else if b > 0.0 {
                r += b * (u[i + s] - ui) * mesh.inv_h[k];
            } else if b < 0.0 {
                r += b * (ui - u[i - s]) * mesh.inv_h[k];
            }
        }
        let v = mesh.coords[i * d + k];
        let sx = mesh.strides[n + k];
        if transport == Transport::Limited {
            let (j, m) = (mesh.index(i, n + k), mesh.shape[n + k]);
            r += limited_transport(u, i, sx, j, m, v) * mesh.inv_h[n + k];
        } else if v > 0.0 && xmask >> (2 * k) & 1 == 1 {
            r += v * (u[i + sx] - ui) * mesh.inv_h[n + k];
        } else if v < 0.0 && xmask >> (2 * k + 1) & 1 == 1 {
            r += v * (ui - u[i - sx]) * mesh.inv_h[n + k];
        }
    }
    r
}

/// h v D_x u as a difference of numerical fluxes for u_t + c u_x = 0 with
/// c = -v. `j` is the position index of node `i` on an axis of `m` nodes
/// and stride `s`.
fn limited_transport(u: &[f64], i: usize, s: usize, j: usize, m: usize, v: f64) -> f64 {
    let c = -v;
    if (c < 0.0 && j + 1 == m) || (c > 0.0 && j == 0) || c == 0.0 {
        return 0.0;
    }
    let w = 0.5 * c.abs();
    let lim = |d: f64, up: f64| if d * up > 0.0 { 2.0 * d * up / (d + up) } else { 0.0 };
    // flux through the face between position indices jl and jl + 1 (node l)
    let face = |l: usize, jl: usize| -> f64 {
        let d = u[l + s] - u[l];
        if c > 0.0 {
            let corr = if jl >= 1 { w * lim(d, u[l] - u[l - s]) } else { 0.0 };
            c * u[l] + corr
        } else {
            let corr = if jl + 2 < m { w * lim(d, u[l + 2 * s] - u[l + s]) } else { 0.0 };
            c * u[l + s] + corr
        }
    };
    let plus = if j + 1 < m { face(i, j) } else { c * u[i] };
    let minus = if j >= 1 { face(i - s, j - 1) } else { c * u[i] };
    minus - plus
}

/// Axes of the box {|v_k| <= rv, |x_k| <= rx, t0 <= t <= t1} with the given
/// node counts per velocity, position and time axis.
pub fn kinetic_axes(n: usize, rv: f64, rx: f64, t: (f64, f64), nodes: [usize; 3]) -> Result<Vec<Axis>> {
    let mut axes = Vec::with_capacity(2 * n + 1);
    for _ in 0..n {
        axes.push(Axis::new(-rv, rv, nodes[0])?);
    }
    for _ in 0..n {
        axes.push(Axis::new(-rx, rx, nodes[1])?);
    }
    axes.push(Axis::new(t.0, t.1, nodes[2])?);
    Ok(axes)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub h: Vec<f64>,
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
}

impl ConvergenceStudy {
    pub fn new(h: Vec<f64>, errors: Vec<f64>) -> Self {
        let orders = errors
            .windows(2)
            .zip(h.windows(2))
            .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            .collect();
        Self { h, errors, orders }
    }
}

/// Largest |u - exact| over the last time slice.
pub fn final_slice_error(u: &GridField, exact: impl Fn(&[f64]) -> f64) -> f64 {
    let last = u.axes.last().map(|a| a.n - 1).unwrap_or(0);
    let slice = u.last_axis_slice(last);
    let t = u.axes.last().map(|a| a.hi).unwrap_or(0.0);
    let mut z = Vec::new();
    let mut err: f64 = 0.0;
    for i in 0..slice.len() {
        z.clear();
        z.extend(slice.coords(i));
        z.push(t);
        err = err.max((slice.values[i] - exact(&z)).abs());
    }
    err
}
