use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::FractionalParams;
use crate::error::{domain, Error, Result};
use crate::grid::{Axis, GridField};
use crate::quad::adaptive;

type Modulation = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// K(v, w) = c m(v, w) |v - w|^{-n-sp}. The modulation m is taken to
/// average to one far from the diagonal; exterior integrals beyond a
/// fixed distance use m = 1.
#[derive(Clone)]
pub struct Kernel {
    pub c: f64,
    modulation: Option<Modulation>,
}

impl std::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Kernel").field("c", &self.c).field("modulated", &self.modulation.is_some()).finish()
    }
}

impl Kernel {
    pub fn isotropic(c: f64) -> Self {
        Self { c, modulation: None }
    }

    pub fn modulated(c: f64, m: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { c, modulation: Some(Arc::new(m)) }
    }

    /// K(v, w) |v - w|^{n+sp}.
    pub fn factor(&self, v: &[f64], w: &[f64]) -> f64 {
        match &self.modulation {
            None => self.c,
            Some(m) => self.c * m(v, w),
        }
    }

    pub fn eval(&self, v: &[f64], w: &[f64], n: usize, sp: f64) -> f64 {
        let d = v.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        self.factor(v, w) * d.powf(-(n as f64) - sp)
    }
}

/// Serializable kernel description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Isotropic { c: f64 },
    /// c (1 + amplitude sin(frequency (v + 2 w))), not symmetric in (v, w).
    Oscillating { c: f64, amplitude: f64, frequency: f64 },
}

impl KernelSpec {
    pub fn build(&self) -> Kernel {
        match *self {
            KernelSpec::Isotropic { c } => Kernel::isotropic(c),
            KernelSpec::Oscillating { c, amplitude, frequency } => {
                Kernel::modulated(c, move |v, w| 1.0 + amplitude * (frequency * (v[0] + 2.0 * w[0])).sin())
            }
        }
    }
}

/// Values of u outside the velocity grid.
#[derive(Clone)]
pub enum Exterior {
    Zero,
    Constant(f64),
    /// u = g(v) outside the grid, integrated up to |v| = r_inf and taken as
    /// zero beyond.
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

#[inline]
fn phi(d: f64, q: f64) -> f64 {
    if q == 1.0 {
        d
    } else if d == 0.0 {
        0.0
    } else {
        d.abs().powf(q) * d.signum()
    }
}

/// Velocity part of the operator on one axis: kernel weights w_j K(v_i, v_j)
/// and exterior masses, with the diagonal cell (v_i - h/2, v_i + h/2) left out.
struct VelocityOperator {
    n: usize,
    w: Vec<f64>,
    /// |i - j| h to the power -1-sp.
    tab: Vec<f64>,
    c: f64,
    kappa: Option<Vec<f64>>,
    ext_mass: Vec<f64>,
    nodes: Vec<f64>,
}

/// Beyond this distance exterior integrals use the mean kernel level.
const FAR: f64 = 64.0;

impl VelocityOperator {
    fn new(fp: &FractionalParams, axis: &Axis, kernel: &Kernel) -> Result<Self> {
        fp.validate()?;
        if fp.n != 1 {
            return domain("the discrete operator is implemented for one velocity dimension");
        }
        let sp = fp.sp();
        let n = axis.n;
        let h = axis.h();
        let nodes = axis.nodes();
        let w: Vec<f64> = (0..n).map(|j| axis.trapezoid_weight(j)).collect();
        let tab: Vec<f64> = (0..n).map(|d| if d == 0 { 0.0 } else { (d as f64 * h).powf(-1.0 - sp) }).collect();
        let tol = 1e-12 * fp.big_lambda;
        let check = |k: f64, i: usize, j: usize| -> Result<()> {
            if !(k >= fp.lambda - tol && k <= fp.big_lambda + tol) {
                return Err(Error::Kernel(format!(
                    "K |v-w|^(n+sp) = {k:.6} at (v, w) = ({}, {}) leaves [{}, {}]",
                    nodes[i], nodes[j], fp.lambda, fp.big_lambda
                )));
            }
            Ok(())
        };
        let kappa = match &kernel.modulation {
            None => {
                check(kernel.c, 0, n.min(2) - 1)?;
                None
            }
            Some(_) => {
                if n > 4096 {
                    return domain("modulated kernels are limited to 4096 velocity nodes");
                }
                let mut k = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            let f = kernel.factor(&[nodes[i]], &[nodes[j]]);
                            check(f, i, j)?;
                            k[i * n + j] = f;
                        }
                    }
                }
                Some(k)
            }
        };
        let ext_mass = nodes
            .iter()
            .map(|&v| {
                let f = |w: f64| kernel.factor(&[v], &[w]);
                let left = exterior_integral(&|d| f(v - d), (v - axis.lo).max(0.5 * h), kernel.c, sp)?;
                let right = exterior_integral(&|d| f(v + d), (axis.hi - v).max(0.5 * h), kernel.c, sp)?;
                Ok(left + right)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self { n, w, tab, c: kernel.c, kappa, ext_mass, nodes })
    }

    #[inline]
    fn k(&self, i: usize, j: usize) -> f64 {
        let d = i.abs_diff(j);
        match &self.kappa {
            None => self.c * self.tab[d],
            Some(k) => k[i * self.n + j] * self.tab[d],
        }
    }

    /// L_K u on one velocity line with zero exterior.
    fn apply(&self, u: &[f64], q: f64, out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let ui = u[i];
            let mut acc = self.ext_mass[i] * phi(ui, q);
            for j in 0..n {
                if j != i {
                    acc += self.w[j] * phi(ui - u[j], q) * self.k(i, j);
                }
            }
            out[i] = acc;
        }
    }

    /// Power iteration for the norm of the operator linearized at u, with
    /// difference weights |d|^{p-2} floored at `eta` when p < 2.
    fn linear_norm(&self, u: &[f64], q: f64, eta: f64) -> (f64, f64) {
        let n = self.n;
        let wgt = |d: f64| if q == 1.0 { 1.0 } else { q * d.abs().max(eta).powf(q - 1.0) };
        let mut a = vec![0.0; n * n];
        let mut diag: f64 = 0.0;
        for i in 0..n {
            let mut dsum = self.ext_mass[i] * wgt(u[i]);
            for j in 0..n {
                if j != i {
                    let c = self.w[j] * self.k(i, j) * wgt(u[i] - u[j]);
                    a[i * n + j] = -c;
                    dsum += c;
                }
            }
            a[i * n + i] = dsum;
            diag = diag.max(dsum);
        }
        let mut x: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let mut y = vec![0.0; n];
        let mut rho = 0.0;
        for _ in 0..60 {
            for i in 0..n {
                y[i] = (0..n).map(|j| a[i * n + j] * x[j]).sum();
            }
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if ny == 0.0 {
                break;
            }
            rho = ny / nx;
            x.iter_mut().zip(&y).for_each(|(a, b)| *a = b / ny);
        }
        (rho, diag)
    }
}

/// int_{d0}^{inf} f(d) d^{-1-sp} dd, numerically up to d0 + FAR and with the
/// mean level `c` beyond.
fn exterior_integral(f: &dyn Fn(f64) -> f64, d0: f64, c: f64, sp: f64) -> Result<f64> {
    let end = d0 + FAR;
    let near = adaptive(|y: f64| f(y.exp()) * (-sp * y).exp(), d0.ln(), end.ln(), 1e-13, 1e-11)?;
    Ok(near + c * end.powf(-sp) / sp)
}

/// Discrete fractional p-Laplacian in velocity,
/// sum_{j != i} w_j |u_i - u_j|^{p-2} (u_i - u_j) K(v_i, v_j) with trapezoid
/// weights, plus the exterior contribution.
pub fn frac_p_laplacian(fp: &FractionalParams, axis: &Axis, u: &[f64], kernel: &Kernel, exterior: &Exterior) -> Result<Vec<f64>> {
    if u.len() != axis.n {
        return domain("field length does not match the velocity axis");
    }
    if u.iter().any(|v| !v.is_finite()) {
        return domain("field has non-finite values");
    }
    let op = VelocityOperator::new(fp, axis, kernel)?;
    let q = fp.p - 1.0;
    let mut out = vec![0.0; axis.n];
    match exterior {
        Exterior::Zero => op.apply(u, q, &mut out),
        Exterior::Constant(c) => {
            let shifted: Vec<f64> = u.iter().map(|v| v - c).collect();
            op.apply(&shifted, q, &mut out);
        }
        Exterior::Function(g) => {
            let ext = VelocityOperator { ext_mass: vec![0.0; axis.n], ..op };
            ext.apply(u, q, &mut out);
            let sp = fp.sp();
            let h = axis.h();
            let big = fp.r_inf.max(axis.hi.abs()).max(axis.lo.abs());
            for (i, &v) in ext.nodes.iter().enumerate() {
                let ui = u[i];
                let f = |w: f64| phi(ui - g(w), q) * kernel.factor(&[v], &[w]) * (v - w).abs().powf(-1.0 - sp);
                let lo_edge = axis.lo.min(v - 0.5 * h);
                let hi_edge = axis.hi.max(v + 0.5 * h);
                let mut acc = 0.0;
                if -big < lo_edge {
                    acc += adaptive(&f, -big, lo_edge, 1e-13, 1e-10)?;
                }
                if hi_edge < big {
                    acc += adaptive(&f, hi_edge, big, 1e-13, 1e-10)?;
                }
                let far = kernel.c * phi(ui, q) / sp;
                acc += far * ((v + big).powf(-sp) + (big - v).powf(-sp));
                out[i] += acc;
            }
        }
    }
    Ok(out)
}

/// Half the discrete second moment sum_j w_j K(v_i, v_j) (v_j - v_i)^2 / 2,
/// the diffusivity a local operator a d_vv would need to match the scheme
/// on quadratics at node i.
pub fn local_diffusivity(fp: &FractionalParams, axis: &Axis, kernel: &Kernel, node: usize) -> Result<f64> {
    let op = VelocityOperator::new(fp, axis, kernel)?;
    if node >= axis.n {
        return domain("node outside the axis");
    }
    Ok(0.5
        * (0..axis.n)
            .filter(|&j| j != node)
            .map(|j| op.w[j] * op.k(node, j) * (op.nodes[j] - op.nodes[node]).powi(2))
            .sum::<f64>())
}

/// Source f(z, u) at z = (v, x, t).
pub type Source = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// Per-interval stability bookkeeping of an explicit nonlocal march.
#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    /// Power-iteration estimates of the linearized velocity operator norm.
    pub operator_norm: Vec<f64>,
    pub dt_bound: Vec<f64>,
    pub dt: Vec<f64>,
    pub substeps: Vec<usize>,
    /// min over intervals of dt / h_v^{sp}.
    pub c_ratio: f64,
    pub eta: f64,
}

#[derive(Clone, Debug)]
pub struct Evolution {
    pub u: GridField,
    pub record: StepRecord,
}

/// Explicit march of d_t u + v d_x u + L_K(u) = f on a (v, x) grid with zero
/// exterior values in v and zero inflow in x. Output on `nt` equispaced
/// times in [0, t_final]. The step is re-estimated on every output interval;
/// a requested `dt` above the bound is refused.
pub fn evolve_nonlocal(
    fp: &FractionalParams,
    kernel: &Kernel,
    u0: &GridField,
    t_final: f64,
    nt: usize,
    dt: Option<f64>,
    f: &Source,
) -> Result<Evolution> {
    if u0.dim() != 2 {
        return domain("initial data must live on a (v, x) grid");
    }
    let vax = u0.axes[0];
    let xax = u0.axes[1];
    let tax = Axis::new(0.0, t_final, nt)?;
    let op = VelocityOperator::new(fp, &vax, kernel)?;
    let q = fp.p - 1.0;
    let (nv, nx) = (vax.n, xax.n);
    let hx = xax.h();
    let hv = vax.h();
    let vmax = vax.lo.abs().max(vax.hi.abs());
    let eta = if fp.p < 2.0 { 1e-3 * u0.max_abs().max(1.0) } else { 0.0 };
    let mut u = u0.values.clone();
    let inflow = |i: usize, k: usize| {
        let v = op.nodes[i];
        (v > 0.0 && k == 0) || (v < 0.0 && k + 1 == nx)
    };
    for k in 0..nx {
        for i in 0..nv {
            if inflow(i, k) {
                u[k * nv + i] = 0.0;
            }
        }
    }
    let mut out = GridField::zeros(vec![vax, xax, tax]);
    out.values[..nv * nx].copy_from_slice(&u);
    let mut record = StepRecord {
        operator_norm: Vec::new(),
        dt_bound: Vec::new(),
        dt: Vec::new(),
        substeps: Vec::new(),
        c_ratio: f64::INFINITY,
        eta,
    };
    let mut lu = vec![0.0; nv];
    let mut next = u.clone();
    let mut z = [0.0; 3];
    let mut step = 0usize;
    for interval in 0..nt - 1 {
        let (t0, t1) = (tax.node(interval), tax.node(interval + 1));
        let mut rho: f64 = 0.0;
        for k in 0..nx {
            let (r, d) = op.linear_norm(&u[k * nv..(k + 1) * nv], q, eta);
            rho = rho.max(r.max(d));
        }
        let bound = 0.9 / (rho + vmax / hx);
        let h = match dt {
            Some(d) if d > bound => return Err(Error::Cfl { dt: d, suggested: bound }),
            Some(d) if d > 0.0 => d,
            Some(d) => return domain(format!("time step {d} must be positive")),
            None => bound,
        };
        let m = ((t1 - t0) / h).ceil().max(1.0) as usize;
        let h = (t1 - t0) / m as f64;
        record.operator_norm.push(rho);
        record.dt_bound.push(bound);
        record.dt.push(h);
        record.substeps.push(m);
        record.c_ratio = record.c_ratio.min(h / hv.powf(fp.sp()));
        for sub in 0..m {
            let t = t0 + sub as f64 * h;
            let before = u.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            for k in 0..nx {
                let line = &u[k * nv..(k + 1) * nv];
                op.apply(line, q, &mut lu);
                z[1] = xax.node(k);
                z[2] = t;
                for i in 0..nv {
                    let idx = k * nv + i;
                    if inflow(i, k) {
                        next[idx] = 0.0;
                        continue;
                    }
                    let v = op.nodes[i];
                    z[0] = v;
                    let ux = if v > 0.0 {
                        (u[idx] - u[idx - nv]) / hx
                    } else if v < 0.0 {
                        (u[idx + nv] - u[idx]) / hx
                    } else {
                        0.0
                    };
                    next[idx] = u[idx] + h * (f(&z, u[idx]) - v * ux - lu[i]);
                }
            }
            std::mem::swap(&mut u, &mut next);
            step += 1;
            let after = u.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if !after.is_finite() || after > 10.0 * before.max(1.0) {
                return Err(Error::Numerical { step, reason: format!("sup |u| grew from {before:e} to {after:e} in one step") });
            }
        }
        out.values[(interval + 1) * nv * nx..(interval + 2) * nv * nx].copy_from_slice(&u);
    }
    Ok(Evolution { u: out, record })
}
