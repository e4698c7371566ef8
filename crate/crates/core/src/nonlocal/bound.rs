use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::operator::{evolve_nonlocal, KernelSpec, Source};
use super::tail::{tail_impl, Decay};
use super::FractionalParams;
use crate::error::{domain, Error, Result};
use crate::grid::{Axis, GridField};

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub delta: f64,
    /// delta^{-k} max{avg, 1} + ||h||^{1/(p-1)}, the factor multiplying C.
    pub structure: f64,
    /// Smallest C making the estimate hold at this delta.
    pub c_needed: f64,
    /// Right-hand side at the fitted C.
    pub rhs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundednessReport {
    pub s: f64,
    pub p: f64,
    pub r: f64,
    pub z0: Vec<f64>,
    /// "Lp" for p >= 2, "L2/p" for p < 2.
    pub average_kind: &'static str,
    pub hs_attested: bool,
    pub lhs: f64,
    /// max{average, 1} as displayed in the estimate.
    pub average_term: f64,
    pub tail_sup: f64,
    pub h_term: f64,
    pub delta_exponent: f64,
    pub sweep: Vec<SweepPoint>,
    pub fitted_c: f64,
    /// Sweep delta minimizing the right-hand side at the fitted C.
    pub minimizer: f64,
    pub nodes_inner: usize,
    pub nodes_outer: usize,
}

impl BoundednessReport {
    /// Whether lhs <= C (delta^{-k} A + H) + delta Tail at every sweep delta.
    pub fn holds_with(&self, c: f64) -> bool {
        self.sweep
            .iter()
            .all(|pt| self.lhs <= c * pt.structure + pt.delta * self.tail_sup + 1e-12 * self.lhs.abs().max(1.0))
    }
}

/// Local boundedness estimate for a field u(v, x, t) on a grid with n = 1:
/// lhs = sup over Q_{r/2}(z0), right-hand side assembled for every delta in
/// `deltas`. Values outside the velocity grid are zero. For p < 2 the
/// caller must attest the approximation hypothesis.
pub fn boundedness_check(
    fp: &FractionalParams,
    u: &GridField,
    z0: &[f64],
    r: f64,
    deltas: &[f64],
    hs_attested: bool,
) -> Result<BoundednessReport> {
    fp.validate()?;
    if fp.n != 1 || u.dim() != 3 || z0.len() != 3 {
        return domain("boundedness check needs n = 1 and a (v, x, t) field");
    }
    if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
        return domain("delta sweep values must lie in (0, 1]");
    }
    if !(r > 0.0) {
        return domain("radius must be positive");
    }
    let p = fp.p;
    if p < 2.0 && !hs_attested {
        return Err(Error::Precondition("p < 2 needs the bounded approximating family to be attested".into()));
    }
    let sp = fp.sp();
    let (v0, x0, t0) = (z0[0], z0[1], z0[2]);
    let [va, xa, ta] = [u.axes[0], u.axes[1], u.axes[2]];
    let eps = 1e-12;
    let rx = r.powf(1.0 + sp);
    let rt = r.powf(sp);
    if v0 - r < va.lo - eps || v0 + r > va.hi + eps || x0 - rx < xa.lo - eps || x0 + rx > xa.hi + eps || t0 - rt < ta.lo - eps || t0 > ta.hi + eps {
        return Err(Error::Geometry(format!("cylinder of radius {r} at {z0:?} leaves the computational domain")));
    }
    let inside = |c: &[f64], rho: f64| {
        let tol = 1e-9;
        (c[0] - v0).abs() <= rho + tol
            && (c[1] - x0).abs() <= rho.powf(1.0 + sp) + tol
            && c[2] <= t0 + tol
            && c[2] >= t0 - rho.powf(sp) - tol
    };
    let mut c = vec![0.0; 3];
    let mut lhs = f64::NEG_INFINITY;
    let (mut acc, mut wsum) = (0.0, 0.0);
    let (mut n_in, mut n_out) = (0, 0);
    let expo = if p >= 2.0 { p } else { 2.0 / p };
    for i in 0..u.len() {
        u.coords_into(i, &mut c);
        if inside(&c, 0.5 * r) {
            lhs = lhs.max(u.values[i]);
            n_in += 1;
        }
        if inside(&c, r) {
            let mi = u.multi_index(i);
            let w: f64 = (0..3).map(|k| u.axes[k].trapezoid_weight(mi[k])).product();
            acc += w * u.values[i].max(0.0).powf(expo);
            wsum += w;
            n_out += 1;
        }
    }
    if n_in == 0 || wsum == 0.0 {
        return Err(Error::Resolution(format!("no grid nodes inside the cylinders of radius {r}")));
    }
    let avg = acc / wsum;
    let average_term = if p >= 2.0 { avg.powf(1.0 / p) } else { avg }.max(1.0);
    let positive = |z: &[f64]| {
        if z[0] < va.lo || z[0] > va.hi {
            0.0
        } else {
            u.interpolate(z).unwrap_or(0.0).max(0.0)
        }
    };
    let decay = Decay::CompactSupport { radius: va.lo.abs().max(va.hi.abs()) };
    let breaks: Vec<f64> = va.nodes().iter().map(|v| (v - v0).abs()).collect();
    let tail = tail_impl(fp, &positive, &decay, z0, 0.5 * r, &breaks, true)?.value;
    let h_term = fp.h_inf.powf(1.0 / (p - 1.0));
    let k = if p >= 2.0 { (p - 1.0) / (sp * p) } else { (p - 1.0) / sp };
    let mut sweep: Vec<SweepPoint> = deltas
        .iter()
        .map(|&d| {
            let structure = d.powf(-k) * average_term + h_term;
            SweepPoint { delta: d, structure, c_needed: (lhs - d * tail).max(0.0) / structure, rhs: 0.0 }
        })
        .collect();
    let fitted_c = sweep.iter().map(|s| s.c_needed).fold(0.0, f64::max);
    for pt in &mut sweep {
        pt.rhs = fitted_c * pt.structure + pt.delta * tail;
    }
    let minimizer = sweep.iter().min_by(|a, b| a.rhs.total_cmp(&b.rhs)).map(|s| s.delta).unwrap_or(1.0);
    Ok(BoundednessReport {
        s: fp.s,
        p,
        r,
        z0: z0.to_vec(),
        average_kind: if p >= 2.0 { "Lp" } else { "L2/p" },
        hs_attested,
        lhs,
        average_term,
        tail_sup: tail,
        h_term,
        delta_exponent: k,
        sweep,
        fitted_c,
        minimizer,
        nodes_inner: n_in,
        nodes_outer: n_out,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BatteryCombo {
    pub p: f64,
    pub s: f64,
    pub fitted_c: f64,
    pub violations: usize,
    pub runs: Vec<BoundednessReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BatteryReport {
    pub seed: u64,
    pub combos: Vec<BatteryCombo>,
    pub pass: bool,
}

pub const BATTERY_DELTAS: [f64; 6] = [1.0, 0.7, 0.5, 0.3, 0.2, 0.1];

/// Member `run` of the random battery: evolved data on
/// v in [-2, 2], x in [-1.5, 1.5], t in [0, 1.25], with an oscillating
/// nonsymmetric kernel in [1/2, 2], a Gaussian bump of random height and
/// position minus a smaller one, source h - c_o |u|^{gamma-2} u.
pub fn battery_member(p: f64, s: f64, seed: u64, run: usize, nodes: [usize; 3]) -> Result<(FractionalParams, GridField)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    let amp = 0.5 + 3.5 * rng.random::<f64>();
    let vc = rng.random::<f64>() - 0.5;
    let xc = 0.6 * rng.random::<f64>() - 0.3;
    let neg = rng.random::<f64>();
    let vd = 2.0 * rng.random::<f64>() - 1.0;
    let h0 = 0.5 * rng.random::<f64>();
    let gamma = 1.0 + 0.5 * (p - 1.0);
    let fp = FractionalParams {
        s,
        p,
        n: 1,
        lambda: 0.5,
        big_lambda: 2.0,
        c_o: 0.5,
        gamma,
        h_inf: h0,
        r_inf: 50.0,
        delta: 1.0,
    };
    let kernel = KernelSpec::Oscillating { c: 1.25, amplitude: 0.6, frequency: 1.0 }.build();
    let axes = vec![Axis::new(-2.0, 2.0, nodes[0])?, Axis::new(-1.5, 1.5, nodes[1])?];
    let u0 = GridField::from_fn(axes, |z| {
        amp * (-((z[0] - vc).powi(2)) / 0.18 - (z[1] - xc).powi(2) / 0.32).exp()
            - neg * (-((z[0] - vd).powi(2)) / 0.08 - z[1] * z[1] / 0.32).exp()
    });
    let c_o = fp.c_o;
    let f: Source = Arc::new(move |_, u: f64| {
        let g = if u == 0.0 { 0.0 } else { u.abs().powf(gamma - 2.0) * u };
        h0 - c_o * g
    });
    let ev = evolve_nonlocal(&fp, &kernel, &u0, 1.25, nodes[2], None, &f)?;
    Ok((fp, ev.u))
}

/// Boundedness estimate on `runs` battery members for each (p, s), at
/// z0 = (0, 0, 1.25) and r = 1. One constant per (p, s) is fitted as the
/// largest needed over the members and every member is then checked
/// against it over the delta sweep.
pub fn nonlocal_battery(seed: u64, runs: usize, combos: &[(f64, f64)], nodes: [usize; 3]) -> Result<BatteryReport> {
    let z0 = [0.0, 0.0, 1.25];
    let out: Vec<BatteryCombo> = combos
        .par_iter()
        .map(|&(p, s)| {
            let reports = (0..runs)
                .map(|run| {
                    let (fp, u) = battery_member(p, s, seed, run, nodes)?;
                    boundedness_check(&fp, &u, &z0, 1.0, &BATTERY_DELTAS, true)
                })
                .collect::<Result<Vec<_>>>()?;
            let fitted_c = reports.iter().map(|r| r.fitted_c).fold(0.0, f64::max);
            let violations = reports.iter().filter(|r| !r.holds_with(fitted_c) || !r.lhs.is_finite()).count();
            Ok(BatteryCombo { p, s, fitted_c, violations, runs: reports })
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = out.iter().all(|c| c.violations == 0 && c.fitted_c.is_finite());
    Ok(BatteryReport { seed, combos: out, pass })
}
