use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::FractionalParams;
use crate::error::{domain, Error, Result};
use crate::quad::{adaptive, GaussLegendre};

/// What is known about u for large |v|; the tail integral is improper.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Decay {
    /// u(v, x, t) = 0 for |v| > radius.
    CompactSupport { radius: f64 },
    /// |u(v, x, t)| <= bound |v|^{-beta} for |v| >= r_inf.
    Power { beta: f64, bound: f64 },
    Undeclared,
}

#[derive(Clone, Debug, Serialize)]
pub struct TailReport {
    pub value: f64,
    /// Value with the truncation remainder bound added to the integral.
    pub value_upper: f64,
    /// r^{sp}.
    pub scale_factor: f64,
    /// Averaged (or supremal) velocity integral before scaling.
    pub integral: f64,
    pub remainder: f64,
    pub outer_radius: f64,
    pub samples: usize,
    pub kind: &'static str,
    pub r: f64,
    pub s: f64,
    pub p: f64,
    pub delta: f64,
    pub r_inf: f64,
    pub decay: Decay,
}

/// Kinetic nonlocal tail
/// (r^{sp} avg_{U_{2r}} int_{|v-v0|>r} |u|^{p-1} |v-v0|^{-n-sp} dv)^{1/(p-1)}.
/// `u` takes the full point (v, x, t).
pub fn tail(fp: &FractionalParams, u: &dyn Fn(&[f64]) -> f64, decay: &Decay, z0: &[f64], r: f64) -> Result<TailReport> {
    tail_impl(fp, u, decay, z0, r, &[], false)
}

/// As `tail` with the average over U_{2r} replaced by a supremum over the
/// same sample points.
pub fn tail_sup(fp: &FractionalParams, u: &dyn Fn(&[f64]) -> f64, decay: &Decay, z0: &[f64], r: f64) -> Result<TailReport> {
    tail_impl(fp, u, decay, z0, r, &[], true)
}

pub(crate) fn tail_impl(
    fp: &FractionalParams,
    u: &dyn Fn(&[f64]) -> f64,
    decay: &Decay,
    z0: &[f64],
    r: f64,
    breaks: &[f64],
    sup: bool,
) -> Result<TailReport> {
    fp.validate()?;
    let n = fp.n;
    let sp = fp.sp();
    let q = fp.p - 1.0;
    if z0.len() != 2 * n + 1 {
        return domain("tail centre has the wrong dimension");
    }
    if !(r > 0.0 && r.is_finite()) {
        return domain(format!("tail radius {r} must be positive"));
    }
    if n > 3 {
        return domain("tails are implemented for n <= 3");
    }
    let v0 = &z0[..n];
    let v0n = v0.iter().map(|a| a * a).sum::<f64>().sqrt();
    let (outer, remainder_fn): (f64, Box<dyn Fn() -> f64>) = match *decay {
        Decay::Undeclared => {
            return Err(Error::Refused(
                "tail of a field with undeclared decay and unbounded support is not defined".into(),
            ))
        }
        Decay::CompactSupport { radius } => {
            if !(radius >= 0.0) {
                return domain("support radius must be nonnegative");
            }
            (radius + v0n, Box::new(|| 0.0))
        }
        Decay::Power { beta, bound } => {
            if !(beta * q > sp) {
                return domain(format!("decay exponent beta = {beta} needs beta (p-1) > sp"));
            }
            let big = fp.r_inf;
            if big < 2.0 * v0n || big <= r {
                return domain(format!("truncation radius {big} must exceed r and 2|v0|"));
            }
            let sphere = 2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0);
            let e = beta * q + sp;
            (big, Box::new(move || bound.powf(q) * sphere * 2f64.powf(beta * q) * big.powf(-e) / e))
        }
    };
    let remainder = remainder_fn();
    // support inside the excluded ball: nothing to integrate
    let outer = outer.max(r);
    let (pts, weights) = sample_u(fp, z0, 2.0 * r);
    let mut z = z0.to_vec();
    let dirs = directions(n);
    let mut radii: Vec<f64> = breaks.iter().copied().filter(|&b| b > r && b < outer).collect();
    radii.push(r);
    radii.push(outer);
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let mut integrals = Vec::with_capacity(pts.len());
    for xt in &pts {
        z[n..].copy_from_slice(xt);
        let mut total = 0.0;
        for w in radii.windows(2) {
            // rho = e^y turns rho^{-1-sp} d rho into e^{-sp y} dy
            let g = |y: f64| {
                let rho = y.exp();
                let mut zz = z.clone();
                let mut shell = 0.0;
                for (dir, wt) in &dirs {
                    for k in 0..n {
                        zz[k] = v0[k] + rho * dir[k];
                    }
                    shell += wt * u(&zz).abs().powf(q);
                }
                shell * (-sp * y).exp()
            };
            total += adaptive(g, w[0].ln(), w[1].ln(), 1e-13, 1e-11)?;
        }
        integrals.push(total);
    }
    let integral = if sup {
        integrals.iter().copied().fold(0.0, f64::max)
    } else {
        let wsum: f64 = weights.iter().sum();
        integrals.iter().zip(&weights).map(|(i, w)| i * w).sum::<f64>() / wsum
    };
    let scale_factor = r.powf(sp);
    Ok(TailReport {
        value: (scale_factor * integral).powf(1.0 / q),
        value_upper: (scale_factor * (integral + remainder)).powf(1.0 / q),
        scale_factor,
        integral,
        remainder,
        outer_radius: outer,
        samples: pts.len(),
        kind: if sup { "sup" } else { "average" },
        r,
        s: fp.s,
        p: fp.p,
        delta: fp.delta,
        r_inf: fp.r_inf,
        decay: decay.clone(),
    })
}

/// Gauss-Legendre points of U_rho(x0, t0) = B_{rho^{1+sp}}(x0) x (t0 - rho^{sp}, t0).
fn sample_u(fp: &FractionalParams, z0: &[f64], rho: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = fp.n;
    let sp = fp.sp();
    let rx = rho.powf(1.0 + sp);
    let t0 = z0[2 * n];
    let rule = GaussLegendre::new(6);
    let xs: Vec<(f64, f64)> = rule.mapped(-rx, rx).collect();
    let ts: Vec<(f64, f64)> = rule.mapped(t0 - rho.powf(sp), t0).collect();
    let mut pts = Vec::new();
    let mut weights = Vec::new();
    let total = xs.len().pow(n as u32);
    for flat in 0..total {
        let mut rem = flat;
        let mut x = vec![0.0; n];
        let mut w = 1.0;
        for xk in x.iter_mut() {
            let (node, wt) = xs[rem % xs.len()];
            rem /= xs.len();
            *xk = node;
            w *= wt;
        }
        if x.iter().map(|a| a * a).sum::<f64>() >= rx * rx {
            continue;
        }
        for &(t, wt) in &ts {
            let mut pt: Vec<f64> = x.iter().zip(&z0[n..2 * n]).map(|(a, b)| a + b).collect();
            pt.push(t);
            pts.push(pt);
            weights.push(w * wt);
        }
    }
    (pts, weights)
}

/// Quadrature on the unit sphere S^{n-1}, weights summing to its area.
fn directions(n: usize) -> Vec<(Vec<f64>, f64)> {
    match n {
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        2 => {
            let m = 64;
            (0..m)
                .map(|k| {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                    (vec![a.cos(), a.sin()], 2.0 * std::f64::consts::PI / m as f64)
                })
                .collect()
        }
        _ => {
            let m = 32;
            let rule = GaussLegendre::new(16);
            let mut out = Vec::new();
            for (c, w) in rule.mapped(-1.0, 1.0) {
                let sn = (1.0 - c * c).sqrt();
                for k in 0..m {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                    out.push((vec![sn * a.cos(), sn * a.sin(), c], w * 2.0 * std::f64::consts::PI / m as f64));
                }
            }
            out
        }
    }
}
