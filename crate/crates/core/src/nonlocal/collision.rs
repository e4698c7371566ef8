use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::GridField;

/// K(r, cos theta) = r^alpha b(cos theta) with
/// b = b0 |sin(theta/2)|^{-(n-1)-2s}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollisionKernelSpec {
    pub alpha: f64,
    pub s: f64,
    pub n: usize,
    #[serde(default = "one")]
    pub b0: f64,
}

fn one() -> f64 {
    1.0
}

/// Kernel value at relative speed `relspeed` and deviation angle `theta`
/// in (0, pi]; theta = 0 is the grazing singularity.
pub fn collision_kernel_eval(ck: &CollisionKernelSpec, relspeed: f64, theta: f64) -> Result<f64> {
    if !(ck.s > 0.0 && ck.s < 1.0) || ck.n == 0 || !(ck.alpha > -(ck.n as f64)) {
        return domain("collision kernel needs s in (0,1), n >= 1 and alpha > -n");
    }
    if !(relspeed >= 0.0) {
        return domain("relative speed must be nonnegative");
    }
    if theta == 0.0 {
        return Err(Error::Kernel("angular factor is singular at theta = 0".into()));
    }
    if !(theta > 0.0 && theta <= std::f64::consts::PI) {
        return domain(format!("deviation angle {theta} outside (0, pi]"));
    }
    let e = -((ck.n - 1) as f64) - 2.0 * ck.s;
    Ok(relspeed.powf(ck.alpha) * ck.b0 * (0.5 * theta).sin().abs().powf(e))
}

/// Post-collision velocities v' = (v+v*)/2 + |v-v*|/2 sigma,
/// v*' = (v+v*)/2 - |v-v*|/2 sigma for a unit vector sigma.
pub fn post_collision(v: &[f64], vs: &[f64], sigma: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if v.len() != vs.len() || v.len() != sigma.len() || v.is_empty() {
        return domain("velocities and sigma must share a positive dimension");
    }
    let sn = sigma.iter().map(|a| a * a).sum::<f64>().sqrt();
    if (sn - 1.0).abs() > 1e-12 {
        return domain(format!("sigma must be a unit vector, |sigma| = {sn}"));
    }
    let g = v.iter().zip(vs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let mid: Vec<f64> = v.iter().zip(vs).map(|(a, b)| 0.5 * (a + b)).collect();
    let vp = mid.iter().zip(sigma).map(|(m, s)| m + 0.5 * g * s).collect();
    let vsp = mid.iter().zip(sigma).map(|(m, s)| m - 0.5 * g * s).collect();
    Ok((vp, vsp))
}

/// Deviation angle theta with cos theta = sigma . (v - v*) / |v - v*|.
pub fn deviation_angle(v: &[f64], vs: &[f64], sigma: &[f64]) -> Result<f64> {
    let d: Vec<f64> = v.iter().zip(vs).map(|(a, b)| a - b).collect();
    let g = d.iter().map(|a| a * a).sum::<f64>().sqrt();
    if g == 0.0 {
        return domain("deviation angle is undefined for equal velocities");
    }
    let c = d.iter().zip(sigma).map(|(a, s)| a * s).sum::<f64>() / g;
    Ok(c.clamp(-1.0, 1.0).acos())
}

/// Mass, energy and entropy densities of one velocity line.
#[derive(Clone, Debug, Serialize)]
pub struct Moments {
    /// Coordinates of the line (x, and t when present).
    pub at: Vec<f64>,
    pub mass: f64,
    pub energy: f64,
    /// int u ln u dv, absent when u takes negative values on the line.
    pub entropy: Option<f64>,
}

/// Velocity moments of a field on a (v, x[, t]) grid with one velocity
/// dimension, by the trapezoid rule.
pub fn moments(u: &GridField) -> Result<Vec<Moments>> {
    if u.dim() < 2 {
        return domain("moments need a velocity axis and at least one more");
    }
    let va = u.axes[0];
    let nv = va.n;
    let mut out = Vec::with_capacity(u.len() / nv);
    let mut c = vec![0.0; u.dim()];
    for line in 0..u.len() / nv {
        let vals = &u.values[line * nv..(line + 1) * nv];
        u.coords_into(line * nv, &mut c);
        let (mut m, mut e, mut h) = (0.0, 0.0, 0.0);
        let mut signed = true;
        for (i, &x) in vals.iter().enumerate() {
            let w = va.trapezoid_weight(i);
            let v = va.node(i);
            m += w * x;
            e += w * x * v * v;
            if x < 0.0 {
                signed = false;
            } else if x > 0.0 {
                h += w * x * x.ln();
            }
        }
        out.push(Moments { at: c[1..].to_vec(), mass: m, energy: e, entropy: signed.then_some(h) });
    }
    Ok(out)
}
