//! Fractional kinetic geometry, kinetic nonlocal tails, a discrete fractional
//! p-Laplacian in velocity with its kinetic evolution, local boundedness
//! checks and Boltzmann-type collision kinematics.

mod bound;
mod collision;
mod operator;
mod tail;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

pub use bound::{
    battery_member, boundedness_check, nonlocal_battery, BatteryCombo, BatteryReport, BoundednessReport, SweepPoint,
};
pub use collision::{
    collision_kernel_eval, deviation_angle, moments, post_collision, CollisionKernelSpec, Moments,
};
pub use operator::{
    evolve_nonlocal, frac_p_laplacian, local_diffusivity, Evolution, Exterior, Kernel, KernelSpec, Source, StepRecord,
};
pub use tail::{tail, tail_sup, Decay, TailReport};

/// Parameters of the fractional kinetic problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FractionalParams {
    pub s: f64,
    pub p: f64,
    #[serde(default = "one")]
    pub n: usize,
    /// Kernel bounds lambda |v-w|^{-n-sp} <= K <= Lambda |v-w|^{-n-sp}.
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    /// Growth data |f(u)| <= c_o |u|^{gamma-1} + h.
    #[serde(default)]
    pub c_o: f64,
    #[serde(default = "two")]
    pub gamma: f64,
    #[serde(default)]
    pub h_inf: f64,
    /// Truncation radius for tails.
    #[serde(default = "r_inf")]
    pub r_inf: f64,
    #[serde(default = "onef")]
    pub delta: f64,
}

fn one() -> usize {
    1
}
fn onef() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn r_inf() -> f64 {
    50.0
}

impl FractionalParams {
    pub fn new(s: f64, p: f64) -> Self {
        Self { s, p, n: 1, lambda: 1.0, big_lambda: 1.0, c_o: 0.0, gamma: p.min(2.0), h_inf: 0.0, r_inf: 50.0, delta: 1.0 }
    }

    pub fn sp(&self) -> f64 {
        self.s * self.p
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return domain(format!("s = {} must lie in (0, 1)", self.s));
        }
        if !(self.p > 1.0 && self.p.is_finite()) {
            return domain(format!("p = {} must lie in (1, inf)", self.p));
        }
        if self.n == 0 {
            return domain("velocity dimension must be positive");
        }
        if !(self.lambda > 0.0 && self.lambda <= self.big_lambda && self.big_lambda.is_finite()) {
            return domain(format!("kernel bounds need 0 < lambda <= Lambda, got {} and {}", self.lambda, self.big_lambda));
        }
        if !(self.gamma > 1.0 && self.gamma <= self.p) {
            return domain(format!("gamma = {} must lie in (1, p]", self.gamma));
        }
        if !(self.c_o >= 0.0 && self.h_inf >= 0.0) {
            return domain("growth data c_o and h must be nonnegative");
        }
        if !(self.r_inf > 0.0 && self.r_inf.is_finite()) {
            return domain("tail truncation radius must be positive");
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return domain(format!("delta = {} must lie in (0, 1]", self.delta));
        }
        Ok(())
    }
}

/// Anisotropic dilation (r v, r^{1+sp} x, r^{sp} t) of z = (v, x, t).
pub fn frac_dilate(fp: &FractionalParams, r: f64, z: &[f64]) -> Result<Vec<f64>> {
    if !(r > 0.0 && r.is_finite()) {
        return domain(format!("dilation radius {r} must be positive"));
    }
    let n = fp.n;
    if z.len() != 2 * n + 1 {
        return domain(format!("point has {} coordinates, expected {}", z.len(), 2 * n + 1));
    }
    let sp = fp.sp();
    let mut out = z.to_vec();
    for k in 0..n {
        out[k] *= r;
        out[n + k] *= r.powf(1.0 + sp);
    }
    out[2 * n] *= r.powf(sp);
    Ok(out)
}

/// Fractional kinetic cylinder of radius `r` at `z0`, in group form
/// {|v-v0| < r, |x - x0 - (t-t0) v0| < r^{1+sp}, t0 - r^{sp} < t < t0}
/// or ball form B_r(v0) x B_{r^{1+sp}}(x0) x (t0 - r^{sp}, t0).
#[derive(Clone, Debug, Serialize)]
pub struct FracCylinder {
    pub z0: Vec<f64>,
    pub r: f64,
    pub s: f64,
    pub p: f64,
}

pub fn frac_cylinder(fp: &FractionalParams, z0: &[f64], r: f64) -> Result<FracCylinder> {
    fp.validate()?;
    if !(r > 0.0 && r.is_finite()) {
        return domain(format!("cylinder radius {r} must be positive"));
    }
    if z0.len() != 2 * fp.n + 1 {
        return domain("cylinder centre has the wrong dimension");
    }
    Ok(FracCylinder { z0: z0.to_vec(), r, s: fp.s, p: fp.p })
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|a| a * a).sum::<f64>().sqrt()
}

impl FracCylinder {
    fn n(&self) -> usize {
        (self.z0.len() - 1) / 2
    }

    fn sp(&self) -> f64 {
        self.s * self.p
    }

    /// Smallest radius of a group-form cylinder at z0 whose closure holds z.
    pub fn group_radius(&self, z: &[f64]) -> f64 {
        let n = self.n();
        let sp = self.sp();
        let dt = z[2 * n] - self.z0[2 * n];
        if dt > 0.0 {
            return f64::INFINITY;
        }
        let rv = norm((0..n).map(|k| z[k] - self.z0[k]));
        let rx = norm((0..n).map(|k| z[n + k] - self.z0[n + k] - dt * self.z0[k]));
        rv.max(rx.powf(1.0 / (1.0 + sp))).max((-dt).powf(1.0 / sp))
    }

    /// Smallest radius of a ball-form cylinder at z0 whose closure holds z.
    pub fn ball_radius(&self, z: &[f64]) -> f64 {
        let n = self.n();
        let sp = self.sp();
        let dt = z[2 * n] - self.z0[2 * n];
        if dt > 0.0 {
            return f64::INFINITY;
        }
        let rv = norm((0..n).map(|k| z[k] - self.z0[k]));
        let rx = norm((0..n).map(|k| z[n + k] - self.z0[n + k]));
        rv.max(rx.powf(1.0 / (1.0 + sp))).max((-dt).powf(1.0 / sp))
    }

    pub fn contains_group(&self, z: &[f64]) -> bool {
        self.group_radius(z) < self.r
    }

    pub fn contains_ball(&self, z: &[f64]) -> bool {
        self.ball_radius(z) < self.r
    }

    /// Uniform sample of the group-form (`group = true`) or ball-form cylinder
    /// of radius `rho`, driven by a unit sample `u` in [-1,1]^{2n} x [0,1].
    fn place(&self, u: &[f64], rho: f64, group: bool) -> Vec<f64> {
        let n = self.n();
        let sp = self.sp();
        let dt = -rho.powf(sp) * u[2 * n];
        let mut z = vec![0.0; 2 * n + 1];
        for k in 0..n {
            z[k] = self.z0[k] + rho * u[k];
            let drift = if group { dt * self.z0[k] } else { 0.0 };
            z[n + k] = self.z0[n + k] + drift + rho.powf(1.0 + sp) * u[n + k];
        }
        z[2 * n] = self.z0[2 * n] + dt;
        z
    }
}

/// Sampled inclusion constant theta with Q_{r/theta} in ball-form Q_r in Q_{r theta}.
#[derive(Clone, Debug, Serialize)]
pub struct ThetaEstimate {
    /// Smallest theta with ball-form Q_r inside group-form Q_{r theta}.
    pub outer: f64,
    /// Smallest theta with group-form Q_{r/theta} inside ball-form Q_r.
    pub inner: f64,
    pub theta: f64,
    pub samples: usize,
}

fn unit_samples(n: usize, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples);
    while out.len() < samples {
        let mut u: Vec<f64> = (0..2 * n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        u.push(rng.random::<f64>());
        if norm(u[..n].iter().copied()) < 1.0 && norm(u[n..2 * n].iter().copied()) < 1.0 {
            out.push(u);
        }
    }
    out
}

pub fn estimate_theta(cyl: &FracCylinder, samples: usize, seed: u64) -> Result<ThetaEstimate> {
    if samples == 0 {
        return domain("theta estimate needs samples");
    }
    let units = unit_samples(cyl.n(), samples, seed);
    let r = cyl.r;
    let outer = units
        .iter()
        .map(|u| cyl.group_radius(&cyl.place(u, r, false)) / r)
        .fold(1.0, f64::max);
    // the ball radius of group-form Q_{r/theta} shrinks monotonically in theta
    let worst = |theta: f64| units.iter().map(|u| cyl.ball_radius(&cyl.place(u, r / theta, true))).fold(0.0, f64::max);
    let inner = if worst(1.0) <= r {
        1.0
    } else {
        let (mut lo, mut hi) = (1.0, 2.0);
        while worst(hi) > r {
            hi *= 2.0;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if worst(mid) > r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    Ok(ThetaEstimate { outer, inner, theta: outer.max(inner), samples })
}

/// Fraction of sampled points violating the two inclusions at a given theta.
pub fn inclusion_violations(cyl: &FracCylinder, theta: f64, samples: usize, seed: u64) -> (f64, f64) {
    let units = unit_samples(cyl.n(), samples, seed);
    let big = FracCylinder { r: cyl.r * theta, ..cyl.clone() };
    let out = units.iter().filter(|u| big.group_radius(&cyl.place(u, cyl.r, false)) > big.r).count();
    let inn = units.iter().filter(|u| cyl.ball_radius(&cyl.place(u, cyl.r / theta, true)) > cyl.r).count();
    (out as f64 / samples as f64, inn as f64 / samples as f64)
}
