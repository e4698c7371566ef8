//! Sobolev embedding check on Omega_{m0} x Omega_{N-m0+1}, with a separable
//! closed-form oracle.

use rand::{Rng, RngExt};
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{domain, Error, Result};
use crate::grid::{Axis, GridField};

/// Admissible exponent range [2, 2 m0/(m0 - 2)]; unbounded above for m0 <= 2.
pub fn sobolev_exponent_range(m0: usize) -> (f64, f64) {
    if m0 > 2 {
        (2.0, 2.0 * m0 as f64 / (m0 as f64 - 2.0))
    } else {
        (2.0, f64::INFINITY)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SobolevReport {
    pub q: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Weights of the mean over one axis: Simpson for odd node counts,
/// trapezoid otherwise, normalized to sum 1.
fn mean_weights(ax: &Axis) -> Vec<f64> {
    let n = ax.n;
    let mut w: Vec<f64> = if n % 2 == 1 && n >= 3 {
        (0..n)
            .map(|i| if i == 0 || i + 1 == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 })
            .collect()
    } else {
        (0..n).map(|i| ax.trapezoid_weight(i)).collect()
    };
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Derivative at all nodes of the sine interpolant through the interior
/// nodes (zero at both ends). Rows are output nodes, columns interior nodes.
fn sine_derivative_matrix(ax: &Axis) -> Vec<Vec<f64>> {
    let m = ax.n - 1;
    let len = ax.hi - ax.lo;
    let pi = std::f64::consts::PI;
    (0..=m)
        .map(|j| {
            (1..m)
                .map(|i| {
                    (1..m)
                        .map(|l| {
                            let lf = l as f64;
                            2.0 / m as f64 * (pi * lf / len)
                                * (pi * lf * j as f64 / m as f64).cos()
                                * (pi * lf * i as f64 / m as f64).sin()
                        })
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// lhs = int |mean_{(y,t)} u|^q dx0, rhs = (int mean_{(y,t)} |D_{m0} u|^2 dx0)^{q/2}.
/// The first `m0` axes carry x0 and u must vanish on their boundary.
pub fn sobolev_embedding_check(u: &GridField, m0: usize, q: f64) -> Result<SobolevReport> {
    let (qmin, qmax) = sobolev_exponent_range(m0);
    if !(q >= qmin && q <= qmax) || !q.is_finite() {
        return Err(Error::Exponent(format!("q = {q} outside [{qmin}, {qmax}] for m0 = {m0}")));
    }
    let d = u.dim();
    if m0 == 0 || m0 >= d {
        return domain(format!("need 0 < m0 < {d}"));
    }
    let shape = u.shape();
    let strides = u.strides();
    let xblock: usize = shape[..m0].iter().product();
    let outer: usize = shape[m0..].iter().product();
    let outer_w: Vec<f64> = {
        let ws: Vec<Vec<f64>> = u.axes[m0..].iter().map(mean_weights).collect();
        (0..outer)
            .map(|p| {
                let mut rem = p;
                let mut w = 1.0;
                for (k, wk) in ws.iter().enumerate() {
                    w *= wk[rem % shape[m0 + k]];
                    rem /= shape[m0 + k];
                }
                w
            })
            .collect()
    };
    let mut mean_u = vec![0.0; xblock];
    let mut mean_grad = vec![0.0; xblock];
    for (i, &v) in u.values.iter().enumerate() {
        mean_u[i % xblock] += outer_w[i / xblock] * v;
    }
    let mut line = Vec::new();
    for k in 0..m0 {
        let dm = sine_derivative_matrix(&u.axes[k]);
        let s = strides[k];
        let nk = shape[k];
        for base in 0..u.len() {
            if !(base / s).is_multiple_of(nk) {
                continue;
            }
            line.clear();
            line.extend((1..nk - 1).map(|j| u.values[base + j * s]));
            let w = outer_w[base / xblock];
            for (j, row) in dm.iter().enumerate() {
                let g: f64 = row.iter().zip(&line).map(|(a, b)| a * b).sum();
                mean_grad[(base + j * s) % xblock] += w * g * g;
            }
        }
    }
    let mut lhs = 0.0;
    let mut grad = 0.0;
    for i in 0..xblock {
        let mut rem = i;
        let mut w = 1.0;
        for k in 0..m0 {
            w *= u.axes[k].trapezoid_weight(rem % shape[k]);
            rem /= shape[k];
        }
        lhs += w * mean_u[i].abs().powf(q);
        grad += w * mean_grad[i];
    }
    let rhs = grad.powf(q / 2.0);
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(SobolevReport { q, lhs, rhs, ratio })
}

/// u = amplitude * prod_i sin(k_i pi x_i) * psi(s) on [0,1]^{m0} x [0,1]^{d'},
/// psi = sum_S coeffs[S] prod_{i in S} s_i over subsets S (bit masks).
#[derive(Clone, Debug, Serialize)]
pub struct SeparableField {
    pub k: Vec<u32>,
    pub amplitude: f64,
    pub coeffs: Vec<f64>,
}

impl SeparableField {
    pub fn random<R: Rng>(rng: &mut R, m0: usize, outer_dim: usize) -> Self {
        let k = (0..m0).map(|_| 1 + rng.random_range(0..3u32)).collect();
        let amplitude = 0.5 + 1.5 * rng.random::<f64>();
        let coeffs = (0..1usize << outer_dim).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        Self { k, amplitude, coeffs }
    }

    fn psi(&self, s: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(mask, c)| c * s.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, v)| v).product::<f64>())
            .sum()
    }

    fn value(&self, z: &[f64]) -> f64 {
        let m0 = self.k.len();
        let phi: f64 = self.k.iter().zip(z).map(|(&k, &x)| (k as f64 * std::f64::consts::PI * x).sin()).product();
        self.amplitude * phi * self.psi(&z[m0..])
    }
}

/// Samples a separable field on `nx` nodes per x0 axis and `ny` per outer axis.
pub fn separable_field(sf: &SeparableField, outer_dim: usize, nx: usize, ny: usize) -> Result<GridField> {
    let m0 = sf.k.len();
    let mut axes = Vec::with_capacity(m0 + outer_dim);
    for _ in 0..m0 {
        axes.push(Axis::new(0.0, 1.0, nx)?);
    }
    for _ in 0..outer_dim {
        axes.push(Axis::new(0.0, 1.0, ny)?);
    }
    let mut field = GridField::from_fn(axes, |z| sf.value(z));
    // sin(k pi) is not exactly zero in floating point
    let shape = field.shape();
    for i in 0..field.len() {
        let mi = field.multi_index(i);
        if (0..m0).any(|k| mi[k] == 0 || mi[k] + 1 == shape[k]) {
            field.values[i] = 0.0;
        }
    }
    Ok(field)
}

/// int_0^1 |sin(k pi x)|^q dx, independent of the integer k >= 1.
fn sine_power_integral(q: f64) -> f64 {
    gamma((q + 1.0) / 2.0) / (std::f64::consts::PI.sqrt() * gamma(q / 2.0 + 1.0))
}

/// Closed-form (lhs, rhs) for a separable field.
pub fn separable_oracle(sf: &SeparableField, outer_dim: usize, q: f64) -> (f64, f64) {
    let m0 = sf.k.len();
    let pi = std::f64::consts::PI;
    let nc = sf.coeffs.len();
    // mean of prod_{i in S} s_i is 2^{-|S|}
    let mean_psi: f64 = sf.coeffs.iter().enumerate().map(|(m, c)| c * 0.5f64.powi(m.count_ones() as i32)).sum();
    let mut mean_psi2 = 0.0;
    for a in 0..nc {
        for b in 0..nc {
            let both = (a & b).count_ones() as i32;
            let one = (a ^ b).count_ones() as i32;
            mean_psi2 += sf.coeffs[a] * sf.coeffs[b] * (1.0f64 / 3.0).powi(both) * 0.5f64.powi(one);
        }
    }
    debug_assert!(outer_dim < usize::BITS as usize);
    let lhs = (sf.amplitude * mean_psi).abs().powf(q) * sine_power_integral(q).powi(m0 as i32);
    let grad: f64 = sf.k.iter().map(|&k| (k as f64 * pi).powi(2)).sum::<f64>() * 0.5f64.powi(m0 as i32);
    let rhs = (sf.amplitude * sf.amplitude * mean_psi2 * grad).powf(q / 2.0);
    (lhs, rhs)
}
