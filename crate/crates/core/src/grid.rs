//! Sampled scalar fields on tensor grids.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Uniform axis with `n` nodes spanning `[lo, hi]` inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return domain(format!("axis [{lo}, {hi}] with {n} nodes is degenerate"));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + self.h() * i as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Cell index and fractional offset for linear interpolation, `None` outside.
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let tol = 1e-12 * (self.hi - self.lo);
        if !(x >= self.lo - tol && x <= self.hi + tol) {
            return None;
        }
        let s = ((x - self.lo) / self.h()).clamp(0.0, (self.n - 1) as f64);
        let i = (s.floor() as usize).min(self.n - 2);
        Some((i, s - i as f64))
    }

    /// Trapezoid weight of node `i`.
    pub fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5 * self.h()
        } else {
            self.h()
        }
    }
}

/// Stability bookkeeping attached to a field produced by a time march.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CflRecord {
    pub dt: f64,
    pub substeps: usize,
    /// Largest stable step under the combined monotonicity bound.
    pub dt_monotone: f64,
    /// min(h_v^2/(2 Lambda), h_x/max|v|)
    pub dt_reference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundaryKind {
    None,
    Dirichlet,
    InflowDirichlet,
    GammaMatched,
}

/// Scalar field on a tensor grid. Axis 0 varies fastest; the last axis is
/// time when the field is space-time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridField {
    pub axes: Vec<Axis>,
    pub values: Vec<f64>,
    pub boundary: BoundaryKind,
    pub cfl: Option<CflRecord>,
}

impl GridField {
    pub fn zeros(axes: Vec<Axis>) -> Self {
        let len = axes.iter().map(|a| a.n).product();
        Self {
            axes,
            values: vec![0.0; len],
            boundary: BoundaryKind::None,
            cfl: None,
        }
    }

    pub fn from_fn<F: FnMut(&[f64]) -> f64>(axes: Vec<Axis>, mut f: F) -> Self {
        let mut field = Self::zeros(axes);
        let mut coords = vec![0.0; field.axes.len()];
        for idx in 0..field.values.len() {
            field.coords_into(idx, &mut coords);
            field.values[idx] = f(&coords);
        }
        field
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n).collect()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.axes[axis].h()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.axes.len());
        let mut acc = 1;
        for a in &self.axes {
            s.push(acc);
            acc *= a.n;
        }
        s
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        let mut acc = 1;
        for (k, &i) in multi.iter().enumerate() {
            idx += i * acc;
            acc *= self.axes[k].n;
        }
        idx
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.axes
            .iter()
            .map(|a| {
                let i = idx % a.n;
                idx /= a.n;
                i
            })
            .collect()
    }

    pub fn coords_into(&self, mut idx: usize, out: &mut [f64]) {
        for (k, a) in self.axes.iter().enumerate() {
            out[k] = a.node(idx % a.n);
            idx /= a.n;
        }
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.axes.len()];
        self.coords_into(idx, &mut c);
        c
    }

    /// Multilinear interpolation; `None` outside the grid.
    pub fn interpolate(&self, point: &[f64]) -> Option<f64> {
        let d = self.axes.len();
        debug_assert_eq!(point.len(), d);
        let mut base = 0usize;
        let mut acc = 1usize;
        let mut fracs = [0.0f64; 8];
        let mut steps = [0usize; 8];
        assert!(d <= 8, "interpolation supports up to 8 axes");
        for k in 0..d {
            let (i, f) = self.axes[k].locate(point[k])?;
            base += i * acc;
            steps[k] = acc;
            fracs[k] = f;
            acc *= self.axes[k].n;
        }
        let mut total = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = base;
            for k in 0..d {
                if corner >> k & 1 == 1 {
                    w *= fracs[k];
                    idx += steps[k];
                } else {
                    w *= 1.0 - fracs[k];
                }
            }
            if w != 0.0 {
                total += w * self.values[idx];
            }
        }
        Some(total)
    }

    /// Trapezoid-rule integral over the whole grid.
    pub fn integral(&self) -> f64 {
        let mut multi = vec![0usize; self.axes.len()];
        let mut total = 0.0;
        for (idx, v) in self.values.iter().enumerate() {
            let mut rem = idx;
            for (k, a) in self.axes.iter().enumerate() {
                multi[k] = rem % a.n;
                rem /= a.n;
            }
            let w: f64 = multi
                .iter()
                .zip(&self.axes)
                .map(|(&i, a)| a.trapezoid_weight(i))
                .product();
            total += w * v;
        }
        total
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Slab of the last axis at index `k` as a field over the remaining axes.
    pub fn last_axis_slice(&self, k: usize) -> GridField {
        let d = self.axes.len();
        let inner: usize = self.axes[..d - 1].iter().map(|a| a.n).product();
        GridField {
            axes: self.axes[..d - 1].to_vec(),
            values: self.values[k * inner..(k + 1) * inner].to_vec(),
            boundary: self.boundary.clone(),
            cfl: None,
        }
    }

    pub fn scaled(&self, alpha: f64) -> GridField {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_is_exact_for_multilinear_fields() {
        let axes = vec![
            Axis::new(-1.0, 1.0, 5).unwrap(),
            Axis::new(0.0, 2.0, 7).unwrap(),
            Axis::new(-1.0, 0.0, 4).unwrap(),
        ];
        let f = |c: &[f64]| 1.0 + 2.0 * c[0] - c[1] + 0.5 * c[2] + c[0] * c[1] * c[2];
        let g = GridField::from_fn(axes, |c| f(c));
        for p in [[0.13, 1.77, -0.31], [-1.0, 2.0, 0.0], [0.99, 0.01, -0.99]] {
            assert!((g.interpolate(&p).unwrap() - f(&p)).abs() < 1e-12);
        }
        assert!(g.interpolate(&[1.5, 0.0, 0.0]).is_none());
    }

    #[test]
    fn index_roundtrip_and_integral() {
        let g = GridField::from_fn(
            vec![Axis::new(0.0, 1.0, 11).unwrap(), Axis::new(0.0, 2.0, 21).unwrap()],
            |c| c[0] + c[1],
        );
        for idx in [0, 5, 37, g.len() - 1] {
            assert_eq!(g.flat_index(&g.multi_index(idx)), idx);
        }
        assert!((g.integral() - 3.0).abs() < 1e-12);
    }
}
