//! Homogeneous Lie group attached to a block-nilpotent drift matrix: group law,
//! dilations, homogeneous norms, covariance and slanted cylinders.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::GridField;
use crate::quad::GaussLegendre;

pub const RANK_TOL: f64 = 1e-10;

/// Point z = (x, t) of R^{N+1}.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupPoint {
    pub x: DVector<f64>,
    pub t: f64,
}

impl GroupPoint {
    pub fn new(x: Vec<f64>, t: f64) -> Self {
        Self {
            x: DVector::from_vec(x),
            t,
        }
    }

    /// Spatial coordinates followed by time.
    pub fn from_slice(c: &[f64]) -> Self {
        let n = c.len() - 1;
        Self::new(c[..n].to_vec(), c[n])
    }

    pub fn origin(n: usize) -> Self {
        Self {
            x: DVector::zeros(n),
            t: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.x.iter().copied().collect();
        v.push(self.t);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &GroupPoint) -> f64 {
        (&self.x - &other.x).amax().max((self.t - other.t).abs())
    }
}

/// Block data m_0 >= ... >= m_kappa and the sub-diagonal blocks B_j (m_j x m_{j-1}).
#[derive(Clone, Debug, PartialEq)]
pub struct BlockStructure {
    m: Vec<usize>,
    blocks: Vec<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockStructureJson {
    kappa: usize,
    m: Vec<usize>,
    blocks: Vec<Vec<Vec<f64>>>,
}

impl BlockStructure {
    pub fn new(m: Vec<usize>, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let bs = Self::unchecked(m, blocks)?;
        for (j, b) in bs.blocks.iter().enumerate() {
            let sv = b.singular_values();
            let smax = sv.max();
            let smin = sv.min();
            if sv.len() < bs.m[j + 1] || !(smin > RANK_TOL * smax) {
                return domain(format!(
                    "block B_{} does not have full rank {} (singular values {:?})",
                    j + 1,
                    bs.m[j + 1],
                    sv.as_slice()
                ));
            }
        }
        Ok(bs)
    }

    /// Shape checks only; rank is not enforced. Used to build degenerate
    /// counterexamples for the hypoellipticity test.
    pub fn unchecked(m: Vec<usize>, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        if m.is_empty() || m.contains(&0) {
            return domain("block sizes must be positive and nonempty");
        }
        if m.windows(2).any(|w| w[1] > w[0]) {
            return domain(format!("block sizes {m:?} must be nonincreasing"));
        }
        if blocks.len() + 1 != m.len() {
            return domain(format!("{} blocks given for kappa = {}", blocks.len(), m.len() - 1));
        }
        for (j, b) in blocks.iter().enumerate() {
            if b.nrows() != m[j + 1] || b.ncols() != m[j] {
                return domain(format!(
                    "block B_{} has shape {}x{}, expected {}x{}",
                    j + 1,
                    b.nrows(),
                    b.ncols(),
                    m[j + 1],
                    m[j]
                ));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return domain(format!("block B_{} has non-finite entries", j + 1));
            }
        }
        Ok(Self { m, blocks })
    }

    /// Kinetic structure on R^{2n}: m = (n, n), B_1 = I.
    pub fn kinetic(n: usize) -> Self {
        Self::new(vec![n, n], vec![DMatrix::identity(n, n)]).expect("identity block is valid")
    }

    /// Uniformly parabolic case kappa = 0.
    pub fn parabolic(n: usize) -> Self {
        Self::new(vec![n], vec![]).expect("parabolic structure is valid")
    }

    /// Chain of `kappa` scalar blocks on R^{kappa+1}.
    pub fn chain(kappa: usize) -> Self {
        Self::new(vec![1; kappa + 1], vec![DMatrix::identity(1, 1); kappa]).expect("unit chain is valid")
    }

    pub fn kappa(&self) -> usize {
        self.m.len() - 1
    }

    pub fn m(&self) -> &[usize] {
        &self.m
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.m.iter().sum()
    }

    /// Assembled N x N matrix with B_j on the first block sub-diagonal.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut b = DMatrix::zeros(n, n);
        let mut row = self.m[0];
        let mut col = 0;
        for (j, blk) in self.blocks.iter().enumerate() {
            b.view_mut((row, col), (self.m[j + 1], self.m[j])).copy_from(blk);
            col += self.m[j];
            row += self.m[j + 1];
        }
        b
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: BlockStructureJson =
            serde_json::from_str(s).map_err(|e| Error::Domain(format!("block structure JSON: {e}")))?;
        Self::try_from_raw(raw)
    }

    fn try_from_raw(raw: BlockStructureJson) -> Result<Self> {
        if raw.kappa + 1 != raw.m.len() {
            return domain(format!("kappa = {} but {} block sizes", raw.kappa, raw.m.len()));
        }
        let blocks = raw
            .blocks
            .iter()
            .map(|rows| {
                let nr = rows.len();
                let nc = rows.first().map_or(0, |r| r.len());
                if rows.iter().any(|r| r.len() != nc) {
                    return domain("ragged block matrix");
                }
                Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(raw.m, blocks)
    }

    pub fn to_json(&self) -> String {
        let raw = BlockStructureJson {
            kappa: self.kappa(),
            m: self.m.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| (0..b.nrows()).map(|i| b.row(i).iter().copied().collect()).collect())
                .collect(),
        };
        serde_json::to_string(&raw).expect("plain data serializes")
    }
}

impl Serialize for BlockStructure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: serde_json::Value = serde_json::from_str(&self.to_json()).map_err(serde::ser::Error::custom)?;
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for BlockStructure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = BlockStructureJson::deserialize(d)?;
        Self::try_from_raw(raw).map_err(serde::de::Error::custom)
    }
}

/// Group calculus derived from a block structure.
#[derive(Clone, Debug)]
pub struct LieStructure {
    block: BlockStructure,
    b: DMatrix<f64>,
    /// (-B)^k / k! for k = 0..=kappa
    series: Vec<DMatrix<f64>>,
    alpha: Vec<u32>,
    q: usize,
}

/// Outcome of the covariance positivity test.
#[derive(Clone, Debug, Serialize)]
pub struct HypoellipticityReport {
    pub hypoelliptic: bool,
    pub min_eigenvalue: f64,
    /// (t, smallest eigenvalue of the equilibrated C(t), tolerance used)
    pub samples: Vec<(f64, f64, f64)>,
}

impl LieStructure {
    pub fn new(block: BlockStructure) -> Self {
        let b = block.matrix();
        let n = block.dim();
        let mut series = vec![DMatrix::identity(n, n)];
        let minus_b = -&b;
        for k in 1..=block.kappa() {
            let next = &series[k - 1] * &minus_b / k as f64;
            series.push(next);
        }
        let mut alpha = Vec::with_capacity(n);
        let mut q = 0;
        for (j, &mj) in block.m().iter().enumerate() {
            alpha.extend(std::iter::repeat_n(2 * j as u32 + 1, mj));
            q += (2 * j + 1) * mj;
        }
        Self {
            block,
            b,
            series,
            alpha,
            q,
        }
    }

    pub fn kinetic(n: usize) -> Self {
        Self::new(BlockStructure::kinetic(n))
    }

    pub fn parabolic(n: usize) -> Self {
        Self::new(BlockStructure::parabolic(n))
    }

    pub fn block(&self) -> &BlockStructure {
        &self.block
    }

    pub fn b_matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn m0(&self) -> usize {
        self.block.m()[0]
    }

    pub fn kappa(&self) -> usize {
        self.block.kappa()
    }

    /// Spatial homogeneous dimension.
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn alpha(&self) -> &[u32] {
        &self.alpha
    }

    pub fn trace_b(&self) -> f64 {
        self.b.trace()
    }

    /// E(s) = exp(-sB), exact since B is nilpotent.
    pub fn exp_group(&self, s: f64) -> DMatrix<f64> {
        let mut e = self.series[0].clone();
        let mut sk = 1.0;
        for m in &self.series[1..] {
            sk *= s;
            e += m * sk;
        }
        e
    }

    /// E(s) x without forming the matrix.
    pub fn exp_apply(&self, s: f64, x: &DVector<f64>) -> DVector<f64> {
        let mut out = x.clone();
        let mut sk = 1.0;
        for m in &self.series[1..] {
            sk *= s;
            out += (m * x) * sk;
        }
        out
    }

    /// zeta o z = (x_z + E(t_z) x_zeta, t_zeta + t_z).
    pub fn compose(&self, zeta: &GroupPoint, z: &GroupPoint) -> GroupPoint {
        GroupPoint {
            x: &z.x + self.exp_apply(z.t, &zeta.x),
            t: zeta.t + z.t,
        }
    }

    pub fn inverse(&self, z: &GroupPoint) -> GroupPoint {
        GroupPoint {
            x: -self.exp_apply(-z.t, &z.x),
            t: -z.t,
        }
    }

    pub fn dilate(&self, r: f64, z: &GroupPoint) -> Result<GroupPoint> {
        if !(r > 0.0) {
            return domain(format!("dilation factor must be positive, got {r}"));
        }
        Ok(self.dilate_unchecked(r, z))
    }

    pub(crate) fn dilate_unchecked(&self, r: f64, z: &GroupPoint) -> GroupPoint {
        let x = DVector::from_iterator(
            z.x.len(),
            z.x.iter().zip(&self.alpha).map(|(v, &a)| v * r.powi(a as i32)),
        );
        GroupPoint { x, t: r * r * z.t }
    }

    /// |t|^{1/2} + sum |x_j|^{1/alpha_j}
    pub fn norm1(&self, z: &GroupPoint) -> f64 {
        z.t.abs().sqrt()
            + z.x
                .iter()
                .zip(&self.alpha)
                .map(|(v, &a)| v.abs().powf(1.0 / a as f64))
                .sum::<f64>()
    }

    /// Unique r > 0 solving sum x_i^2 / r^{2 alpha_i} + t^2 / r^4 = 1.
    pub fn homogeneous_norm(&self, z: &GroupPoint) -> f64 {
        let n1 = self.norm1(z);
        if n1 == 0.0 {
            return 0.0;
        }
        let level = |r: f64| {
            let mut s = (z.t / (r * r)).powi(2);
            for (v, &a) in z.x.iter().zip(&self.alpha) {
                s += (v / r.powi(a as i32)).powi(2);
            }
            s - 1.0
        };
        let mut lo = (1e-8 * n1).ln();
        let mut hi = (1e8 * n1).ln();
        // bisection in log r: the level function is strictly decreasing in r
        while hi - lo > 1e-14 {
            let mid = 0.5 * (lo + hi);
            if level(mid.exp()) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi)).exp()
    }

    /// d(z, w) = || z^{-1} o w ||
    pub fn distance(&self, z: &GroupPoint, w: &GroupPoint) -> f64 {
        if z == w {
            return 0.0;
        }
        self.homogeneous_norm(&self.compose(&self.inverse(z), w))
    }

    fn check_a0(&self, a0: &DMatrix<f64>) -> Result<()> {
        let m0 = self.m0();
        if a0.nrows() != m0 || a0.ncols() != m0 {
            return domain(format!("A0 must be {m0}x{m0}, got {}x{}", a0.nrows(), a0.ncols()));
        }
        let asym = (a0 - a0.transpose()).amax();
        if asym > 1e-12 * a0.amax().max(1.0) {
            return domain("A0 must be symmetric");
        }
        Ok(())
    }

    fn padded(&self, a0: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let m0 = self.m0();
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (m0, m0)).copy_from(a0);
        a
    }

    /// Polynomial coefficients of C(t): C(t) = sum_k coeffs[k] t^{k+1}.
    pub fn covariance_coefficients(&self, a0: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
        self.check_a0(a0)?;
        let a = self.padded(a0);
        let kappa = self.kappa();
        let n = self.dim();
        let mut coeffs = vec![DMatrix::zeros(n, n); 2 * kappa + 1];
        for (j, mj) in self.series.iter().enumerate() {
            let left = mj * &a;
            for (l, ml) in self.series.iter().enumerate() {
                coeffs[j + l] += &left * ml.transpose() / (j + l + 1) as f64;
            }
        }
        Ok(coeffs)
    }

    /// C(t) = int_0^t E(s) A0 E(s)^T ds by exact polynomial integration.
    pub fn covariance(&self, a0: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
        if !(t > 0.0) {
            return domain(format!("covariance needs t > 0, got {t}"));
        }
        let coeffs = self.covariance_coefficients(a0)?;
        Ok(eval_covariance(&coeffs, t))
    }

    /// Kalman-type test: C(t) positive definite at t = 1e-3, ..., 1. Each C(t)
    /// is equilibrated by the dilation scaling diag(t^{-alpha_i/2}) before the
    /// eigenvalue test so the tolerance does not depend on t.
    pub fn hypoellipticity_check(&self, a0: &DMatrix<f64>) -> Result<HypoellipticityReport> {
        let coeffs = self.covariance_coefficients(a0)?;
        let mut samples = Vec::new();
        let mut ok = true;
        let mut min_eig = f64::INFINITY;
        for k in (0..=3).rev() {
            let t = 10f64.powi(-k);
            let mut c = eval_covariance(&coeffs, t);
            let n = self.dim();
            for i in 0..n {
                for j in 0..n {
                    c[(i, j)] *= t.powf(-0.5 * (self.alpha[i] + self.alpha[j]) as f64);
                }
            }
            let eig = c.clone().symmetric_eigen().eigenvalues;
            let lo = eig.min();
            let tol = 1e-12 * c.norm();
            ok &= lo > tol;
            min_eig = min_eig.min(lo);
            samples.push((t, lo, tol));
        }
        Ok(HypoellipticityReport {
            hypoelliptic: ok,
            min_eigenvalue: min_eig,
            samples,
        })
    }

    /// Covariance by Gauss–Legendre quadrature of the integrand.
    pub fn covariance_quadrature(&self, a0: &DMatrix<f64>, t: f64, nodes: usize) -> Result<DMatrix<f64>> {
        self.check_a0(a0)?;
        let a = self.padded(a0);
        let g = GaussLegendre::new(nodes);
        let n = self.dim();
        let mut c = DMatrix::zeros(n, n);
        for (s, w) in g.mapped(0.0, t) {
            let e = self.exp_group(s);
            c += (&e * &a * e.transpose()) * w;
        }
        Ok(c)
    }

    /// Finite-difference evaluation of Delta_{m0} u + <Bx, D u> - d_t u with
    /// centered differences of step h in every direction.
    pub fn principal_operator_fd<F: Fn(&GroupPoint) -> f64>(&self, u: &F, z: &GroupPoint, h: f64) -> f64 {
        let n = self.dim();
        let u0 = u(z);
        let shifted = |k: usize, d: f64| {
            let mut p = z.clone();
            if k < n {
                p.x[k] += d;
            } else {
                p.t += d;
            }
            u(&p)
        };
        let mut val = 0.0;
        for k in 0..self.m0() {
            val += (shifted(k, h) - 2.0 * u0 + shifted(k, -h)) / (h * h);
        }
        let bx = &self.b * &z.x;
        for k in 0..n {
            if bx[k] != 0.0 {
                val += bx[k] * (shifted(k, h) - shifted(k, -h)) / (2.0 * h);
            }
        }
        val - (shifted(n, h) - shifted(n, -h)) / (2.0 * h)
    }

    /// | L0(u o l_zeta)(z) - (L0 u)(zeta o z) | with finite differences of step h.
    pub fn left_invariance_residual<F: Fn(&GroupPoint) -> f64>(
        &self,
        u: &F,
        zeta: &GroupPoint,
        z: &GroupPoint,
        h: f64,
    ) -> f64 {
        let translated = |p: &GroupPoint| u(&self.compose(zeta, p));
        let lhs = self.principal_operator_fd(&translated, z, h);
        let rhs = self.principal_operator_fd(u, &self.compose(zeta, z), h);
        (lhs - rhs).abs()
    }

    /// Samples of the unit cylinder: uniform in each block ball and in (-1, 0].
    pub fn sample_unit_cylinder(&self, rng: &mut ChaCha20Rng) -> GroupPoint {
        let mut x = Vec::with_capacity(self.dim());
        for &mj in self.block.m() {
            x.extend(sample_ball(rng, mj));
        }
        GroupPoint::new(x, -rng.random::<f64>())
    }

    /// Membership of zeta in the unit cylinder B_1 x ... x B_1 x (-1, 0].
    pub fn in_unit_cylinder(&self, zeta: &GroupPoint) -> bool {
        if !(zeta.t > -1.0 && zeta.t <= 0.0) {
            return false;
        }
        let mut off = 0;
        for &mj in self.block.m() {
            let r2: f64 = zeta.x.rows(off, mj).norm_squared();
            if r2 > 1.0 {
                return false;
            }
            off += mj;
        }
        true
    }

    /// Lebesgue measure of the unit cylinder.
    pub fn unit_cylinder_measure(&self) -> f64 {
        self.block.m().iter().map(|&k| unit_ball_volume(k)).product()
    }
}

fn eval_covariance(coeffs: &[DMatrix<f64>], t: f64) -> DMatrix<f64> {
    let mut c = coeffs[0].clone() * t;
    let mut tk = t;
    for m in &coeffs[1..] {
        tk *= t;
        c += m * tk;
    }
    c
}

pub fn unit_ball_volume(m: usize) -> f64 {
    let mf = m as f64;
    std::f64::consts::PI.powf(mf / 2.0) / statrs::function::gamma::gamma(mf / 2.0 + 1.0)
}

fn sample_ball(rng: &mut ChaCha20Rng, m: usize) -> Vec<f64> {
    loop {
        let p: Vec<f64> = (0..m).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        if p.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            return p;
        }
    }
}

/// (v0,x0,t0) o (v,x,t) = (v0 + v, x0 + x + t v0, t0 + t) on R^{2n+1}.
pub fn compose_kinetic_alt(zeta: &GroupPoint, z: &GroupPoint) -> Result<GroupPoint> {
    let n2 = zeta.dim();
    if !n2.is_multiple_of(2) || z.dim() != n2 {
        return domain("kinetic composition needs points of R^{2n+1} with matching n");
    }
    let n = n2 / 2;
    let mut x = DVector::zeros(n2);
    for i in 0..n {
        x[i] = zeta.x[i] + z.x[i];
        x[n + i] = zeta.x[n + i] + z.x[n + i] + z.t * zeta.x[i];
    }
    Ok(GroupPoint { x, t: zeta.t + z.t })
}

/// Inverse for `compose_kinetic_alt`: (-v, -x + t v, -t).
pub fn inverse_kinetic_alt(z: &GroupPoint) -> Result<GroupPoint> {
    let n2 = z.dim();
    if !n2.is_multiple_of(2) {
        return domain("kinetic inverse needs a point of R^{2n+1}");
    }
    let n = n2 / 2;
    let mut x = DVector::zeros(n2);
    for i in 0..n {
        x[i] = -z.x[i];
        x[n + i] = -z.x[n + i] + z.t * z.x[i];
    }
    Ok(GroupPoint { x, t: -z.t })
}

/// Centered finite-difference Delta_v u - v . D_x u - d_t u, the operator
/// left invariant under `compose_kinetic_alt`.
pub fn kinetic_alt_operator_fd<F: Fn(&GroupPoint) -> f64>(u: &F, z: &GroupPoint, h: f64) -> f64 {
    let n = z.dim() / 2;
    let u0 = u(z);
    let shifted = |k: usize, d: f64| {
        let mut p = z.clone();
        if k < 2 * n {
            p.x[k] += d;
        } else {
            p.t += d;
        }
        u(&p)
    };
    let mut val = 0.0;
    for k in 0..n {
        val += (shifted(k, h) - 2.0 * u0 + shifted(k, -h)) / (h * h);
        val -= z.x[k] * (shifted(n + k, h) - shifted(n + k, -h)) / (2.0 * h);
    }
    val - (shifted(2 * n, h) - shifted(2 * n, -h)) / (2.0 * h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CylinderRepr {
    /// z0 o delta_r(Q_1)
    Slanted,
    /// B_r(x0^(0)) x B_{r^3}(x0^(1)) x ... x (t0 - r^2, t0]
    BallProduct,
}

#[derive(Clone, Debug)]
pub struct Cylinder {
    pub center: GroupPoint,
    pub r: f64,
    pub repr: CylinderRepr,
}

impl Cylinder {
    pub fn new(center: GroupPoint, r: f64, repr: CylinderRepr) -> Result<Self> {
        if !(r > 0.0) || !center.is_finite() {
            return domain(format!("cylinder radius must be positive, got {r}"));
        }
        Ok(Self { center, r, repr })
    }

    pub fn slanted(center: GroupPoint, r: f64) -> Result<Self> {
        Self::new(center, r, CylinderRepr::Slanted)
    }

    /// zeta = delta_{1/r}(z0^{-1} o z)
    pub fn unit_coords(&self, lie: &LieStructure, z: &GroupPoint) -> GroupPoint {
        lie.dilate_unchecked(1.0 / self.r, &lie.compose(&lie.inverse(&self.center), z))
    }

    /// z = z0 o delta_r(zeta)
    pub fn from_unit(&self, lie: &LieStructure, zeta: &GroupPoint) -> GroupPoint {
        lie.compose(&self.center, &lie.dilate_unchecked(self.r, zeta))
    }

    pub fn contains(&self, lie: &LieStructure, z: &GroupPoint) -> bool {
        match self.repr {
            CylinderRepr::Slanted => lie.in_unit_cylinder(&self.unit_coords(lie, z)),
            CylinderRepr::BallProduct => ball_product_contains(lie, &self.center, self.r, z),
        }
    }

    /// Exact measure r^{Q+2} |Q_1| (left translations preserve Lebesgue measure).
    pub fn measure(&self, lie: &LieStructure) -> f64 {
        self.r.powi(lie.q() as i32 + 2) * lie.unit_cylinder_measure()
    }

    /// Axis-aligned bounding box (lo, hi) per coordinate, time last.
    pub fn bounding_box(&self, lie: &LieStructure) -> (Vec<f64>, Vec<f64>) {
        let n = lie.dim();
        let mut lo = vec![f64::INFINITY; n + 1];
        let mut hi = vec![f64::NEG_INFINITY; n + 1];
        let r = self.r;
        match self.repr {
            CylinderRepr::Slanted => {
                // x = r^alpha xi + E(r^2 tau) x0 with xi in a unit box
                let steps = 400;
                for k in 0..=steps {
                    let tau = -(k as f64) / steps as f64;
                    let shift = lie.exp_apply(r * r * tau, &self.center.x);
                    for i in 0..n {
                        let ri = r.powi(lie.alpha()[i] as i32);
                        lo[i] = lo[i].min(shift[i] - ri);
                        hi[i] = hi[i].max(shift[i] + ri);
                    }
                }
                // the polynomial shift may peak between samples
                for i in 0..n {
                    let pad = 1e-3 * (hi[i] - lo[i]);
                    lo[i] -= pad;
                    hi[i] += pad;
                }
            }
            CylinderRepr::BallProduct => {
                for i in 0..n {
                    let ri = r.powi(lie.alpha()[i] as i32);
                    lo[i] = self.center.x[i] - ri;
                    hi[i] = self.center.x[i] + ri;
                }
            }
        }
        lo[n] = self.center.t - r * r;
        hi[n] = self.center.t;
        (lo, hi)
    }

    /// Hit-or-miss Monte Carlo estimate of the measure with its standard error.
    pub fn measure_monte_carlo(&self, lie: &LieStructure, samples: usize, seed: u64) -> (f64, f64) {
        let (lo, hi) = self.bounding_box(lie);
        let vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut c = vec![0.0; lo.len()];
        let mut hits = 0usize;
        for _ in 0..samples {
            for k in 0..c.len() {
                c[k] = lo[k] + (hi[k] - lo[k]) * rng.random::<f64>();
            }
            if self.contains(lie, &GroupPoint::from_slice(&c)) {
                hits += 1;
            }
        }
        let p = hits as f64 / samples as f64;
        (vol * p, vol * (p * (1.0 - p) / samples as f64).sqrt())
    }
}

fn ball_product_contains(lie: &LieStructure, z0: &GroupPoint, r: f64, z: &GroupPoint) -> bool {
    let dt = z.t - z0.t;
    if !(dt > -r * r && dt <= 0.0) {
        return false;
    }
    let mut off = 0;
    for (j, &mj) in lie.block().m().iter().enumerate() {
        let rad = r.powi(2 * j as i32 + 1);
        let d2: f64 = (0..mj).map(|i| (z.x[off + i] - z0.x[off + i]).powi(2)).sum();
        if d2 > rad * rad {
            return false;
        }
        off += mj;
    }
    true
}

/// Empirical sandwich constant: smallest c >= 1 with
/// ball(r/c) within Q_r(z0) within ball(c r) over the sampled points.
pub fn ball_sandwich_constant(lie: &LieStructure, z0: &GroupPoint, r: f64, samples: usize, seed: u64) -> Result<f64> {
    let cyl = Cylinder::slanted(z0.clone(), r)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut outer: f64 = 1.0;
    let n = lie.dim();
    let mut unit_pts = Vec::with_capacity(samples);
    for _ in 0..samples {
        let zeta = lie.sample_unit_cylinder(&mut rng);
        let z = cyl.from_unit(lie, &zeta);
        // radius needed for the naive ball product to contain z
        let mut need = (z0.t - z.t).max(0.0).sqrt() / r;
        let mut off = 0;
        for (j, &mj) in lie.block().m().iter().enumerate() {
            let d: f64 = (0..mj).map(|i| (z.x[off + i] - z0.x[off + i]).powi(2)).sum::<f64>().sqrt();
            need = need.max(d.powf(1.0 / (2 * j + 1) as f64) / r);
            off += mj;
        }
        outer = outer.max(need);
        unit_pts.push(zeta);
    }
    // inner constant by bisection: the naive boxes shrink monotonically in c
    let inner_ok = |c: f64| {
        let rr = r / c;
        unit_pts.iter().all(|w| {
            let mut x = DVector::zeros(n);
            for i in 0..n {
                x[i] = z0.x[i] + rr.powi(lie.alpha()[i] as i32) * w.x[i];
            }
            let z = GroupPoint { x, t: z0.t + rr * rr * w.t };
            cyl.contains(lie, &z)
        })
    };
    let mut hi = 1.0;
    while !inner_ok(hi) {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Geometry("no inner ball product found".into()));
        }
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 1.0 };
    if hi > 1.0 {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if inner_ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    } else {
        lo = 1.0;
    }
    let _ = lo;
    Ok(outer.max(hi))
}

/// Empirical constant c~ with z o Q_{c~(r - rho)} within Q_r for z in Q_rho.
pub fn nesting_constant(lie: &LieStructure, rho: f64, r: f64, samples: usize, seed: u64) -> Result<f64> {
    if !(0.0 < rho && rho < r && r <= 1.0) {
        return Err(Error::Geometry(format!("need 0 < rho < r <= 1, got rho={rho}, r={r}")));
    }
    let n = lie.dim();
    let outer = Cylinder::slanted(GroupPoint::origin(n), r)?;
    let inner = Cylinder::slanted(GroupPoint::origin(n), rho)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let probes: Vec<GroupPoint> = (0..64).map(|_| lie.sample_unit_cylinder(&mut rng)).collect();
    let mut worst: f64 = 1.0;
    for _ in 0..samples {
        let z = inner.from_unit(lie, &lie.sample_unit_cylinder(&mut rng));
        let fits = |c: f64| {
            let small = Cylinder {
                center: z.clone(),
                r: c * (r - rho),
                repr: CylinderRepr::Slanted,
            };
            probes.iter().all(|p| outer.contains(lie, &small.from_unit(lie, p)))
        };
        let (mut lo, mut hi) = (0.0, worst);
        if fits(hi) {
            continue;
        }
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if fits(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        worst = worst.min(lo);
    }
    Ok(worst)
}

/// Largest |u(z) - u(w)| / d(z, w)^alpha over pairs of grid nodes in `domain`.
/// At most `max_nodes` nodes are used (evenly strided).
pub fn holder_seminorm(
    lie: &LieStructure,
    u: &GridField,
    alpha: f64,
    domain_cyl: &Cylinder,
    max_nodes: usize,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return domain(format!("Hölder exponent must lie in (0, 1], got {alpha}"));
    }
    if u.dim() != lie.dim() + 1 {
        return domain("field dimension does not match the group");
    }
    let inside: Vec<(GroupPoint, f64)> = (0..u.len())
        .filter_map(|idx| {
            let p = GroupPoint::from_slice(&u.coords(idx));
            domain_cyl.contains(lie, &p).then(|| (p, u.values[idx]))
        })
        .collect();
    if inside.is_empty() {
        return domain("no grid nodes inside the cylinder");
    }
    let stride = inside.len().div_ceil(max_nodes.max(2));
    let pts: Vec<&(GroupPoint, f64)> = inside.iter().step_by(stride).collect();
    let mut best: f64 = 0.0;
    for i in 0..pts.len() {
        for j in 0..i {
            let du = (pts[i].1 - pts[j].1).abs();
            if du == 0.0 {
                continue;
            }
            // the quasi-distance need not be symmetric; take both orders
            let d = lie.distance(&pts[i].0, &pts[j].0).min(lie.distance(&pts[j].0, &pts[i].0));
            if d > 0.0 {
                best = best.max(du / d.powf(alpha));
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kin() -> LieStructure {
        LieStructure::kinetic(1)
    }

    fn exp_series_oracle(b: &DMatrix<f64>, s: f64, terms: usize) -> DMatrix<f64> {
        let n = b.nrows();
        let mut term = DMatrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..terms {
            term = term * (-s * b) / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn kinetic_exponential_matches_series() {
        let l = kin();
        let e = l.exp_group(1.0);
        let oracle = exp_series_oracle(l.b_matrix(), 1.0, 20);
        assert!((e.clone() - oracle).amax() < 1e-15);
        assert_eq!(e, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 1.0]));
        assert_eq!(l.exp_group(0.0), DMatrix::identity(2, 2));
    }

    #[test]
    fn kinetic_group_law_examples() {
        let l = kin();
        let z = l.compose(&GroupPoint::new(vec![1.0, 0.0], 0.0), &GroupPoint::new(vec![0.0, 0.0], 1.0));
        assert_eq!(z, GroupPoint::new(vec![1.0, -1.0], 1.0));
        let inv = l.inverse(&GroupPoint::new(vec![1.0, 2.0], 3.0));
        assert_eq!(inv, GroupPoint::new(vec![-1.0, -5.0], -3.0));
        assert_eq!(l.inverse(&GroupPoint::origin(2)), GroupPoint::origin(2));
    }

    #[test]
    fn alternative_law_examples() {
        let z = compose_kinetic_alt(&GroupPoint::new(vec![1.0, 0.0], 0.0), &GroupPoint::new(vec![0.0, 0.0], 1.0)).unwrap();
        assert_eq!(z, GroupPoint::new(vec![1.0, 1.0], 1.0));
        let inv = inverse_kinetic_alt(&GroupPoint::new(vec![1.0, 2.0], 3.0)).unwrap();
        assert_eq!(inv, GroupPoint::new(vec![-1.0, 1.0], -3.0));
    }

    #[test]
    fn dilation_examples() {
        let l = kin();
        let z = GroupPoint::new(vec![1.0, 1.0], 1.0);
        assert_eq!(l.dilate(2.0, &z).unwrap(), GroupPoint::new(vec![2.0, 8.0], 4.0));
        assert_eq!(l.dilate(1.0, &z).unwrap(), z);
        assert!(l.dilate(0.0, &z).is_err());
        assert_eq!(l.q(), 4);
        assert_eq!(l.alpha(), &[1, 3]);
    }

    #[test]
    fn norm_examples() {
        let l = kin();
        assert!((l.homogeneous_norm(&GroupPoint::new(vec![1.0, 0.0], 0.0)) - 1.0).abs() < 1e-12);
        assert!((l.homogeneous_norm(&GroupPoint::new(vec![0.0, 0.0], 4.0)) - 2.0).abs() < 1e-12);
        // independent oracle: bisection on u^3 - u^2 - 1 = 0 with u = r^2
        let (mut lo, mut hi) = (1.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid.powi(3) - mid.powi(2) - 1.0 < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = lo.sqrt();
        let got = l.homogeneous_norm(&GroupPoint::new(vec![1.0, 1.0], 0.0));
        assert!((got - r).abs() < 1e-10, "{got} vs {r}");
        assert!((got - 1.2106078).abs() < 1e-7);
        assert_eq!(l.norm1(&GroupPoint::new(vec![0.0, 0.0], 4.0)), 2.0);
        assert_eq!(l.homogeneous_norm(&GroupPoint::origin(2)), 0.0);
    }

    #[test]
    fn kinetic_covariance_closed_form() {
        let l = kin();
        let a0 = DMatrix::identity(1, 1);
        for t in [0.25, 0.5, 1.0, 2.0] {
            let c = l.covariance(&a0, t).unwrap();
            let expect = DMatrix::from_row_slice(2, 2, &[t, -t * t / 2.0, -t * t / 2.0, t.powi(3) / 3.0]);
            assert!((c.clone() - expect).amax() < 1e-14);
            assert!((c.determinant() - t.powi(4) / 12.0).abs() < 1e-12);
            let quad = l.covariance_quadrature(&a0, t, 64).unwrap();
            assert!((c - quad).amax() < 1e-13);
        }
        assert!(l.covariance(&a0, 0.0).is_err());
    }

    #[test]
    fn hypoellipticity_examples() {
        let a0 = DMatrix::identity(1, 1);
        assert!(kin().hypoellipticity_check(&a0).unwrap().hypoelliptic);
        let par = LieStructure::parabolic(2);
        assert!(par.hypoellipticity_check(&DMatrix::identity(2, 2)).unwrap().hypoelliptic);
        let degenerate = LieStructure::new(BlockStructure::unchecked(vec![1, 1], vec![DMatrix::zeros(1, 1)]).unwrap());
        assert!(!degenerate.hypoellipticity_check(&a0).unwrap().hypoelliptic);
        assert!(kin().hypoellipticity_check(&DMatrix::identity(2, 2)).is_err());
        assert!(BlockStructure::new(vec![1, 1], vec![DMatrix::zeros(1, 1)]).is_err());
    }

    #[test]
    fn block_structure_json_roundtrip() {
        let b = BlockStructure::new(
            vec![2, 1],
            vec![DMatrix::from_row_slice(1, 2, &[1.0, 0.5])],
        )
        .unwrap();
        let s = b.to_json();
        assert!(s.contains("\"kappa\":1"));
        assert_eq!(BlockStructure::from_json(&s).unwrap(), b);
        let m = b.matrix();
        assert_eq!(m[(2, 0)], 1.0);
        assert_eq!(m[(2, 1)], 0.5);
        assert!(BlockStructure::from_json(r#"{"kappa":1,"m":[1,2],"blocks":[[[1],[1]]]}"#).is_err());
    }

    #[test]
    fn unit_cylinder_conventions() {
        let l = kin();
        let cyl = Cylinder::slanted(GroupPoint::new(vec![0.3, -0.2], 0.5), 0.7).unwrap();
        // the center sits on the closed top face of the past cylinder
        let zc = cyl.unit_coords(&l, &cyl.center);
        assert!(zc.max_abs_diff(&GroupPoint::origin(2)) < 1e-15);
        assert!(cyl.contains(&l, &cyl.center));
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..100 {
            let zeta = l.sample_unit_cylinder(&mut rng);
            let z = cyl.from_unit(&l, &zeta);
            assert!(cyl.unit_coords(&l, &z).max_abs_diff(&zeta) < 1e-12);
            assert!(cyl.contains(&l, &z));
        }
    }

    #[test]
    fn holder_seminorm_examples() {
        use crate::grid::Axis;
        let l = kin();
        let axes = vec![
            Axis::new(-1.0, 1.0, 9).unwrap(),
            Axis::new(-1.0, 1.0, 9).unwrap(),
            Axis::new(-1.0, 0.0, 9).unwrap(),
        ];
        let cyl = Cylinder::slanted(GroupPoint::origin(2), 1.0).unwrap();
        let c = GridField::from_fn(axes.clone(), |_| 3.0);
        assert_eq!(holder_seminorm(&l, &c, 0.5, &cyl, 500).unwrap(), 0.0);
        let z0 = GroupPoint::origin(2);
        let alpha = 0.5;
        let u = GridField::from_fn(axes, |c| l.distance(&GroupPoint::from_slice(c), &z0).powf(alpha));
        let s = holder_seminorm(&l, &u, alpha, &cyl, 2000).unwrap();
        assert!(s >= 1.0 - 1e-12, "{s}");
        assert!(holder_seminorm(&l, &u, 0.0, &cyl, 10).is_err());
    }
}
