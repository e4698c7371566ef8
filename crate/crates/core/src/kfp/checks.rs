//! Grid-based checks of the boundedness, Harnack, Hölder and weak Poincaré
//! inequalities, and velocity moments.

use serde::Serialize;

use super::{Coefficient, OperatorSpec};
use crate::error::{domain, Error, Result};
use crate::grid::GridField;
use crate::group::{unit_ball_volume, Cylinder, GroupPoint, LieStructure};
use crate::quad::GaussLegendre;

/// {|v| <= rv, |x| <= rx, t0 <= t <= t1} for the kinetic group in n
/// velocity dimensions (balls in each block).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BallBox {
    pub n: usize,
    pub rv: f64,
    pub rx: f64,
    pub t0: f64,
    pub t1: f64,
}

impl BallBox {
    pub fn new(n: usize, rv: f64, rx: f64, t0: f64, t1: f64) -> Self {
        Self { n, rv, rx, t0, t1 }
    }

    /// B_1 x B_1 x [-1, 0].
    pub fn unit(n: usize) -> Self {
        Self::new(n, 1.0, 1.0, -1.0, 0.0)
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        let n = self.n;
        let tol = 1e-12;
        let v2: f64 = z[..n].iter().map(|a| a * a).sum();
        let x2: f64 = z[n..2 * n].iter().map(|a| a * a).sum();
        let t = z[2 * n];
        v2.sqrt() <= self.rv * (1.0 + tol)
            && x2.sqrt() <= self.rx * (1.0 + tol)
            && t >= self.t0 - tol * (1.0 + self.t0.abs())
            && t <= self.t1 + tol * (1.0 + self.t1.abs())
    }

    pub fn measure(&self) -> f64 {
        let b = unit_ball_volume(self.n);
        b * self.rv.powi(self.n as i32) * b * self.rx.powi(self.n as i32) * (self.t1 - self.t0)
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut lo = vec![-self.rv; n];
        lo.extend(vec![-self.rx; n]);
        lo.push(self.t0);
        let hi = lo.iter().take(2 * n).map(|v| -v).chain(std::iter::once(self.t1)).collect();
        (lo, hi)
    }

    /// Uniform lattice with `k` points per axis, endpoints included.
    pub fn lattice(&self, k: usize) -> Vec<Vec<f64>> {
        let (lo, hi) = self.bounds();
        let axes: Vec<Vec<(f64, f64)>> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| (0..k).map(|i| (a + (b - a) * i as f64 / (k - 1) as f64, 1.0)).collect())
            .collect();
        tensor(&axes).into_iter().map(|(z, _)| z).filter(|z| self.contains(z)).collect()
    }

    /// Tensor Gauss–Legendre points with `nodes` per axis, masked to the set.
    pub fn quadrature(&self, nodes: usize) -> Vec<(Vec<f64>, f64)> {
        let rule = GaussLegendre::new(nodes);
        let (lo, hi) = self.bounds();
        let axes: Vec<Vec<(f64, f64)>> = lo.iter().zip(&hi).map(|(a, b)| rule.mapped(*a, *b).collect()).collect();
        tensor(&axes).into_iter().filter(|(z, _)| self.contains(z)).collect()
    }
}

fn tensor(axes: &[Vec<(f64, f64)>]) -> Vec<(Vec<f64>, f64)> {
    let mut out = vec![(Vec::with_capacity(axes.len()), 1.0)];
    for ax in axes {
        let mut next = Vec::with_capacity(out.len() * ax.len());
        for (z, w) in &out {
            for &(x, wx) in ax {
                let mut z2 = z.clone();
                z2.push(x);
                next.push((z2, w * wx));
            }
        }
        out = next;
    }
    out
}

fn kinetic_n(u: &GridField) -> Result<usize> {
    let d = u.dim();
    if d < 3 || d.is_multiple_of(2) {
        return domain(format!("expected a kinetic space-time grid with 2n + 1 axes, got {d}"));
    }
    Ok((d - 1) / 2)
}

fn sample(u: &GridField, z: &[f64]) -> Result<f64> {
    u.interpolate(z).ok_or_else(|| Error::Domain(format!("point {z:?} lies outside the grid")))
}

/// Points and weights of z0 o delta_r(Q_1).
fn cylinder_quadrature(lie: &LieStructure, cyl: &Cylinder, nodes: usize) -> Vec<(Vec<f64>, f64)> {
    let n = lie.dim() / 2;
    let scale = cyl.r.powi(lie.q() as i32 + 2);
    BallBox::unit(n)
        .quadrature(nodes)
        .into_iter()
        .map(|(zeta, w)| (cyl.from_unit(lie, &GroupPoint::from_slice(&zeta)).to_vec(), w * scale))
        .collect()
}

fn cylinder_lattice(lie: &LieStructure, cyl: &Cylinder, k: usize) -> Vec<Vec<f64>> {
    let n = lie.dim() / 2;
    BallBox::unit(n)
        .lattice(k)
        .into_iter()
        .map(|zeta| cyl.from_unit(lie, &GroupPoint::from_slice(&zeta)).to_vec())
        .collect()
}

const LATTICE: usize = 13;
const GAUSS: usize = 16;

#[derive(Clone, Debug, Serialize)]
pub struct MoserReport {
    pub p: f64,
    pub beta: f64,
    pub f_norm: f64,
    /// sup over Q_rho of u_l^p
    pub sup: f64,
    /// || u_l^p ||_{L^beta(Q_r)}
    pub norm: f64,
    pub fitted_constant: f64,
}

/// sup_{Q_rho(z0)} u_l^p / ||u_l^p||_{L^beta(Q_r(z0))} * (r - rho)^{(Q+2)/beta}
/// with beta = q/(q-1) and u_l = u + ||f||_{L^q(Q_r)}.
pub fn moser_check(
    spec: &OperatorSpec,
    u: &GridField,
    z0: &GroupPoint,
    rho: f64,
    r: f64,
    p: f64,
) -> Result<MoserReport> {
    spec.validate()?;
    if !(rho > 0.0 && rho < r && r <= 1.0 && rho >= 0.5 * r) {
        return Err(Error::Geometry(format!("need r/2 <= rho < r <= 1, got rho = {rho}, r = {r}")));
    }
    if !(p > 0.0) {
        return Err(Error::Exponent(format!("p must be positive, got {p}")));
    }
    let n = kinetic_n(u)?;
    if n != spec.n || z0.dim() != 2 * n {
        return domain("grid, operator and centre dimensions disagree");
    }
    let lie = spec.lie();
    let outer = Cylinder::slanted(z0.clone(), r)?;
    let inner = Cylinder::slanted(z0.clone(), rho)?;
    let beta = spec.q / (spec.q - 1.0);
    let quad = cylinder_quadrature(&lie, &outer, GAUSS);
    let f_norm = spec.f.lq_norm(&quad, spec.q);
    let ul = |z: &[f64]| -> Result<f64> { Ok((sample(u, z)?.max(0.0) + f_norm).powf(p)) };
    let mut sup: f64 = 0.0;
    for z in cylinder_lattice(&lie, &inner, LATTICE) {
        sup = sup.max(ul(&z)?);
    }
    let mut acc = 0.0;
    for (z, w) in &quad {
        acc += w * ul(z)?.powf(beta);
    }
    let norm = acc.powf(1.0 / beta);
    let fitted_constant = if sup == 0.0 {
        0.0
    } else {
        sup / norm * (r - rho).powf((spec.q_hom() + 2) as f64 / beta)
    };
    Ok(MoserReport { p, beta, f_norm, sup, norm, fitted_constant })
}

/// Parameters of the Harnack and weak Poincaré geometry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnackGeometry {
    pub omega: f64,
    pub rho: f64,
    pub eta: f64,
    pub big_r: f64,
    pub theta0: f64,
}

impl HarnackGeometry {
    pub fn new(omega: f64, rho: f64, eta: f64, big_r: f64, theta0: f64) -> Result<Self> {
        if !(omega > 0.0 && omega < 1.0) {
            return Err(Error::Geometry(format!("omega must lie in (0, 1), got {omega}")));
        }
        if !(rho > 0.0 && rho < omega / 2f64.sqrt()) {
            return Err(Error::Geometry(format!("rho must lie in (0, omega/sqrt 2), got {rho}")));
        }
        if !(eta > 0.0 && eta < 1.0) || !(big_r > 1.0) || !(theta0 > 0.0 && theta0 < 1.0) {
            return Err(Error::Geometry("need eta in (0,1), R > 1 and theta0 in (0,1)".into()));
        }
        Ok(Self { omega, rho, eta, big_r, theta0 })
    }

    /// B_omega x B_omega^3 x (-omega^2, 0]
    pub fn plus(&self, n: usize) -> BallBox {
        let w = self.omega;
        BallBox::new(n, w, w.powi(3), -w * w, 0.0)
    }

    /// B_rho x B_rho^3 x (-1 + rho^2, -1 + 2 rho^2)
    pub fn minus_tilde(&self, n: usize) -> BallBox {
        let r = self.rho;
        BallBox::new(n, r, r.powi(3), -1.0 + r * r, -1.0 + 2.0 * r * r)
    }

    /// B_omega x B_omega^3 x (-1, -1 + omega^2]
    pub fn minus(&self, n: usize) -> BallBox {
        let w = self.omega;
        BallBox::new(n, w, w.powi(3), -1.0, -1.0 + w * w)
    }

    pub fn zero_set(&self, n: usize) -> BallBox {
        let e = self.eta;
        BallBox::new(n, e, e.powi(3), -1.0 - e * e, -1.0)
    }

    pub fn ext(&self, n: usize) -> BallBox {
        BallBox::new(n, 2.0 * self.big_r, 8.0 * self.big_r, -1.0 - self.eta * self.eta, 0.0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HarnackReport {
    /// sup over the past box, or the L^p integral for the weak variant
    pub sup_minus: f64,
    pub inf_plus: f64,
    pub f_norm: f64,
    pub ratio: f64,
    pub infinite: bool,
}

/// Calls `f(index, coords)` for every grid node inside `region`.
fn for_each_node_in(u: &GridField, region: &BallBox, mut f: impl FnMut(usize, &[f64])) {
    let (lo, hi) = region.bounds();
    let ranges: Vec<(usize, usize)> = u
        .axes
        .iter()
        .zip(lo.iter().zip(&hi))
        .map(|(ax, (a, b))| {
            let tol = 1e-12 * (ax.hi - ax.lo);
            let first = (0..ax.n).find(|&j| ax.node(j) >= a - tol).unwrap_or(ax.n);
            let last = (0..ax.n).rev().find(|&j| ax.node(j) <= b + tol).map_or(0, |j| j + 1);
            (first, last.max(first))
        })
        .collect();
    let shape: Vec<usize> = ranges.iter().map(|(a, b)| b - a).collect();
    let count: usize = shape.iter().product();
    let mut mi = vec![0usize; u.dim()];
    let mut c = vec![0.0; u.dim()];
    for flat in 0..count {
        let mut rem = flat;
        for k in 0..mi.len() {
            mi[k] = ranges[k].0 + rem % shape[k];
            rem /= shape[k];
            c[k] = u.axes[k].node(mi[k]);
        }
        if region.contains(&c) {
            f(u.flat_index(&mi), &c);
        }
    }
}

fn check_nonnegative(u: &GridField, region: &BallBox) -> Result<()> {
    let scale = u.max_abs().max(1e-300);
    let mut bad = None;
    for_each_node_in(u, region, |i, c| {
        if bad.is_none() && u.values[i] < -1e-12 * scale {
            bad = Some((u.values[i], c.to_vec()));
        }
    });
    match bad {
        Some((v, c)) => Err(Error::Precondition(format!("u = {v} < 0 at {c:?}"))),
        None => Ok(()),
    }
}

fn harnack_finish(sup_minus: f64, inf_plus: f64, f_norm: f64) -> HarnackReport {
    let den = inf_plus + f_norm;
    let infinite = den <= 0.0;
    HarnackReport { sup_minus, inf_plus, f_norm, ratio: if infinite { f64::INFINITY } else { sup_minus / den }, infinite }
}

fn inf_over(u: &GridField, region: &BallBox) -> Result<f64> {
    let mut m = f64::INFINITY;
    for z in region.lattice(LATTICE) {
        m = m.min(sample(u, &z)?);
    }
    Ok(m)
}

/// sup over the tilde past box divided by (inf over the future box + f_norm).
pub fn harnack_ratio(u: &GridField, geom: &HarnackGeometry, f_norm: f64) -> Result<HarnackReport> {
    let n = kinetic_n(u)?;
    check_nonnegative(u, &BallBox::unit(n))?;
    let mut sup: f64 = 0.0;
    for z in geom.minus_tilde(n).lattice(LATTICE) {
        sup = sup.max(sample(u, &z)?);
    }
    Ok(harnack_finish(sup, inf_over(u, &geom.plus(n))?, f_norm))
}

/// (int_{Q-} u^p)^{1/p} divided by (inf over the future box + f_norm).
pub fn weak_harnack_ratio(u: &GridField, geom: &HarnackGeometry, f_norm: f64, p: f64) -> Result<HarnackReport> {
    if !(p > 0.0) {
        return Err(Error::Exponent(format!("p must be positive, got {p}")));
    }
    let n = kinetic_n(u)?;
    check_nonnegative(u, &BallBox::unit(n))?;
    let mut acc = 0.0;
    for (z, w) in geom.minus(n).quadrature(GAUSS) {
        acc += w * sample(u, &z)?.max(0.0).powf(p);
    }
    Ok(harnack_finish(acc.powf(1.0 / p), inf_over(u, &geom.plus(n))?, f_norm))
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainLink {
    pub constant: f64,
    pub admissible: bool,
    /// A radius realizing the Harnack pair, when one exists.
    pub radius: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainReport {
    pub links: Vec<ChainLink>,
    pub product: f64,
    /// Index j of the first link with u(z_{j-1}) = 0.
    pub broken_at: Option<usize>,
    pub all_admissible: bool,
}

/// Scale r such that z lies in z_prev o delta_r of the tilde past box.
fn chain_radius(lie: &LieStructure, prev: &GroupPoint, z: &GroupPoint, rho: f64) -> Option<f64> {
    let rel = lie.compose(&lie.inverse(prev), z);
    let s = -rel.t;
    if !(s > 0.0) {
        return None;
    }
    let n = lie.dim() / 2;
    let lo = s / (1.0 - rho * rho);
    let hi = s / (1.0 - 2.0 * rho * rho);
    let target = BallBox::new(n, rho, rho.powi(3), -1.0 + rho * rho, -1.0 + 2.0 * rho * rho);
    let k = 64;
    (1..k).map(|i| (lo + (hi - lo) * i as f64 / k as f64).sqrt()).find(|&r| {
        let zeta = lie.dilate_unchecked(1.0 / r, &rel);
        target.contains(&zeta.to_vec())
    })
}

/// Per-link constants max(u(z_j)/u(z_{j-1}), 1) along a chain that runs
/// backward in time, with the admissibility of each consecutive pair.
pub fn harnack_chain(u: &GridField, points: &[GroupPoint], geom: &HarnackGeometry) -> Result<ChainReport> {
    let n = kinetic_n(u)?;
    if points.len() < 2 {
        return domain("a chain needs at least two points");
    }
    let lie = LieStructure::kinetic(n);
    let mut links = Vec::new();
    let mut broken_at = None;
    let mut product = 1.0;
    for j in 1..points.len() {
        let prev = sample(u, &points[j - 1].to_vec())?;
        let cur = sample(u, &points[j].to_vec())?;
        let radius = chain_radius(&lie, &points[j - 1], &points[j], geom.rho);
        let constant = if prev <= 0.0 {
            broken_at.get_or_insert(j);
            f64::INFINITY
        } else {
            (cur / prev).max(1.0)
        };
        product *= constant;
        links.push(ChainLink { constant, admissible: radius.is_some(), radius });
    }
    let all_admissible = links.iter().all(|l| l.admissible);
    Ok(ChainReport { links, product, broken_at, all_admissible })
}

#[derive(Clone, Debug, Serialize)]
pub struct HolderReport {
    pub alpha: f64,
    pub seminorm: f64,
    /// (radius, max oscillation) per resolved dyadic level
    pub levels: Vec<(f64, f64)>,
    pub l2_norm: f64,
    pub f_norm: f64,
    pub fitted_constant: f64,
}

/// Oscillation decay over dyadic sub-cylinders centred in Q_{1/2}; levels
/// with r < h_v or r^2 < h_t are not resolved.
pub fn holder_estimate(u: &GridField, f: &Coefficient, q: f64) -> Result<HolderReport> {
    let n = kinetic_n(u)?;
    let lie = LieStructure::kinetic(n);
    let hv = u.spacing(0);
    let ht = u.spacing(2 * n);
    let radii: Vec<f64> =
        (0..10).map(|k| 0.5 * 0.5f64.powi(k)).take_while(|&r| r >= hv && r * r >= ht).collect();
    if radii.len() < 3 {
        return Err(Error::Resolution(format!(
            "only {} dyadic levels resolvable with h_v = {hv}, h_t = {ht}",
            radii.len()
        )));
    }
    let half = BallBox::new(n, 0.5, 0.125, -0.25, 0.0);
    let centres: Vec<GroupPoint> = half.lattice(3).iter().map(|z| GroupPoint::from_slice(z)).collect();
    let mut levels = Vec::with_capacity(radii.len());
    let mut scale: f64 = 0.0;
    for &r in &radii {
        let mut osc: f64 = 0.0;
        for c in &centres {
            let cyl = Cylinder::slanted(c.clone(), r)?;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for z in cylinder_lattice(&lie, &cyl, 5) {
                if half.contains(&z) {
                    let v = sample(u, &z)?;
                    lo = lo.min(v);
                    hi = hi.max(v);
                    scale = scale.max(v.abs());
                }
            }
            if hi >= lo {
                osc = osc.max(hi - lo);
            }
        }
        levels.push((r, osc));
    }
    // interpolation round-off is not an oscillation
    for l in levels.iter_mut() {
        if l.1 <= 1e-12 * scale {
            l.1 = 0.0;
        }
    }
    let fit: Vec<(f64, f64)> = levels.iter().filter(|(_, o)| *o > 0.0).map(|&(r, o)| (r.ln(), o.ln())).collect();
    let alpha = if fit.len() < 2 {
        1.0
    } else {
        let m = fit.len() as f64;
        let mx = fit.iter().map(|p| p.0).sum::<f64>() / m;
        let my = fit.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = fit.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = fit.iter().map(|p| (p.0 - mx).powi(2)).sum();
        (sxy / sxx).clamp(1e-3, 1.0)
    };
    let seminorm = levels.iter().map(|&(r, o)| o / r.powf(alpha)).fold(0.0, f64::max);
    let quad = BallBox::unit(n).quadrature(GAUSS);
    let mut l2 = 0.0;
    for (z, w) in &quad {
        l2 += w * sample(u, z)?.powi(2);
    }
    let l2_norm = l2.sqrt();
    let f_norm = f.lq_norm(&quad, q);
    let den = l2_norm + f_norm;
    let fitted_constant = if seminorm == 0.0 { 0.0 } else { seminorm / den };
    Ok(HolderReport { alpha, seminorm, levels, l2_norm, f_norm, fitted_constant })
}

/// Discrete H^{-1} norm of g on a uniform line with spacing h: solves
/// (-w'' + w) = g with w = 0 at both ends and returns sqrt(h sum g w).
pub fn dual_norm_hm1(g: &[f64], h: f64) -> f64 {
    let m = g.len();
    if m < 3 {
        return 0.0;
    }
    // Thomas algorithm on the interior nodes
    let k = m - 2;
    let diag = 2.0 / (h * h) + 1.0;
    let off = -1.0 / (h * h);
    let mut cp = vec![0.0; k];
    let mut dp = vec![0.0; k];
    for i in 0..k {
        let den = if i == 0 { diag } else { diag - off * cp[i - 1] };
        cp[i] = off / den;
        dp[i] = (g[i + 1] - if i == 0 { 0.0 } else { off * dp[i - 1] }) / den;
    }
    let mut w = vec![0.0; k];
    for i in (0..k).rev() {
        w[i] = dp[i] - if i + 1 < k { cp[i] * w[i + 1] } else { 0.0 };
    }
    let s: f64 = (0..k).map(|i| g[i + 1] * w[i]).sum();
    (h * s).max(0.0).sqrt()
}

/// Same norm on a tensor velocity grid, by conjugate gradients.
fn dual_norm_hm1_nd(g: &[f64], shape: &[usize], h: &[f64]) -> f64 {
    if shape.len() == 1 {
        return dual_norm_hm1(g, h[0]);
    }
    let len = g.len();
    let d = shape.len();
    let mut strides = vec![1; d];
    for k in 1..d {
        strides[k] = strides[k - 1] * shape[k - 1];
    }
    let interior: Vec<bool> = (0..len)
        .map(|i| (0..d).all(|k| {
            let j = (i / strides[k]) % shape[k];
            j > 0 && j + 1 < shape[k]
        }))
        .collect();
    let apply = |w: &[f64], out: &mut [f64]| {
        for i in 0..len {
            if !interior[i] {
                out[i] = 0.0;
                continue;
            }
            let mut s = w[i];
            for k in 0..d {
                let st = strides[k];
                s += (2.0 * w[i] - w[i + st] - w[i - st]) / (h[k] * h[k]);
            }
            out[i] = s;
        }
    };
    let b: Vec<f64> = (0..len).map(|i| if interior[i] { g[i] } else { 0.0 }).collect();
    let mut w = vec![0.0; len];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; len];
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let stop = 1e-24 * rr.max(1e-300);
    for _ in 0..10 * len {
        if rr <= stop {
            break;
        }
        apply(&p, &mut ap);
        let alpha = rr / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..len {
            w[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..len {
            p[i] = r[i] + beta * p[i];
        }
    }
    let cell: f64 = h.iter().product();
    (cell * b.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>()).max(0.0).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct PoincareReport {
    pub m: f64,
    pub zero_fraction: f64,
    pub thetas: Vec<f64>,
    pub lhs: Vec<f64>,
    pub dv_norm: f64,
    pub yu_norm: f64,
    pub rhs: f64,
    /// lhs / rhs per theta
    pub ratios: Vec<f64>,
    pub note: &'static str,
}

impl PoincareReport {
    /// Ratio at the theta closest to `theta`.
    pub fn ratio_at(&self, theta: f64) -> f64 {
        let i = (0..self.thetas.len())
            .min_by(|&a, &b| (self.thetas[a] - theta).abs().total_cmp(&(self.thetas[b] - theta).abs()))
            .unwrap_or(0);
        self.ratios[i]
    }
}

/// ||(u - theta M)_+||_{L^2(Q_1)} against ||D_v u||_{L^2(Q_ext)} +
/// ||Y u||_{L^2 H^{-1}(Q_ext)} for each theta. The grid must cover Q_ext.
pub fn weak_poincare_check(u: &GridField, geom: &HarnackGeometry, thetas: &[f64]) -> Result<PoincareReport> {
    let n = kinetic_n(u)?;
    let d = 2 * n;
    let ext = geom.ext(n);
    let unit = BallBox::unit(n);
    for k in 0..d + 1 {
        let need = if k < n {
            ext.rv
        } else if k < d {
            ext.rx
        } else {
            0.0
        };
        let ax = u.axes[k];
        let ok = if k < d {
            ax.lo <= -need * (1.0 - 1e-9) && ax.hi >= need * (1.0 - 1e-9)
        } else {
            ax.lo <= ext.t0 + 1e-9 && ax.hi >= -1e-9
        };
        if !ok {
            return domain(format!("grid axis {k} does not cover the extended box"));
        }
    }
    if thetas.iter().any(|t| !(*t > 0.0 && *t < 1.0)) || thetas.is_empty() {
        return domain("theta values must lie in (0, 1)");
    }
    check_nonnegative(u, &ext)?;
    let zero = geom.zero_set(n);
    let mut c = vec![0.0; d + 1];
    let mut m: f64 = 0.0;
    for_each_node_in(u, &unit, |i, _| m = m.max(u.values[i]));
    let (mut zeros, mut total) = (0usize, 0usize);
    for_each_node_in(u, &zero, |i, c| {
        // (-1 - eta^2, -1]: the lower time face is excluded
        if c[d] > zero.t0 + 1e-12 {
            total += 1;
            if u.values[i] <= 0.0 {
                zeros += 1;
            }
        }
    });
    if total == 0 {
        return Err(Error::Resolution("no grid nodes inside the zero-set box".into()));
    }
    let zero_fraction = zeros as f64 / total as f64;
    if zero_fraction < 0.25 {
        return Err(Error::Precondition(format!(
            "u vanishes on {zero_fraction:.3} of the zero-set box, at least 1/4 is required"
        )));
    }

    let quad = unit.quadrature(24);
    let vals: Vec<(f64, f64)> = quad.iter().map(|(z, w)| Ok((sample(u, z)?, *w))).collect::<Result<_>>()?;
    let lhs: Vec<f64> = thetas
        .iter()
        .map(|th| vals.iter().map(|(v, w)| w * (v - th * m).max(0.0).powi(2)).sum::<f64>().sqrt())
        .collect();

    let strides = u.strides();
    let shape = u.shape();
    let h: Vec<f64> = (0..=d).map(|k| u.spacing(k)).collect();
    // D_v u, centred inside and one-sided on the velocity faces
    let mut dv2 = 0.0;
    let mut mi = vec![0usize; d + 1];
    for i in 0..u.len() {
        if i > 0 {
            // odometer increment of the multi-index
            let mut k = 0;
            mi[0] += 1;
            while mi[k] == shape[k] {
                mi[k] = 0;
                k += 1;
                mi[k] += 1;
            }
        }
        for k in 0..=d {
            c[k] = u.axes[k].node(mi[k]);
        }
        if !ext.contains(&c) {
            continue;
        }
        let w: f64 = (0..=d).map(|k| u.axes[k].trapezoid_weight(mi[k])).product();
        for k in 0..n {
            let s = strides[k];
            let j = mi[k];
            let g = if j == 0 {
                (u.values[i + s] - u.values[i]) / h[k]
            } else if j + 1 == shape[k] {
                (u.values[i] - u.values[i - s]) / h[k]
            } else {
                (u.values[i + s] - u.values[i - s]) / (2.0 * h[k])
            };
            dv2 += w * g * g;
        }
    }
    let dv_norm = dv2.sqrt();

    // Y u = v . D_x u - d_t u, then H^{-1} in v on each (x, t) slice
    let vrange: Vec<(usize, usize)> = (0..n)
        .map(|k| {
            let ax = u.axes[k];
            let lo = (0..ax.n).find(|&j| ax.node(j) >= -ext.rv * (1.0 + 1e-12)).unwrap_or(0);
            let hi = (0..ax.n).rev().find(|&j| ax.node(j) <= ext.rv * (1.0 + 1e-12)).unwrap_or(ax.n - 1);
            (lo, hi)
        })
        .collect();
    let vshape: Vec<usize> = vrange.iter().map(|(a, b)| b - a + 1).collect();
    let vlen: usize = vshape.iter().product();
    let outer_shape: Vec<usize> = shape[n..].to_vec();
    let outer_len: usize = outer_shape.iter().product();
    let mut yu2 = 0.0;
    let mut g = vec![0.0; vlen];
    for o in 0..outer_len {
        let mut rem = o;
        for k in 0..=n {
            mi[n + k] = rem % outer_shape[k];
            rem /= outer_shape[k];
        }
        let t = u.axes[d].node(mi[d]);
        let inside_x = (0..n).all(|k| u.axes[n + k].node(mi[n + k]).abs() <= ext.rx * (1.0 + 1e-12));
        if !inside_x || t < ext.t0 - 1e-12 || t > ext.t1 + 1e-12 {
            continue;
        }
        let w_outer: f64 = (n..=d).map(|k| u.axes[k].trapezoid_weight(mi[k])).product();
        for (vi, gv) in g.iter_mut().enumerate() {
            let mut rem = vi;
            for k in 0..n {
                mi[k] = vrange[k].0 + rem % vshape[k];
                rem /= vshape[k];
            }
            let i = u.flat_index(&mi);
            let mut y = 0.0;
            for k in 0..n {
                let v = u.axes[k].node(mi[k]);
                let s = strides[n + k];
                let j = mi[n + k];
                let fwd = j + 1 < shape[n + k];
                let bwd = j > 0;
                let dx = if (v > 0.0 && fwd) || !bwd {
                    (u.values[i + s] - u.values[i]) / h[n + k]
                } else {
                    (u.values[i] - u.values[i - s]) / h[n + k]
                };
                y += v * dx;
            }
            let st = strides[d];
            let dt = if mi[d] > 0 {
                (u.values[i] - u.values[i - st]) / h[d]
            } else {
                (u.values[i + st] - u.values[i]) / h[d]
            };
            *gv = y - dt;
        }
        let nrm = dual_norm_hm1_nd(&g, &vshape, &h[..n]);
        yu2 += w_outer * nrm * nrm;
    }
    let yu_norm = yu2.sqrt();
    let rhs = dv_norm + yu_norm;
    let ratios = lhs.iter().map(|&l| if l == 0.0 { 0.0 } else { l / rhs }).collect();
    Ok(PoincareReport {
        m,
        zero_fraction,
        thetas: thetas.to_vec(),
        lhs,
        dv_norm,
        yu_norm,
        rhs,
        ratios,
        note: "Yu by first-order differences, H^-1 norm taken slice-wise in v",
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentsReport {
    pub mass: f64,
    pub energy: f64,
    pub entropy: f64,
    /// u < 0 somewhere; the entropy then covers the positive part only.
    pub negative: bool,
}

/// M = int u, E = int u |v|^2, H = int u ln u over a velocity grid.
pub fn moments(u: &GridField) -> MomentsReport {
    let d = u.dim();
    let mut c = vec![0.0; d];
    let (mut mass, mut energy, mut entropy) = (0.0, 0.0, 0.0);
    let mut negative = false;
    for i in 0..u.len() {
        u.coords_into(i, &mut c);
        let mi = u.multi_index(i);
        let w: f64 = (0..d).map(|k| u.axes[k].trapezoid_weight(mi[k])).product();
        let v = u.values[i];
        mass += w * v;
        energy += w * v * c.iter().map(|a| a * a).sum::<f64>();
        if v > 0.0 {
            entropy += w * v * v.ln();
        } else if v < 0.0 {
            negative = true;
        }
    }
    MomentsReport { mass, energy, entropy, negative }
}

/// Integral over the spatial variables of each time slice.
pub fn mass_history(u: &GridField) -> Vec<f64> {
    let nt = u.axes.last().map(|a| a.n).unwrap_or(0);
    (0..nt).map(|k| u.last_axis_slice(k).integral()).collect()
}
