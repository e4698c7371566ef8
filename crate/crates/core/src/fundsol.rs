//! Closed-form fundamental solution of the constant-coefficient principal
//! operator, Γ-potentials and the potential exponent bookkeeping.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::grid::GridField;
use crate::group::{Cylinder, GroupPoint, LieStructure};
use crate::quad::{tensor_integrate, GaussLegendre};

/// Relative times below this are treated as the pole.
pub const POLE_CUTOFF: f64 = 1e-12;
const MAX_DIM: usize = 8;

/// Evaluator of Γ for a hypoelliptic pair (B, A0).
#[derive(Clone, Debug)]
pub struct GammaEvaluator {
    lie: LieStructure,
    a0: DMatrix<f64>,
    /// C(t) = sum_k coeffs[k] t^{k+1}, row-major N x N each
    coeffs: Vec<Vec<f64>>,
    trace_b: f64,
    norm_const: f64,
}

impl GammaEvaluator {
    pub fn new(lie: LieStructure, a0: DMatrix<f64>) -> Result<Self> {
        let n = lie.dim();
        if n > MAX_DIM {
            return domain(format!("fundamental solution supports N <= {MAX_DIM}, got {n}"));
        }
        let report = lie.hypoellipticity_check(&a0)?;
        if !report.hypoelliptic {
            return domain(format!(
                "covariance is not positive definite (smallest eigenvalue {:e})",
                report.min_eigenvalue
            ));
        }
        let coeffs = lie
            .covariance_coefficients(&a0)?
            .iter()
            .map(|m| {
                let mut v = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        v.push(m[(i, j)]);
                    }
                }
                v
            })
            .collect();
        Ok(Self {
            trace_b: lie.trace_b(),
            norm_const: (4.0 * std::f64::consts::PI).powf(-(n as f64) / 2.0),
            lie,
            a0,
            coeffs,
        })
    }

    /// Kinetic n-dimensional evaluator with A0 = a I.
    pub fn kinetic(n: usize, a: f64) -> Result<Self> {
        Self::new(LieStructure::kinetic(n), DMatrix::identity(n, n) * a)
    }

    pub fn lie(&self) -> &LieStructure {
        &self.lie
    }

    pub fn a0(&self) -> &DMatrix<f64> {
        &self.a0
    }

    /// Equilibrated covariance S C(t) S with S = diag(t^{-alpha_i/2}), built
    /// entrywise so that no t-dependent scaling round-off enters.
    fn equilibrated_covariance_into(&self, t: f64, out: &mut [f64]) {
        let n = self.lie.dim();
        let alpha = self.lie.alpha();
        let st = t.sqrt();
        out.iter_mut().for_each(|v| *v = 0.0);
        for (k, c) in self.coeffs.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let v = c[i * n + j];
                    if v == 0.0 {
                        continue;
                    }
                    let e2 = 2 * (k as i32 + 1) - alpha[i] as i32 - alpha[j] as i32;
                    out[i * n + j] += if e2 == 0 { v } else { v * st.powi(e2) };
                }
            }
        }
    }

    /// Cholesky factor of the equilibrated covariance; returns log det C(t).
    fn factor(&self, t: f64, l: &mut [f64; MAX_DIM * MAX_DIM], scale: &mut [f64; MAX_DIM]) -> Result<f64> {
        let n = self.lie.dim();
        let mut c = [0.0; MAX_DIM * MAX_DIM];
        self.equilibrated_covariance_into(t, &mut c[..n * n]);
        let st = t.sqrt();
        for i in 0..n {
            scale[i] = st.powi(-(self.lie.alpha()[i] as i32));
        }
        let mut logdet = 0.0;
        for j in 0..n {
            let mut d = c[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) {
                return Err(Error::Evaluation(format!(
                    "covariance factorization failed at t = {t:e} (pivot {d:e})"
                )));
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            logdet += 2.0 * djj.ln();
            for i in j + 1..n {
                let mut s = c[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(logdet + self.lie.q() as f64 * t.ln())
    }

    /// Γ((x, t), 0); zero for t <= 0, error inside the pole cutoff.
    pub fn gamma_rel(&self, x: &[f64], t: f64) -> Result<f64> {
        Ok(self.gamma_rel_with_grad(x, t, false)?.0)
    }

    /// Γ((x,t),0) and, when requested, C(t)^{-1} x (used by the derivatives).
    fn gamma_rel_with_grad(&self, x: &[f64], t: f64, want: bool) -> Result<(f64, [f64; MAX_DIM])> {
        let n = self.lie.dim();
        let mut cinv_x = [0.0; MAX_DIM];
        if t <= 0.0 {
            return Ok((0.0, cinv_x));
        }
        if t < POLE_CUTOFF {
            return Err(Error::Evaluation(format!(
                "relative time {t:e} is inside the pole cutoff {POLE_CUTOFF:e}"
            )));
        }
        let mut l = [0.0; MAX_DIM * MAX_DIM];
        let mut scale = [0.0; MAX_DIM];
        let logdet = self.factor(t, &mut l, &mut scale)?;
        // y = L^{-1} S x
        let mut y = [0.0; MAX_DIM];
        for i in 0..n {
            let mut s = scale[i] * x[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        let quad: f64 = y[..n].iter().map(|v| v * v).sum();
        let g = self.norm_const * (-0.5 * logdet - 0.25 * quad - t * self.trace_b).exp();
        if want {
            // C^{-1} x = S L^{-T} y
            let mut w = [0.0; MAX_DIM];
            for i in (0..n).rev() {
                let mut s = y[i];
                for k in i + 1..n {
                    s -= l[k * n + i] * w[k];
                }
                w[i] = s / l[i * n + i];
            }
            for i in 0..n {
                cinv_x[i] = scale[i] * w[i];
            }
        }
        Ok((g, cinv_x))
    }

    /// Γ(z, zeta) = Γ(zeta^{-1} o z, 0).
    pub fn gamma(&self, z: &GroupPoint, zeta: &GroupPoint) -> Result<f64> {
        let rel = self.lie.compose(&self.lie.inverse(zeta), z);
        self.gamma_rel(rel.x.as_slice(), rel.t)
    }

    /// Gradient of Γ(z, zeta) with respect to the first m0 components of zeta.
    pub fn gamma_grad_zeta(&self, z: &GroupPoint, zeta: &GroupPoint) -> Result<DVector<f64>> {
        let rel = self.lie.compose(&self.lie.inverse(zeta), z);
        let (g, cinv_w) = self.gamma_rel_with_grad(rel.x.as_slice(), rel.t, true)?;
        let m0 = self.lie.m0();
        if g == 0.0 {
            return Ok(DVector::zeros(m0));
        }
        // rel.x = x - E(s) xi, so d/dxi exp(-q/4) = (1/2) E(s)^T C^{-1} w
        let n = self.lie.dim();
        let e = self.lie.exp_group(rel.t);
        Ok(DVector::from_fn(m0, |i, _| {
            let s: f64 = (0..n).map(|k| e[(k, i)] * cinv_w[k]).sum();
            0.5 * g * s
        }))
    }

    /// |Γ(delta_r z, 0) - r^{-Q} Γ(z, 0)| / Γ(z, 0)
    pub fn homogeneity_residual(&self, z: &GroupPoint, r: f64) -> Result<f64> {
        let g = self.gamma_rel(z.x.as_slice(), z.t)?;
        if g == 0.0 || !g.is_normal() {
            return Err(Error::Evaluation("Γ(z, 0) vanishes, relative residual undefined".into()));
        }
        let dz = self.lie.dilate(r, z)?;
        let gd = self.gamma_rel(dz.x.as_slice(), dz.t)?;
        Ok((gd - r.powi(-(self.lie.q() as i32)) * g).abs() / g)
    }

    /// Finite-difference value of L0 Γ(., 0) at z with step h. Centered
    /// differences are used in every direction (second order).
    pub fn pde_residual(&self, z: &GroupPoint, h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return domain("mesh size must be positive");
        }
        if self.lie.homogeneous_norm(z) < 10.0 * h || z.t - h <= POLE_CUTOFF {
            return Err(Error::Refused(format!("z is within 10h of the pole (h = {h})")));
        }
        let u = |p: &GroupPoint| self.gamma_rel(p.x.as_slice(), p.t).unwrap_or(f64::NAN);
        let r = self.lie.principal_operator_fd(&u, z, h);
        if !r.is_finite() {
            return Err(Error::Evaluation("non-finite stencil value".into()));
        }
        Ok(r)
    }

    /// Int_{R^N} Γ(z, (y, s)) Γ((y, s), zeta0) dy, for zeta0.t < s < z.t.
    pub fn chapman_kolmogorov(&self, z: &GroupPoint, zeta0: &GroupPoint, s: f64, panels: usize) -> Result<f64> {
        if !(zeta0.t < s && s < z.t) {
            return domain("intermediate time must lie strictly between the endpoints");
        }
        let n = self.lie.dim();
        let tau = s - zeta0.t;
        let rest = z.t - s;
        // second factor: Gaussian in y with mean E(tau) xi0 and covariance 2 C(tau)
        let c2 = self.lie.covariance(&self.a0, tau)?;
        let mean2 = self.lie.exp_apply(tau, &zeta0.x);
        // first factor: Gaussian in y with mean E(-rest) x and covariance 2 E(-rest) C(rest) E(-rest)^T
        let e = self.lie.exp_group(-rest);
        let c1 = &e * self.lie.covariance(&self.a0, rest)? * e.transpose();
        let mean1 = &e * &z.x;
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for i in 0..n {
            let w1 = 12.0 * (2.0 * c1[(i, i)]).sqrt();
            let w2 = 12.0 * (2.0 * c2[(i, i)]).sqrt();
            lo[i] = (mean1[i] - w1).max(mean2[i] - w2);
            hi[i] = (mean1[i] + w1).min(mean2[i] + w2);
            if !(hi[i] > lo[i]) {
                return Ok(0.0);
            }
        }
        let rule = GaussLegendre::new(8);
        let mut failure = None;
        let val = tensor_integrate(&lo, &hi, panels, &rule, |y| {
            let w = GroupPoint::new(y.to_vec(), s);
            match (self.gamma(z, &w), self.gamma(&w, zeta0)) {
                (Ok(a), Ok(b)) => a * b,
                (Err(e), _) | (_, Err(e)) => {
                    failure = Some(e);
                    0.0
                }
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(val),
        }
    }

    /// Int_{R^N} Γ((x, t), 0) dx by composite Gauss–Legendre on a 12-sigma box.
    pub fn mass(&self, t: f64, panels: usize) -> Result<f64> {
        let n = self.lie.dim();
        let c = self.lie.covariance(&self.a0, t)?;
        let lo: Vec<f64> = (0..n).map(|i| -12.0 * (2.0 * c[(i, i)]).sqrt()).collect();
        let hi: Vec<f64> = lo.iter().map(|v| -v).collect();
        let rule = GaussLegendre::new(8);
        Ok(tensor_integrate(&lo, &hi, panels, &rule, |x| {
            self.gamma_rel(x, t).unwrap_or(f64::NAN)
        }))
    }

    /// Γ-potential Int Γ(z, zeta) f(zeta) dzeta, f given on a space-time grid
    /// (zero outside it).
    pub fn gamma_potential(&self, f: &GridField, z: &GroupPoint, rule: &PotentialRule) -> Result<f64> {
        let mut acc = 0.0;
        self.potential_points(f, z, rule, |fv, wg, _| acc += wg * fv)?;
        Ok(acc)
    }

    /// Γ(D_{m0} f)(z) = -Int D_zeta Γ(z, zeta) f(zeta) dzeta.
    pub fn gamma_gradient_potential(&self, f: &GridField, z: &GroupPoint, rule: &PotentialRule) -> Result<DVector<f64>> {
        let m0 = self.lie.m0();
        let mut acc = DVector::zeros(m0);
        self.potential_points(f, z, rule, |fv, _, wgrad| {
            for i in 0..m0 {
                acc[i] -= wgrad[i] * fv;
            }
        })?;
        Ok(acc)
    }

    /// Quadrature for the potentials. Time is integrated in sigma = sqrt(t_z - tau)
    /// (ds = 2 sigma dsigma) and space in homogeneous coordinates
    /// y = delta_sigma(eta), where Γ((delta_r eta, r^2), 0) = r^{-Q} Γ((eta, 1), 0)
    /// cancels the Jacobian and removes the pole. On every slice each eta axis
    /// is clipped to the preimage of the field's box and split into panels no
    /// wider than the Gaussian scale nor than the field's cells.
    /// The visitor receives (f value, weighted Γ, weighted D_zeta Γ).
    fn potential_points<F>(&self, f: &GridField, z: &GroupPoint, rule: &PotentialRule, mut visit: F) -> Result<()>
    where
        F: FnMut(f64, f64, &[f64]),
    {
        let n = self.lie.dim();
        if f.dim() != n + 1 {
            return domain(format!(
                "potential needs a space-time grid of dimension {}, got {}",
                n + 1,
                f.dim()
            ));
        }
        let t_axis = f.axes[n];
        let s_hi = z.t - t_axis.lo;
        if s_hi <= 0.0 {
            return Ok(());
        }
        let s_lo = (z.t - t_axis.hi).max(0.0);
        let m0 = self.lie.m0();
        let alpha: Vec<i32> = self.lie.alpha().iter().map(|&a| a as i32).collect();
        let c1 = self.lie.covariance(&self.a0, 1.0)?;
        let e1 = self.lie.exp_group(1.0);
        let cinv = c1
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Evaluation("C(1) is not positive definite".into()))?
            .inverse();
        let pull = e1.transpose() * cinv;
        let std1: Vec<f64> = (0..n).map(|i| (2.0 * c1[(i, i)]).sqrt()).collect();
        let g_panel = GaussLegendre::new(rule.panel_nodes);
        let g_sigma = GaussLegendre::new(rule.sigma_nodes);
        let sig_pts = g_sigma.composite_points(s_lo.sqrt(), s_hi.sqrt(), rule.sigma_panels);

        let mut coords = vec![0.0; n + 1];
        let mut wgrad = vec![0.0; m0];
        let mut axes_pts: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n];
        'slices: for (sigma, ws) in sig_pts {
            let s = sigma * sigma;
            coords[n] = z.t - s;
            let e = self.lie.exp_group(s);
            let e_back = self.lie.exp_group(-s);
            for i in 0..n {
                // y_i = x_i - sum_k E_ik xi_k over the field's box
                let (mut lo, mut hi) = (z.x[i], z.x[i]);
                for k in 0..n {
                    let a = e[(i, k)] * f.axes[k].lo;
                    let b = e[(i, k)] * f.axes[k].hi;
                    lo -= a.max(b);
                    hi -= a.min(b);
                }
                let sc = sigma.powi(alpha[i]);
                let lo = (lo / sc).max(-rule.width * std1[i]);
                let hi = (hi / sc).min(rule.width * std1[i]);
                if !(hi > lo) {
                    continue 'slices;
                }
                let panel = (rule.panels_per_std * std1[i]).min(rule.panels_per_cell * f.axes[i].h() / sc);
                let panels = ((hi - lo) / panel).ceil().max(1.0) as usize;
                axes_pts[i] = g_panel.composite_points(lo, hi, panels);
            }
            for (eta, w_eta) in tensor_points(&axes_pts) {
                // zeta = (E(-s)(x_z - delta_sigma eta), t_z - s)
                for i in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += e_back[(i, k)] * (z.x[k] - sigma.powi(alpha[k]) * eta[k]);
                    }
                    coords[i] = acc;
                }
                let fv = f.interpolate(&coords).unwrap_or(0.0);
                if fv == 0.0 {
                    continue;
                }
                let g = self.gamma_rel(&eta, 1.0)?;
                for i in 0..m0 {
                    let d: f64 = (0..n).map(|k| pull[(i, k)] * eta[k]).sum();
                    wgrad[i] = ws * w_eta * g * d;
                }
                visit(fv, 2.0 * sigma * ws * w_eta * g, &wgrad);
            }
        }
        Ok(())
    }

    /// Norms of f, Γ(f) and Γ(D f) on a cylinder and the two Sobolev-type ratios.
    pub fn potential_estimate_check(
        &self,
        f: &GridField,
        p: f64,
        cyl: &Cylinder,
        eval_nodes: usize,
        rule: &PotentialRule,
    ) -> Result<PotentialReport> {
        let ex = PotentialExponents::new(p, self.lie.q())?;
        let lie = &self.lie;
        let g = GaussLegendre::new(eval_nodes);
        // integrate over the unit cylinder in zeta-coordinates; the map to z has Jacobian r^{Q+2}
        let jac = cyl.r.powi(lie.q() as i32 + 2);
        let n = lie.dim();
        let pts_t = g.composite_points(-1.0, 0.0, 1);
        let pts_x = g.composite_points(-1.0, 1.0, 1);
        let mut nf = 0.0;
        let mut npot = 0.0;
        let mut ngrad = 0.0;
        let nx = pts_x.len();
        let total = nx.pow(n as u32) * pts_t.len();
        for flat in 0..total {
            let mut rem = flat;
            let mut c = vec![0.0; n + 1];
            let mut w = 1.0;
            for k in 0..n {
                let (xk, wk) = pts_x[rem % nx];
                rem /= nx;
                c[k] = xk;
                w *= wk;
            }
            let (tk, wk) = pts_t[rem];
            c[n] = tk;
            w *= wk;
            let zeta = GroupPoint::from_slice(&c);
            if !lie.in_unit_cylinder(&zeta) {
                continue;
            }
            let z = cyl.from_unit(lie, &zeta);
            let fv = f.interpolate(&z.to_vec()).unwrap_or(0.0);
            let pot = self.gamma_potential(f, &z, rule)?;
            let gpot = self.gamma_gradient_potential(f, &z, rule)?;
            nf += w * jac * fv.abs().powf(ex.p);
            npot += w * jac * pot.abs().powf(ex.p_star_star);
            ngrad += w * jac * gpot.norm().powf(ex.p_star);
        }
        let norm_f = nf.powf(1.0 / ex.p);
        let norm_pot = npot.powf(1.0 / ex.p_star_star);
        let norm_grad = ngrad.powf(1.0 / ex.p_star);
        let ratio = |a: f64| if norm_f == 0.0 { 0.0 } else { a / norm_f };
        Ok(PotentialReport {
            exponents: ex,
            norm_f,
            norm_potential: norm_pot,
            norm_gradient_potential: norm_grad,
            ratio_potential: ratio(norm_pot),
            ratio_gradient_potential: ratio(norm_grad),
        })
    }
}

/// Quadrature controls for Γ-potentials in homogeneous coordinates.
#[derive(Clone, Debug)]
pub struct PotentialRule {
    /// Gauss nodes per eta panel
    pub panel_nodes: usize,
    /// largest panel, in standard deviations of Γ((., 1), 0)
    pub panels_per_std: f64,
    /// largest panel, in field cells
    pub panels_per_cell: f64,
    /// half-width of the eta box in standard deviations
    pub width: f64,
    pub sigma_nodes: usize,
    pub sigma_panels: usize,
}

impl Default for PotentialRule {
    fn default() -> Self {
        Self {
            panel_nodes: 4,
            panels_per_std: 2.0,
            panels_per_cell: 2.0,
            width: 8.0,
            sigma_nodes: 16,
            sigma_panels: 4,
        }
    }
}

fn tensor_points(axes: &[Vec<(f64, f64)>]) -> Vec<(Vec<f64>, f64)> {
    let counts: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    let total: usize = counts.iter().product();
    (0..total)
        .map(|flat| {
            let mut rem = flat;
            let mut x = Vec::with_capacity(axes.len());
            let mut w = 1.0;
            for (k, a) in axes.iter().enumerate() {
                let (xk, wk) = a[rem % counts[k]];
                rem /= counts[k];
                x.push(xk);
                w *= wk;
            }
            (x, w)
        })
        .collect()
}

/// p, p* and p** with 1/p* = 1/p - 1/(Q+2), 1/p** = 1/p - 2/(Q+2).
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct PotentialExponents {
    pub p: f64,
    pub p_star: f64,
    pub p_star_star: f64,
}

impl PotentialExponents {
    pub fn new(p: f64, q: usize) -> Result<Self> {
        let qd = (q + 2) as f64;
        if !(p > 1.0) {
            return Err(Error::Exponent(format!("p must exceed 1, got {p}")));
        }
        let inv_pss = 1.0 / p - 2.0 / qd;
        if !(inv_pss > 0.0) {
            return Err(Error::Exponent(format!(
                "p = {p} >= (Q+2)/2 = {} leaves p** undefined",
                qd / 2.0
            )));
        }
        Ok(Self {
            p,
            p_star: 1.0 / (1.0 / p - 1.0 / qd),
            p_star_star: 1.0 / inv_pss,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PotentialReport {
    pub exponents: PotentialExponents,
    pub norm_f: f64,
    pub norm_potential: f64,
    pub norm_gradient_potential: f64,
    pub ratio_potential: f64,
    pub ratio_gradient_potential: f64,
}

/// Random point with t in [t_lo, t_hi] and x scaled to the Gaussian's natural size.
pub fn sample_interior_point(lie: &LieStructure, rng: &mut ChaCha20Rng, t_lo: f64, t_hi: f64) -> GroupPoint {
    let t = t_lo + (t_hi - t_lo) * rng.random::<f64>();
    let x: Vec<f64> = lie
        .alpha()
        .iter()
        .map(|&a| t.powf(0.5 * a as f64) * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    GroupPoint::new(x, t)
}

/// Deterministic RNG for sampling studies.
pub fn study_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinetic_value_at_unit_time() {
        let g = GammaEvaluator::kinetic(1, 1.0).unwrap();
        let v = g.gamma(&GroupPoint::new(vec![0.0, 0.0], 1.0), &GroupPoint::origin(2)).unwrap();
        // (4 pi)^{-1} (1/12)^{-1/2}
        let oracle = 12f64.sqrt() / (4.0 * std::f64::consts::PI);
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.275664).abs() < 1e-6);
        assert_eq!(g.gamma(&GroupPoint::new(vec![0.3, 0.1], -1.0), &GroupPoint::origin(2)).unwrap(), 0.0);
        assert!(g.gamma_rel(&[0.0, 0.0], 1e-13).is_err());
    }

    #[test]
    fn gamma_matches_gaussian_density_formula() {
        // independent evaluation through nalgebra's inverse and determinant
        let g = GammaEvaluator::kinetic(1, 1.0).unwrap();
        let lie = g.lie().clone();
        let mut rng = study_rng(3);
        for _ in 0..50 {
            let z = sample_interior_point(&lie, &mut rng, 0.05, 3.0);
            let c = lie.covariance(&DMatrix::identity(1, 1), z.t).unwrap();
            let inv = c.clone().try_inverse().unwrap();
            let q = (z.x.transpose() * inv * &z.x)[(0, 0)];
            let oracle = (-0.25 * q).exp() / (4.0 * std::f64::consts::PI * c.determinant().sqrt());
            let v = g.gamma_rel(z.x.as_slice(), z.t).unwrap();
            assert!((v - oracle).abs() <= 1e-12 * oracle, "{v} {oracle}");
        }
    }

    #[test]
    fn exponent_bookkeeping() {
        let e = PotentialExponents::new(2.0, 4).unwrap();
        assert!((e.p_star - 3.0).abs() < 1e-12);
        assert!((e.p_star_star - 6.0).abs() < 1e-12);
        assert!(PotentialExponents::new(3.0, 4).is_err());
        assert!(PotentialExponents::new(1.0, 4).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = GammaEvaluator::kinetic(1, 1.0).unwrap();
        let z = GroupPoint::new(vec![0.2, -0.1], 0.9);
        let zeta = GroupPoint::new(vec![-0.1, 0.05], 0.1);
        let grad = g.gamma_grad_zeta(&z, &zeta).unwrap();
        let h = 1e-5;
        let mut zp = zeta.clone();
        zp.x[0] += h;
        let mut zm = zeta.clone();
        zm.x[0] -= h;
        let fd = (g.gamma(&z, &zp).unwrap() - g.gamma(&z, &zm).unwrap()) / (2.0 * h);
        assert!((grad[0] - fd).abs() < 1e-8, "{} {}", grad[0], fd);
    }
}
