//! Euler–Maruyama ensembles for the kinetic Langevin system and its
//! relativistic analogue, density comparison against Γ, the Lorentz-type
//! composition law and the KLAB trajectory format.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::fundsol::GammaEvaluator;
use crate::group::{compose_kinetic_alt, GroupPoint};

/// States beyond this magnitude count as a blow-up.
const BLOWUP: f64 = 1e12;

/// Per-path generator: ChaCha20 keyed by the seed, one stream per path.
pub fn path_rng(seed: u64, path: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StateLayout {
    /// (V, X), each in R^n
    Langevin { n: usize },
    /// (P, X, T) with P, X in R^n
    Relativistic { n: usize },
}

impl StateLayout {
    pub fn state_dim(&self) -> usize {
        match *self {
            StateLayout::Langevin { n } => 2 * n,
            StateLayout::Relativistic { n } => 2 * n + 1,
        }
    }
}

/// Recorded states of an ensemble, path-major: path, record, component.
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    pub layout: StateLayout,
    pub dt: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// times (or proper times) of the recorded states
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    /// paths aborted by blow-up; their records after the abort repeat the last finite state
    pub blown: Vec<bool>,
}

impl PathEnsemble {
    pub fn state_dim(&self) -> usize {
        self.layout.state_dim()
    }

    pub fn n_records(&self) -> usize {
        self.times.len()
    }

    pub fn state(&self, path: usize, record: usize) -> &[f64] {
        let d = self.state_dim();
        let off = (path * self.n_records() + record) * d;
        &self.states[off..off + d]
    }

    /// Record index nearest to t, with a warning when t is not a recorded time.
    pub fn nearest_record(&self, t: f64) -> (usize, Option<String>) {
        let mut best = 0;
        for (k, &tk) in self.times.iter().enumerate() {
            if (tk - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        let tb = self.times[best];
        let warn = ((tb - t).abs() > 1e-9 * (1.0 + t.abs()))
            .then(|| format!("time {t} is not on the record grid, using nearest record {tb}"));
        (best, warn)
    }

    pub fn blown_count(&self) -> usize {
        self.blown.iter().filter(|&&b| b).count()
    }

    /// Mean and covariance of one record across non-blown paths, with the
    /// standard error of every covariance entry.
    pub fn moments(&self, record: usize) -> MomentReport {
        let d = self.state_dim();
        let live: Vec<usize> = (0..self.n_paths).filter(|&p| !self.blown[p]).collect();
        let m = live.len() as f64;
        let mut mean: DVector<f64> = DVector::zeros(d);
        for &p in &live {
            for (i, v) in self.state(p, record).iter().enumerate() {
                mean[i] += v;
            }
        }
        mean /= m;
        let mut cov: DMatrix<f64> = DMatrix::zeros(d, d);
        let mut sq: DMatrix<f64> = DMatrix::zeros(d, d);
        for &p in &live {
            let s = self.state(p, record);
            for i in 0..d {
                for j in 0..d {
                    let prod = (s[i] - mean[i]) * (s[j] - mean[j]);
                    cov[(i, j)] += prod;
                    sq[(i, j)] += prod * prod;
                }
            }
        }
        let cov_mean = &cov / m;
        let se = DMatrix::from_fn(d, d, |i, j| {
            let var = sq[(i, j)] / m - cov_mean[(i, j)] * cov_mean[(i, j)];
            (var.max(0.0) / m).sqrt()
        });
        let mean_se = DVector::from_fn(d, |i, _| (cov_mean[(i, i)] / m).sqrt());
        MomentReport {
            samples: live.len(),
            mean,
            mean_se,
            covariance: cov / (m - 1.0),
            covariance_se: se,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentReport {
    pub samples: usize,
    pub mean: DVector<f64>,
    pub mean_se: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub covariance_se: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct LangevinParams {
    pub n: usize,
    pub v0: Vec<f64>,
    pub x0: Vec<f64>,
    pub t_final: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub friction: bool,
    /// noise amplitude, sqrt(2) for the model; 0 turns the integrator deterministic
    pub noise: f64,
    /// record every this many steps (the final state is always recorded)
    pub record_every: usize,
}

impl LangevinParams {
    pub fn new(n: usize, t_final: f64, dt: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            n,
            v0: vec![0.0; n],
            x0: vec![0.0; n],
            t_final,
            dt,
            n_paths,
            seed,
            friction: false,
            noise: std::f64::consts::SQRT_2,
            record_every: usize::MAX,
        }
    }
}

fn record_steps(n_steps: usize, every: usize) -> Vec<usize> {
    let every = every.max(1);
    let mut v: Vec<usize> = (0..=n_steps).step_by(every.min(n_steps.max(1))).collect();
    if *v.last().unwrap() != n_steps {
        v.push(n_steps);
    }
    v
}

fn check_steps(horizon: f64, dt: f64, n_paths: usize) -> Result<usize> {
    if !(dt > 0.0) || !(horizon > 0.0) || n_paths == 0 {
        return domain("need dt > 0, a positive horizon and at least one path");
    }
    if dt > 1e-2 * horizon * (1.0 + 1e-12) {
        return domain(format!("dt = {dt} exceeds 1e-2 times the horizon {horizon}"));
    }
    Ok((horizon / dt).round() as usize)
}

/// Euler–Maruyama for dV = noise dW - [friction] V dt, dX = V dt.
pub fn simulate_langevin(par: &LangevinParams) -> Result<PathEnsemble> {
    let n = par.n;
    if n == 0 || par.v0.len() != n || par.x0.len() != n {
        return domain("initial velocity and position must have length n >= 1");
    }
    let n_steps = check_steps(par.t_final, par.dt, par.n_paths)?;
    let dt = par.t_final / n_steps as f64;
    let rec = record_steps(n_steps, par.record_every);
    let d = 2 * n;
    let sdt = par.noise * dt.sqrt();
    let per_path: Vec<(Vec<f64>, bool)> = (0..par.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = path_rng(par.seed, path);
            let mut v = par.v0.clone();
            let mut x = par.x0.clone();
            let mut out = Vec::with_capacity(rec.len() * d);
            let mut next = 0;
            let mut blown = false;
            for step in 0..=n_steps {
                if rec[next] == step {
                    out.extend_from_slice(&v);
                    out.extend_from_slice(&x);
                    next += 1;
                }
                if step == n_steps {
                    break;
                }
                if !blown {
                    for i in 0..n {
                        let xi: f64 = StandardNormal.sample(&mut rng);
                        let drift = if par.friction { -v[i] * dt } else { 0.0 };
                        x[i] += v[i] * dt;
                        v[i] += drift + sdt * xi;
                    }
                    if v.iter().chain(&x).any(|c| !c.is_finite() || c.abs() > BLOWUP) {
                        blown = true;
                        let last = &out[out.len() - d..];
                        v.copy_from_slice(&last[..n]);
                        x.copy_from_slice(&last[n..]);
                    }
                }
            }
            (out, blown)
        })
        .collect();
    Ok(assemble(StateLayout::Langevin { n }, dt, n_steps, par.n_paths, par.seed, &rec, per_path))
}

fn assemble(
    layout: StateLayout,
    dt: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    rec: &[usize],
    per_path: Vec<(Vec<f64>, bool)>,
) -> PathEnsemble {
    let mut states = Vec::with_capacity(n_paths * rec.len() * layout.state_dim());
    let mut blown = Vec::with_capacity(n_paths);
    for (s, b) in per_path {
        states.extend(s);
        blown.push(b);
    }
    PathEnsemble {
        layout,
        dt,
        n_steps,
        n_paths,
        seed,
        times: rec.iter().map(|&k| k as f64 * dt).collect(),
        states,
        blown,
    }
}

#[derive(Clone, Debug)]
pub struct RelativisticParams {
    pub n: usize,
    pub p0: Vec<f64>,
    pub x0: Vec<f64>,
    pub t0: f64,
    /// proper-time horizon S
    pub s_final: f64,
    pub ds: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub noise: f64,
    pub record_every: usize,
}

impl RelativisticParams {
    pub fn new(n: usize, s_final: f64, ds: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            n,
            p0: vec![0.0; n],
            x0: vec![0.0; n],
            t0: 0.0,
            s_final,
            ds,
            n_paths,
            seed,
            noise: std::f64::consts::SQRT_2,
            record_every: usize::MAX,
        }
    }
}

/// Euler–Maruyama for dP = noise sqrt(|P|^2+1) dW, dX = P ds, dT = sqrt(|P|^2+1) ds.
pub fn simulate_relativistic(par: &RelativisticParams) -> Result<PathEnsemble> {
    let n = par.n;
    if n == 0 || par.p0.len() != n || par.x0.len() != n {
        return domain("initial momentum and position must have length n >= 1");
    }
    let n_steps = check_steps(par.s_final, par.ds, par.n_paths)?;
    let ds = par.s_final / n_steps as f64;
    let rec = record_steps(n_steps, par.record_every);
    let d = 2 * n + 1;
    let sds = par.noise * ds.sqrt();
    let per_path: Vec<(Vec<f64>, bool)> = (0..par.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = path_rng(par.seed, path);
            let mut p = par.p0.clone();
            let mut x = par.x0.clone();
            let mut t = par.t0;
            let mut out = Vec::with_capacity(rec.len() * d);
            let mut next = 0;
            let mut blown = false;
            for step in 0..=n_steps {
                if rec[next] == step {
                    out.extend_from_slice(&p);
                    out.extend_from_slice(&x);
                    out.push(t);
                    next += 1;
                }
                if step == n_steps {
                    break;
                }
                if !blown {
                    let g = lorentz_factor(&p);
                    t += g * ds;
                    for i in 0..n {
                        let xi: f64 = StandardNormal.sample(&mut rng);
                        x[i] += p[i] * ds;
                        p[i] += sds * g * xi;
                    }
                    if p.iter().chain(&x).any(|c| !c.is_finite() || c.abs() > BLOWUP) || !t.is_finite() {
                        blown = true;
                        let last = &out[out.len() - d..];
                        p.copy_from_slice(&last[..n]);
                        x.copy_from_slice(&last[n..2 * n]);
                        t = last[2 * n];
                    }
                }
            }
            (out, blown)
        })
        .collect();
    Ok(assemble(StateLayout::Relativistic { n }, ds, n_steps, par.n_paths, par.seed, &rec, per_path))
}

/// sqrt(|p|^2 + 1)
pub fn lorentz_factor(p: &[f64]) -> f64 {
    (p.iter().map(|v| v * v).sum::<f64>() + 1.0).sqrt()
}

/// Largest |P|/sqrt(|P|^2+1) over every recorded state, and whether the
/// recorded time component increases strictly along every path.
pub fn relativistic_path_checks(ens: &PathEnsemble) -> Result<(f64, bool)> {
    let StateLayout::Relativistic { n } = ens.layout else {
        return domain("relativistic checks need a relativistic ensemble");
    };
    let mut vmax = 0.0f64;
    let mut increasing = true;
    for path in 0..ens.n_paths {
        let mut prev = f64::NEG_INFINITY;
        for r in 0..ens.n_records() {
            let s = ens.state(path, r);
            let p = &s[..n];
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            vmax = vmax.max(norm / lorentz_factor(p));
            if !(s[2 * n] > prev) && !ens.blown[path] {
                increasing = false;
            }
            prev = s[2 * n];
        }
    }
    Ok((vmax, increasing))
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityReport {
    /// normalisation used for Γ, stated with every comparison
    pub header: String,
    pub time: f64,
    pub warning: Option<String>,
    pub samples: usize,
    pub bandwidth: Vec<f64>,
    pub kde_mass: f64,
    pub gamma_mass: f64,
    pub l1: f64,
}

/// Product-Gaussian KDE (Silverman bandwidth) of the frictionless (V, X)
/// ensemble against Γ. The kernels act in sphered coordinates
/// u = L^{-1}(s - mean) with L L^T the sample covariance, so the product
/// kernel does not oversmooth across the strong V-X correlation.
/// The SDE generator is Δ_v - v.D_x with noise sqrt(2), so the transition
/// density is Γ for A0 = I evaluated with the position reflected, x -> -x,
/// which turns -v.D_x into the group drift +v.D_x.
/// L1 = Int |kde_u(u) - det L Γ(mean + L u)| du on a grid over [-6, 6]^d.
pub fn density_vs_gamma(ens: &PathEnsemble, gamma: &GammaEvaluator, t: f64, grid_points: usize) -> Result<DensityReport> {
    let StateLayout::Langevin { n } = ens.layout else {
        return domain("density comparison needs a Langevin ensemble");
    };
    let lie = gamma.lie();
    if lie.dim() != 2 * n || lie.m0() != n {
        return domain("Γ must be the kinetic evaluator of matching dimension");
    }
    if grid_points < 8 {
        return domain("the density grid needs at least 8 points per axis");
    }
    let (record, warning) = ens.nearest_record(t);
    let t_rec = ens.times[record];
    if t_rec <= 0.0 {
        return domain("density comparison needs a positive time");
    }
    let d = 2 * n;
    let mom = ens.moments(record);
    let m = mom.samples as f64;
    let chol = mom
        .covariance
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Evaluation("sample covariance is not positive definite".into()))?;
    let l = chol.l();
    let det_l: f64 = (0..d).map(|i| l[(i, i)]).product();
    let bw = (4.0 / ((d as f64 + 2.0) * m)).powf(1.0 / (d as f64 + 4.0));
    let (lo, hi) = (-6.0, 6.0);
    let h = (hi - lo) / (grid_points - 1) as f64;
    let total = grid_points.pow(d as u32);
    let mut kde = vec![0.0; total];
    let norm = (bw * (2.0 * std::f64::consts::PI).sqrt()).powi(-(d as i32)) / m;
    let reach = 6.0;
    let mut k1: Vec<Vec<(usize, f64)>> = vec![Vec::new(); d];
    let mut u = DVector::zeros(d);
    for path in 0..ens.n_paths {
        if ens.blown[path] {
            continue;
        }
        let s = ens.state(path, record);
        for i in 0..d {
            u[i] = s[i] - mom.mean[i];
        }
        let u = l.solve_lower_triangular(&u).expect("nonsingular factor");
        let mut inside = true;
        for i in 0..d {
            k1[i].clear();
            let a = ((u[i] - reach * bw - lo) / h).ceil().max(0.0);
            let b = ((u[i] + reach * bw - lo) / h).floor().min((grid_points - 1) as f64);
            if b < a {
                inside = false;
                break;
            }
            for g in a as usize..=b as usize {
                let r = (lo + g as f64 * h - u[i]) / bw;
                k1[i].push((g, (-0.5 * r * r).exp()));
            }
        }
        if inside {
            accumulate_outer(&k1, grid_points, &mut kde, norm);
        }
    }
    let mut l1 = 0.0;
    let mut kde_mass = 0.0;
    let mut gamma_mass = 0.0;
    let zeta = GroupPoint::new(reflect(&ens.initial_state(), n), 0.0);
    let mut uc = DVector::zeros(d);
    for (flat, &kv) in kde.iter().enumerate() {
        let mut rem = flat;
        let mut w = 1.0;
        for i in 0..d {
            let g = rem % grid_points;
            rem /= grid_points;
            uc[i] = lo + g as f64 * h;
            w *= h * if g == 0 || g == grid_points - 1 { 0.5 } else { 1.0 };
        }
        let sc = &mom.mean + &l * &uc;
        let z = GroupPoint::new(reflect(sc.as_slice(), n), t_rec);
        let gv = det_l * gamma.gamma(&z, &zeta)?;
        l1 += w * (kv - gv).abs();
        kde_mass += w * kv;
        gamma_mass += w * gv;
    }
    Ok(DensityReport {
        header: "Γ built with A0 = I (generator Δ_v, process covariance 2 C(t)), position reflected".into(),
        time: t_rec,
        warning,
        samples: mom.samples,
        bandwidth: (0..d).map(|i| bw * mom.covariance[(i, i)].sqrt()).collect(),
        kde_mass,
        gamma_mass,
        l1,
    })
}

fn reflect(s: &[f64], n: usize) -> Vec<f64> {
    s.iter().enumerate().map(|(i, &v)| if i >= n { -v } else { v }).collect()
}

fn accumulate_outer(k1: &[Vec<(usize, f64)>], gp: usize, out: &mut [f64], scale: f64) {
    fn rec(k1: &[Vec<(usize, f64)>], axis: usize, gp: usize, index: usize, stride: usize, w: f64, out: &mut [f64]) {
        if axis == k1.len() {
            out[index] += w;
            return;
        }
        for &(g, kv) in &k1[axis] {
            rec(k1, axis + 1, gp, index + g * stride, stride * gp, w * kv, out);
        }
    }
    rec(k1, 0, gp, 0, 1, scale, out);
}

impl PathEnsemble {
    /// State of path 0 at record 0 (all paths share it).
    pub fn initial_state(&self) -> Vec<f64> {
        self.state(0, 0).to_vec()
    }
}

/// Point (p, x, t) of R^{2n+1} for the relativistic calculus.
#[derive(Clone, Debug, PartialEq)]
pub struct RelativisticPoint {
    pub p: Vec<f64>,
    pub x: Vec<f64>,
    pub t: f64,
}

impl RelativisticPoint {
    pub fn new(p: Vec<f64>, x: Vec<f64>, t: f64) -> Result<Self> {
        if p.len() != x.len() || p.is_empty() {
            return domain("momentum and position must have the same positive length");
        }
        Ok(Self { p, x, t })
    }

    pub fn origin(n: usize) -> Self {
        Self { p: vec![0.0; n], x: vec![0.0; n], t: 0.0 }
    }

    pub fn gamma(&self) -> f64 {
        lorentz_factor(&self.p)
    }

    pub fn velocity(&self) -> Vec<f64> {
        let g = self.gamma();
        self.p.iter().map(|v| v / g).collect()
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = self.p.clone();
        v.extend_from_slice(&self.x);
        v.push(self.t);
        v
    }

    fn from_vec(v: &[f64], n: usize) -> Self {
        Self { p: v[..n].to_vec(), x: v[n..2 * n].to_vec(), t: v[2 * n] }
    }

    fn max_abs_diff(&self, o: &Self) -> f64 {
        self.to_vec().iter().zip(o.to_vec()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// a o b = (p_b g_a + p_a g_b, x_a + x_b g_a + p_a t_b, t_a + t_b g_a + p_a . x_b)
/// with g = sqrt(|p|^2 + 1).
pub fn lorentz_compose(a: &RelativisticPoint, b: &RelativisticPoint) -> Result<RelativisticPoint> {
    let n = a.p.len();
    if b.p.len() != n {
        return domain("points must share the dimension n");
    }
    let ga = a.gamma();
    let gb = b.gamma();
    let p = (0..n).map(|i| b.p[i] * ga + a.p[i] * gb).collect();
    let x = (0..n).map(|i| a.x[i] + b.x[i] * ga + a.p[i] * b.t).collect();
    let dot: f64 = (0..n).map(|i| a.p[i] * b.x[i]).sum();
    Ok(RelativisticPoint { p, x, t: a.t + b.t * ga + dot })
}

/// Right inverse b with a o b = 0, by damped Newton with a finite-difference Jacobian.
pub fn lorentz_inverse(a: &RelativisticPoint) -> Result<RelativisticPoint> {
    let n = a.p.len();
    let d = 2 * n + 1;
    let residual = |v: &[f64]| -> DVector<f64> {
        let b = RelativisticPoint::from_vec(v, n);
        DVector::from_vec(lorentz_compose(a, &b).expect("matching dimensions").to_vec())
    };
    let mut v = vec![0.0; d];
    let mut r = residual(&v);
    for _ in 0..100 {
        let rn = r.amax();
        if rn < 1e-14 * (1.0 + a.to_vec().iter().fold(0.0f64, |m, c| m.max(c.abs()))) {
            return Ok(RelativisticPoint::from_vec(&v, n));
        }
        let mut jac = DMatrix::zeros(d, d);
        for k in 0..d {
            let h = 1e-6 * (1.0 + v[k].abs());
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[k] += h;
            vm[k] -= h;
            let col = (residual(&vp) - residual(&vm)) / (2.0 * h);
            jac.set_column(k, &col);
        }
        let step = jac
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| Error::NoConvergence("singular Jacobian in the Lorentz inverse".into()))?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = v.iter().zip(step.iter()).map(|(a, s)| a + lambda * s).collect();
            let rt = residual(&trial);
            if rt.amax() < rn || lambda < 1e-6 {
                v = trial;
                r = rt;
                break;
            }
            lambda *= 0.5;
        }
    }
    Err(Error::NoConvergence(format!("Lorentz inverse residual {:e}", r.amax())))
}

#[derive(Clone, Debug, Serialize)]
pub struct LorentzReport {
    pub left_identity_error: f64,
    /// |a o b| for the right inverse b found by Newton
    pub inverse_error: f64,
    /// |b o a|; nonzero for n >= 2, where the law is not associative
    pub left_inverse_error: f64,
    pub associativity_defect: f64,
    /// eps and the max deviation from the Galilean law in the (p, x) components
    pub galilean: Vec<(f64, f64)>,
    pub galilean_exponent: f64,
}

/// Identity, inverse and small-momentum checks. In the small-momentum
/// regime both momenta are scaled by eps; the (p, x) components then differ
/// from the Galilean law by O(eps^2), the time component by the O(eps)
/// simultaneity shift p_a . x_b, which the comparison leaves out.
pub fn lorentz_identity_checks(n: usize, samples: usize, seed: u64) -> Result<LorentzReport> {
    use rand::RngExt;
    let mut rng = path_rng(seed, 0);
    let mut rand_point = |scale: f64| {
        let mut c = || scale * (2.0 * rng.random::<f64>() - 1.0);
        let p: Vec<f64> = (0..n).map(|_| c()).collect();
        let x: Vec<f64> = (0..n).map(|_| c()).collect();
        RelativisticPoint { p, x, t: c() }
    };
    let e = RelativisticPoint::origin(n);
    let mut left = 0.0f64;
    let mut inv = 0.0f64;
    let mut left_inv = 0.0f64;
    let mut assoc = 0.0f64;
    let mut pairs = Vec::new();
    for _ in 0..samples {
        let a = rand_point(2.0);
        left = left.max(lorentz_compose(&e, &a)?.max_abs_diff(&a));
        let b = lorentz_inverse(&a)?;
        inv = inv.max(lorentz_compose(&a, &b)?.max_abs_diff(&e));
        left_inv = left_inv.max(lorentz_compose(&b, &a)?.max_abs_diff(&e));
        let c = rand_point(1.0);
        let d = rand_point(1.0);
        let l = lorentz_compose(&lorentz_compose(&a, &c)?, &d)?;
        let r = lorentz_compose(&a, &lorentz_compose(&c, &d)?)?;
        assoc = assoc.max(l.max_abs_diff(&r));
        pairs.push((a, c));
    }
    let mut galilean = Vec::new();
    for k in 4..=12 {
        let eps = 2f64.powi(-k);
        let mut worst = 0.0f64;
        for (a, b) in &pairs {
            let sa = RelativisticPoint { p: a.p.iter().map(|v| v * eps).collect(), ..a.clone() };
            let sb = RelativisticPoint { p: b.p.iter().map(|v| v * eps).collect(), ..b.clone() };
            let rel = lorentz_compose(&sa, &sb)?;
            let gal = compose_kinetic_alt(&galilean_point(&sa), &galilean_point(&sb))?;
            for i in 0..n {
                worst = worst.max((rel.p[i] - gal.x[i]).abs()).max((rel.x[i] - gal.x[n + i]).abs());
            }
        }
        galilean.push((eps, worst));
    }
    let exponent = log_log_slope(&galilean);
    Ok(LorentzReport {
        left_identity_error: left,
        inverse_error: inv,
        left_inverse_error: left_inv,
        associativity_defect: assoc,
        galilean,
        galilean_exponent: exponent,
    })
}

fn galilean_point(a: &RelativisticPoint) -> GroupPoint {
    let mut v = a.p.clone();
    v.extend_from_slice(&a.x);
    GroupPoint::new(v, a.t)
}

/// Least-squares slope of log y against log x.
pub fn log_log_slope(data: &[(f64, f64)]) -> f64 {
    let m = data.len() as f64;
    let lx: Vec<f64> = data.iter().map(|d| d.0.ln()).collect();
    let ly: Vec<f64> = data.iter().map(|d| d.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

/// Square root sigma of I + p (x) p with sigma_jk = delta_jk + p_j p_k / (1 + sqrt(|p|^2+1)).
pub fn relativistic_sigma(p: &[f64]) -> DMatrix<f64> {
    let n = p.len();
    let c = 1.0 / (1.0 + lorentz_factor(p));
    DMatrix::from_fn(n, n, |j, k| if j == k { 1.0 } else { 0.0 } + c * p[j] * p[k])
}

/// max(|sigma sigma^T - (I + p (x) p)|, |sqrt(|p|^2+1) D - (I + p (x) p)|) entrywise.
pub fn relativistic_diffusion_identity(p: &[f64]) -> f64 {
    let n = p.len();
    let target = DMatrix::from_fn(n, n, |j, k| if j == k { 1.0 } else { 0.0 } + p[j] * p[k]);
    let s = relativistic_sigma(p);
    let g = lorentz_factor(p);
    let diffusion = &target / g;
    let r1 = (&s * s.transpose() - &target).amax();
    let r2 = (diffusion * g - &target).amax();
    r1.max(r2)
}

const KLAB_MAGIC: &[u8; 4] = b"KLAB";
const KLAB_VERSION: u32 = 1;

/// Binary trajectory file: magic "KLAB", version u32, state dimension u32,
/// paths u64, records u64, dt f64, seed u64, then the states as
/// little-endian f64, path-major.
pub fn write_klab<W: Write>(ens: &PathEnsemble, mut w: W) -> Result<()> {
    w.write_all(KLAB_MAGIC)?;
    w.write_all(&KLAB_VERSION.to_le_bytes())?;
    w.write_all(&(ens.state_dim() as u32).to_le_bytes())?;
    w.write_all(&(ens.n_paths as u64).to_le_bytes())?;
    w.write_all(&(ens.n_records() as u64).to_le_bytes())?;
    w.write_all(&ens.dt.to_le_bytes())?;
    w.write_all(&ens.seed.to_le_bytes())?;
    let mut buf = Vec::with_capacity(ens.states.len() * 8);
    for v in &ens.states {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct KlabData {
    pub state_dim: usize,
    pub n_paths: usize,
    pub n_records: usize,
    pub dt: f64,
    pub seed: u64,
    pub values: Vec<f64>,
}

pub fn read_klab<R: Read>(mut r: R) -> Result<KlabData> {
    let mut head = [0u8; 44];
    r.read_exact(&mut head)?;
    if &head[..4] != KLAB_MAGIC {
        return domain("not a KLAB file");
    }
    let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(head[o..o + 8].try_into().expect("8 bytes"));
    if u32_at(4) != KLAB_VERSION {
        return domain(format!("unsupported KLAB version {}", u32_at(4)));
    }
    let state_dim = u32_at(8) as usize;
    let n_paths = u64_at(12) as usize;
    let n_records = u64_at(20) as usize;
    let dt = f64::from_bits(u64_at(28));
    let seed = u64_at(36);
    let count = state_dim * n_paths * n_records;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != 8 * count {
        return domain(format!("KLAB body has {} bytes, expected {}", body.len(), 8 * count));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(KlabData { state_dim, n_paths, n_records, dt, seed, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorentz_example_by_substitution() {
        let a = RelativisticPoint::new(vec![1.0], vec![0.0], 0.0).unwrap();
        let b = RelativisticPoint::new(vec![0.0], vec![1.0], 0.0).unwrap();
        let c = lorentz_compose(&a, &b).unwrap();
        assert_eq!(c.p, vec![1.0]);
        assert!((c.x[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.t, 1.0);
    }

    #[test]
    fn sigma_for_unit_momentum() {
        let s = relativistic_sigma(&[1.0]);
        assert!((s[(0, 0)] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(relativistic_diffusion_identity(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn klab_round_trip() {
        let mut par = LangevinParams::new(1, 0.1, 1e-3, 3, 9);
        par.record_every = 25;
        let ens = simulate_langevin(&par).unwrap();
        let mut buf = Vec::new();
        write_klab(&ens, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"KLAB");
        let back = read_klab(buf.as_slice()).unwrap();
        assert_eq!(back.values, ens.states);
        assert_eq!((back.state_dim, back.n_paths, back.n_records, back.seed), (2, 3, 5, 9));
        assert_eq!(back.dt, ens.dt);
        assert!(read_klab(&buf[..20]).is_err());
    }

    #[test]
    fn record_plan_includes_both_ends() {
        assert_eq!(record_steps(10, 4), vec![0, 4, 8, 10]);
        assert_eq!(record_steps(10, usize::MAX), vec![0, 10]);
    }
}
