//! Checkerboard-coefficient solves feeding every inequality check at two
//! resolutions.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checks::{
    harnack_ratio, holder_estimate, moser_check, weak_harnack_ratio, weak_poincare_check, HarnackGeometry,
};
use super::{checkerboard, kinetic_axes, solve, BoundaryCondition, Coefficient, OperatorSpec};
use crate::error::Result;
use crate::grid::GridField;
use crate::group::GroupPoint;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    pub runs: usize,
    pub lambda: f64,
    pub contrast: f64,
    /// (velocity, position, time) node counts
    pub coarse: [usize; 3],
    pub fine: [usize; 3],
    pub seed: u64,
    pub geometry: HarnackGeometry,
    pub moser_rho: f64,
    pub moser_r: f64,
    pub moser_p: f64,
    pub weak_p: f64,
    pub thetas: Vec<f64>,
    /// Allowed relative change of each fitted constant under refinement.
    pub drift_tol: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            runs: 20,
            lambda: 0.2,
            contrast: 10.0,
            coarse: [65, 257, 129],
            fine: [129, 513, 257],
            seed: 2024,
            geometry: HarnackGeometry { omega: 0.5, rho: 0.3, eta: 0.5, big_r: 1.05, theta0: 0.5 },
            moser_rho: 0.75,
            moser_r: 1.0,
            moser_p: 1.0,
            weak_p: 1.0,
            thetas: vec![0.25, 0.5, 0.75],
            drift_tol: 0.1,
        }
    }
}

/// Random data of one battery member.
#[derive(Clone, Debug, Serialize)]
pub struct RunData {
    pub scale: f64,
    pub phase: [f64; 2],
    pub centre: [f64; 2],
    pub width: [f64; 2],
}

impl RunData {
    fn draw(seed: u64, index: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let scale = 0.15 + 0.25 * rng.random::<f64>();
        Self {
            scale,
            phase: [scale * rng.random::<f64>(), scale * rng.random::<f64>()],
            centre: [0.4 * rng.random::<f64>() - 0.2, 0.4 * rng.random::<f64>() - 0.2],
            width: [0.8 + 0.4 * rng.random::<f64>(), 1.5 + rng.random::<f64>()],
        }
    }

    fn initial(&self) -> Coefficient {
        let (c, w) = (self.centre, self.width);
        Coefficient::space(move |z| {
            let s0 = (z[0] - c[0]) / w[0];
            let s1 = (z[1] - c[1]) / w[1];
            (1.0 - s0 * s0).max(0.0).powi(3) * (1.0 - s1 * s1).max(0.0).powi(3)
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BatteryRow {
    pub index: usize,
    pub contrast: f64,
    pub nodes: [usize; 3],
    pub data: RunData,
    pub moser: f64,
    pub harnack: f64,
    pub weak_harnack: f64,
    pub holder_alpha: f64,
    pub holder: f64,
    pub poincare: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckSummary {
    pub check: String,
    pub coarse: f64,
    pub fine: f64,
    pub drift: f64,
    /// The fitted constant: the largest fine-grid ratio.
    pub fitted_constant: f64,
    /// Members exceeding the fitted constant (coarse ones allowed the drift tolerance).
    pub violations: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BatteryReport {
    pub config: BatteryConfig,
    pub coarse: Vec<BatteryRow>,
    pub fine: Vec<BatteryRow>,
    pub summaries: Vec<CheckSummary>,
    pub alpha_range: [[f64; 2]; 2],
    pub pass: bool,
}

fn spec_for(data: &RunData, lambda: f64, big: f64) -> OperatorSpec {
    let a = checkerboard(lambda, big, data.scale, data.phase.to_vec());
    OperatorSpec::with_diffusion(1, a, lambda, big)
}

fn solve_member(cfg: &BatteryConfig, spec: &OperatorSpec, data: &RunData, nodes: [usize; 3]) -> Result<GridField> {
    let g = &cfg.geometry;
    let axes = kinetic_axes(1, 2.0 * g.big_r, 8.0 * g.big_r, (-1.0 - g.eta * g.eta, 0.0), nodes)?;
    solve(spec, &axes, &data.initial(), &BoundaryCondition::InflowDirichlet(Coefficient::zero()), None)
}

/// u psi(t) with psi a C^1 ramp from 0 at the middle of the zero-set time
/// window to 1 at its top, so u vanishes on the lower half of the zero-set
/// box and is unchanged on Q_1.
pub fn cutoff_for_poincare(u: &GridField, g: &HarnackGeometry) -> GridField {
    let ta = -1.0 - 0.5 * g.eta * g.eta;
    let tb = -1.0;
    let d = u.dim() - 1;
    let mut out = u.clone();
    let mut c = vec![0.0; u.dim()];
    for i in 0..u.len() {
        u.coords_into(i, &mut c);
        let s = ((c[d] - ta) / (tb - ta)).clamp(0.0, 1.0);
        out.values[i] *= s * s * (3.0 - 2.0 * s);
    }
    out
}

/// Operator and solution of member `index` at the given (v, x, t) node counts.
pub fn battery_member_solution(cfg: &BatteryConfig, index: usize, nodes: [usize; 3]) -> Result<(OperatorSpec, GridField)> {
    let data = RunData::draw(cfg.seed, index);
    let spec = spec_for(&data, cfg.lambda, cfg.lambda * cfg.contrast);
    let u = solve_member(cfg, &spec, &data, nodes)?;
    Ok((spec, u))
}

fn evaluate(cfg: &BatteryConfig, index: usize, lambda: f64, big: f64, nodes: [usize; 3]) -> Result<BatteryRow> {
    let data = RunData::draw(cfg.seed, index);
    let spec = spec_for(&data, lambda, big);
    let contrast = big / lambda;
    let u = solve_member(cfg, &spec, &data, nodes)?;
    let g = &cfg.geometry;
    let moser = moser_check(&spec, &u, &GroupPoint::origin(2), cfg.moser_rho, cfg.moser_r, cfg.moser_p)?;
    let harnack = harnack_ratio(&u, g, 0.0)?;
    let weak = weak_harnack_ratio(&u, g, 0.0, cfg.weak_p)?;
    let holder = holder_estimate(&u, &spec.f, spec.q)?;
    let poincare = weak_poincare_check(&cutoff_for_poincare(&u, g), g, &cfg.thetas)?;
    Ok(BatteryRow {
        index,
        contrast,
        nodes,
        data,
        moser: moser.fitted_constant,
        harnack: harnack.ratio,
        weak_harnack: weak.ratio,
        holder_alpha: holder.alpha,
        holder: holder.fitted_constant,
        poincare: poincare.ratio_at(g.theta0),
    })
}

fn summarize(name: &str, coarse: &[f64], fine: &[f64], tol: f64) -> CheckSummary {
    let cmax = coarse.iter().cloned().fold(0.0, f64::max);
    let fmax = fine.iter().cloned().fold(0.0, f64::max);
    let drift = (fmax - cmax).abs() / fmax;
    let violations = fine.iter().filter(|&&v| v > fmax).count()
        + coarse.iter().filter(|&&v| v > fmax * (1.0 + tol)).count();
    let finite = cmax.is_finite() && fmax.is_finite() && fmax > 0.0;
    CheckSummary {
        check: name.to_string(),
        coarse: cmax,
        fine: fmax,
        drift,
        fitted_constant: fmax,
        violations,
        pass: finite && drift <= tol && violations == 0,
    }
}

/// Runs every member at both resolutions.
pub fn run_battery(cfg: &BatteryConfig) -> Result<BatteryReport> {
    let jobs: Vec<(usize, [usize; 3])> =
        (0..cfg.runs).flat_map(|i| [(i, cfg.coarse), (i, cfg.fine)]).collect();
    let rows: Vec<BatteryRow> =
        jobs.par_iter().map(|&(i, nodes)| evaluate(cfg, i, cfg.lambda, cfg.lambda * cfg.contrast, nodes)).collect::<Result<_>>()?;
    let (coarse, fine): (Vec<BatteryRow>, Vec<BatteryRow>) = rows.into_iter().partition(|r| r.nodes == cfg.coarse);
    let pick = |rows: &[BatteryRow], f: fn(&BatteryRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let checks: [(&str, fn(&BatteryRow) -> f64); 5] = [
        ("moser", |r| r.moser),
        ("harnack", |r| r.harnack),
        ("weak_harnack", |r| r.weak_harnack),
        ("holder", |r| r.holder),
        ("weak_poincare", |r| r.poincare),
    ];
    let summaries: Vec<CheckSummary> = checks
        .iter()
        .map(|(name, f)| summarize(name, &pick(&coarse, *f), &pick(&fine, *f), cfg.drift_tol))
        .collect();
    let range = |rows: &[BatteryRow]| {
        let a = pick(rows, |r| r.holder_alpha);
        [a.iter().cloned().fold(f64::INFINITY, f64::min), a.iter().cloned().fold(0.0, f64::max)]
    };
    let alpha_range = [range(&coarse), range(&fine)];
    let pass = summaries.iter().all(|s| s.pass);
    Ok(BatteryReport { config: cfg.clone(), coarse, fine, summaries, alpha_range, pass })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrendReport {
    pub contrasts: Vec<f64>,
    pub moser: Vec<f64>,
    pub harnack: Vec<f64>,
    pub spearman_moser: f64,
    pub spearman_harnack: f64,
}

/// One battery member re-solved on the coarse grid at each contrast, with
/// Lambda held at its battery value and lambda = Lambda / contrast.
pub fn trend_study(cfg: &BatteryConfig, contrasts: &[f64]) -> Result<TrendReport> {
    let big = cfg.lambda * cfg.contrast;
    let rows: Vec<BatteryRow> =
        contrasts.par_iter().map(|&c| evaluate(cfg, 0, big / c, big, cfg.coarse)).collect::<Result<_>>()?;
    let moser: Vec<f64> = rows.iter().map(|r| r.moser).collect();
    let harnack: Vec<f64> = rows.iter().map(|r| r.harnack).collect();
    Ok(TrendReport {
        contrasts: contrasts.to_vec(),
        spearman_moser: spearman(contrasts, &moser),
        spearman_harnack: spearman(contrasts, &harnack),
        moser,
        harnack,
    })
}
