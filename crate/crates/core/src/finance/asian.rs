//! Fixed-strike Asian options through the degenerate pricing PDE, and a
//! Monte Carlo reference.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Axis;
use crate::kfp::{solve, BoundaryCondition, Coefficient, OperatorSpec, Transport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// A = int log S dt, average exp(A / T)
    Geometric,
    /// A = int S dt, average A / T
    Arithmetic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Payoff {
    Call { strike: f64 },
    Put { strike: f64 },
}

impl Payoff {
    pub fn value(&self, average: f64) -> f64 {
        match *self {
            Payoff::Call { strike } => (average - strike).max(0.0),
            Payoff::Put { strike } => (strike - average).max(0.0),
        }
    }

    fn strike(&self) -> f64 {
        match *self {
            Payoff::Call { strike } | Payoff::Put { strike } => strike,
        }
    }

    fn scaled(&self, s: f64) -> Payoff {
        match *self {
            Payoff::Call { strike } => Payoff::Call { strike: strike / s },
            Payoff::Put { strike } => Payoff::Put { strike: strike / s },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsianModel {
    #[serde(rename = "S0")]
    pub s0: f64,
    pub sigma: f64,
    pub rate: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
    pub averaging: Averaging,
    pub payoff: Payoff,
}

impl AsianModel {
    fn validate(&self, allow_zero_vol: bool) -> Result<()> {
        let vol_ok = if allow_zero_vol { self.sigma >= 0.0 } else { self.sigma > 0.0 };
        if !(self.s0 > 0.0) || !(self.maturity > 0.0) || !vol_ok || !self.rate.is_finite() {
            return Err(Error::Domain(format!(
                "need S0 > 0, T > 0, sigma {} 0; got S0 = {}, T = {}, sigma = {}",
                if allow_zero_vol { ">=" } else { ">" },
                self.s0,
                self.maturity,
                self.sigma
            )));
        }
        if !(self.payoff.strike() >= 0.0) {
            return Err(Error::Domain("strike must be nonnegative".into()));
        }
        Ok(())
    }

    /// Price of the contract along the deterministic path S_t = S0 e^{rt}.
    pub fn deterministic_price(&self) -> f64 {
        let (r, t) = (self.rate, self.maturity);
        let avg = match self.averaging {
            Averaging::Geometric => self.s0 * (0.5 * r * t).exp(),
            Averaging::Arithmetic => {
                if r.abs() < 1e-12 {
                    self.s0
                } else {
                    self.s0 * (r * t).exp_m1() / (r * t)
                }
            }
        };
        (-r * t).exp() * self.payoff.value(avg)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsianGrid {
    /// Nodes on the price axis.
    pub nv: usize,
    /// Nodes on the average axis.
    pub nx: usize,
    /// Output time nodes (time to maturity).
    pub nt: usize,
    /// Combine with a second solve at half the spacing.
    pub richardson: bool,
    /// Convergence order assumed by the extrapolation.
    pub order: f64,
    /// Price-axis bounds in solver coordinates (log(S/S0) or S/S0).
    pub v_bounds: Option<[f64; 2]>,
    /// Average-axis bounds in solver coordinates.
    pub x_bounds: Option<[f64; 2]>,
}

impl Default for AsianGrid {
    fn default() -> Self {
        Self { nv: 81, nx: 241, nt: 2, richardson: true, order: 2.0, v_bounds: None, x_bounds: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AsianPrice {
    pub price: f64,
    /// |fine - coarse| when extrapolating; otherwise zero.
    pub discretization_estimate: f64,
    pub coarse: f64,
    pub fine: Option<f64>,
    pub v_bounds: [f64; 2],
    pub x_bounds: [f64; 2],
    pub nodes: [usize; 3],
    pub substeps: usize,
    pub dt: f64,
}

/// Localization in solver coordinates: the log-price band +-6 sigma sqrt(T)
/// around both ends of the drift, and the reachable average range widened
/// by 20%.
fn localization(m: &AsianModel) -> ([f64; 2], [f64; 2]) {
    let t = m.maturity;
    let mu = (m.rate - 0.5 * m.sigma * m.sigma) * t;
    let band = 6.0 * m.sigma * t.sqrt();
    let logs = [mu.min(0.0) - band, mu.max(0.0) + band];
    let v = match m.averaging {
        Averaging::Geometric => logs,
        Averaging::Arithmetic => [logs[0].exp(), logs[1].exp()],
    };
    let lo = (t * v[0]).min(0.0);
    let hi = (t * v[1]).max(0.0);
    let margin = 0.2 * (hi - lo);
    (v, [lo - margin, hi + margin])
}

struct Scaled {
    spec: OperatorSpec,
    payoff: Payoff,
    start: [f64; 2],
}

/// Pricing equation in time to maturity after normalizing by S0:
/// geometric: v = log(S/S0), x = (A - tau log S0) shifted so the answer sits at x = 0;
/// arithmetic: v = S/S0, x = A/S0.
fn scaled_problem(m: &AsianModel, v: [f64; 2]) -> Result<Scaled> {
    let (s2, r) = (m.sigma * m.sigma, m.rate);
    let payoff = m.payoff.scaled(m.s0);
    let mut spec = match m.averaging {
        Averaging::Geometric => {
            let a = 0.5 * s2;
            let mut spec = OperatorSpec::with_diffusion(1, Coefficient::Constant(a), a, a);
            spec.b = vec![Coefficient::Constant(r - 0.5 * s2)];
            spec
        }
        Averaging::Arithmetic => {
            if !(v[0] > 0.0) {
                return Err(Error::Localization("the price axis must stay above S = 0".into()));
            }
            let lo = 0.5 * s2 * v[0] * v[0] * (1.0 - 1e-9);
            let hi = 0.5 * s2 * v[1] * v[1] * (1.0 + 1e-9);
            let a = Coefficient::space(move |z| 0.5 * s2 * z[0] * z[0]);
            let mut spec = OperatorSpec::with_diffusion(1, a, lo, hi);
            spec.b = vec![Coefficient::space(move |z| (r - s2) * z[0])];
            spec
        }
    };
    spec.c = Coefficient::Constant(-r);
    spec.transport = Transport::Limited;
    let start = match m.averaging {
        Averaging::Geometric => [0.0, 0.0],
        Averaging::Arithmetic => [1.0, 0.0],
    };
    Ok(Scaled { spec, payoff, start })
}

fn average_of(avg: Averaging, x: f64, t: f64) -> f64 {
    match avg {
        Averaging::Geometric => (x / t).exp(),
        Averaging::Arithmetic => x / t,
    }
}

/// Discounted payoff of the expected terminal average from (v, x) with tau
/// remaining, in normalized units.
fn intrinsic(m: &AsianModel, payoff: Payoff, z: &[f64]) -> f64 {
    let (r, tt) = (m.rate, m.maturity);
    let (v, x, tau) = (z[0], z[1], z[2]);
    let x_end = match m.averaging {
        Averaging::Geometric => x + v * tau + 0.5 * (r - 0.5 * m.sigma * m.sigma) * tau * tau,
        Averaging::Arithmetic => {
            let growth = if r.abs() < 1e-12 { tau } else { (r * tau).exp_m1() / r };
            x + v * growth
        }
    };
    (-r * tau).exp() * payoff.value(average_of(m.averaging, x_end, tt))
}

/// Axis covering [lo, hi] with spacing (hi - lo)/(n - 1) and a node at `at`.
fn aligned_axis(lo: f64, hi: f64, n: usize, at: f64) -> Result<Axis> {
    let h = (hi - lo) / (n - 1) as f64;
    let below = ((at - lo) / h - 1e-9).ceil().max(0.0);
    let above = ((hi - at) / h - 1e-9).ceil().max(0.0);
    Axis::new(at - below * h, at + above * h, (below + above) as usize + 1)
}

fn solve_once(m: &AsianModel, v: [f64; 2], x: [f64; 2], nodes: [usize; 3]) -> Result<(f64, usize, f64)> {
    let sc = scaled_problem(m, v)?;
    let axes = vec![
        aligned_axis(v[0], v[1], nodes[0], sc.start[0])?,
        aligned_axis(x[0], x[1], nodes[1], sc.start[1])?,
        Axis::new(0.0, m.maturity, nodes[2])?,
    ];
    if axes[0].lo <= 0.0 && m.averaging == Averaging::Arithmetic {
        return Err(Error::Localization("the price axis must stay above S = 0".into()));
    }
    let sc = scaled_problem(m, [axes[0].lo, axes[0].hi])?;
    let (avg, t, payoff) = (m.averaging, m.maturity, sc.payoff);
    let initial = Coefficient::space(move |z| payoff.value(average_of(avg, z[1], t)));
    let model = m.clone();
    let far = Coefficient::space_time(move |z| intrinsic(&model, payoff, z));
    let u = solve(&sc.spec, &axes, &initial, &BoundaryCondition::InflowDirichlet(far), None)?;
    let last = u.last_axis_slice(nodes[2] - 1);
    let p = last
        .interpolate(&sc.start)
        .ok_or_else(|| Error::Localization("the pricing point is outside the grid".into()))?;
    let cfl = u.cfl.as_ref().map(|c| (c.substeps * (nodes[2] - 1), c.dt)).unwrap_or((0, 0.0));
    Ok((m.s0 * p, cfl.0, cfl.1))
}

/// Solves the pricing PDE backward from the payoff and returns Z(S0, A = 0, 0).
pub fn price_asian(m: &AsianModel, grid: &AsianGrid) -> Result<AsianPrice> {
    m.validate(false)?;
    if grid.nv < 5 || grid.nx < 5 || grid.nt < 2 {
        return Err(Error::Domain("need at least 5 price nodes, 5 average nodes and 2 time nodes".into()));
    }
    let (v_need, x_need) = localization(m);
    let v = grid.v_bounds.unwrap_or(v_need);
    let x = grid.x_bounds.unwrap_or(x_need);
    if v[0] > v_need[0] || v[1] < v_need[1] || x[0] > x_need[0] || x[1] < x_need[1] {
        return Err(Error::Localization(format!(
            "grid [{}, {}] x [{}, {}] does not localize the payoff mass; use at least [{}, {}] x [{}, {}]",
            v[0], v[1], x[0], x[1], v_need[0], v_need[1], x_need[0], x_need[1]
        )));
    }
    let nodes = [grid.nv, grid.nx, grid.nt];
    let (coarse, mut substeps, mut dt) = solve_once(m, v, x, nodes)?;
    let mut fine = None;
    let mut price = coarse;
    let mut estimate = 0.0;
    if grid.richardson {
        let (pf, s, d) = solve_once(m, v, x, [2 * grid.nv - 1, 2 * grid.nx - 1, grid.nt])?;
        fine = Some(pf);
        price = pf + (pf - coarse) / (2f64.powf(grid.order) - 1.0);
        estimate = (pf - coarse).abs();
        substeps = s;
        dt = d;
    }
    Ok(AsianPrice {
        price,
        discretization_estimate: estimate,
        coarse,
        fine,
        v_bounds: v,
        x_bounds: x,
        nodes,
        substeps,
        dt,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct McEstimate {
    pub price: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub n_steps: usize,
}

const CHUNK: usize = 4096;

/// Exact GBM sampling at `n_steps` points, trapezoidal average (of log S
/// for geometric averaging). Path i draws from stream i of the seeded
/// generator, so the estimate does not depend on the thread count.
pub fn mc_asian_oracle(m: &AsianModel, n_paths: usize, n_steps: usize, seed: u64) -> Result<McEstimate> {
    m.validate(true)?;
    if n_paths < 2 || n_steps < 1 {
        return Err(Error::Domain("need at least 2 paths and 1 step".into()));
    }
    let dt = m.maturity / n_steps as f64;
    let drift = (m.rate - 0.5 * m.sigma * m.sigma) * dt;
    let vol = m.sigma * dt.sqrt();
    let disc = (-m.rate * m.maturity).exp();
    let ls0 = m.s0.ln();
    let path = |i: usize| -> f64 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut ls = ls0;
        let mut acc = 0.0;
        let mut prev = match m.averaging {
            Averaging::Geometric => ls,
            Averaging::Arithmetic => m.s0,
        };
        for _ in 0..n_steps {
            let z: f64 = StandardNormal.sample(&mut rng);
            ls += drift + vol * z;
            let cur = match m.averaging {
                Averaging::Geometric => ls,
                Averaging::Arithmetic => ls.exp(),
            };
            acc += 0.5 * (prev + cur);
            prev = cur;
        }
        let mean = acc / n_steps as f64;
        let avg = match m.averaging {
            Averaging::Geometric => mean.exp(),
            Averaging::Arithmetic => mean,
        };
        disc * m.payoff.value(avg)
    };
    let chunks: Vec<(f64, f64)> = (0..n_paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let (mut s, mut s2) = (0.0, 0.0);
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_paths) {
                let p = path(i);
                s += p;
                s2 += p * p;
            }
            (s, s2)
        })
        .collect();
    let (sum, sum2) = chunks.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = n_paths as f64;
    let mean = sum / n;
    let var = ((sum2 - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate { price: mean, stderr: (var / n).sqrt(), n_paths, n_steps })
}
