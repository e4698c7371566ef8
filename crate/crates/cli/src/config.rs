use std::path::{Path, PathBuf};

use kolmo_core::finance::{AsianGrid, AsianModel};
use kolmo_core::group::{BlockStructure, LieStructure};
use kolmo_core::kfp::{BatteryConfig, HarnackGeometry, Transport};
use kolmo_core::nonlocal::{Decay, FractionalParams};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Reads a JSON config, reporting the path of the offending key on failure.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        CliError::Validation(format!("{}: at `{key}`: {}", path.display(), e.inner()))
    })
}

/// Lie structure by name or by explicit blocks.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum StructureSpec {
    Kinetic { n: usize },
    Parabolic { n: usize },
    Chain { kappa: usize },
    Blocks { kappa: usize, m: Vec<usize>, blocks: Vec<Vec<Vec<f64>>> },
}

impl Default for StructureSpec {
    fn default() -> Self {
        StructureSpec::Kinetic { n: 1 }
    }
}

impl StructureSpec {
    pub fn build(&self) -> Result<LieStructure> {
        let positive = |k: usize, what: &str| {
            if k == 0 {
                Err(CliError::Validation(format!("structure {what} must be positive")))
            } else {
                Ok(())
            }
        };
        Ok(match self {
            StructureSpec::Kinetic { n } => {
                positive(*n, "n")?;
                LieStructure::kinetic(*n)
            }
            StructureSpec::Parabolic { n } => {
                positive(*n, "n")?;
                LieStructure::parabolic(*n)
            }
            StructureSpec::Chain { kappa } => {
                positive(*kappa, "kappa")?;
                LieStructure::new(BlockStructure::chain(*kappa))
            }
            StructureSpec::Blocks { .. } => {
                let text = serde_json::to_string(self).expect("structure serializes");
                let mut v: serde_json::Value = serde_json::from_str(&text).expect("round trip");
                v.as_object_mut().expect("object").remove("type");
                LieStructure::new(BlockStructure::from_json(&v.to_string())?)
            }
        })
    }
}

/// Diffusion matrix A0: identity times `scale` unless given explicitly.
pub fn a0_matrix(m0: usize, scale: f64, rows: &Option<Vec<Vec<f64>>>) -> Result<DMatrix<f64>> {
    match rows {
        None => Ok(DMatrix::identity(m0, m0) * scale),
        Some(r) => {
            if r.len() != m0 || r.iter().any(|row| row.len() != m0) {
                return Err(CliError::Validation(format!("a0 must be {m0} x {m0}")));
            }
            Ok(DMatrix::from_fn(m0, m0, |i, j| r[i][j]))
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub structure: StructureSpec,
    pub samples: usize,
    pub seed: u64,
    /// Dilation radii for the norm homogeneity and cylinder measure columns.
    pub radii: Vec<f64>,
    /// Step sizes of the left-invariance residual.
    pub steps: Vec<f64>,
    pub cylinder_samples: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            structure: StructureSpec::default(),
            samples: 1000,
            seed: 1,
            radii: vec![0.5, 2.0],
            steps: vec![0.08, 0.04, 0.02, 0.01],
            cylinder_samples: 100_000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nodes: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChapmanKolmogorov {
    pub z: Vec<f64>,
    pub zeta0: Vec<f64>,
    pub s: Vec<f64>,
    pub panels: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FundsolConfig {
    pub structure: StructureSpec,
    pub a: f64,
    pub a0: Option<Vec<Vec<f64>>>,
    /// Time at which Γ(., t; 0) is tabulated.
    pub t: f64,
    /// Tabulation grid over x (at most two dimensions).
    pub grid: Option<EvalGrid>,
    pub mass_times: Vec<f64>,
    pub mass_panels: usize,
    /// Points (x, t) for the finite-difference residual of L0 Γ.
    pub residual_points: Vec<Vec<f64>>,
    pub residual_steps: Vec<f64>,
    pub chapman_kolmogorov: Option<ChapmanKolmogorov>,
}

impl Default for FundsolConfig {
    fn default() -> Self {
        Self {
            structure: StructureSpec::default(),
            a: 1.0,
            a0: None,
            t: 1.0,
            grid: Some(EvalGrid { lo: vec![-4.0, -3.0], hi: vec![4.0, 3.0], nodes: vec![81, 61] }),
            mass_times: vec![0.25, 0.5, 1.0, 2.0],
            mass_panels: 24,
            residual_points: vec![vec![0.3, -0.2, 0.5]],
            residual_steps: vec![0.04, 0.02, 0.01, 0.005],
            chapman_kolmogorov: Some(ChapmanKolmogorov {
                z: vec![0.3, -0.1, 1.0],
                zeta0: vec![-0.2, 0.1, 0.0],
                s: vec![0.3, 0.5, 0.8],
                panels: 16,
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessKind {
    Langevin,
    Relativistic,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ProcessKind,
    pub n: usize,
    /// Time horizon (proper time for the relativistic model).
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    pub friction: bool,
    pub noise: f64,
    pub initial_velocity: Option<Vec<f64>>,
    pub initial_position: Option<Vec<f64>>,
    pub initial_time: f64,
    pub record_every: usize,
    /// KDE against Γ at the horizon (frictionless Langevin, n = 1).
    pub density: bool,
    pub density_grid: usize,
    /// Also write the binary ensemble.
    pub ensemble: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            model: ProcessKind::Langevin,
            n: 1,
            horizon: 1.0,
            dt: 1e-3,
            paths: 10_000,
            seed: 1,
            friction: false,
            noise: std::f64::consts::SQRT_2,
            initial_velocity: None,
            initial_position: None,
            initial_time: 0.0,
            record_every: 100,
            density: true,
            density_grid: 121,
            ensemble: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionSpec {
    Constant {
        a: f64,
    },
    Checkerboard {
        lambda: f64,
        #[serde(rename = "Lambda")]
        big_lambda: f64,
        scale: f64,
        #[serde(default)]
        phase: Vec<f64>,
    },
}

/// Product of bumps (1 - s^2)_+^3 in each coordinate, s = (z - centre)/width.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub amplitude: f64,
    pub centre: Vec<f64>,
    pub width: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub n: usize,
    pub diffusion: DiffusionSpec,
    pub source: f64,
    pub velocity_radius: f64,
    pub position_radius: f64,
    pub time: [f64; 2],
    /// (velocity, position, time) node counts per axis.
    pub nodes: [usize; 3],
    pub initial: BumpSpec,
    pub transport: Transport,
    pub dt: Option<f64>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            n: 1,
            diffusion: DiffusionSpec::Constant { a: 1.0 },
            source: 0.0,
            velocity_radius: 2.0,
            position_radius: 4.0,
            time: [0.0, 1.0],
            nodes: [41, 81, 41],
            initial: BumpSpec { amplitude: 1.0, centre: vec![0.0, 0.0], width: vec![1.0, 2.0] },
            transport: Transport::Upwind,
            dt: None,
        }
    }
}

/// Member of the checkerboard battery on which a single check is run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemberConfig {
    pub battery: BatteryConfig,
    pub member: usize,
    pub nodes: [usize; 3],
    pub f_norm: f64,
    /// Exponent of the weak Harnack variant.
    pub weak_p: f64,
}

impl Default for MemberConfig {
    fn default() -> Self {
        let battery = BatteryConfig::default();
        Self { nodes: battery.coarse, battery, member: 0, f_norm: 0.0, weak_p: 1.0 }
    }
}

impl MemberConfig {
    pub fn geometry(&self) -> HarnackGeometry {
        self.battery.geometry
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SobolevConfig {
    pub m0: usize,
    pub outer_dim: usize,
    pub nx: usize,
    pub ny: usize,
    pub fields: usize,
    pub q: Vec<f64>,
    pub seed: u64,
}

impl Default for SobolevConfig {
    fn default() -> Self {
        Self { m0: 3, outer_dim: 4, nx: 33, ny: 3, fields: 100, q: vec![2.0, 4.0, 6.0], seed: 7 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceConfig {
    pub model: AsianModel,
    #[serde(default)]
    pub grid: AsianGrid,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub seed: u64,
    pub runs: usize,
    pub nodes: [usize; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleConfig {
    /// Velocity nodes of the toy compared with projected SOR.
    pub toy_nodes: usize,
    /// Random checkerboard family for the stability bound.
    pub family: Option<FamilyConfig>,
}

impl Default for ObstacleConfig {
    fn default() -> Self {
        Self { toy_nodes: 201, family: Some(FamilyConfig { seed: 3, runs: 4, nodes: [41, 21, 5] }) }
    }
}

/// Velocity profile of a tail test field; the field ignores (x, t).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// 1 inside the ball of the given radius about the origin.
    Indicator { radius: f64 },
    /// amplitude exp(-|v|^2 / width^2).
    Gaussian { amplitude: f64, width: f64 },
    /// min(1, |v|^{-beta}).
    Power { beta: f64 },
}

impl FieldSpec {
    pub fn eval(&self, n: usize, z: &[f64]) -> f64 {
        let r2: f64 = z[..n].iter().map(|a| a * a).sum();
        match *self {
            FieldSpec::Indicator { radius } => {
                if r2 < radius * radius {
                    1.0
                } else {
                    0.0
                }
            }
            FieldSpec::Gaussian { amplitude, width } => amplitude * (-r2 / (width * width)).exp(),
            FieldSpec::Power { beta } => r2.sqrt().powf(-beta).min(1.0),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailConfig {
    pub params: FractionalParams,
    pub field: FieldSpec,
    pub decay: Decay,
    pub z0: Vec<f64>,
    pub r: f64,
    /// Supremum over U_{2r} instead of the average.
    #[serde(default)]
    pub sup: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlocalBoundConfig {
    pub seed: u64,
    pub runs: usize,
    /// (p, s) pairs.
    pub combos: Vec<[f64; 2]>,
    /// (velocity, position, time) node counts.
    pub nodes: [usize; 3],
}

impl Default for NonlocalBoundConfig {
    fn default() -> Self {
        let combos = [1.5, 2.0, 3.0].iter().flat_map(|&p| [0.3, 0.5, 0.7].map(move |s| [p, s])).collect();
        Self { seed: 11, runs: 20, combos, nodes: [41, 31, 11] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcceptConfig {
    pub seed: u64,
    /// Output directory of an earlier run whose data artifacts must match.
    pub compare_with: Option<PathBuf>,
}

impl Default for AcceptConfig {
    fn default() -> Self {
        Self { seed: 2024, compare_with: None }
    }
}
