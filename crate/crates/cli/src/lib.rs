//! `kolmo-lab`: batch runner for the kolmo-core experiments.
//!
//! Every subcommand reads one JSON config, writes CSV/JSON artifacts into the
//! output directory and finishes with `manifest.json`.

pub mod accept;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::accept::Verdict;
use crate::config::*;
use crate::error::{CliError, Result};
use crate::output::Output;

pub const THREADS_ENV: &str = "KOLMO_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "kolmo-lab", version, about = "Numerical experiments for degenerate Kolmogorov operators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (KOLMO_LAB_THREADS takes precedence).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the seed of the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Group laws, homogeneous norms and cylinder measures.
    Geometry(Common),
    /// Tabulate Γ and check mass, residual and Chapman-Kolmogorov.
    Fundsol(Common),
    /// Langevin or relativistic path ensembles.
    Simulate(Common),
    /// Kinetic Fokker-Planck solve.
    Solve(Common),
    /// Harnack ratio on one battery member, optionally over a parameter sweep.
    Harnack {
        #[command(flatten)]
        common: Common,
        /// `name=from:to:step` with name one of omega, rho, eta, R, theta0.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Weak Poincaré check on one battery member.
    Poincare(Common),
    /// Sobolev embedding study on random separable fields.
    Sobolev(Common),
    /// Asian option price.
    Price(Common),
    /// Obstacle problem: toy comparison and stability bound.
    Obstacle(Common),
    /// Kinetic nonlocal tail of a test field.
    Tail(Common),
    /// Boundedness battery for the fractional kinetic equation.
    NonlocalBound(Common),
    /// The full acceptance suite.
    Accept(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Geometry(_) => "geometry",
            Command::Fundsol(_) => "fundsol",
            Command::Simulate(_) => "simulate",
            Command::Solve(_) => "solve",
            Command::Harnack { .. } => "harnack",
            Command::Poincare(_) => "poincare",
            Command::Sobolev(_) => "sobolev",
            Command::Price(_) => "price",
            Command::Obstacle(_) => "obstacle",
            Command::Tail(_) => "tail",
            Command::NonlocalBound(_) => "nonlocal-bound",
            Command::Accept(_) => "accept",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Harnack { common, .. } => common,
            Command::Geometry(c)
            | Command::Fundsol(c)
            | Command::Simulate(c)
            | Command::Solve(c)
            | Command::Poincare(c)
            | Command::Sobolev(c)
            | Command::Price(c)
            | Command::Obstacle(c)
            | Command::Tail(c)
            | Command::NonlocalBound(c)
            | Command::Accept(c) => c,
        }
    }
}

/// Parses the process arguments and runs; returns the exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cmd = &cli.command;
    let common = cmd.common();
    if let Err(e) = configure_threads(common.threads) {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    let start = Instant::now();
    let mut out: Option<Output> = None;
    let mut echo = Value::Null;
    let result = execute(cmd, &mut out, &mut echo);
    let wall = json!({ "seconds": start.elapsed().as_secs_f64() });
    let (status, code) = match &result {
        Ok(true) => ("ok", 0),
        Ok(false) => ("acceptance_failed", 3),
        Err(e) => {
            eprintln!("error: {e}");
            ("error", e.exit_code())
        }
    };
    if code == 2 {
        if let Err(e) = &result {
            write_diagnostic(&common.out, cmd.name(), &echo, e);
        }
    }
    if let Some(o) = out {
        if let Err(e) = o.finish(cmd.name(), &echo, status, wall) {
            eprintln!("error: {e}");
            return if code == 0 { e.exit_code() } else { code };
        }
    }
    if code == 3 {
        eprintln!("error: acceptance failed");
    }
    code
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Validation(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?,
        ),
        Err(_) => flag,
    };
    match threads {
        Some(0) => Err(CliError::Validation("thread count must be positive".into())),
        Some(n) => {
            // a second call in the same process keeps the first pool
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(())
        }
        None => Ok(()),
    }
}

fn write_diagnostic(dir: &Path, command: &str, config: &Value, e: &CliError) {
    let diag = json!({
        "command": command,
        "kind": e.kind(),
        "exit_code": e.exit_code(),
        "message": e.to_string(),
        "config": config,
    });
    let _ = std::fs::create_dir_all(dir);
    let mut bytes = serde_json::to_vec_pretty(&diag).expect("diagnostic serializes");
    bytes.push(b'\n');
    if let Err(err) = std::fs::write(dir.join("diagnostic.json"), bytes) {
        eprintln!("cannot write diagnostic.json: {err}");
    }
}

/// Loads and validates the config; the output directory is only created once
/// the config has been accepted.
fn prepare<T, F>(common: &Common, out: &mut Option<Output>, echo: &mut Value, reseed: F) -> Result<T>
where
    T: DeserializeOwned + Serialize,
    F: FnOnce(&mut T, u64),
{
    let mut cfg: T = load(&common.config)?;
    if let Some(s) = common.seed {
        reseed(&mut cfg, s);
    }
    *echo = serde_json::to_value(&cfg).expect("config serializes");
    *out = Some(Output::create(&common.out)?);
    Ok(cfg)
}

fn no_seed<T>(_: &mut T, _: u64) {}

/// Ok(false) only for a failed acceptance suite.
fn execute(cmd: &Command, out: &mut Option<Output>, echo: &mut Value) -> Result<bool> {
    let c = cmd.common();
    macro_rules! go {
        ($ty:ty, $reseed:expr, $f:expr) => {{
            let cfg: $ty = prepare(c, out, echo, $reseed)?;
            $f(&cfg, out.as_mut().expect("output prepared"))?;
            Ok(true)
        }};
    }
    match cmd {
        Command::Geometry(_) => go!(GeometryConfig, |g: &mut GeometryConfig, s| g.seed = s, commands::geometry),
        Command::Fundsol(_) => go!(FundsolConfig, no_seed, commands::fundsol),
        Command::Simulate(_) => go!(SimulateConfig, |g: &mut SimulateConfig, s| g.seed = s, commands::simulate),
        Command::Solve(_) => go!(SolveConfig, no_seed, commands::solve_cmd),
        Command::Harnack { sweep, .. } => {
            let sweep = sweep.as_deref().map(str::parse::<commands::Sweep>).transpose()?;
            let cfg: MemberConfig = prepare(c, out, echo, |g: &mut MemberConfig, s| g.battery.seed = s)?;
            commands::harnack(&cfg, sweep.as_ref(), out.as_mut().expect("output prepared"))?;
            Ok(true)
        }
        Command::Poincare(_) => go!(MemberConfig, |g: &mut MemberConfig, s| g.battery.seed = s, commands::poincare),
        Command::Sobolev(_) => go!(SobolevConfig, |g: &mut SobolevConfig, s| g.seed = s, commands::sobolev),
        Command::Price(_) => go!(
            PriceConfig,
            |g: &mut PriceConfig, s| {
                if let Some(mc) = g.monte_carlo.as_mut() {
                    mc.seed = s
                }
            },
            commands::price
        ),
        Command::Obstacle(_) => go!(
            ObstacleConfig,
            |g: &mut ObstacleConfig, s| {
                if let Some(f) = g.family.as_mut() {
                    f.seed = s
                }
            },
            commands::obstacle
        ),
        Command::Tail(_) => go!(TailConfig, no_seed, commands::tail_cmd),
        Command::NonlocalBound(_) => {
            go!(NonlocalBoundConfig, |g: &mut NonlocalBoundConfig, s| g.seed = s, commands::nonlocal_bound)
        }
        Command::Accept(_) => {
            let cfg: AcceptConfig = prepare(c, out, echo, |g: &mut AcceptConfig, s| g.seed = s)?;
            let crit = accept::run(&cfg, out.as_mut().expect("output prepared"))?;
            Ok(crit.iter().all(|c| c.verdict() != Verdict::Fail))
        }
    }
}
