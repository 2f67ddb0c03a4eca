use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "vxl", version, about = "Periodic-box Navier-Stokes runs, identity checks and kernel bounds")]
pub struct Cli {
    /// Flat key=value file; keys are flag names without dashes, flags win.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate a flow and write diagnostics.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Evaluate pointwise identities and evolution residuals of one state.
    #[command(allow_negative_numbers = true)]
    Verify(VerifyArgs),
    /// Entropy monotonicity and L^q checks on a finished run.
    Stats(StatsArgs),
    /// Heat-kernel bounds, propagator convergence and the vorticity time scale.
    #[command(allow_negative_numbers = true)]
    Kernel(KernelArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum IcKind {
    TaylorGreen,
    Abc,
    Random,
}

#[derive(Args, Debug, Clone)]
pub struct FlowArgs {
    #[arg(long, value_enum, default_value = "taylor-green")]
    pub ic: IcKind,
    #[arg(long, default_value_t = 32)]
    pub n: usize,
    #[arg(long, default_value_t = 2.0 * std::f64::consts::PI)]
    pub box_length: f64,
    /// Kinematic viscosity (exclusive with --re).
    #[arg(long, conflicts_with = "re")]
    pub nu: Option<f64>,
    /// Reynolds number, nu = 1/Re; 100 when neither is given.
    #[arg(long)]
    pub re: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Peak wavenumber of the random initial spectrum.
    #[arg(long, default_value_t = 4.0)]
    pub k0: f64,
    /// Kinetic energy of the random initial field.
    #[arg(long, default_value_t = 0.5)]
    pub energy: f64,
    /// ABC coefficients A,B,C.
    #[arg(long, value_delimiter = ',', default_value = "1,1,1")]
    pub abc: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub flow: FlowArgs,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 0.1)]
    pub output_interval: f64,
    #[arg(long, default_value_t = 0.5)]
    pub cfl: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub q_list: Vec<f64>,
    /// Bins per axis of the (trA2, trA3) histogram.
    #[arg(long, default_value_t = 64)]
    pub bins: usize,
    /// Also write a velocity snapshot at every output time.
    #[arg(long)]
    pub snapshots: bool,
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Velocity snapshot to check instead of an initial condition.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    #[command(flatten)]
    pub flow: FlowArgs,
    /// Seed of the test scalar used by the Gamma_2 identity.
    #[arg(long, default_value_t = 1)]
    pub scalar_seed: u64,
    #[arg(long, default_value = "verify")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Directory written by `simulate`.
    pub run: PathBuf,
}

#[derive(Args, Debug)]
pub struct KernelArgs {
    /// Print 2 nu / U^2 and exit.
    #[arg(long)]
    pub timescale: bool,
    #[arg(long, requires = "timescale")]
    pub nu: Option<f64>,
    #[arg(long, requires = "timescale")]
    pub u: Option<f64>,
    /// Length scale L, only used to report the dimensionless time 2/Re.
    #[arg(long, requires = "timescale")]
    pub length: Option<f64>,

    /// sigma = sqrt(Re/2) (exclusive with --re).
    #[arg(long, conflicts_with = "re")]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub re: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[arg(long, default_value_t = 21)]
    pub lattice_points: usize,
    /// Lattice half-width in spreads sqrt(delta)/sigma.
    #[arg(long, default_value_t = 6.0)]
    pub lattice_width: f64,
    /// Also run the Monte Carlo Taylor-diffusion check.
    #[arg(long)]
    pub monte_carlo: bool,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write kernel.json here instead of printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn has_flag(args: &[String], name: &str) -> bool {
    let long = format!("--{name}");
    let eq = format!("--{name}=");
    args.iter().any(|a| *a == long || a.starts_with(&eq))
}

/// Appends `--key value` for every `key=value` line of the `--config` file
/// whose flag is not already on the command line.
pub fn merge_config(mut args: Vec<String>) -> Result<Vec<String>, Failure> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::Usage(format!("cannot read config {path}: {e}")))?;
    let mut extra = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("{path}:{}: expected key=value", lineno + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" || has_flag(&args, &key) {
            continue;
        }
        match value {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            v => extra.push(format!("--{key}={v}")),
        }
    }
    args.extend(extra);
    Ok(args)
}
