//! `cqec`: run continuous error-correction experiments from the command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid config.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cqec::trajectory::EngineKind;
use cqec::Error;

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "cqec",
    version,
    about = "Trajectory simulator for a continuously corrected three-qubit bit-flip code"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Device configuration (JSON). Defaults are used when absent.
    #[arg(long, global = true, env = "CQEC_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Trajectories (per class or per point where applicable).
    #[arg(long, global = true)]
    pub trajectories: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Engine::Sme)]
    pub engine: Engine,
    /// Worker threads, 0 for all cores. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Sme,
    Telegraph,
}

impl From<Engine> for EngineKind {
    fn from(e: Engine) -> Self {
        match e {
            Engine::Sme => EngineKind::Sme,
            Engine::Telegraph => EngineKind::Telegraph,
        }
    }
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Inspect the resolved configuration.
    Params {
        #[command(subcommand)]
        action: ParamsAction,
    },
    /// Run one or more experiments.
    Run(RunArgs),
    /// Run the controller offline over a recorded V^DC stream.
    Replay(ReplayArgs),
    /// Calibrate detection thresholds from labelled traces.
    OptimizeThresholds(OptimizeArgs),
    /// Compare key metrics at dt_sim and dt_sim/2.
    ConvergenceCheck,
    /// Steady-state distinguishability ratio vs χ/κ.
    DistinguishabilityScan,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamsAction {
    /// Print the configuration and its hash.
    Show,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SingleFlip,
    DarkCounts,
    DeadTime,
    LogicalT1,
    CoherenceTransfer,
    ConditionalCoherence,
    DistinguishabilityScan,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::SingleFlip => "single-flip",
            Experiment::DarkCounts => "dark-counts",
            Experiment::DeadTime => "dead-time",
            Experiment::LogicalT1 => "logical-t1",
            Experiment::CoherenceTransfer => "coherence-transfer",
            Experiment::ConditionalCoherence => "conditional-coherence",
            Experiment::DistinguishabilityScan => "distinguishability-scan",
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct RunArgs {
    #[arg(required = true, value_enum)]
    pub experiments: Vec<Experiment>,
    /// Flipped qubit (single-flip, coherence-transfer, conditional-coherence).
    #[arg(long, default_value_t = 0)]
    pub qubit: usize,
    /// Qubit pair for dead-time, e.g. `0,2`.
    #[arg(long, default_value = "0,2")]
    pub pair: String,
    /// Delays for dead-time as `start:stop:step` in ns.
    #[arg(long, default_value = "0:4000:250")]
    pub delays: String,
    /// Code sector (EE, EO, OE, OO) for logical-t1 and coherence-transfer.
    #[arg(long, default_value = "OO")]
    pub sector: String,
    /// Run logical-t1 without feedback.
    #[arg(long)]
    pub no_feedback: bool,
    /// Coherence-transfer without a flip.
    #[arg(long)]
    pub no_flip: bool,
    /// Keep the drives on during the coherence-transfer ring-down.
    #[arg(long)]
    pub drive_on: bool,
    /// Observation length for logical-t1 (µs).
    #[arg(long, default_value_t = 300.0)]
    pub horizon_us: f64,
    /// Observation length for dark-counts (µs).
    #[arg(long, default_value_t = 100.0)]
    pub duration_us: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct ReplayArgs {
    /// Record CSV with columns time_ns,r0,r1,vdc0,vdc1,v0,v1.
    #[arg(long)]
    pub record: PathBuf,
    #[arg(long, default_value = "EE")]
    pub sector: String,
}

#[derive(Args, Debug, Serialize)]
pub struct OptimizeArgs {
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub lattice_min: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub lattice_max: f64,
    #[arg(long, default_value_t = 0.05)]
    pub lattice_step: f64,
    /// Trace length after the flip (µs).
    #[arg(long, default_value_t = 6.0)]
    pub window_us: f64,
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => EXIT_CONFIG,
            Error::Input(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
