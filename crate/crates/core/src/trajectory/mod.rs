//! Stochastic trajectory engines and the trajectory runner.

pub mod noise;
pub mod record;
pub mod runner;
pub mod sme;
pub mod telegraph;

pub use noise::NoiseSource;
pub use record::{measurement_rate, Calibration, HomodyneRecord, RecordSample};
pub use runner::{
    run_batch, run_ensemble, run_trajectory, Detection, EngineKind, FieldStart, Injection,
    Protocol, Snapshot, TrajectoryOutcome,
};
pub use sme::{inject_flip, sme_step, Processes, SmeStepper};
pub use telegraph::{telegraph_step, Jump, TelegraphEngine, TelegraphState};
