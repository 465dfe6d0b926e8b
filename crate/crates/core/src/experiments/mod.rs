//! Experiment scripts, analysis and artifacts.

pub mod coherence;
pub mod convergence;
pub mod dead_time;
pub mod fit;
pub mod logical_t1;
pub mod output;
pub mod scan;
pub mod single_flip;
pub mod stats;
pub mod thresholds;

use serde::Serialize;

use crate::trajectory::EngineKind;

pub use coherence::{
    coherence_transfer_experiment, conditional_coherence_experiment, expected_zz_frequency,
    fit_phase, predicted_transfer, CoherenceBin, CoherenceTransferOptions, CoherenceTransferResult,
    ConditionalCoherenceOptions, ConditionalCoherenceResult, PhaseFit,
};
pub use convergence::{
    convergence_check, ConvergenceMetric, ConvergenceOptions, ConvergenceResult,
};
pub use dead_time::{
    classify_pair, dead_time_experiment, find_dead_time, parse_delays, DeadTime, DeadTimeOptions,
    DeadTimeResult, DelayPoint, PairOutcome,
};
pub use fit::{fit_exponential, ExpFit};
pub use logical_t1::{logical_t1_experiment, LogicalT1Options, LogicalT1Result};
pub use output::{ExperimentResult, Plot, Series, SeriesStyle, Table};
pub use scan::{default_ratios, distinguishability_scan, PairDistance, ScanPoint, ScanResult};
pub use single_flip::{
    dark_count_experiment, single_flip_experiment, DarkCountOptions, DarkCountResult, FlipOutcome,
    SingleFlipOptions, SingleFlipResult,
};
pub use stats::{wilson, Proportion, Rate};
pub use thresholds::{
    calibrate, confusion_matrix, labelled_traces, mean_measurement_rate, objective,
    optimize_on_traces, optimize_thresholds, scale_filter_to_rate, LabelledTrace, OptimizeOptions,
    ThresholdLattice, ThresholdOptimum,
};

/// Ensemble settings shared by all experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunConfig {
    pub trajectories: usize,
    pub seed: u64,
    /// Worker threads; zero uses every available core.
    pub workers: usize,
    pub engine: EngineKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trajectories: 500,
            seed: 0,
            workers: 0,
            engine: EngineKind::Sme,
        }
    }
}
