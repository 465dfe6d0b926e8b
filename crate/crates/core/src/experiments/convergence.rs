//! Integrator step-size check: the same runs at dt_sim and dt_sim/2.
//!
//! The Wiener increments are drawn on the controller grid and refined by
//! Brownian bridges, so both step sizes follow the same noise path.

use serde::Serialize;

use super::coherence::{
    coherence_transfer_experiment, conditional_coherence_experiment, CoherenceTransferOptions,
    ConditionalCoherenceOptions,
};
use super::logical_t1::{logical_t1_experiment, LogicalT1Options};
use super::output::{ExperimentResult, Table};
use super::RunConfig;
use crate::error::{Error, Result};
use crate::model::{DeviceParams, Sector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceOptions {
    pub coherence_trajectories: usize,
    pub lifetime_trajectories: usize,
    pub zz_trajectories: usize,
    pub lifetime: LogicalT1Options,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            coherence_trajectories: 500,
            lifetime_trajectories: 1000,
            zz_trajectories: 2000,
            lifetime: LogicalT1Options::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceMetric {
    pub name: String,
    pub coarse: f64,
    pub fine: f64,
    pub coarse_error: f64,
    pub fine_error: f64,
    pub difference: f64,
    /// |coarse − fine| below the larger reported Monte Carlo error.
    pub converged: bool,
}

impl ConvergenceMetric {
    fn new(name: &str, coarse: (f64, f64), fine: (f64, f64)) -> Self {
        let difference = (coarse.0 - fine.0).abs();
        Self {
            name: name.into(),
            coarse: coarse.0,
            fine: fine.0,
            coarse_error: coarse.1,
            fine_error: fine.1,
            difference,
            converged: difference < coarse.1.max(fine.1),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceResult {
    pub dt_sim_ns: [f64; 2],
    pub metrics: Vec<ConvergenceMetric>,
}

impl ConvergenceResult {
    pub fn converged(&self) -> bool {
        self.metrics.iter().all(|m| m.converged)
    }
}

fn metrics_at(
    params: &DeviceParams,
    run: &RunConfig,
    opts: &ConvergenceOptions,
) -> Result<[(f64, f64); 3]> {
    let coh = coherence_transfer_experiment(
        params,
        Sector::OO,
        Some(0),
        &RunConfig {
            trajectories: opts.coherence_trajectories,
            ..*run
        },
        &CoherenceTransferOptions::default(),
    )?;
    let lt = logical_t1_experiment(
        params,
        Sector::OO,
        &RunConfig {
            trajectories: opts.lifetime_trajectories,
            ..*run
        },
        &opts.lifetime,
    )?;
    let cc = conditional_coherence_experiment(
        params,
        &RunConfig {
            trajectories: opts.zz_trajectories,
            ..*run
        },
        &ConditionalCoherenceOptions::default(),
    )?;
    let fit = cc.relative_fit.ok_or_else(|| Error::Fit {
        best_residual: f64::NAN,
        reason: "conditional coherence has too few bins for a phase fit".into(),
    })?;
    Ok([
        (coh.relative, coh.relative_se),
        (lt.fit.t, lt.t1_error_us()),
        (fit.frequency_mhz, fit.frequency_error_mhz),
    ])
}

pub fn convergence_check(
    params: &DeviceParams,
    run: &RunConfig,
    opts: &ConvergenceOptions,
) -> Result<ConvergenceResult> {
    let fine_params = params.with_halved_dt();
    fine_params.validate()?;
    let coarse = metrics_at(params, run, opts)?;
    let fine = metrics_at(&fine_params, run, opts)?;
    let names = ["relative_coherence", "logical_t1_us", "zz_frequency_mhz"];
    Ok(ConvergenceResult {
        dt_sim_ns: [
            params.integrator.dt_sim_ns,
            fine_params.integrator.dt_sim_ns,
        ],
        metrics: (0..3)
            .map(|k| ConvergenceMetric::new(names[k], coarse[k], fine[k]))
            .collect(),
    })
}

impl ConvergenceResult {
    pub fn to_result(
        &self,
        params: &DeviceParams,
        run: &RunConfig,
        opts: &ConvergenceOptions,
    ) -> ExperimentResult {
        let mut r = ExperimentResult::new(
            "convergence-check",
            params,
            run.seed,
            run.engine,
            run.trajectories,
        );
        r.metric("dt_sim_ns", self.dt_sim_ns);
        r.metric("metrics", &self.metrics);
        r.metric("converged", self.converged());
        r.metric("options", opts);
        for m in self.metrics.iter().filter(|m| !m.converged) {
            r.flag(format!(
                "{} changed by {:.4} with the step halved",
                m.name, m.difference
            ));
        }
        let mut t = Table::new(
            "convergence",
            &[
                "metric",
                "coarse",
                "fine",
                "coarse_error",
                "fine_error",
                "difference",
                "converged",
            ],
        );
        for m in &self.metrics {
            t.push([
                m.name.clone(),
                m.coarse.to_string(),
                m.fine.to_string(),
                m.coarse_error.to_string(),
                m.fine_error.to_string(),
                m.difference.to_string(),
                m.converged.to_string(),
            ]);
        }
        r.tables.push(t);
        r
    }
}
