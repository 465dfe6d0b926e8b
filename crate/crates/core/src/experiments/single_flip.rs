//! Detection of a single injected bit flip, and dark counts.

use serde::Serialize;

use super::output::{event_log_table, ExperimentResult, Plot, Series, SeriesStyle, Table};
use super::stats::{histogram, mean_se, Proportion, Rate};
use super::RunConfig;
use crate::controller::{ControllerEvent, ControllerEventKind};
use crate::error::{Error, Result};
use crate::model::{DeviceParams, Sector};
use crate::trajectory::{
    run_batch, run_trajectory, EngineKind, Injection, NoiseSource, Processes, Protocol,
    TrajectoryOutcome,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleFlipOptions {
    /// Readout time before the injected flip, µs.
    pub settle_us: f64,
    /// Time allowed for the controller to respond, µs.
    pub window_us: f64,
    pub histogram_bin_us: f64,
}

impl Default for SingleFlipOptions {
    fn default() -> Self {
        Self {
            settle_us: 2.0,
            window_us: 20.0,
            histogram_bin_us: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipOutcome {
    Detected,
    Misclassified,
    DarkBeforeInjection,
    Missed,
}

#[derive(Debug, Clone, Serialize)]
pub struct SingleFlipResult {
    pub qubit: usize,
    pub trajectories: usize,
    pub efficiency: Proportion,
    pub misclassified: Proportion,
    pub dark_before_injection: Proportion,
    pub missed: Proportion,
    pub outcomes: Vec<FlipOutcome>,
    /// Pulse time minus injection time for detected flips, µs.
    pub correction_times_us: Vec<f64>,
    pub mean_correction_us: f64,
    pub mean_correction_se_us: f64,
    /// Noiseless response time without decay, µs.
    pub noiseless_correction_us: Option<f64>,
    /// e^{−t/T1} at the noiseless detection time: the detection probability if
    /// decay before detection were the only loss.
    pub decay_limited_estimate: Option<f64>,
    #[serde(skip)]
    pub event_logs: Vec<Vec<ControllerEvent>>,
}

fn classify(
    out: &TrajectoryOutcome,
    qubit: usize,
    injection_ns: f64,
) -> (FlipOutcome, Option<f64>) {
    match out.first_detection() {
        None => (FlipOutcome::Missed, None),
        Some(d) if d.time_ns <= injection_ns => (FlipOutcome::DarkBeforeInjection, None),
        Some(d) if d.qubit == qubit => {
            let t = out
                .pulses()
                .find(|e| {
                    e.kind == ControllerEventKind::PulseFired(qubit) && e.time_ns > injection_ns
                })
                .map(|e| (e.time_ns - injection_ns) * 1e-3);
            (FlipOutcome::Detected, t)
        }
        Some(_) => (FlipOutcome::Misclassified, None),
    }
}

fn protocol(qubit: usize, engine: EngineKind, opts: &SingleFlipOptions) -> Protocol {
    Protocol {
        engine,
        duration_us: opts.settle_us + opts.window_us,
        injections: vec![Injection {
            time_us: opts.settle_us,
            qubit,
        }],
        feedback: true,
        stop_after_first_pulse_us: Some(0.0),
        ..Protocol::default()
    }
}

/// Response time of a noiseless, decay-free run.
pub fn noiseless_correction_time(
    params: &DeviceParams,
    qubit: usize,
    opts: &SingleFlipOptions,
) -> Result<Option<f64>> {
    let mut p = protocol(qubit, EngineKind::Telegraph, opts);
    p.noise_scale = 0.0;
    p.processes = Processes {
        hamiltonian: true,
        dissipation: false,
        measurement: true,
    };
    let out = run_trajectory(params, &p, &mut NoiseSource::new(0, 0))?;
    Ok(classify(&out, qubit, opts.settle_us * 1e3).1)
}

pub fn single_flip_experiment(
    params: &DeviceParams,
    qubit: usize,
    run: &RunConfig,
    opts: &SingleFlipOptions,
) -> Result<SingleFlipResult> {
    if qubit > 2 {
        return Err(Error::Input(format!("qubit index {qubit} out of range")));
    }
    let proto = protocol(qubit, run.engine, opts);
    let injection_ns =
        (opts.settle_us / params.dt_ctrl_us()).round() * params.integrator.dt_ctrl_ns;
    let per_traj = run_batch(run.trajectories, run.workers, |i| {
        let mut noise = NoiseSource::new(run.seed, i as u64);
        let out = run_trajectory(params, &proto, &mut noise)?;
        let (o, t) = classify(&out, qubit, injection_ns);
        Ok((o, t, out.events))
    })?;
    let n = per_traj.len();
    let count = |o: FlipOutcome| per_traj.iter().filter(|(x, _, _)| *x == o).count();
    let correction_times_us: Vec<f64> = per_traj.iter().filter_map(|(_, t, _)| *t).collect();
    let (mean, se) = mean_se(&correction_times_us);
    let noiseless = noiseless_correction_time(params, qubit, opts)?;
    let t1 = params.qubits.t1_us[qubit];
    Ok(SingleFlipResult {
        qubit,
        trajectories: n,
        efficiency: Proportion::new(count(FlipOutcome::Detected), n),
        misclassified: Proportion::new(count(FlipOutcome::Misclassified), n),
        dark_before_injection: Proportion::new(count(FlipOutcome::DarkBeforeInjection), n),
        missed: Proportion::new(count(FlipOutcome::Missed), n),
        outcomes: per_traj.iter().map(|(o, _, _)| *o).collect(),
        correction_times_us,
        mean_correction_us: mean,
        mean_correction_se_us: se,
        noiseless_correction_us: noiseless,
        decay_limited_estimate: noiseless.map(|t| (-t / t1).exp()),
        event_logs: per_traj.into_iter().map(|(_, _, e)| e).collect(),
    })
}

impl SingleFlipResult {
    /// Probability density of the correction time, normalized so its
    /// integral is the detection efficiency.
    pub fn density(&self, window_us: f64, bin_us: f64) -> Vec<(f64, f64)> {
        let bins = (window_us / bin_us).round().max(1.0) as usize;
        histogram(&self.correction_times_us, 0.0, window_us, bins)
            .into_iter()
            .map(|(c, k)| (c, k as f64 / (self.trajectories as f64 * bin_us)))
            .collect()
    }

    pub fn to_result(
        &self,
        params: &DeviceParams,
        run: &RunConfig,
        opts: &SingleFlipOptions,
    ) -> ExperimentResult {
        let mut r = ExperimentResult::new(
            "single-flip",
            params,
            run.seed,
            run.engine,
            run.trajectories,
        );
        r.metric("qubit", self.qubit);
        r.metric("efficiency", self.efficiency);
        r.metric("misclassified", self.misclassified);
        r.metric("dark_before_injection", self.dark_before_injection);
        r.metric("missed", self.missed);
        r.metric("mean_correction_time_us", self.mean_correction_us);
        r.metric("mean_correction_time_se_us", self.mean_correction_se_us);
        r.metric("noiseless_correction_time_us", self.noiseless_correction_us);
        r.metric("decay_limited_estimate", self.decay_limited_estimate);
        r.metric("options", opts);
        let density = self.density(opts.window_us, opts.histogram_bin_us);
        let mut t = Table::new("correction_time_density", &["time_us", "density_per_us"]);
        for &(x, y) in &density {
            t.push([x, y]);
        }
        r.tables.push(t);
        let mut t = Table::new(
            "trajectories",
            &["trajectory", "outcome", "correction_time_us"],
        );
        let mut times = self.correction_times_us.iter();
        for (i, o) in self.outcomes.iter().enumerate() {
            let time = if *o == FlipOutcome::Detected {
                times.next().map(|v| v.to_string()).unwrap_or_default()
            } else {
                String::new()
            };
            let name = serde_json::to_value(o)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default();
            t.push([i.to_string(), name, time]);
        }
        r.tables.push(t);
        r.tables.push(event_log_table("events", &self.event_logs));
        r.plots.push(
            Plot::new(
                "correction_time_density",
                &format!("Correction time, flip on Q{}", self.qubit),
                "time after flip (µs)",
                "P_flip(t) (1/µs)",
            )
            .add(Series::new(
                &format!("Q{}", self.qubit),
                density,
                SeriesStyle::Steps,
            )),
        );
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DarkCountOptions {
    pub duration_us: f64,
}

impl Default for DarkCountOptions {
    fn default() -> Self {
        Self { duration_us: 100.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DarkCountResult {
    pub trajectories: usize,
    /// Rate of first detections of each class, ms⁻¹.
    pub rates: [Rate; 3],
    /// Part of each rate where the qubits had actually left the code space
    /// (thermal excitation or decay) when the detection fired.
    pub true_positive_rates: [Rate; 3],
    pub exposure_us: f64,
    #[serde(skip)]
    pub event_logs: Vec<Vec<ControllerEvent>>,
}

pub fn dark_count_experiment(
    params: &DeviceParams,
    run: &RunConfig,
    opts: &DarkCountOptions,
) -> Result<DarkCountResult> {
    let proto = Protocol {
        engine: run.engine,
        duration_us: opts.duration_us,
        feedback: true,
        stop_after_first_pulse_us: Some(0.0),
        ..Protocol::default()
    };
    let per_traj = run_batch(run.trajectories, run.workers, |i| {
        let mut noise = NoiseSource::new(run.seed, i as u64);
        let out = run_trajectory(params, &proto, &mut noise)?;
        let first = match out.first_detection() {
            Some(d) => {
                let outside = 1.0
                    - crate::model::ThreeQubitState::diagonal(&d.populations)
                        .sector_population(Sector::EE);
                (d.time_ns * 1e-3, Some((d.qubit, outside > 0.5)))
            }
            None => (opts.duration_us, None),
        };
        Ok((first, out.events))
    })?;
    let exposure: f64 = per_traj.iter().map(|((t, _), _)| *t).sum();
    let mut counts = [0usize; 3];
    let mut tp = [0usize; 3];
    for ((_, d), _) in &per_traj {
        if let Some((q, real)) = d {
            counts[*q] += 1;
            if *real {
                tp[*q] += 1;
            }
        }
    }
    Ok(DarkCountResult {
        trajectories: per_traj.len(),
        rates: counts.map(|c| Rate::new(c, exposure)),
        true_positive_rates: tp.map(|c| Rate::new(c, exposure)),
        exposure_us: exposure,
        event_logs: per_traj.into_iter().map(|(_, e)| e).collect(),
    })
}

impl DarkCountResult {
    pub fn to_result(
        &self,
        params: &DeviceParams,
        run: &RunConfig,
        opts: &DarkCountOptions,
    ) -> ExperimentResult {
        let mut r = ExperimentResult::new(
            "dark-counts",
            params,
            run.seed,
            run.engine,
            run.trajectories,
        );
        r.metric("rates_per_ms", self.rates);
        r.metric("true_positive_rates_per_ms", self.true_positive_rates);
        r.metric("thermal_rates_per_ms", params.qubits.gamma_up_per_ms);
        r.metric("exposure_us", self.exposure_us);
        r.metric("options", opts);
        let mut t = Table::new(
            "dark_counts",
            &[
                "class",
                "count",
                "rate_per_ms",
                "rate_error_per_ms",
                "true_positive_per_ms",
            ],
        );
        for q in 0..3 {
            t.push([
                format!("q{q}"),
                self.rates[q].count.to_string(),
                self.rates[q].per_ms.to_string(),
                self.rates[q].error_per_ms.to_string(),
                self.true_positive_rates[q].per_ms.to_string(),
            ]);
        }
        r.tables.push(t);
        r.tables.push(event_log_table("events", &self.event_logs));
        let pts = (0..3).map(|q| (q as f64, self.rates[q].per_ms)).collect();
        let errs = (0..3).map(|q| self.rates[q].error_per_ms).collect();
        r.plots.push(
            Plot::new(
                "dark_counts",
                "Dark count rate by flip class",
                "flip class (qubit)",
                "rate (1/ms)",
            )
            .add(Series::new("dark", pts, SeriesStyle::Markers).with_errors(errs)),
        );
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcomes_partition_the_trajectories() {
        let p = DeviceParams::default();
        let run = RunConfig {
            trajectories: 40,
            seed: 3,
            workers: 1,
            engine: EngineKind::Telegraph,
        };
        let r = single_flip_experiment(&p, 1, &run, &SingleFlipOptions::default()).unwrap();
        let total = r.efficiency.successes
            + r.misclassified.successes
            + r.dark_before_injection.successes
            + r.missed.successes;
        assert_eq!(total, 40);
        assert_eq!(r.correction_times_us.len(), r.efficiency.successes);
        let integral: f64 = r.density(20.0, 0.1).iter().map(|(_, d)| d * 0.1).sum();
        assert!((integral - r.efficiency.estimate).abs() < 1e-9);
    }

    #[test]
    fn lossless_detection_is_certain() {
        let mut p = DeviceParams::default();
        p.qubits.t1_us = [1e9; 3];
        p.qubits.t2star_us = [1e9; 3];
        p.qubits.gamma_up_per_ms = [0.0; 3];
        let p = p.with_nbar([6.0, 6.0]);
        let run = RunConfig {
            trajectories: 60,
            seed: 5,
            workers: 1,
            engine: EngineKind::Telegraph,
        };
        for q in 0..3 {
            let r = single_flip_experiment(&p, q, &run, &SingleFlipOptions::default()).unwrap();
            assert_eq!(r.efficiency.successes, 60, "q{q}: {:?}", r.outcomes);
        }
    }

    #[test]
    fn dark_counts_vanish_without_excitation_and_noise() {
        let mut p = DeviceParams::default();
        p.qubits.gamma_up_per_ms = [0.0; 3];
        let p = p.with_nbar([20.0, 20.0]);
        let run = RunConfig {
            trajectories: 20,
            seed: 1,
            workers: 1,
            engine: EngineKind::Telegraph,
        };
        let r = dark_count_experiment(&p, &run, &DarkCountOptions { duration_us: 50.0 }).unwrap();
        assert!(r.rates.iter().all(|x| x.count == 0), "{:?}", r.rates);
        assert!((r.exposure_us - 1000.0).abs() < 1e-9);
    }
}
