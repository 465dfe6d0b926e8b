//! Decay of the excited logical state with and without feedback.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::fit::{fit_exponential, ExpFit};
use super::output::{ExperimentResult, Plot, Series, SeriesStyle, Table};
use super::stats::mean_se;
use super::RunConfig;
use crate::error::{Error, Result};
use crate::model::{DeviceParams, Sector, ThreeQubitState};
use crate::trajectory::noise::mix_seed;
use crate::trajectory::{run_batch, run_trajectory, NoiseSource, Protocol};

const BOOTSTRAP_TAG: u64 = 0xB007;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogicalT1Options {
    pub horizon_us: f64,
    pub sample_every_us: f64,
    pub feedback: bool,
    /// Trajectory resamples for the lifetime error; zero skips the bootstrap.
    pub bootstrap: usize,
}

impl Default for LogicalT1Options {
    fn default() -> Self {
        Self {
            horizon_us: 300.0,
            sample_every_us: 5.0,
            feedback: true,
            bootstrap: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LogicalT1Result {
    pub sector: Sector,
    pub trajectories: usize,
    pub times_us: Vec<f64>,
    /// Mean population of the excited logical state and its standard error.
    pub excited: Vec<f64>,
    pub excited_se: Vec<f64>,
    pub codespace: Vec<f64>,
    pub fit: ExpFit,
    /// Spread of T over trajectory resamples. Samples share trajectories, so
    /// this is the honest error; the fit covariance treats them as independent.
    pub bootstrap_t_error_us: Option<f64>,
    pub bootstrap_failures: usize,
    /// Mean codespace population over the last fifth of the samples.
    pub steady_codespace: f64,
    /// −ln(P(t₁)/P(0))/t₁ from the first sample interval, µs⁻¹.
    pub initial_decay_rate: f64,
}

impl LogicalT1Result {
    pub fn t1_us(&self) -> f64 {
        self.fit.t
    }

    pub fn t1_error_us(&self) -> f64 {
        self.bootstrap_t_error_us
            .unwrap_or_else(|| self.fit.t_error())
    }
}

pub fn logical_t1_experiment(
    params: &DeviceParams,
    sector: Sector,
    run: &RunConfig,
    opts: &LogicalT1Options,
) -> Result<LogicalT1Result> {
    if !(opts.sample_every_us > 0.0) || !(opts.horizon_us > opts.sample_every_us) {
        return Err(Error::Input(format!(
            "need horizon > sample interval > 0, got {} and {}",
            opts.horizon_us, opts.sample_every_us
        )));
    }
    if run.trajectories == 0 {
        return Err(Error::Input(
            "logical T1 needs at least one trajectory".into(),
        ));
    }
    let (zero, one) = sector.logical_states();
    let n_samples = (opts.horizon_us / opts.sample_every_us + 1e-9).floor() as usize + 1;
    let times: Vec<f64> = (0..n_samples)
        .map(|k| k as f64 * opts.sample_every_us)
        .collect();
    let proto = Protocol {
        engine: run.engine,
        initial: ThreeQubitState::basis(one),
        sector,
        duration_us: opts.horizon_us,
        feedback: opts.feedback,
        snapshot_times_us: times.clone(),
        ..Protocol::default()
    };
    let traces = run_batch(run.trajectories, run.workers, |i| {
        let out = run_trajectory(params, &proto, &mut NoiseSource::new(run.seed, i as u64))?;
        Ok(out
            .snapshots
            .iter()
            .map(|s| (s.populations[one], s.populations[zero]))
            .collect::<Vec<_>>())
    })?;
    let n = traces.len();
    let mut excited = Vec::with_capacity(n_samples);
    let mut excited_se = Vec::with_capacity(n_samples);
    let mut codespace = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let column: Vec<f64> = traces.iter().map(|t| t[k].0).collect();
        let (m, se) = mean_se(&column);
        excited.push(m);
        excited_se.push(se);
        codespace.push(traces.iter().map(|t| t[k].0 + t[k].1).sum::<f64>() / n as f64);
    }
    let floor = 1.0 / n as f64;
    let errors: Vec<f64> = excited_se
        .iter()
        .map(|&e| if e.is_finite() { e.max(floor) } else { floor })
        .collect();
    let fit = fit_exponential(&times, &excited, &errors)?;
    let (bootstrap_t_error_us, bootstrap_failures) =
        bootstrap(&traces, &times, &errors, opts.bootstrap, run.seed);
    let tail = (n_samples / 5).max(1);
    let steady_codespace = codespace[n_samples - tail..].iter().sum::<f64>() / tail as f64;
    let initial_decay_rate = -(excited[1] / excited[0]).ln() / times[1];
    Ok(LogicalT1Result {
        sector,
        trajectories: n,
        times_us: times,
        excited,
        excited_se,
        codespace,
        fit,
        bootstrap_t_error_us,
        bootstrap_failures,
        steady_codespace,
        initial_decay_rate,
    })
}

/// Standard deviation of the fitted T over resampled trajectory sets.
fn bootstrap(
    traces: &[Vec<(f64, f64)>],
    times: &[f64],
    errors: &[f64],
    resamples: usize,
    seed: u64,
) -> (Option<f64>, usize) {
    if resamples < 2 || traces.len() < 2 {
        return (None, 0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, BOOTSTRAP_TAG));
    let n = traces.len();
    let mut ts = Vec::with_capacity(resamples);
    let mut failures = 0;
    let mut mean = vec![0.0; times.len()];
    for _ in 0..resamples {
        mean.iter_mut().for_each(|m| *m = 0.0);
        for _ in 0..n {
            let t = &traces[rng.random_range(0..n)];
            for (m, v) in mean.iter_mut().zip(t) {
                *m += v.0;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        match fit_exponential(times, &mean, errors) {
            Ok(f) if f.identifiable => ts.push(f.t),
            _ => failures += 1,
        }
    }
    if ts.len() < 2 {
        return (None, failures);
    }
    let m = ts.iter().sum::<f64>() / ts.len() as f64;
    let var = ts.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (ts.len() - 1) as f64;
    (Some(var.sqrt()), failures)
}

impl LogicalT1Result {
    pub fn to_result(
        &self,
        params: &DeviceParams,
        run: &RunConfig,
        opts: &LogicalT1Options,
    ) -> ExperimentResult {
        let mut r =
            ExperimentResult::new("logical-t1", params, run.seed, run.engine, run.trajectories);
        let bare = params.qubits.t1_us.iter().cloned().fold(f64::MIN, f64::max);
        r.metric("sector", self.sector);
        r.metric("t1_logical_us", self.fit.t);
        r.metric("t1_logical_error_us", self.t1_error_us());
        r.metric("t1_logical_fit_error_us", self.fit.t_error());
        r.metric("bootstrap_failures", self.bootstrap_failures);
        r.metric("ratio_to_max_bare_t1", self.fit.t / bare);
        r.metric("fit", &self.fit);
        r.metric("steady_codespace_population", self.steady_codespace);
        r.metric("initial_decay_rate_per_us", self.initial_decay_rate);
        r.metric("options", opts);
        if !self.fit.identifiable {
            r.flag("decay time not identifiable from the population curve");
        }
        let mut t = Table::new(
            "population",
            &["time_us", "p_excited", "p_excited_se", "p_codespace", "fit"],
        );
        for k in 0..self.times_us.len() {
            t.push([
                self.times_us[k],
                self.excited[k],
                self.excited_se[k],
                self.codespace[k],
                self.fit.eval(self.times_us[k]),
            ]);
        }
        r.tables.push(t);
        let data: Vec<(f64, f64)> = self
            .times_us
            .iter()
            .cloned()
            .zip(self.excited.iter().cloned())
            .collect();
        let fit_line: Vec<(f64, f64)> = self
            .times_us
            .iter()
            .map(|&t| (t, self.fit.eval(t)))
            .collect();
        let code: Vec<(f64, f64)> = self
            .times_us
            .iter()
            .cloned()
            .zip(self.codespace.iter().cloned())
            .collect();
        r.plots.push(
            Plot::new(
                "population",
                &format!("Excited logical state, {} sector", self.sector),
                "time (us)",
                "population",
            )
            .add(
                Series::new("excited logical", data, SeriesStyle::Markers)
                    .with_errors(self.excited_se.clone()),
            )
            .add(Series::new(
                &format!("fit T = {:.1} us", self.fit.t),
                fit_line,
                SeriesStyle::Line,
            ))
            .add(Series::new("codespace", code, SeriesStyle::Line)),
        );
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::EngineKind;

    #[test]
    fn open_loop_decay_of_all_excited() {
        let p = DeviceParams::default();
        let run = RunConfig {
            trajectories: 400,
            seed: 5,
            engine: EngineKind::Telegraph,
            ..Default::default()
        };
        let opts = LogicalT1Options {
            horizon_us: 40.0,
            sample_every_us: 2.0,
            feedback: false,
            bootstrap: 0,
        };
        let res = logical_t1_experiment(&p, Sector::EE, &run, &opts).unwrap();
        let expected: f64 = p.qubits.t1_us.iter().map(|t| 1.0 / t).sum();
        // 400 samples of a survival probability near 0.76
        let se = (0.76f64 * 0.24 / 400.0).sqrt() / 0.76 / 2.0;
        assert!(
            (res.initial_decay_rate - expected).abs() < 4.0 * se,
            "{} vs {}",
            res.initial_decay_rate,
            expected
        );
    }

    #[test]
    fn rejects_bad_sampling() {
        let p = DeviceParams::default();
        let run = RunConfig {
            trajectories: 1,
            ..Default::default()
        };
        let opts = LogicalT1Options {
            horizon_us: 1.0,
            sample_every_us: 2.0,
            feedback: true,
            bootstrap: 0,
        };
        assert!(logical_t1_experiment(&p, Sector::OO, &run, &opts).is_err());
    }
}
