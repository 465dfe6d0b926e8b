//! Two flips in quick succession: how often does the controller recover?

use serde::Serialize;

use super::output::{ExperimentResult, Plot, Series, SeriesStyle, Table};
use super::stats::Proportion;
use super::RunConfig;
use crate::controller::ControllerEvent;
use crate::error::{Error, Result};
use crate::model::DeviceParams;
use crate::trajectory::{
    run_batch, run_trajectory, Injection, NoiseSource, Protocol, TrajectoryOutcome,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeadTimeOptions {
    /// Time of the first flip, µs.
    pub first_flip_us: f64,
    /// Observation time after the second flip, µs.
    pub window_us: f64,
}

impl Default for DeadTimeOptions {
    fn default() -> Self {
        Self {
            first_flip_us: 1.0,
            window_us: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOutcome {
    /// Both flips corrected, one pulse each.
    Correct,
    /// The unflipped qubit is corrected first, completing a logical flip.
    LogicalError,
    NoDetection,
    Other,
}

/// Classify one run by its corrective pulses in time order.
///
/// Only the leading pulses matter: later ones respond to natural decays of
/// whatever state the controller left behind.
pub fn classify_pair(pair: (usize, usize), corrections: &[usize]) -> PairOutcome {
    let Some(&first) = corrections.first() else {
        return PairOutcome::NoDetection;
    };
    if pair.0 != pair.1 && first == 3 - pair.0 - pair.1 {
        return PairOutcome::LogicalError;
    }
    if corrections.len() >= 2 {
        let mut got = [first, corrections[1]];
        got.sort_unstable();
        let mut want = [pair.0, pair.1];
        want.sort_unstable();
        if got == want {
            return PairOutcome::Correct;
        }
    }
    PairOutcome::Other
}

#[derive(Debug, Clone, Serialize)]
pub struct DelayPoint {
    pub delay_ns: f64,
    pub correct: Proportion,
    pub logical_error: Proportion,
    pub no_detection: Proportion,
    pub other: Proportion,
}

impl DelayPoint {
    /// Probability competing with the correct outcome: logical errors for
    /// distinct qubits, no detection when the same qubit flips twice.
    pub fn failure(&self, same_qubit: bool) -> &Proportion {
        if same_qubit {
            &self.no_detection
        } else {
            &self.logical_error
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DeadTime {
    /// Linear interpolation between the bracketing delays.
    Crossing { ns: f64, error_ns: f64 },
    /// Correct outcomes already dominate at the shortest delay.
    BelowFirstDelay { first_delay_ns: f64 },
    /// Failures dominate over the whole sweep.
    Unbounded,
}

impl DeadTime {
    pub fn value_ns(&self) -> Option<f64> {
        match *self {
            DeadTime::Crossing { ns, .. } => Some(ns),
            DeadTime::BelowFirstDelay { first_delay_ns } => Some(first_delay_ns),
            DeadTime::Unbounded => None,
        }
    }

    pub fn error_ns(&self) -> f64 {
        match *self {
            DeadTime::Crossing { error_ns, .. } => error_ns,
            _ => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DeadTimeResult {
    pub pair: (usize, usize),
    pub trajectories: usize,
    pub points: Vec<DelayPoint>,
    pub dead_time: DeadTime,
    /// Controller events per delay and trajectory.
    #[serde(skip)]
    pub event_logs: Vec<(f64, Vec<Vec<ControllerEvent>>)>,
}

fn difference_variance(a: &Proportion, b: &Proportion) -> f64 {
    let n = a.trials.max(1) as f64;
    (a.estimate * (1.0 - a.estimate)
        + b.estimate * (1.0 - b.estimate)
        + 2.0 * a.estimate * b.estimate)
        / n
}

/// Where failure − correct changes sign from positive to non-positive.
pub fn find_dead_time(points: &[DelayPoint], same_qubit: bool) -> DeadTime {
    let d: Vec<f64> = points
        .iter()
        .map(|p| p.failure(same_qubit).estimate - p.correct.estimate)
        .collect();
    match d.first() {
        None => return DeadTime::Unbounded,
        Some(&d0) if d0 <= 0.0 => {
            return DeadTime::BelowFirstDelay {
                first_delay_ns: points[0].delay_ns,
            }
        }
        _ => {}
    }
    for k in 0..d.len() - 1 {
        if d[k] > 0.0 && d[k + 1] <= 0.0 {
            let h = points[k + 1].delay_ns - points[k].delay_ns;
            let denom = d[k] - d[k + 1];
            let ns = points[k].delay_ns + h * d[k] / denom;
            let var_k = difference_variance(points[k].failure(same_qubit), &points[k].correct);
            let var_k1 =
                difference_variance(points[k + 1].failure(same_qubit), &points[k + 1].correct);
            let g_k = -h * d[k + 1] / (denom * denom);
            let g_k1 = h * d[k] / (denom * denom);
            return DeadTime::Crossing {
                ns,
                error_ns: (g_k * g_k * var_k + g_k1 * g_k1 * var_k1).sqrt(),
            };
        }
    }
    DeadTime::Unbounded
}

fn protocol(
    pair: (usize, usize),
    delay_ns: f64,
    run: &RunConfig,
    opts: &DeadTimeOptions,
) -> Protocol {
    let second = opts.first_flip_us + delay_ns * 1e-3;
    Protocol {
        engine: run.engine,
        duration_us: second + opts.window_us,
        injections: vec![
            Injection {
                time_us: opts.first_flip_us,
                qubit: pair.0,
            },
            Injection {
                time_us: second,
                qubit: pair.1,
            },
        ],
        feedback: true,
        ..Protocol::default()
    }
}

/// Every delay uses the same seeds, so neighbouring points share noise.
pub fn dead_time_experiment(
    params: &DeviceParams,
    pair: (usize, usize),
    delays_ns: &[f64],
    run: &RunConfig,
    opts: &DeadTimeOptions,
) -> Result<DeadTimeResult> {
    if pair.0 > 2 || pair.1 > 2 {
        return Err(Error::Input(format!("qubit pair {pair:?} out of range")));
    }
    if delays_ns.is_empty() || delays_ns.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::Input(
            "delays must be finite and non-negative".into(),
        ));
    }
    if delays_ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("delays must be strictly ascending".into()));
    }
    let mut points = Vec::with_capacity(delays_ns.len());
    let mut event_logs = Vec::with_capacity(delays_ns.len());
    for &delay in delays_ns {
        let proto = protocol(pair, delay, run, opts);
        let outcomes = run_batch(run.trajectories, run.workers, |i| {
            let out: TrajectoryOutcome =
                run_trajectory(params, &proto, &mut NoiseSource::new(run.seed, i as u64))?;
            Ok((classify_pair(pair, &out.corrections()), out.events))
        })?;
        let n = outcomes.len();
        let count =
            |o: PairOutcome| Proportion::new(outcomes.iter().filter(|x| x.0 == o).count(), n);
        points.push(DelayPoint {
            delay_ns: delay,
            correct: count(PairOutcome::Correct),
            logical_error: count(PairOutcome::LogicalError),
            no_detection: count(PairOutcome::NoDetection),
            other: count(PairOutcome::Other),
        });
        event_logs.push((delay, outcomes.into_iter().map(|(_, e)| e).collect()));
    }
    let dead_time = find_dead_time(&points, pair.0 == pair.1);
    Ok(DeadTimeResult {
        pair,
        trajectories: run.trajectories,
        points,
        dead_time,
        event_logs,
    })
}

/// Parse `start:stop:step` (inclusive of stop when it lies on the grid).
pub fn parse_delays(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || {
        Error::Input(format!(
            "invalid delay range {spec:?}, expected start:stop:step"
        ))
    };
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (start, stop, step) = (v[0], v[1], v[2]);
    if !(step > 0.0) || stop < start || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

impl DeadTimeResult {
    pub fn to_result(
        &self,
        params: &DeviceParams,
        run: &RunConfig,
        opts: &DeadTimeOptions,
    ) -> ExperimentResult {
        let mut r =
            ExperimentResult::new("dead-time", params, run.seed, run.engine, run.trajectories);
        let same = self.pair.0 == self.pair.1;
        r.metric("pair", [self.pair.0, self.pair.1]);
        r.metric("dead_time", self.dead_time);
        r.metric("points", &self.points);
        r.metric("options", opts);
        match self.dead_time {
            DeadTime::Unbounded => r.flag("dead time unbounded: failures dominate at every delay"),
            DeadTime::BelowFirstDelay { .. } => r.flag("dead time below the first delay point"),
            DeadTime::Crossing { .. } => {}
        }
        let mut t = Table::new(
            "curve",
            &[
                "delay_ns",
                "p_correct",
                "p_logical_error",
                "p_no_detection",
                "p_other",
                "correct_lo",
                "correct_hi",
                "failure_lo",
                "failure_hi",
            ],
        );
        for p in &self.points {
            let f = p.failure(same);
            t.push([
                p.delay_ns,
                p.correct.estimate,
                p.logical_error.estimate,
                p.no_detection.estimate,
                p.other.estimate,
                p.correct.lower,
                p.correct.upper,
                f.lower,
                f.upper,
            ]);
        }
        r.tables.push(t);
        let mut ev = Table::new(
            "events",
            &["delay_ns", "trajectory", "time_ns", "kind", "qubit"],
        );
        for (delay, logs) in &self.event_logs {
            for (i, log) in logs.iter().enumerate() {
                for e in log {
                    ev.push([
                        delay.to_string(),
                        i.to_string(),
                        e.time_ns.to_string(),
                        e.kind.name().to_string(),
                        e.kind.qubit().to_string(),
                    ]);
                }
            }
        }
        r.tables.push(ev);
        let curve = |sel: &dyn Fn(&DelayPoint) -> &Proportion| -> (Vec<(f64, f64)>, Vec<f64>) {
            let pts = self
                .points
                .iter()
                .map(|p| (p.delay_ns, sel(p).estimate))
                .collect();
            let errs = self
                .points
                .iter()
                .map(|p| 0.5 * (sel(p).upper - sel(p).lower))
                .collect();
            (pts, errs)
        };
        let (gp, ge) = curve(&|p| &p.correct);
        let (fp, fe) = curve(&|p| p.failure(same));
        let fail_name = if same {
            "no detection"
        } else {
            "logical error"
        };
        r.plots.push(
            Plot::new(
                "curve",
                &format!("Flips on q{} then q{}", self.pair.0, self.pair.1),
                "delay (ns)",
                "probability",
            )
            .add(Series::new("correct", gp, SeriesStyle::Markers).with_errors(ge))
            .add(Series::new(fail_name, fp, SeriesStyle::Markers).with_errors(fe)),
        );
        r
    }
}
