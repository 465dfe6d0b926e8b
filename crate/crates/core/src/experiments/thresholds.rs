//! Threshold calibration from labelled open-loop traces.
//!
//! Traces are recorded with feedback off after preparing |000⟩ and flipping
//! none or one of the qubits. For each candidate (Θ₁, Θ₂, Θ₃) on a lattice a
//! trace is classified by the first threshold condition it meets, giving the
//! confusion matrix P(i|j). The thresholds minimize Σ_ij (P_ij − δ_ij)².
//!
//! Per trace, first-passage times are precomputed for every lattice level, so
//! scoring a triple costs O(1) per trace.

use serde::Serialize;

use super::output::{ExperimentResult, Table};
use super::RunConfig;
use crate::controller::Thresholds;
use crate::error::{Error, Result};
use crate::model::DeviceParams;
use crate::trajectory::{
    measurement_rate, run_batch, run_trajectory, Injection, NoiseSource, Protocol,
};

const NEVER: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdLattice {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for ThresholdLattice {
    fn default() -> Self {
        Self {
            min: -1.0,
            max: 1.0,
            step: 0.05,
        }
    }
}

impl ThresholdLattice {
    pub fn levels(&self) -> Vec<f64> {
        if !(self.step > 0.0) || !(self.max >= self.min) {
            return Vec::new();
        }
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.min + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizeOptions {
    pub lattice: ThresholdLattice,
    /// Trace length after the flip, µs.
    pub window_us: f64,
    /// Zero gives noiseless traces.
    pub noise_scale: f64,
    /// Include qubit decay and excitation while recording.
    pub dissipation: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            lattice: ThresholdLattice::default(),
            window_us: 6.0,
            noise_scale: 1.0,
            dissipation: true,
        }
    }
}

/// Filtered signals of one labelled trace. `class` is 0 for no flip and
/// `q + 1` for a flip of qubit `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledTrace {
    pub class: usize,
    pub v: Vec<[f64; 2]>,
}

pub fn labelled_traces(
    params: &DeviceParams,
    run: &RunConfig,
    opts: &OptimizeOptions,
) -> Result<Vec<LabelledTrace>> {
    let per_class = run.trajectories;
    run_batch(4 * per_class, run.workers, |i| {
        let class = i / per_class;
        let mut proto = Protocol {
            engine: run.engine,
            duration_us: opts.window_us,
            feedback: false,
            keep_record: true,
            noise_scale: opts.noise_scale,
            ..Protocol::default()
        };
        proto.processes.dissipation = opts.dissipation;
        if class > 0 {
            proto.injections.push(Injection {
                time_us: 0.0,
                qubit: class - 1,
            });
        }
        let mut noise = NoiseSource::new(run.seed, i as u64);
        let out = run_trajectory(params, &proto, &mut noise)?;
        let rec = out.record.expect("record kept");
        Ok(LabelledTrace {
            class,
            v: rec.samples.iter().map(|s| s.v).collect(),
        })
    })
}

/// First-passage sample indices of one trace at every lattice level.
struct Passages {
    class: usize,
    /// `both[c]`: first sample with V0 < Θ3 and V1 < Θ3 for Θ3 = level c.
    both: Vec<u32>,
    /// `single[side][a * L + b]`: first sample with V_side < Θ1 = level a and
    /// the other signal > Θ2 = level b.
    single: [Vec<u32>; 2],
}

fn passages(trace: &LabelledTrace, levels: &[f64]) -> Passages {
    let l = levels.len();
    let mut both = vec![NEVER; l];
    let mut running = f64::INFINITY;
    // Levels at or above index `crossed` lie above the running minimum.
    let mut crossed = l;
    for (n, v) in trace.v.iter().enumerate() {
        running = running.min(v[0].max(v[1]));
        while crossed > 0 && levels[crossed - 1] > running {
            crossed -= 1;
            both[crossed] = n as u32;
        }
    }
    let single = [0usize, 1].map(|side| {
        let other = 1 - side;
        let mut table = vec![NEVER; l * l];
        let mut records: Vec<(u32, f64)> = Vec::new();
        for a in 0..l {
            records.clear();
            let mut best = f64::NEG_INFINITY;
            for (n, v) in trace.v.iter().enumerate() {
                if v[side] < levels[a] && v[other] > best {
                    best = v[other];
                    records.push((n as u32, best));
                }
            }
            let mut r = 0;
            for b in 0..l {
                while r < records.len() && records[r].1 <= levels[b] {
                    r += 1;
                }
                table[a * l + b] = if r < records.len() {
                    records[r].0
                } else {
                    NEVER
                };
            }
        }
        table
    });
    Passages {
        class: trace.class,
        both,
        single,
    }
}

/// Classification index (0 none, q + 1) under the lattice thresholds.
#[inline]
fn classify(p: &Passages, l: usize, a: usize, b: usize, c: usize) -> usize {
    let t1 = p.both[c];
    let t0 = p.single[0][a * l + b];
    let t2 = p.single[1][a * l + b];
    let first = t1.min(t0).min(t2);
    if first == NEVER {
        0
    } else if t1 == first {
        2
    } else if t0 == first {
        1
    } else {
        3
    }
}

fn confusion_from(ps: &[Passages], l: usize, a: usize, b: usize, c: usize) -> [[f64; 4]; 4] {
    let mut counts = [[0usize; 4]; 4];
    let mut totals = [0usize; 4];
    for p in ps {
        counts[classify(p, l, a, b, c)][p.class] += 1;
        totals[p.class] += 1;
    }
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            if totals[j] > 0 {
                counts[i][j] as f64 / totals[j] as f64
            } else {
                0.0
            }
        })
    })
}

pub fn objective(confusion: &[[f64; 4]; 4]) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let d = if i == j { 1.0 } else { 0.0 };
            s += (confusion[i][j] - d).powi(2);
        }
    }
    s
}

/// Confusion matrix P(i|j) for arbitrary thresholds, classifying each trace by
/// its first threshold condition (same priority as the controller).
pub fn confusion_matrix(traces: &[LabelledTrace], th: &Thresholds) -> [[f64; 4]; 4] {
    let mut counts = [[0usize; 4]; 4];
    let mut totals = [0usize; 4];
    for t in traces {
        let class =
            t.v.iter()
                .find_map(|v| crate::controller::detect(v[0], v[1], th))
                .map_or(0, |q| q + 1);
        counts[class][t.class] += 1;
        totals[t.class] += 1;
    }
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            if totals[j] > 0 {
                counts[i][j] as f64 / totals[j] as f64
            } else {
                0.0
            }
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdOptimum {
    pub thresholds: ThresholdsOut,
    /// `confusion[i][j]` = P(classified i | prepared j), order (none, q0, q1, q2).
    pub confusion: [[f64; 4]; 4],
    pub objective: f64,
    /// Number of lattice points sharing the minimal objective.
    pub argmin_count: usize,
    pub feasible_points: usize,
    /// Objective at every feasible lattice neighbour of the optimum.
    pub neighbour_objectives: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdsOut {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

impl From<ThresholdsOut> for Thresholds {
    fn from(t: ThresholdsOut) -> Self {
        Thresholds {
            theta1: t.theta1,
            theta2: t.theta2,
            theta3: t.theta3,
        }
    }
}

/// Exhaustive lattice search over precomputed traces.
pub fn optimize_on_traces(
    traces: &[LabelledTrace],
    lattice: &ThresholdLattice,
) -> Result<ThresholdOptimum> {
    let levels = lattice.levels();
    let l = levels.len();
    let feasible = |a: usize, b: usize| levels[b] > levels[a];
    let feasible_points = (0..l)
        .flat_map(|a| (0..l).map(move |b| (a, b)))
        .filter(|&(a, b)| feasible(a, b))
        .count()
        * l;
    if feasible_points == 0 {
        return Err(Error::Config(format!(
            "threshold lattice {lattice:?} has no point with theta2 > theta1"
        )));
    }
    if traces.is_empty() {
        return Err(Error::Input("no labelled traces".into()));
    }
    let ps: Vec<Passages> = traces.iter().map(|t| passages(t, &levels)).collect();
    let mut scores = vec![f64::INFINITY; l * l * l];
    let idx = |a: usize, b: usize, c: usize| (a * l + b) * l + c;
    let mut best = f64::INFINITY;
    for a in 0..l {
        for b in 0..l {
            if !feasible(a, b) {
                continue;
            }
            for c in 0..l {
                let s = objective(&confusion_from(&ps, l, a, b, c));
                scores[idx(a, b, c)] = s;
                best = best.min(s);
            }
        }
    }
    let tol = 1e-12;
    let argmin: Vec<(usize, usize, usize)> = (0..l)
        .flat_map(|a| (0..l).flat_map(move |b| (0..l).map(move |c| (a, b, c))))
        .filter(|&(a, b, c)| scores[idx(a, b, c)] <= best + tol)
        .collect();
    let m = argmin.len() as f64;
    let centroid = argmin.iter().fold([0.0; 3], |acc, &(a, b, c)| {
        [
            acc[0] + levels[a] / m,
            acc[1] + levels[b] / m,
            acc[2] + levels[c] / m,
        ]
    });
    let &(a, b, c) = argmin
        .iter()
        .min_by(|x, y| {
            let d = |&(a, b, c): &(usize, usize, usize)| {
                (levels[a] - centroid[0]).powi(2)
                    + (levels[b] - centroid[1]).powi(2)
                    + (levels[c] - centroid[2]).powi(2)
            };
            d(x).total_cmp(&d(y))
        })
        .expect("non-empty argmin");
    let mut neighbour_objectives = Vec::new();
    for da in -1i64..=1 {
        for db in -1i64..=1 {
            for dc in -1i64..=1 {
                if da == 0 && db == 0 && dc == 0 {
                    continue;
                }
                let (na, nb, nc) = (a as i64 + da, b as i64 + db, c as i64 + dc);
                if [na, nb, nc].iter().any(|&x| x < 0 || x >= l as i64) {
                    continue;
                }
                let (na, nb, nc) = (na as usize, nb as usize, nc as usize);
                if feasible(na, nb) {
                    neighbour_objectives.push(scores[idx(na, nb, nc)]);
                }
            }
        }
    }
    Ok(ThresholdOptimum {
        thresholds: ThresholdsOut {
            theta1: levels[a],
            theta2: levels[b],
            theta3: levels[c],
        },
        confusion: confusion_from(&ps, l, a, b, c),
        objective: scores[idx(a, b, c)],
        argmin_count: argmin.len(),
        feasible_points,
        neighbour_objectives,
    })
}

pub fn optimize_thresholds(
    params: &DeviceParams,
    run: &RunConfig,
    opts: &OptimizeOptions,
) -> Result<ThresholdOptimum> {
    if opts.lattice.levels().is_empty() {
        return Err(Error::Config(format!(
            "invalid threshold lattice {:?}",
            opts.lattice
        )));
    }
    let traces = labelled_traces(params, run, opts)?;
    optimize_on_traces(&traces, &opts.lattice)
}

/// Mean measurement rate of the two resonators, µs⁻¹.
pub fn mean_measurement_rate(params: &DeviceParams) -> f64 {
    0.5 * (measurement_rate(params, 0) + measurement_rate(params, 1))
}

/// Copy of `params` with τ_ctrl rescaled so that τ_ctrl·Γ_meas matches
/// `reference`, keeping the filtered signal-to-noise ratio fixed.
pub fn scale_filter_to_rate(params: &DeviceParams, reference: &DeviceParams) -> DeviceParams {
    let mut p = params.clone();
    p.controller.tau_ctrl_ns = reference.controller.tau_ctrl_ns * mean_measurement_rate(reference)
        / mean_measurement_rate(params);
    p
}

/// Copy of `params` with thresholds replaced by the optimizer's choice.
pub fn calibrate(
    params: &DeviceParams,
    run: &RunConfig,
    opts: &OptimizeOptions,
) -> Result<(DeviceParams, ThresholdOptimum)> {
    let opt = optimize_thresholds(params, run, opts)?;
    let mut p = params.clone();
    p.controller.theta1 = opt.thresholds.theta1;
    p.controller.theta2 = opt.thresholds.theta2;
    p.controller.theta3 = opt.thresholds.theta3;
    Ok((p, opt))
}

impl ThresholdOptimum {
    pub fn to_result(
        &self,
        params: &DeviceParams,
        run: &RunConfig,
        opts: &OptimizeOptions,
    ) -> ExperimentResult {
        let mut r = ExperimentResult::new(
            "optimize-thresholds",
            params,
            run.seed,
            run.engine,
            run.trajectories,
        );
        r.metric("thresholds", self.thresholds);
        r.metric("objective", self.objective);
        r.metric("confusion", self.confusion);
        r.metric("argmin_count", self.argmin_count);
        r.metric("feasible_points", self.feasible_points);
        r.metric("options", opts);
        let names = ["none", "q0", "q1", "q2"];
        let mut t = Table::new(
            "confusion",
            &[
                "classified",
                "prepared_none",
                "prepared_q0",
                "prepared_q1",
                "prepared_q2",
            ],
        );
        for i in 0..4 {
            let mut row = vec![names[i].to_string()];
            row.extend(self.confusion[i].iter().map(|v| v.to_string()));
            t.push(row);
        }
        r.tables.push(t);
        r
    }
}
