//! Single-trajectory driver and the parallel batch runner.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::noise::NoiseSource;
use super::record::{Calibration, HomodyneRecord, RecordSample};
use super::sme::{Processes, SmeStepper};
use super::telegraph::{Jump, TelegraphEngine, TelegraphState};
use crate::cavity::{CavityModel, FieldPropagator, PointerFields};
use crate::controller::{
    Controller, ControllerEvent, ControllerEventKind, Demodulator, Thresholds,
};
use crate::error::{Error, Result};
use crate::model::basis::{DIM, N_RESONATORS};
use crate::model::state::StateDiagnostics;
use crate::model::{DeviceParams, Sector, ThreeQubitState};

const TIME_EPS_US: f64 = 1e-9;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    #[default]
    Sme,
    Telegraph,
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineKind::Sme => "sme",
            EngineKind::Telegraph => "telegraph",
        })
    }
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sme" => Ok(EngineKind::Sme),
            "telegraph" => Ok(EngineKind::Telegraph),
            other => Err(Error::Input(format!(
                "unknown engine `{other}` (expected sme or telegraph)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Injection {
    pub time_us: f64,
    pub qubit: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldStart {
    /// Fields at their driven steady states (readout already running).
    #[default]
    Steady,
    /// Empty resonators, drive switched on at t = 0.
    Vacuum,
    /// Empty resonators with the drive off for the whole run.
    Off,
}

/// What to simulate and what to keep.
#[derive(Debug, Clone)]
pub struct Protocol {
    pub engine: EngineKind,
    pub initial: ThreeQubitState,
    /// Code sector the controller guards.
    pub sector: Sector,
    pub duration_us: f64,
    pub injections: Vec<Injection>,
    pub feedback: bool,
    pub thresholds: Option<Thresholds>,
    pub field_start: FieldStart,
    pub drive_off_at_us: Option<f64>,
    pub processes: Processes,
    /// Zero makes the homodyne noise vanish.
    pub noise_scale: f64,
    pub snapshot_times_us: Vec<f64>,
    /// Keep full density matrices in snapshots (master-equation engine only).
    pub keep_states: bool,
    pub keep_record: bool,
    /// Check state invariants every this many integrator steps.
    pub check_every: Option<usize>,
    /// End the run this long after the first corrective pulse.
    pub stop_after_first_pulse_us: Option<f64>,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            engine: EngineKind::Sme,
            initial: ThreeQubitState::basis(0),
            sector: Sector::EE,
            duration_us: 10.0,
            injections: Vec::new(),
            feedback: true,
            thresholds: None,
            field_start: FieldStart::Steady,
            drive_off_at_us: None,
            processes: Processes::default(),
            noise_scale: 1.0,
            snapshot_times_us: Vec::new(),
            keep_states: false,
            keep_record: false,
            check_every: None,
            stop_after_first_pulse_us: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time_us: f64,
    pub populations: [f64; DIM],
    pub state: Option<ThreeQubitState>,
}

/// A controller detection together with the plant state at that moment.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub qubit: usize,
    pub time_ns: f64,
    pub populations: [f64; DIM],
}

#[derive(Debug, Clone)]
pub struct TrajectoryOutcome {
    pub events: Vec<ControllerEvent>,
    pub detections: Vec<Detection>,
    /// Injected flips as `(time_ns, qubit)`.
    pub injections: Vec<(f64, usize)>,
    /// Natural jumps (telegraph engine only).
    pub jumps: Vec<Jump>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: ThreeQubitState,
    pub end_time_us: f64,
    pub record: Option<HomodyneRecord>,
    /// Worst invariant deviations over all checked steps.
    pub worst: Option<StateDiagnostics>,
    pub checks: usize,
}

impl TrajectoryOutcome {
    pub fn pulses(&self) -> impl Iterator<Item = &ControllerEvent> {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, ControllerEventKind::PulseFired(_)))
    }

    /// Qubits of all corrective pulses, in firing order.
    pub fn corrections(&self) -> Vec<usize> {
        self.pulses().map(|e| e.kind.qubit()).collect()
    }

    pub fn first_pulse(&self) -> Option<&ControllerEvent> {
        self.pulses().next()
    }

    pub fn first_detection(&self) -> Option<&Detection> {
        self.detections.first()
    }
}

enum Plant {
    Sme {
        state: ThreeQubitState,
        stepper: SmeStepper,
    },
    Telegraph {
        state: TelegraphState,
        engine: TelegraphEngine,
        jumps: Vec<Jump>,
    },
}

impl Plant {
    fn flip(&mut self, qubit: usize, now_us: f64, noise: &mut NoiseSource) {
        match self {
            Plant::Sme { state, .. } => state.flip(qubit),
            Plant::Telegraph { state, engine, .. } => {
                state.flip(qubit, now_us, &engine.rates, noise)
            }
        }
    }

    fn populations(&self) -> [f64; DIM] {
        match self {
            Plant::Sme { state, .. } => state.populations(),
            Plant::Telegraph { state, .. } => {
                std::array::from_fn(|s| if s == state.label { 1.0 } else { 0.0 })
            }
        }
    }

    fn state(&self) -> ThreeQubitState {
        match self {
            Plant::Sme { state, .. } => state.clone(),
            Plant::Telegraph { state, .. } => ThreeQubitState::basis(state.label),
        }
    }

    fn mean_record(&self, fields: &PointerFields) -> [f64; N_RESONATORS] {
        match self {
            Plant::Sme { state, stepper } => stepper.mean_record(state, fields),
            Plant::Telegraph { state, engine, .. } => engine.mean_record(state, fields),
        }
    }
}

struct Worst(Option<StateDiagnostics>);

impl Worst {
    fn update(&mut self, d: StateDiagnostics) {
        self.0 = Some(match self.0 {
            None => d,
            Some(w) => StateDiagnostics {
                trace_error: w.trace_error.max(d.trace_error),
                hermiticity_error: w.hermiticity_error.max(d.hermiticity_error),
                min_eigenvalue: w.min_eigenvalue.min(d.min_eigenvalue),
            },
        });
    }
}

/// Simulate one trajectory.
pub fn run_trajectory(
    params: &DeviceParams,
    protocol: &Protocol,
    noise: &mut NoiseSource,
) -> Result<TrajectoryOutcome> {
    let model = CavityModel::new(params);
    let dt_sim = params.dt_sim_us();
    let dt_ctrl = params.dt_ctrl_us();
    let dt_ctrl_ns = params.integrator.dt_ctrl_ns;
    let substeps = params.substeps();
    let prop: FieldPropagator = model.propagator(dt_sim);
    let cal = Calibration::new(params);

    let mut fields = match protocol.field_start {
        FieldStart::Steady => PointerFields::steady(&model),
        FieldStart::Vacuum => {
            let mut f = PointerFields::vacuum();
            f.set_drive(true);
            f
        }
        FieldStart::Off => PointerFields::vacuum(),
    };

    let mut plant = match protocol.engine {
        EngineKind::Sme => {
            let mut stepper = SmeStepper::with_processes(params, dt_sim, protocol.processes);
            stepper.set_noise_scale(protocol.noise_scale);
            Plant::Sme {
                state: protocol.initial.clone(),
                stepper,
            }
        }
        EngineKind::Telegraph => {
            let mut engine = TelegraphEngine::new(params, dt_sim);
            engine.noise_scale = protocol.noise_scale;
            if !protocol.processes.dissipation {
                engine.rates.down = [0.0; 3];
                engine.rates.up = [0.0; 3];
            }
            let label = noise.categorical(&protocol.initial.populations());
            let state = TelegraphState::new(label, 0.0, &engine.rates, noise);
            Plant::Telegraph {
                state,
                engine,
                jumps: Vec::new(),
            }
        }
    };

    let thresholds = protocol
        .thresholds
        .unwrap_or_else(|| Thresholds::from_params(params));
    let mut controller = Controller::with_thresholds(params, protocol.sector, thresholds);
    let vdc0 = cal.normalize(plant.mean_record(&fields));
    let mut demod = Demodulator::new(params, vdc0);
    let signs = protocol.sector.parities();
    controller.set_memory([signs[0] * vdc0[0], signs[1] * vdc0[1]]);

    let mut injections = protocol.injections.clone();
    injections.sort_by(|a, b| a.time_us.total_cmp(&b.time_us));
    let mut next_injection = 0;
    let mut snapshot_times = protocol.snapshot_times_us.clone();
    snapshot_times.sort_by(f64::total_cmp);
    let mut next_snapshot = 0;

    let mut out = TrajectoryOutcome {
        events: Vec::new(),
        detections: Vec::new(),
        injections: Vec::new(),
        jumps: Vec::new(),
        snapshots: Vec::new(),
        final_state: ThreeQubitState::basis(0),
        end_time_us: 0.0,
        record: protocol.keep_record.then(HomodyneRecord::default),
        worst: None,
        checks: 0,
    };
    let mut worst = Worst(None);
    let mut end_us = protocol.duration_us;
    let mut substep_count: usize = 0;
    let mut n: u64 = 0;
    let mut dw = [vec![0.0; substeps], vec![0.0; substeps]];

    let take_snapshot = |plant: &Plant, t: f64| Snapshot {
        time_us: t,
        populations: plant.populations(),
        state: match plant {
            Plant::Sme { state, .. } if protocol.keep_states => Some(state.clone()),
            _ => None,
        },
    };

    loop {
        let t0 = n as f64 * dt_ctrl;
        while next_injection < injections.len()
            && injections[next_injection].time_us <= t0 + TIME_EPS_US
        {
            let q = injections[next_injection].qubit;
            plant.flip(q, t0, noise);
            fields.permute_on_flip(q);
            out.injections.push((t0 * 1e3, q));
            next_injection += 1;
        }
        if let Some(off) = protocol.drive_off_at_us {
            if t0 >= off - TIME_EPS_US {
                fields.set_drive(false);
            }
        }
        while next_snapshot < snapshot_times.len()
            && snapshot_times[next_snapshot] <= t0 + TIME_EPS_US
        {
            out.snapshots.push(take_snapshot(&plant, t0));
            next_snapshot += 1;
        }
        if t0 >= end_us - TIME_EPS_US {
            break;
        }

        for path in dw.iter_mut() {
            noise.wiener_path(dt_ctrl, path);
        }
        let mut acc = [0.0; N_RESONATORS];
        for k in 0..substeps {
            let t = t0 + k as f64 * dt_sim;
            let dwk = [dw[0][k], dw[1][k]];
            let dy = match &mut plant {
                Plant::Sme { state, stepper } => {
                    stepper.step(state, &fields, dwk).map_err(|e| match e {
                        Error::Integrator { reason, .. } => {
                            Error::Integrator { time_us: t, reason }
                        }
                        other => other,
                    })?
                }
                Plant::Telegraph {
                    state,
                    engine,
                    jumps,
                } => engine.step(state, &fields, t, dwk, noise, jumps),
            };
            fields.evolve(&prop);
            acc[0] += dy[0];
            acc[1] += dy[1];
            substep_count += 1;
            if let (Some(every), Plant::Sme { state, .. }) = (protocol.check_every, &plant) {
                if substep_count % every == 0 {
                    let d = state.diagnostics();
                    out.checks += 1;
                    worst.update(d);
                    if !d.within_bounds() {
                        return Err(Error::Integrator {
                            time_us: t + dt_sim,
                            reason: format!(
                                "state invariant violated: trace error {:.3e}, hermiticity {:.3e}, min eigenvalue {:.3e}",
                                d.trace_error, d.hermiticity_error, d.min_eigenvalue
                            ),
                        });
                    }
                }
            }
        }

        let now_ns = (n + 1) as f64 * dt_ctrl_ns;
        let raw = [acc[0] / dt_ctrl, acc[1] / dt_ctrl];
        let r = cal.normalize(raw);
        let vdc = demod.step(r);
        let v = if protocol.feedback {
            let step = controller.step(vdc, now_ns);
            if let Some(q) = step.detected {
                out.detections.push(Detection {
                    qubit: q,
                    time_ns: now_ns,
                    populations: plant.populations(),
                });
            }
            out.events.extend(step.events(now_ns));
            let now_us = now_ns * 1e-3;
            for q in step.flips() {
                plant.flip(q, now_us, noise);
                fields.permute_on_flip(q);
                if let Some(extra) = protocol.stop_after_first_pulse_us {
                    end_us = end_us.min(now_us + extra);
                }
            }
            step.v
        } else {
            controller.monitor(vdc, now_ns)
        };
        if let Some(rec) = out.record.as_mut() {
            rec.push(RecordSample {
                time_ns: now_ns,
                r,
                vdc,
                v,
            });
        }
        n += 1;
    }

    out.end_time_us = n as f64 * dt_ctrl;
    out.final_state = plant.state();
    if let Plant::Telegraph { jumps, .. } = plant {
        out.jumps = jumps;
    }
    out.worst = worst.0;
    Ok(out)
}

/// Resolve a worker count; zero means all available cores.
pub fn resolve_workers(workers: usize) -> usize {
    if workers > 0 {
        workers
    } else {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    }
}

/// Run `n` independent jobs on a pool of `workers` threads. Results come back
/// in index order, so the output does not depend on the worker count.
pub fn run_batch<T, F>(n: usize, workers: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let workers = resolve_workers(workers);
    if workers == 1 {
        return (0..n).map(&job).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&job).collect())
}

/// Trajectories `0..n` of `protocol`, trajectory `i` drawing from stream `i`
/// of `seed`.
pub fn run_ensemble(
    params: &DeviceParams,
    protocol: &Protocol,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<TrajectoryOutcome>> {
    run_batch(n, workers, |i| {
        let mut noise = NoiseSource::new(seed, i as u64);
        run_trajectory(params, protocol, &mut noise)
    })
}
