//! Emulation of the feedback controller.
//!
//! The raw homodyne records pass a one-pole demodulation filter (V^DC), then a
//! secondary one-pole filter (V). The controller compares V against three
//! thresholds, queues a corrective π pulse after a fixed latency, inverts the
//! memories of the tripped channels, and inverts the incoming V^DC of those
//! channels for `reset_delay` so the correction is not read as a new error.
//!
//! All signals inside the controller are in the frame of the assumed code
//! sector: a channel expected to be odd is multiplied by −1, so an undisturbed
//! code state always reads +1.

use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::model::{DeviceParams, Sector};

/// Time comparisons on the controller clock tolerate this much rounding (ns).
const CLOCK_EPS_NS: f64 = 1e-6;

/// y[n] = a·y[n−1] + (1−a)·x[n] with a = e^{−dt/τ}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnePoleFilter {
    a: f64,
    y: f64,
}

impl OnePoleFilter {
    pub fn new(tau: f64, dt: f64, initial: f64) -> Self {
        Self {
            a: (-dt / tau).exp(),
            y: initial,
        }
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        self.y = self.a * self.y + (1.0 - self.a) * x;
        self.y
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.y
    }

    #[inline]
    pub fn set(&mut self, y: f64) {
        self.y = y;
    }

    pub fn decay(&self) -> f64 {
        self.a
    }

    /// Variance reduction factor for white input, (1−a)/(1+a).
    pub fn noise_gain(&self) -> f64 {
        (1.0 - self.a) / (1.0 + self.a)
    }
}

fn filter_series(x: &[f64], tau_ns: f64, dt_ns: f64) -> Vec<f64> {
    let mut f = OnePoleFilter::new(tau_ns, dt_ns, 0.0);
    x.iter().map(|&v| f.step(v)).collect()
}

/// Demodulation filter applied to raw samples taken every `dt_ns`.
pub fn demod_filter(raw: &[f64], tau_demod_ns: f64, dt_ns: f64) -> Vec<f64> {
    filter_series(raw, tau_demod_ns, dt_ns)
}

/// Secondary controller filter applied to V^DC.
pub fn ctrl_filter(vdc: &[f64], tau_ctrl_ns: f64, dt_ns: f64) -> Vec<f64> {
    filter_series(vdc, tau_ctrl_ns, dt_ns)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

impl Thresholds {
    pub fn from_params(params: &DeviceParams) -> Self {
        let c = &params.controller;
        Self {
            theta1: c.theta1,
            theta2: c.theta2,
            theta3: c.theta3,
        }
    }
}

/// Threshold classification of one pair of filtered signals.
///
/// Both-low (central qubit) is tested first; then a single low channel with the
/// other channel above the guard threshold flags the outer qubit on that side.
#[inline]
pub fn detect(v0: f64, v1: f64, th: &Thresholds) -> Option<usize> {
    if v0 < th.theta3 && v1 < th.theta3 {
        Some(1)
    } else if v0 < th.theta1 && v1 > th.theta2 {
        Some(0)
    } else if v1 < th.theta1 && v0 > th.theta2 {
        Some(2)
    } else {
        None
    }
}

/// Resonators whose threshold a detection of `qubit` tripped.
pub fn tripped_resonators(qubit: usize) -> &'static [usize] {
    match qubit {
        0 => &[0],
        1 => &[0, 1],
        2 => &[1],
        _ => &[],
    }
}

/// Demodulation stage for both channels.
#[derive(Debug, Clone)]
pub struct Demodulator {
    filters: [OnePoleFilter; 2],
}

impl Demodulator {
    pub fn new(params: &DeviceParams, initial: [f64; 2]) -> Self {
        let c = &params.controller;
        let dt = params.integrator.dt_ctrl_ns;
        Self {
            filters: initial.map(|y| OnePoleFilter::new(c.tau_demod_ns, dt, y)),
        }
    }

    #[inline]
    pub fn step(&mut self, raw: [f64; 2]) -> [f64; 2] {
        [self.filters[0].step(raw[0]), self.filters[1].step(raw[1])]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerEventKind {
    Detect(usize),
    PulseFired(usize),
}

impl ControllerEventKind {
    pub fn name(&self) -> String {
        match self {
            ControllerEventKind::Detect(q) => format!("detect_q{q}"),
            ControllerEventKind::PulseFired(_) => "pulse_fired".to_string(),
        }
    }

    pub fn qubit(&self) -> usize {
        match *self {
            ControllerEventKind::Detect(q) | ControllerEventKind::PulseFired(q) => q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerEvent {
    pub kind: ControllerEventKind,
    pub time_ns: f64,
}

impl fmt::Display for ControllerEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} q{} @ {} ns",
            self.kind.name(),
            self.kind.qubit(),
            self.time_ns
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Window {
    start: f64,
    end: f64,
}

impl Window {
    #[inline]
    fn covers(&self, t: f64) -> bool {
        t > self.start + CLOCK_EPS_NS && t <= self.end + CLOCK_EPS_NS
    }
}

/// Outcome of one controller sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepOutput {
    /// Qubit whose flip was detected (and acted on) this sample.
    pub detected: Option<usize>,
    /// Corrective pulses that fire now; the plant must apply these flips.
    pub fired: [bool; 3],
    /// Filtered signals after this sample, controller frame.
    pub v: [f64; 2],
}

impl StepOutput {
    pub fn flips(&self) -> impl Iterator<Item = usize> + '_ {
        (0..3).filter(move |&q| self.fired[q])
    }

    pub fn events(&self, time_ns: f64) -> impl Iterator<Item = ControllerEvent> + '_ {
        let detect = self.detected.map(|q| ControllerEvent {
            kind: ControllerEventKind::Detect(q),
            time_ns,
        });
        detect
            .into_iter()
            .chain(self.flips().map(move |q| ControllerEvent {
                kind: ControllerEventKind::PulseFired(q),
                time_ns,
            }))
    }
}

/// Filter memories, hold windows and the pulse queue of one controller.
#[derive(Debug, Clone)]
pub struct Controller {
    thresholds: Thresholds,
    latency_ns: f64,
    reset_delay_ns: f64,
    signs: [f64; 2],
    filters: [OnePoleFilter; 2],
    windows: [Option<Window>; 2],
    pending: [Option<f64>; 3],
}

impl Controller {
    /// Controller guarding `sector`, with memories at the undisturbed level.
    pub fn new(params: &DeviceParams, sector: Sector) -> Self {
        Self::with_thresholds(params, sector, Thresholds::from_params(params))
    }

    pub fn with_thresholds(params: &DeviceParams, sector: Sector, thresholds: Thresholds) -> Self {
        let c = &params.controller;
        let dt = params.integrator.dt_ctrl_ns;
        Self {
            thresholds,
            latency_ns: c.latency_ns,
            reset_delay_ns: c.reset_delay_ns,
            signs: sector.parities(),
            filters: [OnePoleFilter::new(c.tau_ctrl_ns, dt, 1.0); 2],
            windows: [None; 2],
            pending: [None; 3],
        }
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    /// Overwrite the V memories (controller frame).
    pub fn set_memory(&mut self, v: [f64; 2]) {
        self.filters[0].set(v[0]);
        self.filters[1].set(v[1]);
    }

    pub fn v(&self) -> [f64; 2] {
        [self.filters[0].value(), self.filters[1].value()]
    }

    pub fn pending(&self, qubit: usize) -> Option<f64> {
        self.pending[qubit]
    }

    /// Whether `resonator` is inside its inversion window at `now_ns`.
    pub fn held(&self, resonator: usize, now_ns: f64) -> bool {
        self.windows[resonator].is_some_and(|w| w.covers(now_ns))
    }

    /// Controller-frame input for one V^DC sample.
    #[inline]
    fn frame_input(&self, vdc: [f64; 2], now_ns: f64) -> [f64; 2] {
        std::array::from_fn(|i| {
            let x = self.signs[i] * vdc[i];
            if self.held(i, now_ns) {
                -x
            } else {
                x
            }
        })
    }

    /// Filter only, without detection or feedback (feedback off).
    pub fn monitor(&mut self, vdc: [f64; 2], now_ns: f64) -> [f64; 2] {
        let x = self.frame_input(vdc, now_ns);
        [self.filters[0].step(x[0]), self.filters[1].step(x[1])]
    }

    /// Act on a detection of `qubit` at `now_ns`. Returns false when suppressed
    /// because a pulse on that qubit is still pending or a tripped channel is
    /// inside its inversion window.
    pub fn apply_feedback(&mut self, qubit: usize, now_ns: f64) -> bool {
        if self.pending[qubit].is_some() {
            return false;
        }
        let tripped = tripped_resonators(qubit);
        if tripped.iter().any(|&i| self.held(i, now_ns)) {
            return false;
        }
        self.pending[qubit] = Some(now_ns + self.latency_ns);
        for &i in tripped {
            let y = self.filters[i].value();
            self.filters[i].set(-y);
            self.windows[i] = Some(Window {
                start: now_ns,
                end: now_ns + self.reset_delay_ns,
            });
        }
        true
    }

    /// One controller sample at time `now_ns`.
    pub fn step(&mut self, vdc: [f64; 2], now_ns: f64) -> StepOutput {
        let v = self.monitor(vdc, now_ns);
        let mut out = StepOutput::default();
        if let Some(q) = detect(v[0], v[1], &self.thresholds) {
            if self.apply_feedback(q, now_ns) {
                out.detected = Some(q);
            }
        }
        for q in 0..3 {
            if let Some(fire) = self.pending[q] {
                if fire <= now_ns + CLOCK_EPS_NS {
                    self.pending[q] = None;
                    out.fired[q] = true;
                }
            }
        }
        for i in 0..2 {
            if self.windows[i].is_some_and(|w| now_ns > w.end + CLOCK_EPS_NS) {
                self.windows[i] = None;
            }
        }
        out.v = self.v();
        out
    }
}

/// Run a controller offline over a V^DC stream. Samples are `(time_ns, vdc)`.
pub fn replay(
    samples: &[(f64, [f64; 2])],
    params: &DeviceParams,
    sector: Sector,
) -> Vec<ControllerEvent> {
    let mut ctrl = Controller::new(params, sector);
    let mut events = Vec::new();
    for &(t, vdc) in samples {
        let out = ctrl.step(vdc, t);
        events.extend(out.events(t));
    }
    events
}

pub const EVENTS_CSV_HEADER: &str = "time_ns,kind,qubit";

pub fn write_events_csv<W: Write>(mut w: W, events: &[ControllerEvent]) -> Result<()> {
    writeln!(w, "{EVENTS_CSV_HEADER}")?;
    for e in events {
        writeln!(w, "{},{},{}", e.time_ns, e.kind.name(), e.kind.qubit())?;
    }
    Ok(())
}

pub fn read_events_csv<R: BufRead>(r: R) -> Result<Vec<ControllerEvent>> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == EVENTS_CSV_HEADER => {}
        _ => {
            return Err(Error::Record(format!(
                "expected header `{EVENTS_CSV_HEADER}`"
            )))
        }
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let bad = || Error::Record(format!("events line {}: `{line}`", n + 2));
        if cols.len() != 3 {
            return Err(bad());
        }
        let time_ns: f64 = cols[0].parse().map_err(|_| bad())?;
        let qubit: usize = cols[2].parse().map_err(|_| bad())?;
        let kind = match cols[1] {
            "pulse_fired" => ControllerEventKind::PulseFired(qubit),
            k if k == format!("detect_q{qubit}") => ControllerEventKind::Detect(qubit),
            _ => return Err(bad()),
        };
        out.push(ControllerEvent { kind, time_ns });
    }
    Ok(out)
}
