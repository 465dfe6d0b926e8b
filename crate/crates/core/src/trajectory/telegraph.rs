//! Classical telegraph engine.
//!
//! The qubits sit in a definite basis state that jumps with the decay and
//! thermal-excitation rates. The records carry the same mean and the same
//! white noise as the stochastic master equation would produce for that basis
//! state, but no coherences are tracked.

use super::noise::NoiseSource;
use crate::cavity::PointerFields;
use crate::model::basis::{bit, pair_index, qubit_mask, N_QUBITS, N_RESONATORS};
use crate::model::DeviceParams;

/// A natural (non-injected) bit flip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub time_us: f64,
    pub qubit: usize,
    /// Bit value after the jump.
    pub to: usize,
}

/// Basis-state label plus per-qubit exponential clocks.
#[derive(Debug, Clone)]
pub struct TelegraphState {
    pub label: usize,
    next_jump: [f64; N_QUBITS],
}

impl TelegraphState {
    pub fn new(label: usize, now_us: f64, rates: &TelegraphRates, noise: &mut NoiseSource) -> Self {
        let mut s = Self {
            label,
            next_jump: [f64::INFINITY; N_QUBITS],
        };
        for q in 0..N_QUBITS {
            s.rearm(q, now_us, rates, noise);
        }
        s
    }

    fn rearm(
        &mut self,
        qubit: usize,
        now_us: f64,
        rates: &TelegraphRates,
        noise: &mut NoiseSource,
    ) {
        let rate = if bit(self.label, qubit) == 1 {
            rates.down[qubit]
        } else {
            rates.up[qubit]
        };
        self.next_jump[qubit] = now_us + noise.exponential(rate);
    }

    /// Flip `qubit` and redraw its clock for the new bit value.
    pub fn flip(
        &mut self,
        qubit: usize,
        now_us: f64,
        rates: &TelegraphRates,
        noise: &mut NoiseSource,
    ) {
        self.label ^= qubit_mask(qubit);
        self.rearm(qubit, now_us, rates, noise);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelegraphRates {
    pub down: [f64; N_QUBITS],
    pub up: [f64; N_QUBITS],
}

impl TelegraphRates {
    pub fn new(params: &DeviceParams) -> Self {
        Self {
            down: params.gamma_down(),
            up: params.gamma_up(),
        }
    }
}

/// Record scale 2√(ηκ) per resonator, shared with the master-equation engine.
pub fn record_gain(params: &DeviceParams) -> [f64; N_RESONATORS] {
    std::array::from_fn(|i| 2.0 * (params.eta(i) * params.kappa(i)).sqrt())
}

/// Step data for the telegraph engine.
#[derive(Debug, Clone, PartialEq)]
pub struct TelegraphEngine {
    pub gain: [f64; N_RESONATORS],
    pub rates: TelegraphRates,
    pub dt_us: f64,
    pub noise_scale: f64,
}

impl TelegraphEngine {
    pub fn new(params: &DeviceParams, dt_us: f64) -> Self {
        Self {
            gain: record_gain(params),
            rates: TelegraphRates::new(params),
            dt_us,
            noise_scale: 1.0,
        }
    }

    /// Noiseless record mean per resonator.
    pub fn mean_record(
        &self,
        state: &TelegraphState,
        fields: &PointerFields,
    ) -> [f64; N_RESONATORS] {
        std::array::from_fn(|i| self.gain[i] * fields.alpha[i][pair_index(state.label, i)].re)
    }

    /// Advance the label over `[t, t + dt)` with Wiener increments `dw` and
    /// return the record increments. Jumps inside the step are appended to
    /// `jumps`.
    pub fn step(
        &self,
        state: &mut TelegraphState,
        fields: &PointerFields,
        t_us: f64,
        dw: [f64; N_RESONATORS],
        noise: &mut NoiseSource,
        jumps: &mut Vec<Jump>,
    ) -> [f64; N_RESONATORS] {
        let dt = self.dt_us;
        let mean = self.mean_record(state, fields);
        let dy = std::array::from_fn(|i| mean[i] * dt + self.noise_scale * dw[i]);
        let end = t_us + dt;
        loop {
            let (q, tq) = state.next_jump.iter().enumerate().fold(
                (usize::MAX, f64::INFINITY),
                |acc, (q, &tq)| if tq < acc.1 { (q, tq) } else { acc },
            );
            if q == usize::MAX || tq >= end {
                break;
            }
            state.flip(q, tq, &self.rates, noise);
            jumps.push(Jump {
                time_us: tq,
                qubit: q,
                to: bit(state.label, q),
            });
        }
        dy
    }
}

/// One step drawing its own Wiener increments.
pub fn telegraph_step(
    state: &mut TelegraphState,
    fields: &PointerFields,
    t_us: f64,
    engine: &TelegraphEngine,
    noise: &mut NoiseSource,
    jumps: &mut Vec<Jump>,
) -> [f64; N_RESONATORS] {
    let dw = [noise.wiener(engine.dt_us), noise.wiener(engine.dt_us)];
    engine.step(state, fields, t_us, dw, noise, jumps)
}
