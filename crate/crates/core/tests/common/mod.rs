//! Test-side reference implementations, written from the physics rather than
//! from the library code.

#![allow(dead_code)]

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;

use cqec::controller::{Controller, ControllerEvent, Demodulator};
use cqec::trajectory::{run_batch, run_trajectory, EngineKind, NoiseSource, Protocol};
use cqec::{DeviceParams, Sector, ThreeQubitState};

pub type CMat = DMatrix<Complex64>;

const DIM: usize = 8;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Bit of qubit `q` in basis index `s = 4 q0 + 2 q1 + q2`.
pub fn bit(s: usize, q: usize) -> usize {
    (s >> (2 - q)) & 1
}

/// Steady pointer amplitude of a resonator probed at its odd resonance,
/// from dα/dt = (iχ(z_a + z_b) − κ/2)α + ε with ε = (κ/2)√n̄.
pub fn steady_field(kappa: f64, chi: f64, nbar: f64, za: f64, zb: f64) -> Complex64 {
    let eps = 0.5 * kappa * nbar.sqrt();
    c(eps) / Complex64::new(0.5 * kappa, -chi * (za + zb))
}

/// Lindblad generator pieces for the three transmons and two resonators with
/// the pointer fields held at their steady states.
pub struct Lindblad {
    pub h: CMat,
    pub jumps: Vec<CMat>,
}

impl Lindblad {
    pub fn new(p: &DeviceParams, measurement: bool) -> Self {
        let n = |q: usize| {
            CMat::from_fn(DIM, DIM, |a, b| {
                if a == b && bit(a, q) == 1 {
                    c(1.0)
                } else {
                    c(0.0)
                }
            })
        };
        let beta = [
            (0, 1, p.zz.beta01_mhz),
            (1, 2, p.zz.beta12_mhz),
            (0, 2, p.zz.beta02_mhz),
        ];
        let mut h = CMat::zeros(DIM, DIM);
        for (i, j, b) in beta {
            h += (n(i) * n(j)) * c(TAU * b);
        }
        let mut jumps = Vec::new();
        for q in 0..3 {
            let mask = 1 << (2 - q);
            let lower = CMat::from_fn(DIM, DIM, |a, b| {
                if bit(b, q) == 1 && a == b ^ mask {
                    c(1.0)
                } else {
                    c(0.0)
                }
            });
            let raise = lower.adjoint();
            let z = CMat::from_fn(DIM, DIM, |a, b| {
                if a == b {
                    c(1.0 - 2.0 * bit(a, q) as f64)
                } else {
                    c(0.0)
                }
            });
            let t1 = p.qubits.t1_us[q];
            let down = 1.0 / t1;
            let up = p.qubits.gamma_up_per_ms[q] * 1e-3;
            // Coherence decays at (down + up)/2 + γφ with 1/T2* = 1/(2 T1) + γφ.
            let phi = (1.0 / p.qubits.t2star_us[q] - 0.5 / t1).max(0.0);
            jumps.push(lower * c(down.sqrt()));
            jumps.push(raise * c(up.sqrt()));
            jumps.push(z * c((0.5 * phi).sqrt()));
        }
        if measurement {
            for (r, (qa, qb)) in [(0, 1), (1, 2)].into_iter().enumerate() {
                let kappa = TAU * p.resonators.kappa_mhz[r];
                let chi = TAU * p.resonators.chi_mhz[r];
                let nbar = p.resonators.nbar_odd[r];
                let m = CMat::from_fn(DIM, DIM, |a, b| {
                    if a != b {
                        return c(0.0);
                    }
                    let za = 1.0 - 2.0 * bit(a, qa) as f64;
                    let zb = 1.0 - 2.0 * bit(a, qb) as f64;
                    steady_field(kappa, chi, nbar, za, zb) * kappa.sqrt()
                });
                jumps.push(m);
            }
        }
        Self { h, jumps }
    }

    pub fn derivative(&self, rho: &CMat) -> CMat {
        let i = Complex64::new(0.0, 1.0);
        let mut d = (&self.h * rho - rho * &self.h) * (-i);
        for l in &self.jumps {
            let ld = l.adjoint();
            let ldl = &ld * l;
            d += l * rho * &ld - (&ldl * rho + rho * &ldl) * c(0.5);
        }
        d
    }

    /// Classical fourth-order Runge–Kutta with `steps` equal steps.
    pub fn evolve(&self, rho: &CMat, t: f64, steps: usize) -> CMat {
        let h = t / steps as f64;
        let mut r = rho.clone();
        for _ in 0..steps {
            let k1 = self.derivative(&r);
            let k2 = self.derivative(&(&r + &k1 * c(0.5 * h)));
            let k3 = self.derivative(&(&r + &k2 * c(0.5 * h)));
            let k4 = self.derivative(&(&r + &k3 * c(h)));
            r += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(h / 6.0);
        }
        r
    }
}

pub fn pure_density(amplitudes: &[Complex64; DIM]) -> CMat {
    let v = nalgebra::DVector::from_column_slice(amplitudes);
    &v * v.adjoint()
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[derive(Debug, Clone)]
pub struct OracleComparison {
    /// Largest |trajectory mean − master equation| / standard error over all
    /// real and imaginary parts of ρ at all sample times.
    pub worst_z: f64,
    pub worst_time_us: f64,
    pub worst_element: (usize, usize),
    pub comparisons: usize,
}

/// Ensemble of SME trajectories from |+++⟩ with feedback off, compared
/// elementwise to the master equation with steady pointer fields.
pub fn sme_against_master_equation(p: &DeviceParams, n: usize, seed: u64) -> OracleComparison {
    let times = [0.25, 0.5, 1.0, 2.0];
    let amp = [Complex64::new(8f64.sqrt().recip(), 0.0); DIM];
    let proto = Protocol {
        engine: EngineKind::Sme,
        initial: ThreeQubitState::pure(&amp).unwrap(),
        sector: Sector::EE,
        duration_us: times[times.len() - 1],
        feedback: false,
        snapshot_times_us: times.to_vec(),
        keep_states: true,
        ..Protocol::default()
    };
    let states = run_batch(n, 0, |i| {
        let out = run_trajectory(p, &proto, &mut NoiseSource::new(seed, i as u64))?;
        Ok(out
            .snapshots
            .into_iter()
            .map(|s| s.state.expect("states kept"))
            .collect::<Vec<_>>())
    })
    .unwrap();
    let oracle = Lindblad::new(p, true);
    let mut rho = pure_density(&amp);
    let mut t_prev = 0.0;
    let mut cmp = OracleComparison {
        worst_z: 0.0,
        worst_time_us: 0.0,
        worst_element: (0, 0),
        comparisons: 0,
    };
    for (k, &t) in times.iter().enumerate() {
        rho = oracle.evolve(&rho, t - t_prev, 4000);
        t_prev = t;
        for a in 0..DIM {
            for b in 0..DIM {
                let re: Vec<f64> = states.iter().map(|s| s[k].element(a, b).re).collect();
                let im: Vec<f64> = states.iter().map(|s| s[k].element(a, b).im).collect();
                for (vals, want) in [(re, rho[(a, b)].re), (im, rho[(a, b)].im)] {
                    let (m, se) = mean_and_se(&vals);
                    let diff = (m - want).abs();
                    let z = if se > 1e-12 {
                        diff / se
                    } else if diff < 1e-9 {
                        0.0
                    } else {
                        f64::INFINITY
                    };
                    cmp.comparisons += 1;
                    if z > cmp.worst_z {
                        cmp.worst_z = z;
                        cmp.worst_time_us = t;
                        cmp.worst_element = (a, b);
                    }
                }
            }
        }
    }
    cmp
}

/// Noiseless first-order plant: the normalized parity signal relaxes toward
/// the current parity at `k` µs⁻¹ and corrective pulses flip the plant.
pub fn closed_loop(
    p: &DeviceParams,
    sector: Sector,
    flips: &[(f64, usize)],
    duration_ns: f64,
) -> (Vec<ControllerEvent>, [usize; 3]) {
    let dt = p.integrator.dt_ctrl_ns;
    let (zero, _) = sector.logical_states();
    let mut bits = [(zero >> 2) & 1, (zero >> 1) & 1, zero & 1];
    let parity = |b: &[usize; 3]| {
        [
            if b[0] == b[1] { 1.0 } else { -1.0 },
            if b[1] == b[2] { 1.0 } else { -1.0 },
        ]
    };
    let mut signal = parity(&bits);
    let mut ctrl = Controller::new(p, sector);
    let mut demod = Demodulator::new(p, signal);
    let mut queue = flips.to_vec();
    let mut events = Vec::new();
    let k = 2.0;
    for step in 0..(duration_ns / dt) as usize {
        let t = step as f64 * dt;
        queue.retain(|&(tf, q)| {
            if tf <= t {
                bits[q] ^= 1;
                false
            } else {
                true
            }
        });
        let target = parity(&bits);
        let decay = (-k * dt * 1e-3).exp();
        for i in 0..2 {
            signal[i] = target[i] + (signal[i] - target[i]) * decay;
        }
        let now = t + dt;
        let out = ctrl.step(demod.step(signal), now);
        events.extend(out.events(now));
        for q in out.flips() {
            bits[q] ^= 1;
        }
    }
    (events, bits)
}
