//! Diffusive stochastic master equation for the three-qubit state.
//!
//! One step applies, in order: the ZZ Hamiltonian as an exact phase, exact
//! single-qubit decay/excitation/dephasing channels, the homodyne measurement
//! of both resonators, and trace renormalization.
//!
//! The measurement operators C_i = √κ_i diag(α_p) are diagonal, so the
//! linear (unnormalized) SME conditioned on a record increment dY has the
//! closed-form solution ρ_ab ← ρ_ab · exp(L_ab dt + √η (c_a + c̄_b) dY −
//! ½η (c_a + c̄_b)² dt), with L_ab = c_a c̄_b − ½|c_a|² − ½|c_b|². The
//! multiplier factorizes into a rank-one part and an unmonitored dephasing
//! part, both positive, so the update never breaks positivity. The increment is
//! drawn under the physical measure, dY = √η ⟨c + c†⟩ dt + dW.

use num_complex::Complex64;

use super::noise::NoiseSource;
use crate::cavity::PointerFields;
use crate::error::{Error, Result};
use crate::model::basis::{pair_index, qubit_mask, zz_energies, DIM, N_QUBITS, N_RESONATORS};
use crate::model::{DeviceParams, ThreeQubitState};

/// Exact single-qubit generalized amplitude damping plus pure dephasing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitChannel {
    /// Probability 0 → 1 over the step.
    pub up: f64,
    /// Probability 1 → 0 over the step.
    pub down: f64,
    /// Coherence contraction factor.
    pub coherence: f64,
}

impl QubitChannel {
    pub fn new(gamma_down: f64, gamma_up: f64, gamma_phi: f64, dt: f64) -> Self {
        let total = gamma_down + gamma_up;
        let (up, down) = if total > 0.0 {
            let relax = 1.0 - (-total * dt).exp();
            (relax * gamma_up / total, relax * gamma_down / total)
        } else {
            (0.0, 0.0)
        };
        Self {
            up,
            down,
            coherence: (-(0.5 * total + gamma_phi) * dt).exp(),
        }
    }

    fn identity() -> Self {
        Self {
            up: 0.0,
            down: 0.0,
            coherence: 1.0,
        }
    }
}

/// Which physical processes a stepper includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Processes {
    pub hamiltonian: bool,
    pub dissipation: bool,
    pub measurement: bool,
}

impl Default for Processes {
    fn default() -> Self {
        Self {
            hamiltonian: true,
            dissipation: true,
            measurement: true,
        }
    }
}

/// Precomputed step data for a fixed `dt`.
#[derive(Debug, Clone)]
pub struct SmeStepper {
    dt: f64,
    sqrt_kappa: [f64; N_RESONATORS],
    eta: [f64; N_RESONATORS],
    phase: [[Complex64; DIM]; DIM],
    channels: [QubitChannel; N_QUBITS],
    pairs: [[usize; DIM]; N_RESONATORS],
    processes: Processes,
    noise_scale: f64,
}

impl SmeStepper {
    pub fn new(params: &DeviceParams, dt_us: f64) -> Self {
        Self::with_processes(params, dt_us, Processes::default())
    }

    pub fn with_processes(params: &DeviceParams, dt_us: f64, processes: Processes) -> Self {
        let e = zz_energies(params);
        let mut phase = [[Complex64::new(1.0, 0.0); DIM]; DIM];
        if processes.hamiltonian {
            for a in 0..DIM {
                for b in 0..DIM {
                    phase[a][b] = Complex64::from_polar(1.0, -(e[a] - e[b]) * dt_us);
                }
            }
        }
        let (gd, gu, gp) = (params.gamma_down(), params.gamma_up(), params.gamma_phi());
        let channels = std::array::from_fn(|j| {
            if processes.dissipation {
                QubitChannel::new(gd[j], gu[j], gp[j], dt_us)
            } else {
                QubitChannel::identity()
            }
        });
        Self {
            dt: dt_us,
            sqrt_kappa: [params.kappa(0).sqrt(), params.kappa(1).sqrt()],
            eta: [params.eta(0), params.eta(1)],
            phase,
            channels,
            pairs: std::array::from_fn(|i| std::array::from_fn(|s| pair_index(s, i))),
            processes,
            noise_scale: 1.0,
        }
    }

    /// Scale the Wiener increments; zero gives noiseless records.
    pub fn set_noise_scale(&mut self, scale: f64) {
        self.noise_scale = scale;
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn processes(&self) -> Processes {
        self.processes
    }

    /// Noiseless record mean ⟨c + c†⟩ per resonator, scaled by √η.
    pub fn mean_record(
        &self,
        state: &ThreeQubitState,
        fields: &PointerFields,
    ) -> [f64; N_RESONATORS] {
        let rho = state.matrix();
        std::array::from_fn(|i| {
            let mut x = 0.0;
            for s in 0..DIM {
                x += rho[s][s].re * fields.alpha[i][self.pairs[i][s]].re;
            }
            2.0 * self.sqrt_kappa[i] * self.eta[i].sqrt() * x
        })
    }

    /// One step driven by the Wiener increments `dw`. Returns the record
    /// increments dY_i (unnormalized).
    pub fn step(
        &self,
        state: &mut ThreeQubitState,
        fields: &PointerFields,
        dw: [f64; N_RESONATORS],
    ) -> Result<[f64; N_RESONATORS]> {
        let dt = self.dt;
        let rho = state.matrix_mut();
        if self.processes.hamiltonian {
            for a in 0..DIM {
                for b in a + 1..DIM {
                    rho[a][b] *= self.phase[a][b];
                }
            }
        }
        if self.processes.dissipation {
            for (j, ch) in self.channels.iter().enumerate() {
                apply_channel(rho, qubit_mask(j), ch);
            }
        }
        let mut dy = [0.0; N_RESONATORS];
        if self.processes.measurement {
            let mut tables = [[[Complex64::new(0.0, 0.0); 4]; 4]; N_RESONATORS];
            for i in 0..N_RESONATORS {
                let c: [Complex64; 4] =
                    std::array::from_fn(|p| fields.alpha[i][p] * self.sqrt_kappa[i]);
                let mut mean = 0.0;
                for s in 0..DIM {
                    mean += rho[s][s].re * 2.0 * c[self.pairs[i][s]].re;
                }
                let se = self.eta[i].sqrt();
                dy[i] = se * mean * dt + self.noise_scale * dw[i];
                for p in 0..4 {
                    for q in p..4 {
                        let sum = c[p] + c[q].conj();
                        let lind = c[p] * c[q].conj() - 0.5 * (c[p].norm_sqr() + c[q].norm_sqr());
                        let exponent =
                            (lind - 0.5 * self.eta[i] * sum * sum) * dt + se * sum * dy[i];
                        tables[i][p][q] = exponent.exp();
                        tables[i][q][p] = tables[i][p][q].conj();
                    }
                }
            }
            let (p0, p1) = (&self.pairs[0], &self.pairs[1]);
            for a in 0..DIM {
                for b in a..DIM {
                    rho[a][b] *= tables[0][p0[a]][p0[b]] * tables[1][p1[a]][p1[b]];
                }
            }
        } else {
            for i in 0..N_RESONATORS {
                dy[i] = self.noise_scale * dw[i];
            }
        }
        for a in 0..DIM {
            rho[a][a].im = 0.0;
            for b in 0..a {
                rho[a][b] = rho[b][a].conj();
            }
        }
        let tr = state.trace();
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::Integrator {
                time_us: f64::NAN,
                reason: format!("trace collapsed to {tr}"),
            });
        }
        state.renormalize();
        Ok(dy)
    }
}

/// Apply one qubit channel to the upper triangle of ρ (lower triangle is
/// refreshed by the caller).
#[inline]
fn apply_channel(rho: &mut [[Complex64; DIM]; DIM], m: usize, ch: &QubitChannel) {
    let keep0 = 1.0 - ch.up;
    let keep1 = 1.0 - ch.down;
    for a in 0..DIM {
        for b in a..DIM {
            match (a & m != 0, b & m != 0) {
                (false, false) => {
                    let lo = rho[a][b];
                    let hi = rho[a | m][b | m];
                    rho[a][b] = lo * keep0 + hi * ch.down;
                    rho[a | m][b | m] = lo * ch.up + hi * keep1;
                }
                (true, true) => {}
                _ => rho[a][b] *= ch.coherence,
            }
        }
    }
}

/// One step drawing its own Wiener increments.
pub fn sme_step(
    state: &mut ThreeQubitState,
    fields: &PointerFields,
    stepper: &SmeStepper,
    noise: &mut NoiseSource,
) -> Result<[f64; N_RESONATORS]> {
    let dt = stepper.dt();
    let dw = [noise.wiener(dt), noise.wiener(dt)];
    stepper.step(state, fields, dw)
}

/// ρ → X_q ρ X_q with the pointer fields relabelled to match.
pub fn inject_flip(state: &mut ThreeQubitState, fields: &mut PointerFields, qubit: usize) {
    state.flip(qubit);
    fields.permute_on_flip(qubit);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::CavityModel;
    use crate::model::Sector;

    fn quiet() -> DeviceParams {
        let mut p = DeviceParams::default();
        p.qubits.gamma_up_per_ms = [0.0; 3];
        p
    }

    #[test]
    fn diagonal_state_fixed_without_noise_or_dissipation() {
        let p = quiet();
        let procs = Processes {
            hamiltonian: true,
            dissipation: false,
            measurement: false,
        };
        let stepper = SmeStepper::with_processes(&p, 0.01, procs);
        let mut s = ThreeQubitState::diagonal(&[0.1, 0.2, 0.0, 0.3, 0.0, 0.1, 0.2, 0.1]);
        let before = s.clone();
        let fields = PointerFields::steady(&CavityModel::new(&p));
        let mut noise = NoiseSource::new(0, 0);
        for _ in 0..100 {
            sme_step(&mut s, &fields, &stepper, &mut noise).unwrap();
        }
        for a in 0..DIM {
            for b in 0..DIM {
                assert!((s.element(a, b) - before.element(a, b)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn codespace_basis_state_is_measurement_fixed_point() {
        let p = quiet();
        let procs = Processes {
            hamiltonian: true,
            dissipation: false,
            measurement: true,
        };
        let stepper = SmeStepper::with_processes(&p, 0.01, procs);
        let fields = PointerFields::steady(&CavityModel::new(&p));
        let mut s = ThreeQubitState::basis(0b000);
        let mut noise = NoiseSource::new(1, 0);
        for _ in 0..1000 {
            sme_step(&mut s, &fields, &stepper, &mut noise).unwrap();
        }
        assert!((s.element(0, 0).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn channel_relaxes_to_thermal_population() {
        let ch = QubitChannel::new(1.0 / 20.0, 1e-3, 0.0, 1000.0);
        let peq = 1e-3 / (1.0 / 20.0 + 1e-3);
        assert!((ch.up - peq).abs() < 1e-12);
        assert!((ch.down - (1.0 - peq)).abs() < 1e-12);
    }

    #[test]
    fn dissipation_decays_excited_population() {
        let p = quiet();
        let procs = Processes {
            hamiltonian: false,
            dissipation: true,
            measurement: false,
        };
        let dt = 0.01;
        let stepper = SmeStepper::with_processes(&p, dt, procs);
        let fields = PointerFields::vacuum();
        let mut s = ThreeQubitState::basis(0b111);
        let mut noise = NoiseSource::new(0, 0);
        let n = 1000;
        for _ in 0..n {
            sme_step(&mut s, &fields, &stepper, &mut noise).unwrap();
        }
        let t = n as f64 * dt;
        let g = p.gamma_down();
        let expect = (-(g[0] + g[1] + g[2]) * t).exp();
        assert!((s.element(7, 7).re - expect).abs() < 1e-10);
        assert!(s.diagnostics().within_bounds());
    }

    #[test]
    fn measurement_keeps_sector_and_state_valid() {
        let p = DeviceParams::default();
        let stepper = SmeStepper::new(&p, 0.01);
        let mut fields = PointerFields::steady(&CavityModel::new(&p));
        let mut s = ThreeQubitState::plus(0b000, 0b111);
        let mut noise = NoiseSource::new(3, 0);
        let prop = CavityModel::new(&p).propagator(0.01);
        for k in 0..2000 {
            sme_step(&mut s, &fields, &stepper, &mut noise).unwrap();
            fields.evolve(&prop);
            if k % 100 == 0 {
                assert!(s.diagnostics().within_bounds(), "{:?}", s.diagnostics());
            }
        }
        // Dissipation leaks population out slowly; the bulk stays put.
        assert!(s.sector_population(Sector::EE) > 0.9);
    }

    #[test]
    fn inject_flip_permutes_state_and_fields() {
        let p = DeviceParams::default();
        let mut fields = PointerFields::steady(&CavityModel::new(&p));
        let before = fields.clone();
        let mut s = ThreeQubitState::basis(0b000);
        inject_flip(&mut s, &mut fields, 0);
        assert_eq!(s.element(0b100, 0b100).re, 1.0);
        assert_eq!(fields.alpha[0][0b10], before.alpha[0][0b00]);
        assert_eq!(fields.alpha[1], before.alpha[1]);
        inject_flip(&mut s, &mut fields, 0);
        assert_eq!(s, ThreeQubitState::basis(0));
        assert_eq!(fields, before);
    }
}
