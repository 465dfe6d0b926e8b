//! Classical pointer-field dynamics of the two parity resonators.
//!
//! Each resonator is probed at the centre of its odd-parity resonance. With the
//! coupled pair in basis state `p = (a, b)` the resonator is detuned from the
//! probe by `ω_p = χ (z_a + z_b)`, so the conditional coherent amplitude obeys
//!
//! ```text
//! dα_p/dt = (i ω_p − κ/2) α_p + ε
//! ```
//!
//! in the frame of the probe. The drive ε is real and fixed by the requested
//! odd-parity photon number, which makes the odd steady state real positive.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::basis::{pair_is_odd, pair_mask, N_RESONATORS};
use crate::model::DeviceParams;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Reflection coefficient of a lossless one-port at detuning `f0 = χ⟨Z_a + Z_b⟩`.
pub fn scattering_response(f0: f64, kappa: f64) -> Complex64 {
    Complex64::new(-2.0 * f0, kappa) / Complex64::new(-2.0 * f0, -kappa)
}

/// Detuning of the resonator from the probe with its pair in state `pair`.
pub fn pair_detuning(pair: usize, chi: f64) -> f64 {
    let za = 1.0 - 2.0 * ((pair >> 1) & 1) as f64;
    let zb = 1.0 - 2.0 * (pair & 1) as f64;
    chi * (za + zb)
}

/// Angular κ, χ and the calibrated drive for both resonators.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityModel {
    pub kappa: [f64; N_RESONATORS],
    pub chi: [f64; N_RESONATORS],
    pub drive: [f64; N_RESONATORS],
}

impl CavityModel {
    pub fn new(params: &DeviceParams) -> Self {
        let kappa = [params.kappa(0), params.kappa(1)];
        let chi = [params.chi(0), params.chi(1)];
        let drive = std::array::from_fn(|i| 0.5 * kappa[i] * params.resonators.nbar_odd[i].sqrt());
        Self { kappa, chi, drive }
    }

    #[inline]
    pub fn detuning(&self, resonator: usize, pair: usize) -> f64 {
        pair_detuning(pair, self.chi[resonator])
    }

    /// Steady-state amplitude with the drive on.
    pub fn steady_state(&self, resonator: usize, pair: usize) -> Complex64 {
        let k = Complex64::new(0.5 * self.kappa[resonator], -self.detuning(resonator, pair));
        self.drive[resonator] / k
    }

    /// Odd-parity and `|00⟩` steady states of a resonator.
    pub fn odd_even(&self, resonator: usize) -> (Complex64, Complex64) {
        (
            self.steady_state(resonator, 0b01),
            self.steady_state(resonator, 0b00),
        )
    }

    pub fn propagator(&self, dt: f64) -> FieldPropagator {
        let mut decay = [[Complex64::new(0.0, 0.0); 4]; N_RESONATORS];
        let mut target = [[Complex64::new(0.0, 0.0); 4]; N_RESONATORS];
        for i in 0..N_RESONATORS {
            for p in 0..4 {
                let rate = I * self.detuning(i, p) - 0.5 * self.kappa[i];
                decay[i][p] = (rate * dt).exp();
                target[i][p] = self.steady_state(i, p);
            }
        }
        FieldPropagator { decay, target }
    }
}

/// Steady-state pointer amplitude of `pair` in `resonator`.
pub fn steady_state_field(pair: usize, params: &DeviceParams, resonator: usize) -> Complex64 {
    CavityModel::new(params).steady_state(resonator, pair)
}

/// Exact one-step solution of the field equation for a fixed step.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPropagator {
    decay: [[Complex64; 4]; N_RESONATORS],
    target: [[Complex64; 4]; N_RESONATORS],
}

/// Conditional amplitudes α[i][p] of resonator `i` given pair state `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointerFields {
    pub alpha: [[Complex64; 4]; N_RESONATORS],
    pub drive_on: [bool; N_RESONATORS],
}

impl PointerFields {
    /// All conditional fields at their driven steady states.
    pub fn steady(model: &CavityModel) -> Self {
        Self {
            alpha: std::array::from_fn(|i| std::array::from_fn(|p| model.steady_state(i, p))),
            drive_on: [true; N_RESONATORS],
        }
    }

    /// Empty resonators with the drives off.
    pub fn vacuum() -> Self {
        Self {
            alpha: [[Complex64::new(0.0, 0.0); 4]; N_RESONATORS],
            drive_on: [false; N_RESONATORS],
        }
    }

    #[inline]
    pub fn amplitude(&self, resonator: usize, pair: usize) -> Complex64 {
        self.alpha[resonator][pair]
    }

    pub fn set_drive(&mut self, on: bool) {
        self.drive_on = [on; N_RESONATORS];
    }

    /// Advance by one propagator step: α ← α_ss + (α − α_ss) e^{(iω − κ/2) dt}.
    #[inline]
    pub fn evolve(&mut self, prop: &FieldPropagator) {
        for i in 0..N_RESONATORS {
            for p in 0..4 {
                let ss = if self.drive_on[i] {
                    prop.target[i][p]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                self.alpha[i][p] = ss + (self.alpha[i][p] - ss) * prop.decay[i][p];
            }
        }
    }

    pub fn evolve_for(&mut self, dt: f64, model: &CavityModel) {
        self.evolve(&model.propagator(dt));
    }

    /// Relabel the conditional fields after a bit flip of `qubit`. The physical
    /// field does not jump: the amplitude belonging to the old pair state now
    /// belongs to the flipped pair state and relaxes toward its new target.
    pub fn permute_on_flip(&mut self, qubit: usize) {
        for i in 0..N_RESONATORS {
            if let Some(m) = pair_mask(i, qubit) {
                let old = self.alpha[i];
                for p in 0..4 {
                    self.alpha[i][p] = old[p ^ m];
                }
            }
        }
    }

    /// D^(i)_{m,n} = |α_m − α_n|² for pair states `m`, `n` of `resonator`.
    pub fn distinguishability(&self, m: usize, n: usize, resonator: usize) -> f64 {
        distinguishability(self.alpha[resonator][m], self.alpha[resonator][n])
    }

    /// Whether the two odd-parity amplitudes coincide.
    pub fn odd_degenerate(&self, resonator: usize, tol: f64) -> bool {
        (self.alpha[resonator][0b01] - self.alpha[resonator][0b10]).norm() <= tol
    }
}

pub fn distinguishability(alpha_m: Complex64, alpha_n: Complex64) -> f64 {
    (alpha_m - alpha_n).norm_sqr()
}

/// Steady-state D ratio D_{00,01}/D_{00,11}, evaluated from the fields.
pub fn distinguishability_ratio(model: &CavityModel, resonator: usize) -> f64 {
    let f = PointerFields::steady(model);
    f.distinguishability(0b00, 0b01, resonator) / f.distinguishability(0b00, 0b11, resonator)
}

/// Total dephasing accumulated between the two even states while an odd-parity
/// steady field `alpha0` rings down with the drive off:
/// ζ = |α₀|² · 16χ² / (κ² + 16χ²).
pub fn transient_dephasing(alpha0: f64, chi: f64, kappa: f64) -> f64 {
    let a2 = alpha0 * alpha0;
    a2 * 16.0 * chi * chi / (kappa * kappa + 16.0 * chi * chi)
}

/// Phase and dephasing from averaging e^{i 2π Δβ T} over correction times.
///
/// `delta_beta_mhz` is a linear frequency, samples are in µs. Returns
/// `(φ, ζ)` with `e^{iφ − ζ} = ⟨e^{i 2π Δβ T}⟩`.
pub fn zz_dephasing(delta_beta_mhz: f64, samples_us: &[f64]) -> Result<(f64, f64)> {
    if samples_us.is_empty() {
        return Err(Error::Input(
            "zz_dephasing needs at least one correction time".into(),
        ));
    }
    let w = crate::model::angular(delta_beta_mhz);
    let sum: Complex64 = samples_us.iter().map(|&t| (I * w * t).exp()).sum();
    let mean = sum / samples_us.len() as f64;
    let zeta = -mean.norm().ln();
    Ok((mean.arg(), zeta.max(0.0)))
}

/// Steady measurement-induced dephasing rate (κ/2)|α_m − α_n|² in µs⁻¹.
pub fn steady_dephasing_rate(model: &CavityModel, resonator: usize, m: usize, n: usize) -> f64 {
    let d = distinguishability(
        model.steady_state(resonator, m),
        model.steady_state(resonator, n),
    );
    0.5 * model.kappa[resonator] * d
}

/// Odd-even pair index lists, handy for scans.
pub fn pair_parity(pair: usize) -> &'static str {
    if pair_is_odd(pair) {
        "odd"
    } else {
        "even"
    }
}
