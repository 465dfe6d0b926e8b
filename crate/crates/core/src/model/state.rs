//! Three-qubit density matrix.

use nalgebra::{Complex, SMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::basis::{pair_index, qubit_mask, z, Sector, DIM};
use crate::error::{Error, Result};

pub type Matrix8 = [[Complex64; DIM]; DIM];

pub const TRACE_TOL: f64 = 1e-7;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-6;

/// Density matrix of the three data qubits in the computational basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeQubitState {
    rho: Matrix8,
}

/// Worst-case deviations found by [`ThreeQubitState::diagnostics`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDiagnostics {
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl StateDiagnostics {
    pub fn within_bounds(&self) -> bool {
        self.trace_error <= TRACE_TOL
            && self.hermiticity_error <= HERMITIAN_TOL
            && self.min_eigenvalue >= -POSITIVITY_TOL
    }
}

impl ThreeQubitState {
    pub fn from_matrix(rho: Matrix8) -> Self {
        Self { rho }
    }

    pub fn basis(s: usize) -> Self {
        let mut rho = [[Complex64::new(0.0, 0.0); DIM]; DIM];
        rho[s][s] = Complex64::new(1.0, 0.0);
        Self { rho }
    }

    /// Pure state from (unnormalized) amplitudes.
    pub fn pure(amplitudes: &[Complex64; DIM]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidState(
                "zero or non-finite amplitude vector".into(),
            ));
        }
        let mut rho = [[Complex64::new(0.0, 0.0); DIM]; DIM];
        for a in 0..DIM {
            for b in 0..DIM {
                rho[a][b] = amplitudes[a] * amplitudes[b].conj() / norm;
            }
        }
        Ok(Self { rho })
    }

    /// (|a⟩ + |b⟩)/√2.
    pub fn plus(a: usize, b: usize) -> Self {
        let mut amps = [Complex64::new(0.0, 0.0); DIM];
        amps[a] = Complex64::new(1.0, 0.0);
        amps[b] += Complex64::new(1.0, 0.0);
        Self::pure(&amps).expect("nonzero")
    }

    /// Incoherent mixture of basis states with the given weights.
    pub fn diagonal(weights: &[f64; DIM]) -> Self {
        let mut rho = [[Complex64::new(0.0, 0.0); DIM]; DIM];
        for s in 0..DIM {
            rho[s][s] = Complex64::new(weights[s], 0.0);
        }
        Self { rho }
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix8 {
        &self.rho
    }

    #[inline]
    pub fn matrix_mut(&mut self) -> &mut Matrix8 {
        &mut self.rho
    }

    #[inline]
    pub fn element(&self, a: usize, b: usize) -> Complex64 {
        self.rho[a][b]
    }

    pub fn trace(&self) -> f64 {
        (0..DIM).map(|s| self.rho[s][s].re).sum()
    }

    pub fn populations(&self) -> [f64; DIM] {
        std::array::from_fn(|s| self.rho[s][s].re)
    }

    pub fn sector_population(&self, sector: Sector) -> f64 {
        (0..DIM)
            .filter(|&s| Sector::of(s) == sector)
            .map(|s| self.rho[s][s].re)
            .sum()
    }

    /// Scale to unit trace. Returns the trace before scaling.
    pub fn renormalize(&mut self) -> f64 {
        let tr = self.trace();
        let inv = 1.0 / tr;
        for row in self.rho.iter_mut() {
            for x in row.iter_mut() {
                *x *= inv;
            }
        }
        tr
    }

    /// ρ → X_q ρ X_q.
    pub fn flip(&mut self, qubit: usize) {
        let m = qubit_mask(qubit);
        let old = self.rho;
        for a in 0..DIM {
            for b in 0..DIM {
                self.rho[a][b] = old[a ^ m][b ^ m];
            }
        }
    }

    /// ⟨D⟩ for a diagonal operator D given by its diagonal.
    pub fn expect_diagonal(&self, diag: &[f64; DIM]) -> f64 {
        (0..DIM).map(|s| diag[s] * self.rho[s][s].re).sum()
    }

    /// Expectation of a function of the pair index seen by a resonator.
    pub fn expect_pair<F: Fn(usize) -> f64>(&self, resonator: usize, f: F) -> f64 {
        (0..DIM)
            .map(|s| f(pair_index(s, resonator)) * self.rho[s][s].re)
            .sum()
    }

    pub fn diagnostics(&self) -> StateDiagnostics {
        let trace_error = (self.trace() - 1.0).abs();
        let mut hermiticity_error: f64 = 0.0;
        for a in 0..DIM {
            for b in a..DIM {
                hermiticity_error =
                    hermiticity_error.max((self.rho[a][b] - self.rho[b][a].conj()).norm());
            }
        }
        let m = SMatrix::<Complex<f64>, DIM, DIM>::from_fn(|a, b| {
            let x = 0.5 * (self.rho[a][b] + self.rho[b][a].conj());
            Complex::new(x.re, x.im)
        });
        let min_eigenvalue = m
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        StateDiagnostics {
            trace_error,
            hermiticity_error,
            min_eigenvalue,
        }
    }

    pub fn check_normalized(&self) -> Result<()> {
        let tr = self.trace();
        if !tr.is_finite() || (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} deviates from 1")));
        }
        Ok(())
    }

    /// Logical coherence ⟨0_L|ρ|1_L⟩ of a sector.
    pub fn logical_coherence(&self, sector: Sector) -> Complex64 {
        let (zero, one) = sector.logical_states();
        self.rho[zero][one]
    }
}

/// Expectation values of the two stabilizers, (⟨Z0Z1⟩, ⟨Z1Z2⟩).
pub fn pauli_z_expectations(state: &ThreeQubitState) -> Result<(f64, f64)> {
    state.check_normalized()?;
    let z01: [f64; DIM] = std::array::from_fn(|s| z(s, 0) * z(s, 1));
    let z12: [f64; DIM] = std::array::from_fn(|s| z(s, 1) * z(s, 2));
    Ok((state.expect_diagonal(&z01), state.expect_diagonal(&z12)))
}
