//! Shared physical model: parameters, basis conventions and the qubit state.

pub mod basis;
pub mod params;
pub mod state;

pub use basis::{subspace_splitting, zz_energies, Sector, DIM, N_QUBITS, N_RESONATORS};
pub use params::{angular, linear, DeviceParams};
pub use state::{pauli_z_expectations, ThreeQubitState};
