//! Continuous error correction of the three-qubit bit-flip code.
//!
//! The crate simulates diffusive quantum trajectories of three transmons
//! monitored by two joint-parity readout resonators, emulates a
//! filter-and-threshold feedback controller acting on the homodyne records,
//! and scripts the characterization experiments (detection efficiency, dark
//! counts, dead time, logical lifetime, and the three dephasing channels).
//!
//! Module map:
//!
//! * [`model`]: device parameters, unit conventions, basis and parity bookkeeping.
//! * [`cavity`]: classical pointer-field dynamics and the analytic dephasing formulas.
//! * [`trajectory`]: stochastic master equation and telegraph engines, records, runner.
//! * [`controller`]: exponential filters, threshold detection, feedback and reset.
//! * [`experiments`]: experiment scripts, fitting, threshold calibration, artifacts.

pub mod cavity;
pub mod controller;
pub mod error;
pub mod experiments;
pub mod model;
pub mod trajectory;

pub use error::{Error, Result};
pub use model::{DeviceParams, Sector, ThreeQubitState};
