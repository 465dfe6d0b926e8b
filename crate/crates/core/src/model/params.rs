//! Device and controller constants.
//!
//! Unit conventions are fixed here and nowhere else:
//!
//! * Frequencies in the configuration (`kappa_mhz`, `chi_mhz`, `beta*_mhz`) are
//!   *linear* frequencies in MHz, as quoted from spectroscopy. Every rate that
//!   enters the dynamics is the angular value `2π · f`, in rad/µs.
//! * Qubit times are µs, thermal excitation rates are ms⁻¹, controller and
//!   integrator times are ns. Internally the simulation clock runs in µs.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "CQEC_CONFIG";

/// Linear frequency (MHz) to angular rate (rad/µs).
#[inline]
pub fn angular(linear_mhz: f64) -> f64 {
    TAU * linear_mhz
}

/// Angular rate (rad/µs) to linear frequency (MHz).
#[inline]
pub fn linear(angular_rad_per_us: f64) -> f64 {
    angular_rad_per_us / TAU
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonatorParams {
    /// Linewidth κ per resonator, linear MHz.
    pub kappa_mhz: [f64; 2],
    /// Dispersive shift χ per resonator, linear MHz.
    pub chi_mhz: [f64; 2],
    /// Quantum efficiency of each readout chain.
    pub eta: [f64; 2],
    /// Steady-state photon number with the coupled pair in an odd-parity state.
    /// The drive amplitude is solved from this.
    pub nbar_odd: [f64; 2],
}

impl Default for ResonatorParams {
    fn default() -> Self {
        Self {
            kappa_mhz: [0.636, 0.810],
            chi_mhz: [2.02, 2.34],
            eta: [0.62, 0.56],
            nbar_odd: [2.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QubitParams {
    pub t1_us: [f64; 3],
    /// Ramsey T2*. Pure dephasing is derived as 1/Tφ = 1/T2* − 1/(2·T1).
    pub t2star_us: [f64; 3],
    /// Thermal excitation rates, ms⁻¹. Placeholder values.
    pub gamma_up_per_ms: [f64; 3],
}

impl Default for QubitParams {
    fn default() -> Self {
        Self {
            t1_us: [22.0, 23.0, 23.0],
            t2star_us: [18.0, 26.0, 20.0],
            gamma_up_per_ms: [0.5, 0.5, 0.5],
        }
    }
}

/// Static ZZ coefficients, linear MHz. β_ij is the frequency shift of qubit i
/// when qubit j is excited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZzParams {
    pub beta01_mhz: f64,
    pub beta12_mhz: f64,
    pub beta02_mhz: f64,
}

impl Default for ZzParams {
    fn default() -> Self {
        Self {
            beta01_mhz: 0.15,
            beta12_mhz: 0.12,
            beta02_mhz: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerParams {
    /// Demodulation filter time constant, ns.
    pub tau_demod_ns: f64,
    /// Secondary (controller) filter time constant, ns.
    pub tau_ctrl_ns: f64,
    /// Single-low threshold for outer-qubit flips.
    pub theta1: f64,
    /// Guard threshold the other signal must stay above for outer-qubit flips.
    pub theta2: f64,
    /// Both-low threshold for central-qubit flips.
    pub theta3: f64,
    /// Detection to corrective pulse delay, ns.
    pub latency_ns: f64,
    /// Length of the V^DC inversion window opened at detection, ns.
    pub reset_delay_ns: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            tau_demod_ns: 32.0,
            tau_ctrl_ns: 600.0,
            theta1: -0.45,
            theta2: 0.85,
            theta3: -0.25,
            latency_ns: 200.0,
            reset_delay_ns: 500.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorParams {
    /// Stochastic integrator step, ns.
    pub dt_sim_ns: f64,
    /// Controller sample period, ns. Must be an integer multiple of `dt_sim_ns`.
    pub dt_ctrl_ns: f64,
}

impl Default for IntegratorParams {
    fn default() -> Self {
        Self {
            dt_sim_ns: 10.0,
            dt_ctrl_ns: 10.0,
        }
    }
}

/// Every physical and controller constant of a run.
///
/// Immutable once validated; shared by reference between trajectory workers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    pub resonators: ResonatorParams,
    pub qubits: QubitParams,
    pub zz: ZzParams,
    pub controller: ControllerParams,
    pub integrator: IntegratorParams,
}

fn positive(name: &str, values: &[f64]) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if !(v.is_finite() && *v > 0.0) {
            return Err(Error::Config(format!(
                "{name}[{i}] must be finite and > 0, got {v}"
            )));
        }
    }
    Ok(())
}

fn non_negative(name: &str, values: &[f64]) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if !(v.is_finite() && *v >= 0.0) {
            return Err(Error::Config(format!(
                "{name}[{i}] must be finite and >= 0, got {v}"
            )));
        }
    }
    Ok(())
}

impl DeviceParams {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let params: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    /// SHA-256 of the canonical JSON serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("params serialize");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.resonators;
        positive("resonators.kappa_mhz", &r.kappa_mhz)?;
        positive("resonators.chi_mhz", &r.chi_mhz)?;
        positive("resonators.eta", &r.eta)?;
        positive("resonators.nbar_odd", &r.nbar_odd)?;
        if r.eta.iter().any(|&e| e > 1.0) {
            return Err(Error::Config("resonators.eta must be <= 1".into()));
        }
        let q = &self.qubits;
        positive("qubits.t1_us", &q.t1_us)?;
        positive("qubits.t2star_us", &q.t2star_us)?;
        non_negative("qubits.gamma_up_per_ms", &q.gamma_up_per_ms)?;
        let zz = &self.zz;
        for (name, v) in [
            ("zz.beta01_mhz", zz.beta01_mhz),
            ("zz.beta12_mhz", zz.beta12_mhz),
            ("zz.beta02_mhz", zz.beta02_mhz),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        let c = &self.controller;
        positive("controller.tau_demod_ns", &[c.tau_demod_ns])?;
        positive("controller.tau_ctrl_ns", &[c.tau_ctrl_ns])?;
        non_negative("controller.latency_ns", &[c.latency_ns])?;
        non_negative("controller.reset_delay_ns", &[c.reset_delay_ns])?;
        for (name, v) in [
            ("theta1", c.theta1),
            ("theta2", c.theta2),
            ("theta3", c.theta3),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("controller.{name} must be finite")));
            }
        }
        let g = &self.integrator;
        positive("integrator.dt_sim_ns", &[g.dt_sim_ns])?;
        positive("integrator.dt_ctrl_ns", &[g.dt_ctrl_ns])?;
        if g.dt_sim_ns > g.dt_ctrl_ns * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "integrator.dt_sim_ns ({}) must not exceed dt_ctrl_ns ({})",
                g.dt_sim_ns, g.dt_ctrl_ns
            )));
        }
        let ratio = g.dt_ctrl_ns / g.dt_sim_ns;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "integrator.dt_ctrl_ns ({}) must be an integer multiple of dt_sim_ns ({})",
                g.dt_ctrl_ns, g.dt_sim_ns
            )));
        }
        Ok(())
    }

    /// κ_i in rad/µs.
    pub fn kappa(&self, resonator: usize) -> f64 {
        angular(self.resonators.kappa_mhz[resonator])
    }

    /// χ_i in rad/µs.
    pub fn chi(&self, resonator: usize) -> f64 {
        angular(self.resonators.chi_mhz[resonator])
    }

    pub fn eta(&self, resonator: usize) -> f64 {
        self.resonators.eta[resonator]
    }

    /// Pure dephasing times in µs; infinite when T2* ≥ 2·T1.
    pub fn tphi_us(&self) -> [f64; 3] {
        std::array::from_fn(|j| {
            let rate = 1.0 / self.qubits.t2star_us[j] - 0.5 / self.qubits.t1_us[j];
            if rate > 0.0 {
                1.0 / rate
            } else {
                f64::INFINITY
            }
        })
    }

    /// Decay rates 1/T1 in µs⁻¹.
    pub fn gamma_down(&self) -> [f64; 3] {
        self.qubits.t1_us.map(|t| 1.0 / t)
    }

    /// Thermal excitation rates in µs⁻¹.
    pub fn gamma_up(&self) -> [f64; 3] {
        self.qubits.gamma_up_per_ms.map(|g| g * 1e-3)
    }

    /// Pure dephasing rates 1/Tφ in µs⁻¹.
    pub fn gamma_phi(&self) -> [f64; 3] {
        self.tphi_us()
            .map(|t| if t.is_finite() { 1.0 / t } else { 0.0 })
    }

    /// β_ij in rad/µs, indexed `[i][j]`, symmetric, zero diagonal.
    pub fn beta_angular(&self) -> [[f64; 3]; 3] {
        let b01 = angular(self.zz.beta01_mhz);
        let b12 = angular(self.zz.beta12_mhz);
        let b02 = angular(self.zz.beta02_mhz);
        [[0.0, b01, b02], [b01, 0.0, b12], [b02, b12, 0.0]]
    }

    pub fn dt_sim_us(&self) -> f64 {
        self.integrator.dt_sim_ns * 1e-3
    }

    pub fn dt_ctrl_us(&self) -> f64 {
        self.integrator.dt_ctrl_ns * 1e-3
    }

    /// Integrator steps per controller sample.
    pub fn substeps(&self) -> usize {
        (self.integrator.dt_ctrl_ns / self.integrator.dt_sim_ns).round() as usize
    }

    /// Copy with both resonators' odd-parity photon numbers scaled.
    pub fn with_nbar(&self, nbar: [f64; 2]) -> Self {
        let mut p = self.clone();
        p.resonators.nbar_odd = nbar;
        p
    }

    /// Copy with halved integrator step (controller sampling unchanged).
    pub fn with_halved_dt(&self) -> Self {
        let mut p = self.clone();
        p.integrator.dt_sim_ns *= 0.5;
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        DeviceParams::default().validate().unwrap();
    }

    #[test]
    fn unit_round_trip_is_identity() {
        for f in [0.0, 0.636, 2.02, 1e-6, 123.456] {
            assert!((linear(angular(f)) - f).abs() <= f64::EPSILON * f.max(1.0));
        }
        assert!((angular(1.0) - TAU).abs() < 1e-15);
    }

    #[test]
    fn tphi_from_t2star() {
        let p = DeviceParams::default();
        let tphi = p.tphi_us();
        // 1/18 - 1/44
        assert!((1.0 / tphi[0] - (1.0 / 18.0 - 1.0 / 44.0)).abs() < 1e-12);
        let mut q = p.clone();
        q.qubits.t2star_us[1] = 2.0 * q.qubits.t1_us[1];
        assert!(q.tphi_us()[1].is_infinite());
        assert_eq!(q.gamma_phi()[1], 0.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = DeviceParams::from_json_str(r#"{"resonators": {"kapa_mhz": [1, 1]}}"#);
        assert!(matches!(err, Err(Error::Config(_))));
        let err = DeviceParams::from_json_str(r#"{"resonatorz": {}}"#);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn partial_config_fills_defaults() {
        let p = DeviceParams::from_json_str(r#"{"resonators": {"nbar_odd": [1.0, 3.0]}}"#).unwrap();
        assert_eq!(p.resonators.nbar_odd, [1.0, 3.0]);
        assert_eq!(p.resonators.kappa_mhz, [0.636, 0.810]);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut p = DeviceParams::default();
        p.resonators.eta[0] = 1.2;
        assert!(p.validate().is_err());
        let mut p = DeviceParams::default();
        p.qubits.t1_us[2] = 0.0;
        assert!(p.validate().is_err());
        let mut p = DeviceParams::default();
        p.integrator.dt_sim_ns = 20.0;
        assert!(p.validate().is_err());
        let mut p = DeviceParams::default();
        p.integrator.dt_sim_ns = 3.0;
        assert!(p.validate().is_err());
        let p = DeviceParams::default().with_halved_dt();
        p.validate().unwrap();
        assert_eq!(p.substeps(), 2);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = DeviceParams::default();
        assert_eq!(a.content_hash(), DeviceParams::default().content_hash());
        assert_ne!(a.content_hash(), a.with_nbar([1.0, 1.0]).content_hash());
    }
}
