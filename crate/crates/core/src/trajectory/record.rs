//! Homodyne records, their calibration, and CSV exchange.

use std::io::{BufRead, Write};

use crate::cavity::CavityModel;
use crate::error::{Error, Result};
use crate::model::basis::N_RESONATORS;
use crate::model::DeviceParams;

/// Information rate Γ_meas,i = η_i (κ_i/2) |α_odd − α_even|² in µs⁻¹.
pub fn measurement_rate(params: &DeviceParams, resonator: usize) -> f64 {
    let model = CavityModel::new(params);
    let (odd, even) = model.odd_even(resonator);
    params.eta(resonator) * 0.5 * model.kappa[resonator] * (odd - even).norm_sqr()
}

/// Affine map from the raw record r = dY/dt to the normalized voltage, with
/// steady odd → −1 and steady even → +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub mid: [f64; N_RESONATORS],
    pub half: [f64; N_RESONATORS],
}

impl Calibration {
    pub fn new(params: &DeviceParams) -> Self {
        let model = CavityModel::new(params);
        let mut mid = [0.0; N_RESONATORS];
        let mut half = [0.0; N_RESONATORS];
        for i in 0..N_RESONATORS {
            let (odd, even) = model.odd_even(i);
            let g = (params.eta(i) * model.kappa[i]).sqrt();
            mid[i] = g * (odd.re + even.re);
            half[i] = g * (odd.re - even.re);
        }
        Self { mid, half }
    }

    #[inline]
    pub fn normalize(&self, raw: [f64; N_RESONATORS]) -> [f64; N_RESONATORS] {
        std::array::from_fn(|i| (self.mid[i] - raw[i]) / self.half[i])
    }

    /// Standard deviation of one normalized sample averaged over `dt_us`.
    pub fn sample_noise(&self, dt_us: f64) -> [f64; N_RESONATORS] {
        std::array::from_fn(|i| 1.0 / (self.half[i] * dt_us.sqrt()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordSample {
    pub time_ns: f64,
    pub r: [f64; N_RESONATORS],
    pub vdc: [f64; N_RESONATORS],
    pub v: [f64; N_RESONATORS],
}

/// Normalized raw, demodulated and controller-filtered records of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HomodyneRecord {
    pub samples: Vec<RecordSample>,
}

pub const RECORD_CSV_HEADER: &str = "time_ns,r0,r1,vdc0,vdc1,v0,v1";

impl HomodyneRecord {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, s: RecordSample) {
        self.samples.push(s);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{RECORD_CSV_HEADER}")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s.time_ns, s.r[0], s.r[1], s.vdc[0], s.vdc[1], s.v[0], s.v[1]
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == RECORD_CSV_HEADER => {}
            _ => {
                return Err(Error::Record(format!(
                    "expected header `{RECORD_CSV_HEADER}`"
                )))
            }
        }
        let mut samples = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|c| c.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::Record(format!("record line {}: {e}", n + 2)))?;
            if vals.len() != 7 {
                return Err(Error::Record(format!(
                    "record line {}: expected 7 columns, got {}",
                    n + 2,
                    vals.len()
                )));
            }
            samples.push(RecordSample {
                time_ns: vals[0],
                r: [vals[1], vals[2]],
                vdc: [vals[3], vals[4]],
                v: [vals[5], vals[6]],
            });
        }
        Ok(Self { samples })
    }

    /// `(time_ns, vdc)` pairs for offline controller replay.
    pub fn vdc_stream(&self) -> Vec<(f64, [f64; N_RESONATORS])> {
        self.samples.iter().map(|s| (s.time_ns, s.vdc)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_vanishes_without_dispersive_shift() {
        let mut p = DeviceParams::default();
        p.resonators.eta = [1.0, 1.0];
        p.resonators.chi_mhz = [1e-12, 1e-12];
        assert!(measurement_rate(&p, 0) < 1e-20);
    }

    #[test]
    fn rate_scales_with_photon_number() {
        let p = DeviceParams::default();
        let q = p.with_nbar([4.0, 4.0]);
        for i in 0..2 {
            let ratio = measurement_rate(&q, i) / measurement_rate(&p, i);
            assert!((ratio - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_maps_steady_means() {
        let p = DeviceParams::default();
        let cal = Calibration::new(&p);
        let model = CavityModel::new(&p);
        for i in 0..2 {
            let (odd, even) = model.odd_even(i);
            let g = 2.0 * (p.eta(i) * model.kappa[i]).sqrt();
            let mut raw = [0.0; 2];
            raw[i] = g * odd.re;
            assert!((cal.normalize(raw)[i] + 1.0).abs() < 1e-12);
            raw[i] = g * even.re;
            assert!((cal.normalize(raw)[i] - 1.0).abs() < 1e-12);
            // |11⟩ has the conjugate field of |00⟩.
            raw[i] = g * model.steady_state(i, 0b11).re;
            assert!((cal.normalize(raw)[i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip() {
        let rec = HomodyneRecord {
            samples: vec![
                RecordSample {
                    time_ns: 10.0,
                    r: [0.5, -1.25],
                    vdc: [0.1, 0.2],
                    v: [1.0, 0.9],
                },
                RecordSample {
                    time_ns: 20.0,
                    r: [1e-17, 3.0],
                    vdc: [-0.1, 0.25],
                    v: [0.99, 0.875],
                },
            ],
        };
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        assert_eq!(HomodyneRecord::read_csv(&buf[..]).unwrap(), rec);
        assert!(HomodyneRecord::read_csv(&b"time_ns,r0\n"[..]).is_err());
        assert!(HomodyneRecord::read_csv(&b"time_ns,r0,r1,vdc0,vdc1,v0,v1\n1,2\n"[..]).is_err());
    }
}
