//! Logical coherence after a parity change, unconditioned and conditioned on
//! the correction time.

use num_complex::Complex64;
use serde::Serialize;

use super::output::{ExperimentResult, Plot, Series, SeriesStyle, Table};
use super::RunConfig;
use crate::cavity::{transient_dephasing, zz_dephasing, CavityModel};
use crate::error::{Error, Result};
use crate::model::basis::{pair_index, pair_is_odd, qubit_mask, zz_energies};
use crate::model::{linear, DeviceParams, Sector, ThreeQubitState};
use crate::trajectory::{
    run_batch, run_trajectory, EngineKind, FieldStart, Injection, NoiseSource, Processes, Protocol,
};

fn require_sme(engine: EngineKind) -> Result<()> {
    if engine != EngineKind::Sme {
        return Err(Error::Input(
            "coherence experiments need the master-equation engine".into(),
        ));
    }
    Ok(())
}

/// Mean of complex samples with the standard error of its magnitude.
fn mean_magnitude(values: &[Complex64]) -> (Complex64, f64) {
    let n = values.len() as f64;
    let mean: Complex64 = values.iter().sum::<Complex64>() / n;
    if values.len() < 2 || mean.norm() == 0.0 {
        return (mean, f64::NAN);
    }
    let u = mean.conj() / mean.norm();
    let proj: Vec<f64> = values.iter().map(|v| (v * u).re).collect();
    let m = proj.iter().sum::<f64>() / n;
    let var = proj.iter().map(|p| (p - m).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoherenceTransferOptions {
    /// Ring-down time after the flip, µs.
    pub ringdown_us: f64,
    /// Switch both drives off at the flip, leaving a pure ring-down.
    pub drive_off_at_flip: bool,
}

impl Default for CoherenceTransferOptions {
    fn default() -> Self {
        Self {
            ringdown_us: 4.0,
            drive_off_at_flip: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoherenceTransferResult {
    pub from_sector: Sector,
    pub to_sector: Sector,
    pub flip: Option<usize>,
    pub trajectories: usize,
    pub coherence: [f64; 2],
    pub reference: [f64; 2],
    pub relative: f64,
    pub relative_se: f64,
    /// Resonators whose parity went from odd to even.
    pub rung_down: Vec<usize>,
    /// e^{−Σζ} over the rung-down resonators.
    pub predicted: f64,
}

/// Ring-down prediction e^{−Σζ} for a flip out of `from`.
pub fn predicted_transfer(
    params: &DeviceParams,
    from: Sector,
    flip: Option<usize>,
) -> (f64, Vec<usize>) {
    let Some(q) = flip else {
        return (1.0, Vec::new());
    };
    let model = CavityModel::new(params);
    let (zero, _) = from.logical_states();
    let flipped = zero ^ qubit_mask(q);
    let mut zeta = 0.0;
    let mut rung = Vec::new();
    for r in 0..2 {
        if pair_is_odd(pair_index(zero, r)) && !pair_is_odd(pair_index(flipped, r)) {
            let alpha0 = model.odd_even(r).0.norm();
            zeta += transient_dephasing(alpha0, model.chi[r], model.kappa[r]);
            rung.push(r);
        }
    }
    ((-zeta).exp(), rung)
}

pub fn coherence_transfer_experiment(
    params: &DeviceParams,
    from: Sector,
    flip: Option<usize>,
    run: &RunConfig,
    opts: &CoherenceTransferOptions,
) -> Result<CoherenceTransferResult> {
    require_sme(run.engine)?;
    if flip.is_some_and(|q| q > 2) {
        return Err(Error::Input(format!(
            "qubit index {} out of range",
            flip.unwrap()
        )));
    }
    if run.trajectories == 0 {
        return Err(Error::Input(
            "coherence transfer needs at least one trajectory".into(),
        ));
    }
    let to = flip.map_or(from, |q| from.flipped(q));
    let (zero, one) = from.logical_states();
    let base = Protocol {
        engine: EngineKind::Sme,
        initial: ThreeQubitState::plus(zero, one),
        sector: from,
        duration_us: opts.ringdown_us,
        injections: flip
            .map(|q| Injection {
                time_us: 0.0,
                qubit: q,
            })
            .into_iter()
            .collect(),
        feedback: false,
        drive_off_at_us: opts.drive_off_at_flip.then_some(0.0),
        ..Protocol::default()
    };
    let values = run_batch(run.trajectories, run.workers, |i| {
        let out = run_trajectory(params, &base, &mut NoiseSource::new(run.seed, i as u64))?;
        Ok(out.final_state.logical_coherence(to))
    })?;
    let reference_proto = Protocol {
        field_start: FieldStart::Off,
        drive_off_at_us: None,
        processes: Processes {
            measurement: false,
            ..Processes::default()
        },
        noise_scale: 0.0,
        ..base
    };
    let reference = run_trajectory(params, &reference_proto, &mut NoiseSource::new(run.seed, 0))?
        .final_state
        .logical_coherence(to);
    let (mean, se) = mean_magnitude(&values);
    let (predicted, rung_down) = predicted_transfer(params, from, flip);
    Ok(CoherenceTransferResult {
        from_sector: from,
        to_sector: to,
        flip,
        trajectories: values.len(),
        coherence: [mean.re, mean.im],
        reference: [reference.re, reference.im],
        relative: mean.norm() / reference.norm(),
        relative_se: se / reference.norm(),
        rung_down,
        predicted,
    })
}

impl CoherenceTransferResult {
    pub fn to_result(
        &self,
        params: &DeviceParams,
        run: &RunConfig,
        opts: &CoherenceTransferOptions,
    ) -> ExperimentResult {
        let mut r = ExperimentResult::new(
            "coherence-transfer",
            params,
            run.seed,
            run.engine,
            run.trajectories,
        );
        r.metric("from_sector", self.from_sector);
        r.metric("to_sector", self.to_sector);
        r.metric("flip", self.flip);
        r.metric("relative_coherence", self.relative);
        r.metric("relative_coherence_se", self.relative_se);
        r.metric("predicted", self.predicted);
        r.metric("rung_down_resonators", &self.rung_down);
        r.metric("coherence", self.coherence);
        r.metric("reference", self.reference);
        r.metric("options", opts);
        let mut t = Table::new("coherence", &["quantity", "value", "se"]);
        t.push([
            "relative".to_string(),
            self.relative.to_string(),
            self.relative_se.to_string(),
        ]);
        t.push([
            "predicted".to_string(),
            self.predicted.to_string(),
            String::new(),
        ]);
        r.tables.push(t);
        r.plots.push(
            Plot::new(
                "coherence",
                &format!("Coherence {} -> {}", self.from_sector, self.to_sector),
                "",
                "relative coherence",
            )
            .add(
                Series::new(
                    "simulated",
                    vec![(0.0, self.relative)],
                    SeriesStyle::Markers,
                )
                .with_errors(vec![self.relative_se]),
            )
            .add(Series::new(
                "ring-down prediction",
                vec![(1.0, self.predicted)],
                SeriesStyle::Markers,
            )),
        );
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalCoherenceOptions {
    pub flip_qubit: usize,
    pub flip_at_us: f64,
    /// Run length after the corrective pulse, µs.
    pub hold_after_pulse_us: f64,
    /// Give up if no pulse has fired this long after the flip, µs.
    pub max_wait_us: f64,
    pub bin_us: f64,
    pub min_per_bin: usize,
}

impl Default for ConditionalCoherenceOptions {
    fn default() -> Self {
        Self {
            flip_qubit: 0,
            flip_at_us: 1.0,
            hold_after_pulse_us: 2.0,
            max_wait_us: 10.0,
            bin_us: 0.25,
            min_per_bin: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoherenceBin {
    pub t_lo_us: f64,
    pub t_hi_us: f64,
    pub count: usize,
    pub mean_t_us: f64,
    pub coherence: [f64; 2],
    /// Same trajectories with the ZZ couplings switched off.
    pub reference: [f64; 2],
    pub phase: f64,
    /// Phase of coherence / reference.
    pub relative_phase: f64,
    pub relative_magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseFit {
    /// Linear frequency of the fitted phase slope, MHz.
    pub frequency_mhz: f64,
    pub frequency_error_mhz: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionalCoherenceResult {
    pub trajectories: usize,
    pub kept: usize,
    pub correction_times_us: Vec<f64>,
    pub bins: Vec<CoherenceBin>,
    pub dropped_bins: Vec<(f64, usize)>,
    /// Expected phase slope of the coherence vs correction time, MHz.
    pub expected_frequency_mhz: f64,
    pub raw_fit: Option<PhaseFit>,
    pub relative_fit: Option<PhaseFit>,
    /// |Σρ| / |Σρ_ref| over all kept trajectories.
    pub pooled_ratio: f64,
    /// |Σ ρ·ρ_ref*/|ρ_ref|| / Σ|ρ_ref|: each trajectory measured in the frame
    /// of its own ZZ-free twin, which removes the measurement-induced phase.
    pub pooled_ratio_compensated: f64,
    /// e^{−ζ} from averaging the ZZ phase over the correction times.
    pub pooled_predicted: f64,
}

/// Phase rate of the logical coherence while the flipped pair is occupied,
/// relative to the code sector's own rate, linear MHz.
pub fn expected_zz_frequency(params: &DeviceParams, sector: Sector, qubit: usize) -> f64 {
    let e = zz_energies(params);
    let (zero, one) = sector.logical_states();
    let m = qubit_mask(qubit);
    linear((e[one ^ m] - e[zero ^ m]) - (e[one] - e[zero]))
}

fn unwrap_phases(phases: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(phases.len());
    for &p in phases {
        match out.last() {
            None => out.push(p),
            Some(&prev) => {
                let turns = ((prev - p) / std::f64::consts::TAU).round();
                out.push(p + turns * std::f64::consts::TAU);
            }
        }
    }
    out
}

/// Weighted straight-line fit to unwrapped phases.
pub fn fit_phase(times: &[f64], phases: &[f64], weights: &[f64]) -> Option<PhaseFit> {
    if times.len() < 3 {
        return None;
    }
    let y = unwrap_phases(phases);
    let sw: f64 = weights.iter().sum();
    let mx = times.iter().zip(weights).map(|(t, w)| t * w).sum::<f64>() / sw;
    let my = y.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / sw;
    let sxx: f64 = times
        .iter()
        .zip(weights)
        .map(|(t, w)| w * (t - mx).powi(2))
        .sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = times
        .iter()
        .zip(&y)
        .zip(weights)
        .map(|((t, v), w)| w * (t - mx) * (v - my))
        .sum();
    let slope = sxy / sxx;
    let offset = my - slope * mx;
    let dof = times.len() as f64 - 2.0;
    let rss: f64 = times
        .iter()
        .zip(&y)
        .zip(weights)
        .map(|((t, v), w)| w * (v - offset - slope * t).powi(2))
        .sum();
    let slope_se = (rss / dof / sxx).sqrt();
    let tau = std::f64::consts::TAU;
    Some(PhaseFit {
        frequency_mhz: slope / tau,
        frequency_error_mhz: slope_se / tau,
        offset,
    })
}

fn zero_zz(params: &DeviceParams) -> DeviceParams {
    let mut p = params.clone();
    p.zz.beta01_mhz = 0.0;
    p.zz.beta12_mhz = 0.0;
    p.zz.beta02_mhz = 0.0;
    p
}

pub fn conditional_coherence_experiment(
    params: &DeviceParams,
    run: &RunConfig,
    opts: &ConditionalCoherenceOptions,
) -> Result<ConditionalCoherenceResult> {
    require_sme(run.engine)?;
    if opts.flip_qubit > 2 || !(opts.bin_us > 0.0) {
        return Err(Error::Input("invalid conditional coherence options".into()));
    }
    let sector = Sector::OO;
    let (zero, one) = sector.logical_states();
    let omega_l = zz_energies(params)[one] - zz_energies(params)[zero];
    let proto = Protocol {
        engine: EngineKind::Sme,
        initial: ThreeQubitState::plus(zero, one),
        sector,
        duration_us: opts.flip_at_us + opts.max_wait_us,
        injections: vec![Injection {
            time_us: opts.flip_at_us,
            qubit: opts.flip_qubit,
        }],
        feedback: true,
        stop_after_first_pulse_us: Some(opts.hold_after_pulse_us),
        ..Protocol::default()
    };
    let reference_params = zero_zz(params);
    let rows = run_batch(run.trajectories, run.workers, |i| {
        let sample = |p: &DeviceParams, omega: f64| -> Result<Option<(f64, Complex64)>> {
            let out = run_trajectory(p, &proto, &mut NoiseSource::new(run.seed, i as u64))?;
            if out.corrections() != [opts.flip_qubit] {
                return Ok(None);
            }
            let pulse = out.first_pulse().expect("one correction").time_ns;
            let (inj, _) = out.injections[0];
            let t = (pulse - inj) * 1e-3;
            let frame = Complex64::from_polar(1.0, -omega * out.end_time_us);
            Ok(Some((t, out.final_state.logical_coherence(sector) * frame)))
        };
        let a = sample(params, omega_l)?;
        let b = sample(&reference_params, 0.0)?;
        Ok(match (a, b) {
            (Some((t, c)), Some((t0, c0))) if (t - t0).abs() < 1e-9 => Some((t, c, c0)),
            (None, None) => None,
            _ => {
                return Err(Error::Integrator {
                    time_us: f64::NAN,
                    reason: format!("trajectory {i}: populations depend on ZZ couplings"),
                })
            }
        })
    })?;
    let kept: Vec<(f64, Complex64, Complex64)> = rows.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::Input(
            "no trajectory was corrected exactly once".into(),
        ));
    }
    let times: Vec<f64> = kept.iter().map(|k| k.0).collect();
    let t_min = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_max = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let first = (t_min / opts.bin_us).floor() as i64;
    let last = (t_max / opts.bin_us).floor() as i64;
    let mut bins = Vec::new();
    let mut dropped = Vec::new();
    for b in first..=last {
        let lo = b as f64 * opts.bin_us;
        let hi = lo + opts.bin_us;
        let members: Vec<&(f64, Complex64, Complex64)> = kept
            .iter()
            .filter(|k| ((k.0 / opts.bin_us).floor() as i64) == b)
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < opts.min_per_bin {
            dropped.push((lo, members.len()));
            continue;
        }
        let n = members.len() as f64;
        let c: Complex64 = members.iter().map(|k| k.1).sum::<Complex64>() / n;
        let c0: Complex64 = members.iter().map(|k| k.2).sum::<Complex64>() / n;
        let rel = c / c0;
        bins.push(CoherenceBin {
            t_lo_us: lo,
            t_hi_us: hi,
            count: members.len(),
            mean_t_us: members.iter().map(|k| k.0).sum::<f64>() / n,
            coherence: [c.re, c.im],
            reference: [c0.re, c0.im],
            phase: c.arg(),
            relative_phase: rel.arg(),
            relative_magnitude: rel.norm(),
        });
    }
    let bt: Vec<f64> = bins.iter().map(|b| b.mean_t_us).collect();
    let bw: Vec<f64> = bins.iter().map(|b| b.count as f64).collect();
    let raw_fit = fit_phase(&bt, &bins.iter().map(|b| b.phase).collect::<Vec<_>>(), &bw);
    let relative_fit = fit_phase(
        &bt,
        &bins.iter().map(|b| b.relative_phase).collect::<Vec<_>>(),
        &bw,
    );
    let expected = expected_zz_frequency(params, sector, opts.flip_qubit);
    let sum: Complex64 = kept.iter().map(|k| k.1).sum();
    let sum0: Complex64 = kept.iter().map(|k| k.2).sum();
    let (_, zeta) = zz_dephasing(expected, &times)?;
    Ok(ConditionalCoherenceResult {
        trajectories: run.trajectories,
        kept: kept.len(),
        correction_times_us: times,
        bins,
        dropped_bins: dropped,
        expected_frequency_mhz: expected,
        raw_fit,
        relative_fit,
        pooled_ratio: sum.norm() / sum0.norm(),
        pooled_ratio_compensated: kept
            .iter()
            .map(|k| k.1 * k.2.conj() / k.2.norm())
            .sum::<Complex64>()
            .norm()
            / kept.iter().map(|k| k.2.norm()).sum::<f64>(),
        pooled_predicted: (-zeta).exp(),
    })
}

impl ConditionalCoherenceResult {
    pub fn to_result(
        &self,
        params: &DeviceParams,
        run: &RunConfig,
        opts: &ConditionalCoherenceOptions,
    ) -> ExperimentResult {
        let mut r = ExperimentResult::new(
            "conditional-coherence",
            params,
            run.seed,
            run.engine,
            run.trajectories,
        );
        r.metric("kept", self.kept);
        r.metric("expected_frequency_mhz", self.expected_frequency_mhz);
        r.metric("relative_fit", self.relative_fit);
        r.metric("raw_fit", self.raw_fit);
        r.metric("pooled_ratio", self.pooled_ratio);
        r.metric("pooled_ratio_compensated", self.pooled_ratio_compensated);
        r.metric("pooled_predicted", self.pooled_predicted);
        r.metric("bins", &self.bins);
        r.metric("options", opts);
        for (lo, count) in &self.dropped_bins {
            r.flag(format!(
                "dropped bin at {lo:.3} us with {count} trajectories"
            ));
        }
        if self.relative_fit.is_none() {
            r.flag("fewer than three populated bins, no phase fit");
        }
        let mut t = Table::new(
            "bins",
            &[
                "t_lo_us",
                "t_hi_us",
                "count",
                "mean_t_us",
                "re",
                "im",
                "ref_re",
                "ref_im",
                "phase_rad",
                "relative_phase_rad",
                "relative_magnitude",
            ],
        );
        for b in &self.bins {
            t.push([
                b.t_lo_us,
                b.t_hi_us,
                b.count as f64,
                b.mean_t_us,
                b.coherence[0],
                b.coherence[1],
                b.reference[0],
                b.reference[1],
                b.phase,
                b.relative_phase,
                b.relative_magnitude,
            ]);
        }
        r.tables.push(t);
        let re: Vec<(f64, f64)> = self
            .bins
            .iter()
            .map(|b| (b.mean_t_us, b.coherence[0]))
            .collect();
        let im: Vec<(f64, f64)> = self
            .bins
            .iter()
            .map(|b| (b.mean_t_us, b.coherence[1]))
            .collect();
        let phase: Vec<(f64, f64)> = self
            .bins
            .iter()
            .map(|b| (b.mean_t_us, b.relative_phase))
            .collect();
        r.plots.push(
            Plot::new(
                "coherence",
                "Logical coherence vs correction time",
                "correction time (us)",
                "coherence",
            )
            .add(Series::new("Re", re, SeriesStyle::Markers))
            .add(Series::new("Im", im, SeriesStyle::Markers)),
        );
        let mut phase_plot = Plot::new(
            "phase",
            "Phase relative to the ZZ-free run",
            "correction time (us)",
            "phase (rad)",
        )
        .add(Series::new("simulated", phase, SeriesStyle::Markers));
        if let Some(fit) = self.relative_fit {
            let line = self
                .bins
                .iter()
                .map(|b| {
                    (
                        b.mean_t_us,
                        fit.offset + std::f64::consts::TAU * fit.frequency_mhz * b.mean_t_us,
                    )
                })
                .collect();
            phase_plot = phase_plot.add(Series::new("fit", line, SeriesStyle::Line));
        }
        r.plots.push(phase_plot);
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_fit_recovers_slope() {
        let t: Vec<f64> = (0..10).map(|k| 0.5 + 0.25 * k as f64).collect();
        let f = 0.37;
        let ph: Vec<f64> = t
            .iter()
            .map(|&x| {
                let p: f64 = 0.3 + std::f64::consts::TAU * f * x;
                (p + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI
            })
            .collect();
        let fit = fit_phase(&t, &ph, &vec![1.0; t.len()]).unwrap();
        assert!((fit.frequency_mhz - f).abs() < 1e-12);
    }

    #[test]
    fn zz_frequency_for_outer_flip() {
        let p = DeviceParams::default();
        let f = expected_zz_frequency(&p, Sector::OO, 0);
        assert!((f.abs() - (p.zz.beta01_mhz + p.zz.beta02_mhz)).abs() < 1e-12);
        assert_eq!(expected_zz_frequency(&zero_zz(&p), Sector::OO, 0), 0.0);
    }

    #[test]
    fn prediction_picks_rung_down_resonators() {
        let p = DeviceParams::default();
        // OO: both odd, flipping q0 makes R0 even
        let (pred, rung) = predicted_transfer(&p, Sector::OO, Some(0));
        assert_eq!(rung, vec![0]);
        assert!(pred < 0.5);
        // EE: flipping q0 makes R0 odd, nothing rings down
        assert_eq!(predicted_transfer(&p, Sector::EE, Some(0)), (1.0, vec![]));
        assert_eq!(predicted_transfer(&p, Sector::OO, None).0, 1.0);
    }

    #[test]
    fn no_flip_without_measurement_is_unity() {
        let p = DeviceParams::default();
        let run = RunConfig {
            trajectories: 1,
            ..Default::default()
        };
        // measurement switched off via an empty drive
        let q = p.with_nbar([0.0, 0.0]);
        let res = coherence_transfer_experiment(
            &q,
            Sector::OO,
            None,
            &run,
            &CoherenceTransferOptions::default(),
        )
        .unwrap();
        assert!((res.relative - 1.0).abs() < 1e-12, "{}", res.relative);
    }

    #[test]
    fn zero_coupling_gives_flat_phase() {
        let p = zero_zz(&DeviceParams::default());
        let run = RunConfig {
            trajectories: 200,
            seed: 8,
            ..Default::default()
        };
        let res =
            conditional_coherence_experiment(&p, &run, &ConditionalCoherenceOptions::default())
                .unwrap();
        let fit = res.relative_fit.unwrap();
        assert!(fit.frequency_mhz.abs() < 1e-12);
        assert!((res.pooled_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phase_follows_zz_frequency() {
        let p = DeviceParams::default();
        let run = RunConfig {
            trajectories: 600,
            seed: 9,
            ..Default::default()
        };
        let res =
            conditional_coherence_experiment(&p, &run, &ConditionalCoherenceOptions::default())
                .unwrap();
        let fit = res.relative_fit.unwrap();
        assert!(
            (fit.frequency_mhz - res.expected_frequency_mhz).abs()
                < 4.0 * fit.frequency_error_mhz + 0.005,
            "{fit:?} vs {}",
            res.expected_frequency_mhz
        );
        assert!(res.kept > 400);
    }

    #[test]
    fn telegraph_engine_rejected() {
        let p = DeviceParams::default();
        let run = RunConfig {
            trajectories: 1,
            engine: EngineKind::Telegraph,
            ..Default::default()
        };
        assert!(coherence_transfer_experiment(
            &p,
            Sector::OO,
            Some(0),
            &run,
            &CoherenceTransferOptions::default()
        )
        .is_err());
    }
}
