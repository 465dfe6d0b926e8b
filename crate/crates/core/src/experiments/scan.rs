//! Steady-state distinguishability of the parity pointer states vs χ/κ.

use serde::Serialize;

use super::output::{ExperimentResult, Plot, Series, SeriesStyle, Table};
use super::RunConfig;
use crate::cavity::{distinguishability_ratio, CavityModel, PointerFields};
use crate::error::{Error, Result};
use crate::model::DeviceParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    pub resonator: usize,
    pub chi_over_kappa: f64,
    /// D_{00,01}/D_{00,11} from the steady fields.
    pub simulated: f64,
    /// 4(χ/κ)².
    pub large_chi: f64,
    /// 4(χ/κ)² + 1/4, exact for the resonant odd drive.
    pub exact: f64,
}

/// D^(i)_{m,n} for one pair of pair states at the configured parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairDistance {
    pub resonator: usize,
    pub m: usize,
    pub n: usize,
    pub distance: f64,
}

impl PairDistance {
    pub fn label(&self) -> String {
        format!("{:02b}-{:02b}", self.m, self.n)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanResult {
    /// Configured device values, one per resonator.
    pub configured: Vec<ScanPoint>,
    pub pairs: Vec<PairDistance>,
    pub sweep: Vec<ScanPoint>,
}

fn pair_distances(params: &DeviceParams) -> Vec<PairDistance> {
    let fields = PointerFields::steady(&CavityModel::new(params));
    let mut out = Vec::with_capacity(12);
    for resonator in 0..2 {
        for m in 0..4 {
            for n in m + 1..4 {
                out.push(PairDistance {
                    resonator,
                    m,
                    n,
                    distance: fields.distinguishability(m, n, resonator),
                });
            }
        }
    }
    out
}

fn point(params: &DeviceParams, resonator: usize) -> ScanPoint {
    let model = CavityModel::new(params);
    let r = params.resonators.chi_mhz[resonator] / params.resonators.kappa_mhz[resonator];
    ScanPoint {
        resonator,
        chi_over_kappa: r,
        simulated: distinguishability_ratio(&model, resonator),
        large_chi: 4.0 * r * r,
        exact: 4.0 * r * r + 0.25,
    }
}

pub fn default_ratios() -> Vec<f64> {
    (0..=40).map(|k| 0.25 * k as f64 / 4.0 + 0.25).collect()
}

/// Sweep χ at fixed κ for both resonators.
pub fn distinguishability_scan(params: &DeviceParams, ratios: &[f64]) -> Result<ScanResult> {
    if ratios.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::Input("χ/κ ratios must be positive".into()));
    }
    let configured = (0..2).map(|i| point(params, i)).collect();
    let mut sweep = Vec::with_capacity(2 * ratios.len());
    for i in 0..2 {
        for &r in ratios {
            let mut p = params.clone();
            p.resonators.chi_mhz[i] = r * p.resonators.kappa_mhz[i];
            sweep.push(point(&p, i));
        }
    }
    Ok(ScanResult {
        configured,
        pairs: pair_distances(params),
        sweep,
    })
}

impl ScanResult {
    pub fn to_result(&self, params: &DeviceParams, run: &RunConfig) -> ExperimentResult {
        let mut r =
            ExperimentResult::new("distinguishability-scan", params, run.seed, run.engine, 0);
        r.metric("configured", &self.configured);
        let mut t = Table::new(
            "scan",
            &[
                "resonator",
                "chi_over_kappa",
                "ratio_simulated",
                "ratio_4x2",
                "ratio_exact",
            ],
        );
        for p in self.configured.iter().chain(&self.sweep) {
            t.push([
                p.resonator as f64,
                p.chi_over_kappa,
                p.simulated,
                p.large_chi,
                p.exact,
            ]);
        }
        r.tables.push(t);
        let mut pairs = Table::new("pairs", &["resonator", "m", "n", "distinguishability"]);
        for p in &self.pairs {
            pairs.push([
                p.resonator.to_string(),
                format!("{:02b}", p.m),
                format!("{:02b}", p.n),
                p.distance.to_string(),
            ]);
        }
        r.tables.push(pairs);
        let mut bars = Plot::new(
            "pairs",
            "Steady-state distinguishability, pairs 00-01 00-10 00-11 01-10 01-11 10-11",
            "pair index",
            "|alpha_m - alpha_n|^2",
        );
        for i in 0..2 {
            let offset = if i == 0 { -0.2 } else { 0.2 };
            let pts: Vec<(f64, f64)> = self
                .pairs
                .iter()
                .filter(|p| p.resonator == i)
                .enumerate()
                .map(|(k, p)| (k as f64 + offset, p.distance))
                .collect();
            bars = bars.add(Series::new(&format!("R{i}"), pts, SeriesStyle::Bars));
        }
        r.plots.push(bars);
        let mut plot = Plot::new(
            "scan",
            "Distinguishability ratio D(00,01)/D(00,11)",
            "chi / kappa",
            "ratio",
        );
        for i in 0..2 {
            let pts: Vec<(f64, f64)> = self
                .sweep
                .iter()
                .filter(|p| p.resonator == i)
                .map(|p| (p.chi_over_kappa, p.simulated))
                .collect();
            plot = plot.add(Series::new(
                &format!("R{i} fields"),
                pts,
                SeriesStyle::Markers,
            ));
        }
        let approx: Vec<(f64, f64)> = self
            .sweep
            .iter()
            .filter(|p| p.resonator == 0)
            .map(|p| (p.chi_over_kappa, p.large_chi))
            .collect();
        r.plots
            .push(plot.add(Series::new("4 (chi/kappa)^2", approx, SeriesStyle::Line)));
        r
    }
}
