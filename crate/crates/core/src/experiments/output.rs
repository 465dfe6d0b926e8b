//! Experiment results and their on-disk artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::controller::ControllerEvent;
use crate::error::Result;
use crate::model::DeviceParams;
use crate::trajectory::EngineKind;

/// Column-labelled numeric table, written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I, T>(&mut self, row: I)
    where
        I: IntoIterator<Item = T>,
        T: ToString,
    {
        let row: Vec<String> = row.into_iter().map(|v| v.to_string()).collect();
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(
            &self
                .columns
                .iter()
                .map(|c| csv_field(c))
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push('\n');
        for row in &self.rows {
            out.push_str(
                &row.iter()
                    .map(|c| csv_field(c))
                    .collect::<Vec<_>>()
                    .join(","),
            );
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesStyle {
    Line,
    Markers,
    Steps,
    /// Vertical bars from zero, 0.35 x-units wide, centred on each x.
    Bars,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub errors: Option<Vec<f64>>,
    pub style: SeriesStyle,
}

impl Series {
    pub fn new(name: &str, points: Vec<(f64, f64)>, style: SeriesStyle) -> Self {
        Self {
            name: name.into(),
            points,
            errors: None,
            style,
        }
    }

    pub fn with_errors(mut self, errors: Vec<f64>) -> Self {
        self.errors = Some(errors);
        self
    }
}

/// A simple x-y chart rendered to standalone SVG.
#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const BAR_HALF_WIDTH: f64 = 0.175;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= target as f64)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = start;
    while t <= hi + 1e-9 * span {
        ticks.push(if t.abs() < 1e-12 * span { 0.0 } else { t });
        t += step;
    }
    ticks
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl Plot {
    pub fn new(name: &str, title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            name: name.into(),
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
        }
    }

    pub fn add(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }

    pub fn to_svg(&self) -> String {
        let (w, h) = (640.0, 420.0);
        let (left, right, top, bottom) = (70.0, 160.0, 40.0, 55.0);
        let pw = w - left - right;
        let ph = h - top - bottom;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            if s.style == SeriesStyle::Bars {
                ys.push(0.0);
            }
            for (k, &(x, y)) in s.points.iter().enumerate() {
                if x.is_finite() && y.is_finite() {
                    if s.style == SeriesStyle::Bars {
                        xs.push(x - BAR_HALF_WIDTH);
                        xs.push(x + BAR_HALF_WIDTH);
                    }
                    xs.push(x);
                    let e = s
                        .errors
                        .as_ref()
                        .map_or(0.0, |e| e.get(k).copied().unwrap_or(0.0));
                    let e = if e.is_finite() { e } else { 0.0 };
                    ys.push(y - e);
                    ys.push(y + e);
                }
            }
        }
        let fold = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        let (x0, x1) = fold(&xs);
        let (y0, y1) = fold(&ys);
        let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            left + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
        );
        for t in nice_ticks(x0, x1, 6) {
            let x = sx(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/>"##,
                top + ph,
                top + ph + 5.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                top + ph + 18.0,
                fmt_tick(t)
            );
        }
        for t in nice_ticks(y0, y1, 6) {
            let y = sy(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="#333"/>"##,
                left - 5.0
            );
            let _ = writeln!(
                svg,
                r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##,
                left + pw
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                left - 8.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            left + pw / 2.0,
            h - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            top + ph / 2.0,
            top + ph / 2.0,
            escape(&self.y_label)
        );
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<(f64, f64)> = s
                .points
                .iter()
                .copied()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect();
            match s.style {
                SeriesStyle::Line | SeriesStyle::Steps => {
                    let mut d = String::new();
                    for (i, &(x, y)) in pts.iter().enumerate() {
                        if i == 0 {
                            let _ = write!(d, "M{:.2},{:.2}", sx(x), sy(y));
                        } else if s.style == SeriesStyle::Steps {
                            let _ = write!(d, " H{:.2} V{:.2}", sx(x), sy(y));
                        } else {
                            let _ = write!(d, " L{:.2},{:.2}", sx(x), sy(y));
                        }
                    }
                    let _ = writeln!(
                        svg,
                        r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.6"/>"#
                    );
                }
                SeriesStyle::Bars => {
                    for &(x, y) in &pts {
                        let (ya, yb) = (sy(y.max(0.0)), sy(y.min(0.0)));
                        let _ = writeln!(
                            svg,
                            r#"<rect x="{:.2}" y="{ya:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                            sx(x - BAR_HALF_WIDTH),
                            sx(x + BAR_HALF_WIDTH) - sx(x - BAR_HALF_WIDTH),
                            yb - ya
                        );
                    }
                }
                SeriesStyle::Markers => {
                    for &(x, y) in &pts {
                        let _ = writeln!(
                            svg,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                            sx(x),
                            sy(y)
                        );
                    }
                }
            }
            if let Some(errs) = &s.errors {
                for (&(x, y), &e) in s.points.iter().zip(errs) {
                    if x.is_finite() && y.is_finite() && e.is_finite() && e > 0.0 {
                        let _ = writeln!(
                            svg,
                            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}"/>"#,
                            sx(x),
                            sy(y - e),
                            sx(x),
                            sy(y + e)
                        );
                    }
                }
            }
            let ly = top + 14.0 + 18.0 * k as f64;
            let lx = left + pw + 12.0;
            let _ = writeln!(
                svg,
                r#"<rect x="{lx}" y="{:.2}" width="12" height="12" fill="{color}"/>"#,
                ly - 10.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{ly:.2}">{}</text>"#,
                lx + 18.0,
                escape(&s.name)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Per-trajectory controller events as a table, one row per event.
pub fn event_log_table(name: &str, logs: &[Vec<ControllerEvent>]) -> Table {
    let mut t = Table::new(name, &["trajectory", "time_ns", "kind", "qubit"]);
    for (i, log) in logs.iter().enumerate() {
        for e in log {
            t.push([
                i.to_string(),
                e.time_ns.to_string(),
                e.kind.name().to_string(),
                e.kind.qubit().to_string(),
            ]);
        }
    }
    t
}

/// Everything an experiment reports. The JSON summary is the serialized form;
/// tables and plots go to separate files.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub seed: u64,
    pub engine: EngineKind,
    pub trajectories: usize,
    pub config_hash: String,
    pub config: DeviceParams,
    pub metrics: Map<String, Value>,
    pub flags: Vec<String>,
    #[serde(skip)]
    pub tables: Vec<Table>,
    #[serde(skip)]
    pub plots: Vec<Plot>,
}

impl ExperimentResult {
    pub fn new(
        experiment: &str,
        params: &DeviceParams,
        seed: u64,
        engine: EngineKind,
        trajectories: usize,
    ) -> Self {
        Self {
            experiment: experiment.into(),
            seed,
            engine,
            trajectories,
            config_hash: params.content_hash(),
            config: params.clone(),
            metrics: Map::new(),
            flags: Vec::new(),
            tables: Vec::new(),
            plots: Vec::new(),
        }
    }

    pub fn metric<T: Serialize>(&mut self, key: &str, value: T) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.metrics.insert(key.into(), v);
    }

    pub fn flag(&mut self, text: impl Into<String>) {
        self.flags.push(text.into());
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serializes");
        s.push('\n');
        s
    }

    /// Write `summary.json`, one CSV per table and one SVG per plot into
    /// `dir`. Plot failures are reported in the returned warnings instead of
    /// failing the call.
    pub fn write_artifacts(&self, dir: &Path) -> Result<(Vec<PathBuf>, Vec<String>)> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut warnings = Vec::new();
        let summary = dir.join("summary.json");
        std::fs::write(&summary, self.summary_json())?;
        written.push(summary);
        for t in &self.tables {
            let path = dir.join(format!("{}.csv", t.name));
            std::fs::write(&path, t.to_csv())?;
            written.push(path);
        }
        for p in &self.plots {
            let path = dir.join(format!("{}.svg", p.name));
            match std::fs::write(&path, p.to_svg()) {
                Ok(()) => written.push(path),
                Err(e) => warnings.push(format!("plot {}: {e}", p.name)),
            }
        }
        Ok((written, warnings))
    }
}
