//! Weighted least-squares fit of A·e^{−t/T} + C.
//!
//! For fixed T the model is linear in (A, C), so the residual is minimized in
//! closed form and only log T is searched: a deterministic grid scan picks the
//! best bracket and golden-section search refines it.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};

const GRID: usize = 241;
const GOLDEN_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpFit {
    pub a: f64,
    pub t: f64,
    pub c: f64,
    /// Covariance of (A, T, C) from (JᵀWJ)⁻¹.
    pub covariance: [[f64; 3]; 3],
    pub chi2: f64,
    pub dof: usize,
    /// False when the amplitude is indistinguishable from zero, in which case
    /// T carries no information.
    pub identifiable: bool,
}

impl ExpFit {
    pub fn t_error(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    pub fn a_error(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.a * (-t / self.t).exp() + self.c
    }
}

/// Best (A, C) and χ² for a fixed time constant.
fn linear_solve(times: &[f64], values: &[f64], weights: &[f64], tau: f64) -> (f64, f64, f64) {
    let (mut s_ee, mut s_e, mut s_1, mut s_ey, mut s_y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&t, &y), &w) in times.iter().zip(values).zip(weights) {
        let e = (-t / tau).exp();
        s_ee += w * e * e;
        s_e += w * e;
        s_1 += w;
        s_ey += w * e * y;
        s_y += w * y;
    }
    let det = s_ee * s_1 - s_e * s_e;
    let (a, c) = if det.abs() > 1e-300 * s_ee.max(1.0) * s_1.max(1.0) && det > 0.0 {
        (
            (s_1 * s_ey - s_e * s_y) / det,
            (s_ee * s_y - s_e * s_ey) / det,
        )
    } else {
        (0.0, s_y / s_1)
    };
    let chi2 = times
        .iter()
        .zip(values)
        .zip(weights)
        .map(|((&t, &y), &w)| w * (y - a * (-t / tau).exp() - c).powi(2))
        .sum();
    (a, c, chi2)
}

pub fn fit_exponential(times: &[f64], values: &[f64], errors: &[f64]) -> Result<ExpFit> {
    let n = times.len();
    if n < 5 || values.len() != n || errors.len() != n {
        return Err(Error::Input(format!(
            "fit_exponential needs at least 5 points with matching lengths (got {n}, {}, {})",
            values.len(),
            errors.len()
        )));
    }
    if errors.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Input(
            "fit_exponential needs strictly positive errors".into(),
        ));
    }
    if times.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::Input("fit_exponential got non-finite data".into()));
    }
    let weights: Vec<f64> = errors.iter().map(|e| 1.0 / (e * e)).collect();
    let t_min = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_max = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = t_max - t_min;
    if !(span > 0.0) {
        return Err(Error::Input("fit_exponential needs distinct times".into()));
    }
    let (lo, hi) = ((span * 1e-3).ln(), (span * 1e4).ln());
    let objective = |x: f64| linear_solve(times, values, &weights, x.exp()).2;

    let grid: Vec<f64> = (0..GRID)
        .map(|k| lo + (hi - lo) * k as f64 / (GRID - 1) as f64)
        .collect();
    let scores: Vec<f64> = grid.iter().map(|&x| objective(x)).collect();
    let best = scores
        .iter()
        .enumerate()
        .fold(0, |b, (k, &s)| if s < scores[b] { k } else { b });

    let (mut a_x, mut b_x) = (grid[best.saturating_sub(1)], grid[(best + 1).min(GRID - 1)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c_x = b_x - phi * (b_x - a_x);
    let mut d_x = a_x + phi * (b_x - a_x);
    let (mut fc, mut fd) = (objective(c_x), objective(d_x));
    for _ in 0..GOLDEN_ITERS {
        if (b_x - a_x).abs() < 1e-15 * (1.0 + a_x.abs()) {
            break;
        }
        if fc < fd {
            b_x = d_x;
            d_x = c_x;
            fd = fc;
            c_x = b_x - phi * (b_x - a_x);
            fc = objective(c_x);
        } else {
            a_x = c_x;
            c_x = d_x;
            fc = fd;
            d_x = a_x + phi * (b_x - a_x);
            fd = objective(d_x);
        }
    }
    let x_best = 0.5 * (a_x + b_x);
    let tau = x_best.exp();
    let (a, c, chi2) = linear_solve(times, values, &weights, tau);

    let scale = values
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let flat = a.abs() <= 1e-9 * scale;

    let mut jtj = Matrix3::<f64>::zeros();
    for ((&t, &w), _) in times.iter().zip(&weights).zip(values) {
        let e = (-t / tau).exp();
        let j = Vector3::new(e, a * t / (tau * tau) * e, 1.0);
        jtj += w * j * j.transpose();
    }
    let inv = jtj.try_inverse();
    let covariance = match (&inv, flat) {
        (Some(m), false) => std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
        _ => [[f64::NAN; 3]; 3],
    };
    let a_err = covariance[0][0].sqrt();
    let identifiable = !flat && a_err.is_finite() && a.abs() > 2.0 * a_err;

    let at_bound =
        best == 0 || best == GRID - 1 || (x_best - lo).abs() < 1e-6 || (hi - x_best).abs() < 1e-6;
    if identifiable && at_bound {
        return Err(Error::Fit {
            best_residual: chi2,
            reason: format!("time constant ran into the search bound ({tau:.4e})"),
        });
    }
    if !chi2.is_finite() {
        return Err(Error::Fit {
            best_residual: chi2,
            reason: "non-finite residual".into(),
        });
    }
    Ok(ExpFit {
        a,
        t: tau,
        c,
        covariance,
        chi2,
        dof: n.saturating_sub(3),
        identifiable,
    })
}
