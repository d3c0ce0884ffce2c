//! Two-ridge fit of a Re–Re grid:
//!
//! ```text
//! Re χ(x, y) = c₁ exp(−[(x − y)² e^{−2r₁} + (x + y)² e^{2r₁}]/4)
//!            + c₂ exp(−[(x + y)² e^{−2r₂} + (x − y)² e^{2r₂}]/4)
//! ```
//!
//! The first term is the χ of `TMSV(r₁, 0)` in this crate's frame (wide along
//! `x = −y`), the second that of `TMSV(r₂, π)`. `c₁ + c₂ ≤ 1` is enforced by
//! `c₁ = σ(t)σ(s)`, `c₂ = σ(t)(1 − σ(s))`, and `r_j = e^{q_j}`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::tomography::{ChiGrid, QuadraturePlane};

use super::gaussian::weights;
use super::solvers::{levenberg_marquardt, LmOptions};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoGaussianFit {
    pub c_1: f64,
    pub c_2: f64,
    pub r_1: f64,
    pub r_2: f64,
    pub residual_rms: f64,
}

impl TwoGaussianFit {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        superposition_model(self.c_1, self.c_2, self.r_1, self.r_2, x, y)
    }
}

pub fn superposition_model(c_1: f64, c_2: f64, r_1: f64, r_2: f64, x: f64, y: f64) -> f64 {
    let (m, p) = ((x - y).powi(2), (x + y).powi(2));
    let g = |r: f64, narrow_axis: f64, wide_axis: f64| (-(wide_axis * (-2.0 * r).exp() + narrow_axis * (2.0 * r).exp()) / 4.0).exp();
    c_1 * g(r_1, p, m) + c_2 * g(r_2, m, p)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

fn unpack(p: &[f64]) -> (f64, f64, f64, f64) {
    let (t, s) = (sigmoid(p[0]), sigmoid(p[1]));
    (t * s, t * (1.0 - s), p[2].exp(), p[3].exp())
}

/// Minimum χ-variance excess along the wider diagonal for a ridge to count.
const RIDGE_MOMENT: f64 = 1.1;
/// Both fitted squeezing parameters below this: the two terms coincide.
const AMBIGUOUS_R: f64 = 0.05;

/// Second moments of the positive part of the grid along `x = −y` and `x = y`.
fn ridge_moments(grid: &ChiGrid) -> (f64, f64) {
    let (mut mass_m, mut mom_m, mut mass_p, mut mom_p) = (0.0, 0.0, 0.0, 0.0);
    for (x, y, s) in grid.values() {
        let v = s.value.max(0.0);
        if (x + y).abs() < 1e-9 {
            mass_m += v;
            mom_m += v * (x - y).powi(2) / 2.0;
        }
        if (x - y).abs() < 1e-9 {
            mass_p += v;
            mom_p += v * (x + y).powi(2) / 2.0;
        }
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    (ratio(mom_m, mass_m), ratio(mom_p, mass_p))
}

/// Weighted least-squares fit with multi-start initialization from the ridge
/// second moments. Starts run in parallel; the lowest cost wins, ties to the
/// lowest start index.
pub fn fit_superposition(grid: &ChiGrid) -> Result<TwoGaussianFit> {
    fit_superposition_with(grid, Execution::default())
}

pub fn fit_superposition_with(grid: &ChiGrid, exec: Execution) -> Result<TwoGaussianFit> {
    if grid.plane != QuadraturePlane::ReRe {
        return Err(invalid("superposition fit needs a re_re grid"));
    }
    let pts: Vec<(f64, f64, f64)> = grid.values().map(|(x, y, s)| (x, y, s.value)).collect();
    if pts.len() < 9 {
        return Err(Error::Degenerate(format!("need at least 9 grid points, got {}", pts.len())));
    }
    let (v_minus, v_plus) = ridge_moments(grid);
    if v_minus.max(v_plus) < RIDGE_MOMENT {
        return Err(Error::Degenerate(format!(
            "missing ridge: diagonal second moments {v_minus:.3} and {v_plus:.3} show no elongated correlation"
        )));
    }
    let w = weights(grid.samples.iter().map(|s| s.stderr));
    let resid = |p: &[f64]| -> Vec<f64> {
        let (c1, c2, r1, r2) = unpack(p);
        pts.iter().zip(&w).map(|((x, y, v), wi)| wi * (superposition_model(c1, c2, r1, r2, *x, *y) - v)).collect()
    };

    // a moment of V along a diagonal suggests r ≈ ½ ln V
    let r_guess = |v: f64| (0.5 * v.max(1.05).ln()).max(0.05);
    let (r1, r2) = (r_guess(v_minus), r_guess(v_plus));
    let peak = pts.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max).clamp(0.05, 0.999);
    let mut starts = Vec::new();
    for split in [0.5, 0.3, 0.7, 0.9, 0.1] {
        for scale in [1.0, 0.6, 1.5] {
            starts.push([logit(peak), logit(split), (r1 * scale).ln(), (r2 * scale).ln()]);
        }
    }
    let fits = map_indexed(starts.len(), exec, |k| levenberg_marquardt(&resid, &starts[k], LmOptions::default()));
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut last_err = None;
    for f in fits {
        match f {
            Ok(f) if f.cost.is_finite() => {
                if best.as_ref().is_none_or(|b| f.cost < b.0) {
                    best = Some((f.cost, f.params));
                }
            }
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    let Some((_, p)) = best else {
        return Err(last_err.unwrap_or_else(|| Error::NonConvergence("no start converged".into())));
    };
    let (c_1, c_2, r_1, r_2) = unpack(&p);
    if r_1 < AMBIGUOUS_R && r_2 < AMBIGUOUS_R {
        return Err(Error::Degenerate("ridges are indistinguishable: both fitted squeezing parameters vanish".into()));
    }
    let raw: f64 = pts.iter().map(|(x, y, v)| (superposition_model(c_1, c_2, r_1, r_2, *x, *y) - v).powi(2)).sum();
    Ok(TwoGaussianFit { c_1, c_2, r_1, r_2, residual_rms: (raw / pts.len() as f64).sqrt() })
}

/// Noiseless grid of the model, for round-trip checks and fixtures.
pub fn synthetic_superposition_grid(c_1: f64, c_2: f64, r_1: f64, r_2: f64, extent: f64, step: f64) -> ChiGrid {
    use crate::tomography::{ChiSample, GridSpec};
    let spec = GridSpec { plane: QuadraturePlane::ReRe, extent, step };
    let axis = spec.axis();
    let mut samples = Vec::with_capacity(axis.len() * axis.len());
    for &x in &axis {
        for &y in &axis {
            samples.push(ChiSample::exact(QuadraturePlane::ReRe.setting(x, y), superposition_model(c_1, c_2, r_1, r_2, x, y)));
        }
    }
    ChiGrid { plane: QuadraturePlane::ReRe, axis1: axis.clone(), axis2: axis, samples }
}
