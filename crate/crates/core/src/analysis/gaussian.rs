use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tomography::{ChiGrid, ChiSample};

use super::solvers::{levenberg_marquardt, LmOptions};

/// One point of a 1D profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub x: f64,
    pub value: f64,
    /// Zero for exact values.
    pub stderr: f64,
}

/// `A·exp(−x²/(2V))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit1D {
    pub amplitude: f64,
    pub variance: f64,
    pub residual_rms: f64,
}

impl GaussianFit1D {
    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * (-x * x / (2.0 * self.variance)).exp()
    }
}

/// `A·exp(−u²/(2V₋) − w²/(2V₊))` with `u = (x − y)/√2`, `w = (x + y)/√2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit2D {
    pub amplitude: f64,
    pub variance_minus: f64,
    pub variance_plus: f64,
    pub residual_rms: f64,
}

impl GaussianFit2D {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let u = (x - y) * std::f64::consts::FRAC_1_SQRT_2;
        let w = (x + y) * std::f64::consts::FRAC_1_SQRT_2;
        self.amplitude * (-u * u / (2.0 * self.variance_minus) - w * w / (2.0 * self.variance_plus)).exp()
    }
}

/// `1/stderr` for every point when all carry shot noise, else uniform.
pub(crate) fn weights(stderrs: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    if stderrs.clone().all(|s| s > 0.0) {
        stderrs.map(|s| 1.0 / s).collect()
    } else {
        stderrs.map(|_| 1.0).collect()
    }
}

const MAX_AMPLITUDE: f64 = 1.05;

fn check_amplitude(a: f64) -> Result<()> {
    if a > 0.0 && a <= MAX_AMPLITUDE {
        Ok(())
    } else {
        Err(Error::Degenerate(format!("fitted amplitude {a:.4} outside (0, {MAX_AMPLITUDE}]")))
    }
}

fn check_spread(values: &[f64]) -> Result<()> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    if !(hi - lo > 1e-12) {
        return Err(Error::Degenerate("all samples are equal".into()));
    }
    Ok(())
}

/// Weighted least-squares fit of `A·exp(−x²/(2V))`, started from the second
/// moment of the samples.
pub fn fit_gaussian_1d(samples: &[ProfilePoint]) -> Result<GaussianFit1D> {
    if samples.len() < 5 {
        return Err(Error::Degenerate(format!("need at least 5 points, got {}", samples.len())));
    }
    let values: Vec<f64> = samples.iter().map(|s| s.value).collect();
    check_spread(&values)?;
    let w = weights(samples.iter().map(|s| s.stderr));
    let mass: f64 = samples.iter().map(|s| s.value.max(0.0)).sum();
    let moment: f64 = samples.iter().map(|s| s.value.max(0.0) * s.x * s.x).sum();
    let v0 = if mass > 0.0 && moment > 0.0 { moment / mass } else { 1.0 };
    let a0 = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(1e-3);

    let resid = |p: &[f64]| -> Vec<f64> {
        let v = p[1].exp();
        samples.iter().zip(&w).map(|(s, wi)| wi * (p[0] * (-s.x * s.x / (2.0 * v)).exp() - s.value)).collect()
    };
    let fit = levenberg_marquardt(&resid, &[a0, v0.ln()], LmOptions::default())?;
    let (amplitude, variance) = (fit.params[0], fit.params[1].exp());
    check_amplitude(amplitude)?;
    let raw: f64 = samples.iter().map(|s| (amplitude * (-s.x * s.x / (2.0 * variance)).exp() - s.value).powi(2)).sum();
    Ok(GaussianFit1D { amplitude, variance, residual_rms: (raw / samples.len() as f64).sqrt() })
}

/// Fits the diagonal-axis Gaussian to a grid.
pub fn fit_gaussian_2d(grid: &ChiGrid) -> Result<GaussianFit2D> {
    let pts: Vec<(f64, f64, ChiSample)> = grid.values().map(|(x, y, s)| (x, y, *s)).collect();
    if pts.len() < 9 {
        return Err(Error::Degenerate(format!("need at least 9 grid points, got {}", pts.len())));
    }
    let values: Vec<f64> = pts.iter().map(|p| p.2.value).collect();
    check_spread(&values)?;
    let w = weights(pts.iter().map(|p| p.2.stderr));
    let (mut mass, mut mu, mut mw) = (0.0, 0.0, 0.0);
    for (x, y, s) in &pts {
        let v = s.value.max(0.0);
        mass += v;
        mu += v * (x - y).powi(2) / 2.0;
        mw += v * (x + y).powi(2) / 2.0;
    }
    let guess = |m: f64| if mass > 0.0 && m > 0.0 { (m / mass).ln() } else { 0.0 };
    let a0 = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(1e-3);
    let resid = |p: &[f64]| -> Vec<f64> {
        let f = GaussianFit2D { amplitude: p[0], variance_minus: p[1].exp(), variance_plus: p[2].exp(), residual_rms: 0.0 };
        pts.iter().zip(&w).map(|((x, y, s), wi)| wi * (f.eval(*x, *y) - s.value)).collect()
    };
    let fit = levenberg_marquardt(&resid, &[a0, guess(mu), guess(mw)], LmOptions::default())?;
    let mut out = GaussianFit2D {
        amplitude: fit.params[0],
        variance_minus: fit.params[1].exp(),
        variance_plus: fit.params[2].exp(),
        residual_rms: 0.0,
    };
    check_amplitude(out.amplitude)?;
    let raw: f64 = pts.iter().map(|(x, y, s)| (out.eval(*x, *y) - s.value).powi(2)).sum();
    out.residual_rms = (raw / pts.len() as f64).sqrt();
    Ok(out)
}
