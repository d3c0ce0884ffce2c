//! Piecewise-constant phase controls and their conditioning pipeline:
//! zero-order-hold resampling with a sinc low-pass, cubic-spline smoothing,
//! and CSV export for an arbitrary-waveform generator.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const CSV_HEADER: &str = "t_seconds,phi_r_rad,phi_b_rad";

/// Phases `φ_r(t)`, `φ_b(t)` held constant over `N_seg` equal segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseWaveform {
    phi_r: Vec<f64>,
    phi_b: Vec<f64>,
    total_duration: f64,
    rabi_rate: f64,
}

impl PhaseWaveform {
    pub fn new(phi_r: Vec<f64>, phi_b: Vec<f64>, total_duration: f64, rabi_rate: f64) -> Result<Self> {
        if phi_r.is_empty() || phi_r.len() != phi_b.len() {
            return Err(invalid(format!(
                "phase vectors must be non-empty and equal length, got {} and {}",
                phi_r.len(),
                phi_b.len()
            )));
        }
        if !(total_duration.is_finite() && total_duration > 0.0) {
            return Err(invalid(format!("duration must be positive, got {total_duration}")));
        }
        if !rabi_rate.is_finite() {
            return Err(invalid("Rabi rate must be finite"));
        }
        if phi_r.iter().chain(&phi_b).any(|p| !p.is_finite()) {
            return Err(invalid("phases must be finite"));
        }
        Ok(PhaseWaveform { phi_r, phi_b, total_duration, rabi_rate })
    }

    pub fn constant(phi_r: f64, phi_b: f64, n_seg: usize, total_duration: f64, rabi_rate: f64) -> Result<Self> {
        Self::new(vec![phi_r; n_seg], vec![phi_b; n_seg], total_duration, rabi_rate)
    }

    pub fn n_seg(&self) -> usize {
        self.phi_r.len()
    }

    pub fn phi_r(&self) -> &[f64] {
        &self.phi_r
    }

    pub fn phi_b(&self) -> &[f64] {
        &self.phi_b
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    /// `δt = T / N_seg`.
    pub fn segment_duration(&self) -> f64 {
        self.total_duration / self.n_seg() as f64
    }

    pub fn rabi_rate(&self) -> f64 {
        self.rabi_rate
    }

    /// Segment index holding time `t`; the final instant belongs to the last segment.
    pub fn segment_at(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.total_duration).contains(&t) {
            return Err(invalid(format!("t = {t} outside [0, {}]", self.total_duration)));
        }
        Ok(((t / self.segment_duration()) as usize).min(self.n_seg() - 1))
    }

    /// Same waveform with a different duration.
    pub fn with_duration(&self, total_duration: f64) -> Result<Self> {
        Self::new(self.phi_r.clone(), self.phi_b.clone(), total_duration, self.rabi_rate)
    }

    /// Waveform that undoes this one: segments in reverse order with both
    /// phases advanced by π, which flips the sign of every segment Hamiltonian.
    pub fn inverse(&self) -> Self {
        let flip = |v: &[f64]| v.iter().rev().map(|p| (p + PI).rem_euclid(TAU)).collect();
        PhaseWaveform {
            phi_r: flip(&self.phi_r),
            phi_b: flip(&self.phi_b),
            total_duration: self.total_duration,
            rabi_rate: self.rabi_rate,
        }
    }
}

/// Sinc low-pass and resampling from `n_opt` coarse to `n_seg` fine segments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    /// `f_c × T`.
    pub cutoff_product: f64,
    pub n_opt: usize,
    pub n_seg: usize,
    pub kernel_halfwidth: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec { cutoff_product: TAU * 1e4, n_opt: 30, n_seg: 240, kernel_halfwidth: 32 }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_opt == 0 || self.n_seg == 0 {
            return Err(invalid("segment counts must be positive"));
        }
        if !self.n_seg.is_multiple_of(self.n_opt) {
            return Err(invalid(format!(
                "n_seg = {} is not a multiple of n_opt = {}",
                self.n_seg, self.n_opt
            )));
        }
        if !(self.cutoff_product.is_finite() && self.cutoff_product > 0.0) {
            return Err(invalid("cutoff product must be positive"));
        }
        Ok(())
    }

    /// Symmetric kernel taps `h[m]`, `m = −K..=K`, normalized to unit DC gain.
    pub fn kernel(&self) -> Vec<f64> {
        // cutoff in cycles per fine sample
        let fc = self.cutoff_product / self.n_seg as f64;
        let k = self.kernel_halfwidth as isize;
        let mut h: Vec<f64> = (-k..=k).map(|m| sinc(2.0 * fc * m as f64)).collect();
        let sum: f64 = h.iter().sum();
        h.iter_mut().for_each(|x| *x /= sum);
        h
    }

    /// Linear map (`n_seg × n_opt`) taking coarse phases to filtered fine phases.
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        self.validate()?;
        let up = self.n_seg / self.n_opt;
        let h = self.kernel();
        let k = self.kernel_halfwidth as isize;
        let n = self.n_seg as isize;
        let mut m = DMatrix::zeros(self.n_seg, self.n_opt);
        for i in 0..n {
            for (tap, w) in h.iter().enumerate() {
                let j = reflect(i - (tap as isize - k), n);
                m[(i as usize, j / up)] += w;
            }
        }
        Ok(m)
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Half-sample symmetric reflection of an index into `0..n`.
fn reflect(mut i: isize, n: isize) -> usize {
    let period = 2 * n;
    i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

/// Filters a coarse waveform and resamples it onto the fine grid.
pub fn filter_resample(coarse: &PhaseWaveform, spec: &FilterSpec) -> Result<PhaseWaveform> {
    if coarse.n_seg() != spec.n_opt {
        return Err(invalid(format!(
            "coarse waveform has {} segments, filter expects {}",
            coarse.n_seg(),
            spec.n_opt
        )));
    }
    let m = spec.matrix()?;
    apply_filter(&m, coarse)
}

/// Applies a precomputed filter matrix from [`FilterSpec::matrix`].
pub fn apply_filter(m: &DMatrix<f64>, coarse: &PhaseWaveform) -> Result<PhaseWaveform> {
    if m.ncols() != coarse.n_seg() {
        return Err(Error::Dimension("filter matrix does not match the coarse waveform".into()));
    }
    let run = |v: &[f64]| (m * DVector::from_column_slice(v)).as_slice().to_vec();
    PhaseWaveform::new(
        run(&coarse.phi_r),
        run(&coarse.phi_b),
        coarse.total_duration,
        coarse.rabi_rate,
    )
}

/// Natural cubic spline through the segment midpoints of a fine waveform,
/// extended linearly over the two edge half-segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineWaveform {
    knot_times: Vec<f64>,
    /// Per interval `[a, b, c, d]` for `a + b·u + c·u² + d·u³`, `u = t − t_i`.
    phi_r_coeffs: Vec<[f64; 4]>,
    phi_b_coeffs: Vec<[f64; 4]>,
    total_duration: f64,
}

pub fn spline_interpolate(fine: &PhaseWaveform) -> Result<SplineWaveform> {
    let n = fine.n_seg();
    if n < 4 {
        return Err(invalid(format!("spline needs at least 4 segments, got {n}")));
    }
    let dt = fine.segment_duration();
    let knot_times: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * dt).collect();
    Ok(SplineWaveform {
        phi_r_coeffs: natural_cubic(&knot_times, &fine.phi_r),
        phi_b_coeffs: natural_cubic(&knot_times, &fine.phi_b),
        knot_times,
        total_duration: fine.total_duration,
    })
}

/// Natural cubic spline coefficients by the tridiagonal (Thomas) solve.
fn natural_cubic(x: &[f64], y: &[f64]) -> Vec<[f64; 4]> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    // second derivatives m[0..n], m[0] = m[n−1] = 0
    let mut m = vec![0.0; n];
    let inner = n - 2;
    let mut diag = vec![0.0; inner];
    let mut rhs = vec![0.0; inner];
    for k in 0..inner {
        let i = k + 1;
        diag[k] = 2.0 * (h[i - 1] + h[i]);
        rhs[k] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
    }
    for k in 1..inner {
        let w = h[k] / diag[k - 1];
        diag[k] -= w * h[k];
        rhs[k] -= w * rhs[k - 1];
    }
    for k in (0..inner).rev() {
        let upper = if k + 1 < inner { h[k + 1] * m[k + 2] } else { 0.0 };
        m[k + 1] = (rhs[k] - upper) / diag[k];
    }
    (0..n - 1)
        .map(|i| {
            let b = (y[i + 1] - y[i]) / h[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0;
            [y[i], b, m[i] / 2.0, (m[i + 1] - m[i]) / (6.0 * h[i])]
        })
        .collect()
}

impl SplineWaveform {
    pub fn knot_times(&self) -> &[f64] {
        &self.knot_times
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if !(0.0..=self.total_duration).contains(&t) {
            return Err(invalid(format!("t = {t} outside [0, {}]", self.total_duration)));
        }
        let last = self.knot_times.len() - 2;
        let i = self.knot_times.partition_point(|&k| k <= t).saturating_sub(1).min(last);
        Ok((i, t - self.knot_times[i]))
    }

    fn eval_with(&self, coeffs: &[[f64; 4]], t: f64, order: usize) -> Result<f64> {
        let (i, u) = self.locate(t)?;
        let first = self.knot_times[0];
        let end = *self.knot_times.last().unwrap();
        if t < first || t > end {
            // linear extension from the nearest end knot
            let (t0, val, slope) = if t < first {
                (first, coeffs[0][0], coeffs[0][1])
            } else {
                let [a, b, c, d] = coeffs[coeffs.len() - 1];
                let h = end - self.knot_times[coeffs.len() - 1];
                (end, a + h * (b + h * (c + h * d)), b + h * (2.0 * c + 3.0 * d * h))
            };
            return Ok(match order {
                0 => val + slope * (t - t0),
                1 => slope,
                _ => 0.0,
            });
        }
        let [a, b, c, d] = coeffs[i];
        Ok(match order {
            0 => a + u * (b + u * (c + u * d)),
            1 => b + u * (2.0 * c + 3.0 * d * u),
            _ => 2.0 * c + 6.0 * d * u,
        })
    }

    /// `(φ_r(t), φ_b(t))`; times outside `[0, T]` are rejected.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        Ok((self.eval_with(&self.phi_r_coeffs, t, 0)?, self.eval_with(&self.phi_b_coeffs, t, 0)?))
    }

    pub fn derivative(&self, t: f64) -> Result<(f64, f64)> {
        Ok((self.eval_with(&self.phi_r_coeffs, t, 1)?, self.eval_with(&self.phi_b_coeffs, t, 1)?))
    }

    pub fn second_derivative(&self, t: f64) -> Result<(f64, f64)> {
        Ok((self.eval_with(&self.phi_r_coeffs, t, 2)?, self.eval_with(&self.phi_b_coeffs, t, 2)?))
    }
}

/// A phase signal that can be sampled on `[0, T]`.
pub trait PhaseSignal {
    fn duration(&self) -> f64;
    fn sample(&self, t: f64) -> Result<(f64, f64)>;
}

impl PhaseSignal for PhaseWaveform {
    fn duration(&self) -> f64 {
        self.total_duration
    }

    fn sample(&self, t: f64) -> Result<(f64, f64)> {
        let k = self.segment_at(t)?;
        Ok((self.phi_r[k], self.phi_b[k]))
    }
}

impl PhaseSignal for SplineWaveform {
    fn duration(&self) -> f64 {
        self.total_duration
    }

    fn sample(&self, t: f64) -> Result<(f64, f64)> {
        self.eval(t)
    }
}

/// Renders the CSV text: rows at `t_i = i / sample_rate` for `i < round(T · sample_rate)`.
pub fn render_csv(w: &dyn PhaseSignal, sample_rate: f64) -> Result<String> {
    let n_rows = (w.duration() * sample_rate).round();
    if !(sample_rate.is_finite() && sample_rate > 0.0) || n_rows < 2.0 {
        return Err(invalid(format!(
            "need sample_rate·T ≥ 2, got {}",
            w.duration() * sample_rate
        )));
    }
    let mut out = String::with_capacity(48 * n_rows as usize);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for i in 0..n_rows as usize {
        let t = i as f64 / sample_rate;
        let (r, b) = w.sample(t.min(w.duration()))?;
        writeln!(out, "{},{},{}", fixed(t), fixed(r), fixed(b)).unwrap();
    }
    Ok(out)
}

fn fixed(x: f64) -> String {
    // avoid "-0.000000000000"
    let x = if x == 0.0 { 0.0 } else { x };
    let s = format!("{x:.12}");
    if s.starts_with('-') && s[1..].bytes().all(|c| c == b'0' || c == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn export_waveform(w: &dyn PhaseSignal, sample_rate: f64, path: &Path) -> Result<()> {
    let text = render_csv(w, sample_rate)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads an exported piecewise-constant waveform back into `n_seg` segments,
/// taking the first sample of each segment. The sample rate is inferred from
/// the time column.
pub fn import_waveform(path: &Path, n_seg: usize, rabi_rate: f64) -> Result<PhaseWaveform> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, n_seg, rabi_rate)
}

pub fn parse_csv(text: &str, n_seg: usize, rabi_rate: f64) -> Result<PhaseWaveform> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse(format!("expected header `{CSV_HEADER}`")));
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("row {}: {e}", ln + 2)))?;
        if cols.len() != 3 {
            return Err(Error::Parse(format!("row {} has {} columns", ln + 2, cols.len())));
        }
        rows.push([cols[0], cols[1], cols[2]]);
    }
    if rows.len() < 2 {
        return Err(Error::Parse("need at least two samples".into()));
    }
    let fs = 1.0 / (rows[1][0] - rows[0][0]);
    let total = rows.len() as f64 / fs;
    if n_seg == 0 || n_seg > rows.len() {
        return Err(invalid(format!("cannot split {} samples into {n_seg} segments", rows.len())));
    }
    let dt = total / n_seg as f64;
    let mut phi_r = vec![f64::NAN; n_seg];
    let mut phi_b = vec![f64::NAN; n_seg];
    for (i, row) in rows.iter().enumerate() {
        let k = ((i as f64 / fs / dt) as usize).min(n_seg - 1);
        if phi_r[k].is_nan() {
            phi_r[k] = row[1];
            phi_b[k] = row[2];
        }
    }
    if phi_r.iter().any(|p| p.is_nan()) {
        return Err(Error::Parse("some segment has no samples".into()));
    }
    PhaseWaveform::new(phi_r, phi_b, total, rabi_rate)
}
