use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::linalg::{CMatrix, C64, I};

use super::{chi_with, mode_displacement, sample_bernoulli_counts, ChiSample, MeasurementSetting, QuantumState, RngSpec};

pub const CHI_GRID_HEADER: &str = "axis1,axis2,re_chi,stderr,shots";

/// Which parts of `β₁` and `β₂` the two grid axes vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadraturePlane {
    ReRe,
    ImIm,
    ReIm,
    ImRe,
}

impl QuadraturePlane {
    pub const ALL: [QuadraturePlane; 4] = [Self::ReRe, Self::ImIm, Self::ReIm, Self::ImRe];

    pub fn setting(self, x: f64, y: f64) -> MeasurementSetting {
        let (u1, u2) = self.units();
        MeasurementSetting { beta_1: u1 * x, beta_2: u2 * y }
    }

    fn units(self) -> (C64, C64) {
        let re = C64::new(1.0, 0.0);
        match self {
            Self::ReRe => (re, re),
            Self::ImIm => (I, I),
            Self::ReIm => (re, I),
            Self::ImRe => (I, re),
        }
    }

    pub fn labels(self) -> (&'static str, &'static str) {
        match self {
            Self::ReRe => ("re_beta_1", "re_beta_2"),
            Self::ImIm => ("im_beta_1", "im_beta_2"),
            Self::ReIm => ("re_beta_1", "im_beta_2"),
            Self::ImRe => ("im_beta_1", "re_beta_2"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ReRe => "re_re",
            Self::ImIm => "im_im",
            Self::ReIm => "re_im",
            Self::ImRe => "im_re",
        }
    }
}

/// Square grid `{k·step : |k| ≤ round(extent/step)}²` in one plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub plane: QuadraturePlane,
    pub extent: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.extent >= 0.0 && self.extent.is_finite()) {
            return Err(invalid("grid extent must be finite and non-negative"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(invalid("grid step must be positive"));
        }
        if self.half_width() > 10_000 {
            return Err(invalid("grid has too many points"));
        }
        Ok(())
    }

    fn half_width(&self) -> usize {
        (self.extent / self.step).round() as usize
    }

    pub fn axis(&self) -> Vec<f64> {
        let k = self.half_width() as i64;
        (-k..=k).map(|i| i as f64 * self.step).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub enum ScanMode {
    Exact,
    Sampled { shots: u64, rng: RngSpec },
}

/// `Re χ` on a grid, row-major with `axis1` the slow index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiGrid {
    pub plane: QuadraturePlane,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    pub samples: Vec<ChiSample>,
}

impl ChiGrid {
    pub fn get(&self, i: usize, j: usize) -> &ChiSample {
        &self.samples[i * self.axis2.len() + j]
    }

    pub fn values(&self) -> impl Iterator<Item = (f64, f64, &ChiSample)> {
        let n2 = self.axis2.len();
        self.samples.iter().enumerate().map(move |(k, s)| (self.axis1[k / n2], self.axis2[k % n2], s))
    }

    /// Index of `x` on an axis, if it is a grid point.
    pub fn position(axis: &[f64], x: f64) -> Option<usize> {
        axis.iter().position(|&a| (a - x).abs() < 1e-9)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CHI_GRID_HEADER);
        out.push('\n');
        for (x, y, s) in self.values() {
            let _ = writeln!(out, "{},{},{:.12e},{:.12e},{}", fmt_axis(x), fmt_axis(y), s.value, s.stderr, s.shots);
        }
        out
    }
}

fn fmt_axis(x: f64) -> String {
    let s = format!("{x:.6}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0.000000".into()
    } else {
        s
    }
}

/// Evaluates `Re χ` over the grid.
///
/// With `symmetry_fill` only points with `k₂ > 0`, or `k₂ = 0, k₁ ≥ 0`, are
/// computed; the rest are copied from `(−β₁, −β₂)` since `Re χ` is even.
/// Sampled points use stream `rng.child(point index)`.
pub fn scan_grid(state: &QuantumState, spec: &GridSpec, mode: ScanMode, symmetry_fill: bool, exec: Execution) -> Result<ChiGrid> {
    spec.validate()?;
    let dims = state.dims();
    let axis = spec.axis();
    let n = axis.len();
    let last = *axis.last().expect("non-empty axis");
    spec.plane.setting(last, last).check(dims)?;
    if let ScanMode::Sampled { shots: 0, .. } = mode {
        return Err(invalid("need at least one shot"));
    }

    let (u1, u2) = spec.plane.units();
    let d1: Vec<CMatrix> = map_indexed(n, exec, |i| mode_displacement(u1 * axis[i], dims.n_max_1()));
    let d2: Vec<CMatrix> = if u1 == u2 && dims.n_max_1() == dims.n_max_2() {
        d1.clone()
    } else {
        map_indexed(n, exec, |j| mode_displacement(u2 * axis[j], dims.n_max_2()))
    };

    let centre = n / 2;
    let computed = |i: usize, j: usize| !symmetry_fill || j > centre || (j == centre && i >= centre);
    let points: Vec<usize> = (0..n * n).filter(|&k| computed(k / n, k % n)).collect();
    let values: Vec<ChiSample> = map_indexed(points.len(), exec, |p| {
        let k = points[p];
        let (i, j) = (k / n, k % n);
        let setting = spec.plane.setting(axis[i], axis[j]);
        let re = chi_with(state, &d1[i], &d2[j]).re.clamp(-1.0, 1.0);
        match mode {
            ScanMode::Exact => ChiSample::exact(setting, re),
            ScanMode::Sampled { shots, rng } => {
                let plus = sample_bernoulli_counts(0.5 * (1.0 + re), shots, &rng.child(k as u64), Execution::Sequential);
                ChiSample::from_counts(setting, plus, shots)
            }
        }
    });

    let mut samples: Vec<Option<ChiSample>> = vec![None; n * n];
    for (k, v) in points.iter().zip(values) {
        samples[*k] = Some(v);
    }
    for k in 0..n * n {
        if samples[k].is_none() {
            let (i, j) = (k / n, k % n);
            let mirror = samples[(n - 1 - i) * n + (n - 1 - j)].ok_or_else(|| Error::Degenerate("mirror point missing".into()))?;
            samples[k] = Some(ChiSample { setting: spec.plane.setting(axis[i], axis[j]), ..mirror });
        }
    }
    Ok(ChiGrid {
        plane: spec.plane,
        axis1: axis.clone(),
        axis2: axis,
        samples: samples.into_iter().map(|s| s.expect("filled")).collect(),
    })
}
