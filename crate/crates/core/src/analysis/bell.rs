//! CHSH-type signal `B = |C₀₀ + C₀₁ + C₁₀ − C₁₁|` built from
//! `C_kl = Re χ(α_k, γ_l)` in the `{Re β₁, Re β₂}` plane.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::fock::TmsvParams;
use crate::tomography::{chi_gaussian_oracle, measured_re_chi, MeasurementSetting, QuantumState, RngSpec, SHOT_BATCH};

use super::solvers::nelder_mead;

pub const CLASSICAL_BOUND: f64 = 2.0;
/// Infinite-squeezing limit quoted for the symmetric setting family.
pub const TMSV_LIMIT: f64 = 2.32;
pub const SEARCH_BOUND: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellSettings {
    pub alpha_0: f64,
    pub alpha_1: f64,
    pub gamma_0: f64,
    pub gamma_1: f64,
}

impl BellSettings {
    pub fn symmetric(alpha_0: f64, alpha_1: f64) -> Self {
        BellSettings { alpha_0, alpha_1, gamma_0: alpha_0, gamma_1: alpha_1 }
    }

    pub fn is_symmetric(&self) -> bool {
        self.alpha_0 == self.gamma_0 && self.alpha_1 == self.gamma_1
    }

    /// Settings in the order `(α₀,γ₀), (α₀,γ₁), (α₁,γ₀), (α₁,γ₁)`.
    pub fn measurement_settings(&self) -> [MeasurementSetting; 4] {
        [
            MeasurementSetting::real(self.alpha_0, self.gamma_0),
            MeasurementSetting::real(self.alpha_0, self.gamma_1),
            MeasurementSetting::real(self.alpha_1, self.gamma_0),
            MeasurementSetting::real(self.alpha_1, self.gamma_1),
        ]
    }

    fn negated(&self) -> Self {
        BellSettings { alpha_0: -self.alpha_0, alpha_1: -self.alpha_1, gamma_0: -self.gamma_0, gamma_1: -self.gamma_1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellResult {
    pub settings: BellSettings,
    pub correlations: [f64; 4],
    pub shots_per_setting: [u64; 4],
    pub total_shots: u64,
    pub bell_signal: f64,
    /// `Σ (1 − C²)/M_kl`.
    pub variance: f64,
}

fn combine(c: &[f64; 4]) -> f64 {
    (c[0] + c[1] + c[2] - c[3]).abs()
}

/// Assembles `B` and its projection-noise variance.
pub fn bell_signal(correlations: [f64; 4], settings: BellSettings, shots: [u64; 4]) -> Result<BellResult> {
    if let Some(c) = correlations.iter().find(|c| !(-1.0..=1.0).contains(*c)) {
        return Err(invalid(format!("correlation {c} outside [-1, 1]")));
    }
    if let Some(k) = shots.iter().position(|&m| m == 0) {
        return Err(Error::Degenerate(format!("setting {k} received no shots")));
    }
    let variance = correlations.iter().zip(shots).map(|(c, m)| (1.0 - c * c) / m as f64).sum();
    Ok(BellResult {
        settings,
        correlations,
        shots_per_setting: shots,
        total_shots: shots.iter().sum(),
        bell_signal: combine(&correlations),
        variance,
    })
}

/// `B` for `TMSV(r, φ)` from the closed-form `χ`.
pub fn predicted_bell(params: TmsvParams, settings: &BellSettings) -> f64 {
    let c = settings.measurement_settings().map(|s| chi_gaussian_oracle(params, &s));
    combine(&c)
}

/// Projection-noise `Var[B]` for `total_shots` split evenly over the settings.
pub fn predicted_bell_variance(params: TmsvParams, settings: &BellSettings, total_shots: u64) -> f64 {
    let m = total_shots as f64 / 4.0;
    settings.measurement_settings().iter().map(|s| (1.0 - chi_gaussian_oracle(params, s).powi(2)) / m).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BellSearch {
    /// `α_k = γ_k`, two parameters.
    Symmetric,
    /// All four magnitudes free.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellOptimum {
    pub settings: BellSettings,
    pub predicted: f64,
}

const GRID: usize = 81;
const STARTS: usize = 8;

fn to_settings(x: &[f64]) -> BellSettings {
    match x.len() {
        2 => BellSettings::symmetric(x[0], x[1]),
        _ => BellSettings { alpha_0: x[0], alpha_1: x[1], gamma_0: x[2], gamma_1: x[3] },
    }
}

/// Maximizes the predicted `B` over `|α|, |γ| ≤ 2`. Symmetric search scans an
/// 81×81 grid and refines the best cells; the full search refines from the
/// symmetric optimum and its grid starts. The sign is fixed so that `α₁ ≥ 0`.
pub fn optimize_bell_settings(params: TmsvParams) -> BellOptimum {
    optimize_bell_settings_with(params, BellSearch::Symmetric)
}

pub fn optimize_bell_settings_with(params: TmsvParams, search: BellSearch) -> BellOptimum {
    let step = 2.0 * SEARCH_BOUND / (GRID - 1) as f64;
    let axis: Vec<f64> = (0..GRID).map(|i| -SEARCH_BOUND + i as f64 * step).collect();
    let mut cells: Vec<(f64, usize)> = (0..GRID * GRID)
        .map(|k| (predicted_bell(params, &BellSettings::symmetric(axis[k / GRID], axis[k % GRID])), k))
        .collect();
    cells.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let starts: Vec<Vec<f64>> = cells.iter().take(STARTS).map(|&(_, k)| vec![axis[k / GRID], axis[k % GRID]]).collect();

    let objective = |x: &[f64]| -> f64 {
        if x.iter().any(|v| v.abs() > SEARCH_BOUND) {
            return f64::INFINITY;
        }
        -predicted_bell(params, &to_settings(x))
    };
    let refine = |x0: &[f64]| nelder_mead(&objective, x0, 0.5 * step, 1e-15, 4000);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in &starts {
        keep_lower(&mut best, refine(s));
    }
    if search == BellSearch::Full {
        let sym = best.clone().expect("at least one start").0;
        let mut full_starts = vec![vec![sym[0], sym[1], sym[0], sym[1]]];
        full_starts.extend(starts.iter().map(|s| vec![s[0], s[1], s[0], s[1]]));
        full_starts.push(vec![sym[0], sym[1], -sym[0], -sym[1]]);
        best = None;
        for s in &full_starts {
            let first = refine(s);
            // restart once from the result to escape a collapsed simplex
            let again = refine(&first.0);
            keep_lower(&mut best, first);
            keep_lower(&mut best, again);
        }
    }
    let (x, v) = best.expect("at least one start");
    let mut settings = to_settings(&x);
    if settings.alpha_1 < 0.0 {
        settings = settings.negated();
    }
    BellOptimum { settings, predicted: -v }
}

fn keep_lower(best: &mut Option<(Vec<f64>, f64)>, cand: (Vec<f64>, f64)) {
    if best.as_ref().is_none_or(|b| cand.1 < b.1) {
        *best = Some(cand);
    }
}

fn setting_probabilities(state: &QuantumState, settings: &BellSettings) -> Result<[f64; 4]> {
    let mut p = [0.0; 4];
    for (pk, s) in p.iter_mut().zip(settings.measurement_settings()) {
        *pk = 0.5 * (1.0 + measured_re_chi(state, &s)?);
    }
    Ok(p)
}

fn count_shots(p: &[f64; 4], total: u64, rng: &RngSpec, exec: Execution) -> ([u64; 4], [u64; 4]) {
    let batches = total.div_ceil(SHOT_BATCH) as usize;
    let parts = map_indexed(batches, exec, |b| {
        let len = SHOT_BATCH.min(total - b as u64 * SHOT_BATCH);
        let mut g = rng.child(b as u64).generator();
        let (mut n, mut plus) = ([0u64; 4], [0u64; 4]);
        for _ in 0..len {
            let k = g.random_range(0..4usize);
            n[k] += 1;
            if g.random::<f64>() < p[k] {
                plus[k] += 1;
            }
        }
        (n, plus)
    });
    parts.iter().fold(([0; 4], [0; 4]), |(mut n, mut plus), (bn, bp)| {
        for k in 0..4 {
            n[k] += bn[k];
            plus[k] += bp[k];
        }
        (n, plus)
    })
}

/// Simulates `total_shots` repetitions, each with a uniformly drawn setting and
/// one binary outcome. Shots `[b·SHOT_BATCH, (b+1)·SHOT_BATCH)` come from
/// `rng.child(b)`, so a run of `M` shots is a prefix of any longer run.
pub fn run_bell_experiment(state: &QuantumState, settings: &BellSettings, total_shots: u64, rng: &RngSpec) -> Result<BellResult> {
    run_bell_experiment_with(state, settings, total_shots, rng, Execution::default())
}

pub fn run_bell_experiment_with(
    state: &QuantumState,
    settings: &BellSettings,
    total_shots: u64,
    rng: &RngSpec,
    exec: Execution,
) -> Result<BellResult> {
    if total_shots < 4 {
        return Err(invalid("a Bell run needs at least 4 shots"));
    }
    let p = setting_probabilities(state, settings)?;
    let (n, plus) = count_shots(&p, total_shots, rng, exec);
    let mut c = [0.0; 4];
    for k in 0..4 {
        if n[k] > 0 {
            c[k] = (2.0 * plus[k] as f64 - n[k] as f64) / n[k] as f64;
        }
    }
    bell_signal(c, *settings, n)
}

/// `B` after each shot count in `schedule` (prefixes of one run).
pub fn bell_trace(state: &QuantumState, settings: &BellSettings, schedule: &[u64], rng: &RngSpec, exec: Execution) -> Result<Vec<BellResult>> {
    schedule.iter().map(|&m| run_bell_experiment_with(state, settings, m, rng, exec)).collect()
}
