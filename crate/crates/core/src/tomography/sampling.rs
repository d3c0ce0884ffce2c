use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exec::{map_indexed, Execution};

use super::{chi_exact, chi_via_spin, MeasurementSetting, QuantumState, RngSpec};

/// Shots per independent random stream.
pub const SHOT_BATCH: u64 = 65_536;

/// An estimate of `Re χ` at one setting. Exact evaluations carry zero shots.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSample {
    pub setting: MeasurementSetting,
    pub value: f64,
    pub shots: u64,
    pub stderr: f64,
}

impl ChiSample {
    pub fn exact(setting: MeasurementSetting, value: f64) -> Self {
        ChiSample { setting, value, shots: 0, stderr: 0.0 }
    }

    /// Mean of `shots` outcomes in {−1, +1} with `plus` of them +1.
    pub fn from_counts(setting: MeasurementSetting, plus: u64, shots: u64) -> Self {
        let value = (2.0 * plus as f64 - shots as f64) / shots as f64;
        let stderr = ((1.0 - value * value).max(0.0) / shots as f64).sqrt();
        ChiSample { setting, value, shots, stderr }
    }
}

/// Number of `+1` outcomes among `shots` draws with `P(+1) = p_plus`.
///
/// Shots are split into batches of [`SHOT_BATCH`]; batch `b` draws from
/// `rng.child(b)`, so the count does not depend on the execution strategy.
pub fn sample_bernoulli_counts(p_plus: f64, shots: u64, rng: &RngSpec, exec: Execution) -> u64 {
    let p = p_plus.clamp(0.0, 1.0);
    let n_batches = shots.div_ceil(SHOT_BATCH) as usize;
    let counts = map_indexed(n_batches, exec, |b| {
        let len = SHOT_BATCH.min(shots - b as u64 * SHOT_BATCH);
        let mut g = rng.child(b as u64).generator();
        (0..len).filter(|_| g.random::<f64>() < p).count() as u64
    });
    counts.iter().sum()
}

/// `Re χ` as the readout sees it: the spin protocol for pure states, the
/// definition for mixed ones.
pub fn measured_re_chi(state: &QuantumState, s: &MeasurementSetting) -> Result<f64> {
    Ok(match state {
        QuantumState::Pure(psi) => chi_via_spin(psi, s)?,
        QuantumState::Mixed(_) => chi_exact(state, s)?.re,
    }
    .clamp(-1.0, 1.0))
}

/// Shot-sampled `Re χ` with projection noise.
pub fn sample_chi(state: &QuantumState, s: &MeasurementSetting, shots: u64, rng: &RngSpec) -> Result<ChiSample> {
    sample_chi_with(state, s, shots, rng, Execution::default())
}

pub fn sample_chi_with(
    state: &QuantumState,
    s: &MeasurementSetting,
    shots: u64,
    rng: &RngSpec,
    exec: Execution,
) -> Result<ChiSample> {
    if shots == 0 {
        return Err(invalid("need at least one shot"));
    }
    let re_chi = measured_re_chi(state, s)?;
    let plus = sample_bernoulli_counts(0.5 * (1.0 + re_chi), shots, rng, exec);
    Ok(ChiSample::from_counts(*s, plus, shots))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{ModeDims, StateVector};

    #[test]
    fn certain_outcome_has_zero_error() {
        let g: QuantumState = StateVector::ground(ModeDims::symmetric(6).unwrap()).into();
        let s = sample_chi(&g, &MeasurementSetting::origin(), 1000, &RngSpec::new(1)).unwrap();
        assert_eq!(s.value, 1.0);
        assert_eq!(s.stderr, 0.0);
    }

    #[test]
    fn half_chi_gives_three_quarters_plus() {
        let n = 400_000;
        let plus = sample_bernoulli_counts(0.75, n, &RngSpec::new(3), Execution::default());
        let p = plus as f64 / n as f64;
        assert!((p - 0.75).abs() < 5.0 * (0.75 * 0.25 / n as f64).sqrt());
    }

    #[test]
    fn execution_strategy_does_not_change_counts() {
        let rng = RngSpec::new(99).with_stream(4);
        let a = sample_bernoulli_counts(0.3, 300_001, &rng, Execution::Sequential);
        let b = sample_bernoulli_counts(0.3, 300_001, &rng, Execution::Parallel);
        assert_eq!(a, b);
    }

    #[test]
    fn vacuum_million_shots() {
        let g: QuantumState = StateVector::ground(ModeDims::symmetric(20).unwrap()).into();
        let setting = MeasurementSetting::real(1.0, 1.0);
        let s = sample_chi(&g, &setting, 1_000_000, &RngSpec::new(2024)).unwrap();
        assert!((s.value - (-1.0f64).exp()).abs() < 4.0 * s.stderr);
        let expected_err = ((1.0 - s.value * s.value) / 1e6).sqrt();
        assert!((s.stderr - expected_err).abs() < 1e-15);
    }

    #[test]
    fn zero_shots_rejected() {
        let g: QuantumState = StateVector::ground(ModeDims::symmetric(4).unwrap()).into();
        assert!(sample_chi(&g, &MeasurementSetting::origin(), 0, &RngSpec::new(0)).is_err());
    }
}
