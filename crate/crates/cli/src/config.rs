//! Run configuration: a versioned JSON document plus command-line overrides.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tmsv_core::analysis::{BellSearch, BellSettings};
use tmsv_core::dynamics::check_displacement;
use tmsv_core::fock::{ModeDims, TmsvParams};
use tmsv_core::optimizer::{TargetState, DEFAULT_RABI_RATE};
use tmsv_core::tomography::{GridSpec, QuadraturePlane};
use tmsv_core::waveform::FilterSpec;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub target: TargetState,
    pub dims: ModeDims,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub tomography: TomographyConfig,
    #[serde(default)]
    pub bell: BellConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub state: StateSource,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lab_metadata: Option<LabMetadata>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub epsilon: f64,
    pub t_max: f64,
    pub n_opt: usize,
    pub n_seg: usize,
    pub cutoff_product: f64,
    pub kernel_halfwidth: usize,
    pub rabi_rate: f64,
    pub max_iterations: usize,
    pub n_starts: usize,
    /// Propagate the result again at this symmetric truncation.
    pub revalidate_n_max: Option<usize>,
    /// Waveform CSV rows per second; four rows per segment when absent.
    pub sample_rate: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let f = FilterSpec::default();
        OptimizerConfig {
            epsilon: 0.05,
            t_max: 2e-3,
            n_opt: f.n_opt,
            n_seg: f.n_seg,
            cutoff_product: TAU * 1e4,
            kernel_halfwidth: f.kernel_halfwidth,
            rabi_rate: DEFAULT_RABI_RATE,
            max_iterations: 2000,
            n_starts: 8,
            revalidate_n_max: None,
            sample_rate: None,
        }
    }
}

impl OptimizerConfig {
    pub fn filter(&self) -> FilterSpec {
        FilterSpec {
            cutoff_product: self.cutoff_product,
            n_opt: self.n_opt,
            n_seg: self.n_seg,
            kernel_halfwidth: self.kernel_halfwidth,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measurement {
    Exact,
    Sampled,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomographyConfig {
    pub planes: Vec<QuadraturePlane>,
    pub extent: f64,
    pub step: f64,
    pub mode: Measurement,
    /// Shots per setting in sampled mode.
    pub shots: u64,
    pub symmetry_fill: bool,
    /// Symmetric truncation for the analysis; smaller prepared states are
    /// zero-padded into it.
    pub n_max: Option<usize>,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        TomographyConfig {
            planes: QuadraturePlane::ALL.to_vec(),
            extent: 2.5,
            step: 0.125,
            mode: Measurement::Exact,
            shots: 1000,
            symmetry_fill: true,
            n_max: None,
        }
    }
}

impl TomographyConfig {
    pub fn grid(&self, plane: QuadraturePlane) -> GridSpec {
        GridSpec { plane, extent: self.extent, step: self.step }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BellChoice {
    Auto(AutoTag),
    Fixed(BellSettings),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BellConfig {
    pub settings: BellChoice,
    pub search: BellSearch,
    /// Increasing shot counts; the last entry is the final run.
    pub schedule: Vec<u64>,
}

impl Default for BellConfig {
    fn default() -> Self {
        BellConfig {
            settings: BellChoice::Auto(AutoTag::Auto),
            search: BellSearch::Symmetric,
            schedule: vec![1_000, 2_500, 5_000, 10_000, 25_000, 50_000, 100_000, 175_000, 251_000],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub n_bar_1: f64,
    pub n_bar_2: f64,
}

impl NoiseConfig {
    pub fn is_noiseless(&self) -> bool {
        self.n_bar_1 == 0.0 && self.n_bar_2 == 0.0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub r_values: Vec<f64>,
    /// Profile samples per axis, from `α = 0` to `2.5·e^r`.
    pub points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { r_values: vec![0.0, 0.25, 0.75, 1.0, 1.25], points: 81 }
    }
}

/// Where the analysed state comes from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSource {
    /// The target state itself (thermal when noise is set).
    #[default]
    Ideal,
    /// A waveform CSV propagated from the ground state and postselected on `|↓⟩`.
    Waveform { path: PathBuf },
    /// A noiseless two-ridge surface; only `fit-superposition` accepts it.
    Synthetic { c_1: f64, c_2: f64, r_1: f64, r_2: f64 },
}

/// Trap and laser frequencies, echoed into outputs and otherwise unused.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabMetadata {
    pub omega_1: Option<f64>,
    pub omega_2: Option<f64>,
    pub omega_0: Option<f64>,
    pub delta_omega_l: Option<f64>,
}

/// Command-line values that replace config entries.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub measurement: Option<Measurement>,
    pub shots: Option<u64>,
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::config(msg()))
    }
}

fn finite_positive(name: &str, v: f64) -> Result<(), CliError> {
    check(v.is_finite() && v > 0.0, || format!("{name} must be positive and finite, got {v}"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::config(format!("malformed JSON: {e}")))?;
        let version = raw.get("schema_version").and_then(|v| v.as_u64());
        check(version == Some(SCHEMA_VERSION as u64), || {
            format!("schema_version must be {SCHEMA_VERSION}, got {}", raw.get("schema_version").map_or("nothing".into(), |v| v.to_string()))
        })?;
        serde_json::from_value(raw).map_err(|e| CliError::config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(m) = o.measurement {
            self.tomography.mode = m;
        }
        if let Some(shots) = o.shots {
            self.tomography.shots = shots;
        }
    }

    /// Checks every section against the invariants of the module it feeds.
    pub fn validate(&self) -> Result<(), CliError> {
        self.target.validate()?;
        check(!self.output_dir.as_os_str().is_empty(), || "output_dir is empty".into())?;

        let o = &self.optimizer;
        check(o.epsilon > 0.0 && o.epsilon < 1.0, || format!("optimizer.epsilon must lie in (0, 1), got {}", o.epsilon))?;
        finite_positive("optimizer.t_max", o.t_max)?;
        check(o.rabi_rate.is_finite() && o.rabi_rate >= 0.0, || "optimizer.rabi_rate must be finite and non-negative".into())?;
        check(o.n_starts > 0, || "optimizer.n_starts must be at least 1".into())?;
        o.filter().validate()?;
        if let Some(n) = o.revalidate_n_max {
            let larger = ModeDims::symmetric(n)?;
            check(larger.n_max_1() >= self.dims.n_max_1() && larger.n_max_2() >= self.dims.n_max_2(), || {
                format!("optimizer.revalidate_n_max = {n} is smaller than dims")
            })?;
        }
        if let Some(rate) = o.sample_rate {
            finite_positive("optimizer.sample_rate", rate)?;
        }

        let t = &self.tomography;
        check(!t.planes.is_empty(), || "tomography.planes is empty".into())?;
        for &p in &t.planes {
            t.grid(p).validate()?;
        }
        if let Some(n) = t.n_max {
            let d = ModeDims::symmetric(n)?;
            check(d.n_max_1() >= self.dims.n_max_1() && d.n_max_2() >= self.dims.n_max_2(), || {
                format!("tomography.n_max = {n} is smaller than dims")
            })?;
        }
        check(t.mode == Measurement::Exact || t.shots > 0, || "tomography.shots must be positive in sampled mode".into())?;

        let b = &self.bell;
        check(!b.schedule.is_empty(), || "bell.schedule is empty".into())?;
        check(b.schedule[0] >= 4, || "bell.schedule entries must be at least 4".into())?;
        check(b.schedule.windows(2).all(|w| w[0] < w[1]), || "bell.schedule must be strictly increasing".into())?;
        if let BellChoice::Fixed(s) = b.settings {
            for v in [s.alpha_0, s.alpha_1, s.gamma_0, s.gamma_1] {
                check(v.is_finite(), || "bell settings must be finite".into())?;
            }
        }

        for (name, v) in [("noise.n_bar_1", self.noise.n_bar_1), ("noise.n_bar_2", self.noise.n_bar_2)] {
            check(v.is_finite() && v >= 0.0, || format!("{name} must be finite and non-negative, got {v}"))?;
        }
        if !self.noise.is_noiseless() && self.state == StateSource::Ideal {
            check(!matches!(self.target, TargetState::Superposition { .. }), || {
                "thermal noise is only defined for vacuum and tmsv targets".into()
            })?;
        }

        check(!self.sweep.r_values.is_empty(), || "sweep.r_values is empty".into())?;
        for &r in &self.sweep.r_values {
            TmsvParams::new(r, 0.0)?;
        }
        check(self.sweep.points >= 5, || "sweep.points must be at least 5".into())?;

        match &self.state {
            StateSource::Ideal => {}
            StateSource::Waveform { path } => check(path.is_file(), || format!("waveform file {} not found", path.display()))?,
            StateSource::Synthetic { c_1, c_2, r_1, r_2 } => {
                check(*c_1 >= 0.0 && *c_2 >= 0.0 && c_1 + c_2 <= 1.0 + 1e-12, || "synthetic c_1, c_2 must be non-negative with c_1 + c_2 ≤ 1".into())?;
                finite_positive("state.r_1", *r_1)?;
                finite_positive("state.r_2", *r_2)?;
            }
        }
        Ok(())
    }

    /// Displacements of every configured grid must fit the truncation.
    pub fn check_grid_truncation(&self, dims: ModeDims) -> Result<(), CliError> {
        let reach = self.tomography.grid(self.tomography.planes[0]).axis().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        check_displacement(reach, dims.n_max_1())?;
        check_displacement(reach, dims.n_max_2())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"schema_version": 1, "target": {"kind": "tmsv", "r": 0.25}, "dims": {"n_max_1": 6, "n_max_2": 6}, "seed": 3, "output_dir": "out"}"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.optimizer.n_opt, 30);
        assert_eq!(c.tomography.planes.len(), 4);
        assert_eq!(c.bell.settings, BellChoice::Auto(AutoTag::Auto));
        assert_eq!(*c.bell.schedule.last().unwrap(), 251_000);
        assert_eq!(c.state, StateSource::Ideal);
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let text = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(RunConfig::from_json(&text).unwrap_err().message.contains("schema_version"));
        let text = MINIMAL.replace("\"schema_version\": 1, ", "");
        assert!(RunConfig::from_json(&text).is_err());
    }

    #[test]
    fn unknown_fields_and_bad_values_rejected() {
        assert!(RunConfig::from_json(&MINIMAL.replace("\"seed\"", "\"sed\"")).is_err());
        let neg = RunConfig::from_json(&MINIMAL.replace("0.25", "-0.25")).unwrap();
        assert!(neg.validate().is_err());
        let dims = MINIMAL.replace("\"n_max_1\": 6", "\"n_max_1\": 1");
        assert!(RunConfig::from_json(&dims).is_err());
    }

    #[test]
    fn explicit_bell_settings_parse() {
        let text = MINIMAL.replace(
            "\"seed\"",
            r#""bell": {"settings": {"alpha_0": -0.1, "alpha_1": 0.4, "gamma_0": -0.1, "gamma_1": 0.4}}, "seed""#,
        );
        let c = RunConfig::from_json(&text).unwrap();
        assert_eq!(c.bell.settings, BellChoice::Fixed(BellSettings::symmetric(-0.1, 0.4)));
    }

    #[test]
    fn overrides_replace_values() {
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.apply(&Overrides { seed: Some(9), out: Some("elsewhere".into()), measurement: Some(Measurement::Sampled), shots: Some(50) });
        assert_eq!(c.seed, 9);
        assert_eq!(c.output_dir, PathBuf::from("elsewhere"));
        assert_eq!(c.tomography.mode, Measurement::Sampled);
        assert_eq!(c.tomography.shots, 50);
    }

    #[test]
    fn schedule_must_increase() {
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.bell.schedule = vec![100, 50];
        assert!(c.validate().is_err());
        c.bell.schedule = vec![2, 50];
        assert!(c.validate().is_err());
    }
}
