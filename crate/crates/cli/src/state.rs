//! Builds the state a verification command analyses.

use serde::Serialize;
use tmsv_core::dynamics::{propagate, propagate_density, ControlHamiltonianSpec};
use tmsv_core::fock::{squeezed_thermal_state, thermal_joint_state, tmsv_deficit, ModeDims, StateVector, TmsvParams, DEFAULT_MAX_DEFICIT};
use tmsv_core::optimizer::TargetState;
use tmsv_core::tomography::{postselect_prep, postselect_prep_density, QuantumState};
use tmsv_core::waveform::import_waveform;

use crate::config::{NoiseConfig, RunConfig, StateSource};
use crate::error::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct StateInfo {
    pub source: String,
    pub dims: ModeDims,
    /// Probability the truncation discards from the ideal state.
    pub deficit: f64,
    pub noise: NoiseConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub postselection_probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub propagation_leakage: Option<f64>,
}

pub struct Prepared {
    pub state: QuantumState,
    pub info: StateInfo,
}

/// The ideal target at `dims`, thermal when `noise` is set.
pub fn ideal_state(target: &TargetState, dims: ModeDims, noise: NoiseConfig) -> Result<Prepared, CliError> {
    let info = |deficit| StateInfo {
        source: "ideal".into(),
        dims,
        deficit,
        noise,
        postselection_probability: None,
        propagation_leakage: None,
    };
    if noise.is_noiseless() {
        let t = target.build(dims)?;
        if t.deficit > DEFAULT_MAX_DEFICIT {
            return Err(CliError::config(format!(
                "truncation ({}, {}) discards {:.2e} of the target; raise dims",
                dims.n_max_1(),
                dims.n_max_2(),
                t.deficit
            )));
        }
        return Ok(Prepared { state: t.state.into(), info: info(t.deficit) });
    }
    let (params, deficit) = match *target {
        TargetState::Vacuum => (TmsvParams::new(0.0, 0.0)?, 0.0),
        TargetState::Tmsv { r, phi } => (TmsvParams::new(r, phi)?, tmsv_deficit(r, dims.n_max_1().min(dims.n_max_2()))),
        TargetState::Superposition { .. } => return Err(CliError::config("thermal noise is only defined for vacuum and tmsv targets")),
    };
    if deficit > DEFAULT_MAX_DEFICIT {
        return Err(CliError::config(format!("truncation discards {deficit:.2e} of the target; raise dims")));
    }
    let rho = if params.r() == 0.0 {
        thermal_joint_state(noise.n_bar_1, noise.n_bar_2, dims)?
    } else {
        squeezed_thermal_state(params, noise.n_bar_1, noise.n_bar_2, dims)?
    };
    Ok(Prepared { state: rho.into(), info: info(deficit) })
}

/// Runs a waveform from the ground (or thermal) state and keeps the `|↓⟩` branch.
pub fn prepared_from_waveform(cfg: &RunConfig, path: &std::path::Path) -> Result<Prepared, CliError> {
    let wf = import_waveform(path, cfg.optimizer.n_seg, cfg.optimizer.rabi_rate)?;
    let spec = ControlHamiltonianSpec::new(cfg.dims, wf);
    let (state, p, leakage): (QuantumState, f64, f64) = if cfg.noise.is_noiseless() {
        let out = propagate(&spec, &StateVector::ground(cfg.dims))?;
        let (s, p) = postselect_prep(&out.state)?;
        (s.into(), p, out.leakage)
    } else {
        let rho = thermal_joint_state(cfg.noise.n_bar_1, cfg.noise.n_bar_2, cfg.dims)?;
        let out = propagate_density(&spec, &rho)?;
        let (s, p) = postselect_prep_density(&out.state)?;
        (s.into(), p, out.leakage)
    };
    Ok(Prepared {
        state,
        info: StateInfo {
            source: format!("waveform:{}", path.display()),
            dims: cfg.dims,
            deficit: 0.0,
            noise: cfg.noise,
            postselection_probability: Some(p),
            propagation_leakage: Some(leakage),
        },
    })
}

/// The state named by `cfg.state`, padded to `tomography.n_max` when set.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let mut p = match &cfg.state {
        StateSource::Ideal => ideal_state(&cfg.target, cfg.dims, cfg.noise)?,
        StateSource::Waveform { path } => prepared_from_waveform(cfg, path)?,
        StateSource::Synthetic { .. } => return Err(CliError::config("a synthetic source only feeds fit-superposition")),
    };
    if let Some(n) = cfg.tomography.n_max {
        let dims = ModeDims::symmetric(n)?;
        if dims != p.info.dims {
            p.state = match p.state {
                QuantumState::Pure(s) => QuantumState::Pure(s.embed_into(dims)?),
                QuantumState::Mixed(r) => QuantumState::Mixed(r.embed_into(dims)?),
            };
            p.info.dims = dims;
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tmsv_core::tomography::{chi_exact, MeasurementSetting};

    #[test]
    fn thermal_vacuum_is_mixed_and_narrower() {
        let dims = ModeDims::symmetric(12).unwrap();
        let noise = NoiseConfig { n_bar_1: 0.06, n_bar_2: 0.06 };
        let p = ideal_state(&TargetState::Vacuum, dims, noise).unwrap();
        assert!(matches!(p.state, QuantumState::Mixed(_)));
        let s = MeasurementSetting::real(0.8, 0.0);
        // thermal χ = exp(−(2n̄+1)|β|²/2)
        let want = (-(1.12) * 0.64 / 2.0f64).exp();
        assert!((chi_exact(&p.state, &s).unwrap().re - want).abs() < 1e-9);
    }

    #[test]
    fn insufficient_truncation_is_a_config_error() {
        let dims = ModeDims::symmetric(4).unwrap();
        let e = ideal_state(&TargetState::Tmsv { r: 1.0, phi: 0.0 }, dims, NoiseConfig::default()).err().unwrap();
        assert_eq!(e.exit_code(), 2);
    }
}
