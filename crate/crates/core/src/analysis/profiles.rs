//! Axis-averaged 1D profiles along the squeezed and anti-squeezed diagonals:
//!
//! ```text
//! χ̄_s(α)  = ½ Re χ(α/√2, −α/√2) + ½ Re χ(iα/√2,  iα/√2)
//! χ̄_as(α) = ½ Re χ(α/√2,  α/√2) + ½ Re χ(iα/√2, −iα/√2)
//! ```

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{invalid, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::linalg::{C64, I};
use crate::tomography::{chi_exact, sample_bernoulli_counts, ChiGrid, ChiSample, MeasurementSetting, QuadraturePlane, QuantumState, ScanMode};

use super::gaussian::ProfilePoint;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisProfiles {
    pub squeezed: Vec<ProfilePoint>,
    pub anti_squeezed: Vec<ProfilePoint>,
}

/// The four settings behind `χ̄_s(α)` (first two) and `χ̄_as(α)` (last two).
pub fn profile_settings(alpha: f64) -> [MeasurementSetting; 4] {
    let a = C64::new(alpha * FRAC_1_SQRT_2, 0.0);
    [
        MeasurementSetting { beta_1: a, beta_2: -a },
        MeasurementSetting { beta_1: I * a, beta_2: I * a },
        MeasurementSetting { beta_1: a, beta_2: a },
        MeasurementSetting { beta_1: I * a, beta_2: -I * a },
    ]
}

fn average(x: f64, a: &ChiSample, b: &ChiSample) -> ProfilePoint {
    ProfilePoint {
        x,
        value: 0.5 * (a.value + b.value),
        stderr: 0.5 * (a.stderr * a.stderr + b.stderr * b.stderr).sqrt(),
    }
}

/// Evaluates both profiles at `alphas`, exactly or by sampling each setting
/// on stream `rng.child(4·k + j)`.
pub fn mean_axis_profiles(state: &QuantumState, alphas: &[f64], mode: ScanMode, exec: Execution) -> Result<AxisProfiles> {
    let dims = state.dims();
    for &a in alphas {
        for s in profile_settings(a) {
            s.check(dims)?;
        }
    }
    let samples: Vec<Result<ChiSample>> = map_indexed(alphas.len() * 4, exec, |k| {
        let s = profile_settings(alphas[k / 4])[k % 4];
        let re = chi_exact(state, &s)?.re.clamp(-1.0, 1.0);
        Ok(match mode {
            ScanMode::Exact => ChiSample::exact(s, re),
            ScanMode::Sampled { shots, rng } => {
                if shots == 0 {
                    return Err(invalid("need at least one shot"));
                }
                let plus = sample_bernoulli_counts(0.5 * (1.0 + re), shots, &rng.child(k as u64), Execution::Sequential);
                ChiSample::from_counts(s, plus, shots)
            }
        })
    });
    let samples: Vec<ChiSample> = samples.into_iter().collect::<Result<_>>()?;
    let mut out = AxisProfiles { squeezed: Vec::new(), anti_squeezed: Vec::new() };
    for (k, &a) in alphas.iter().enumerate() {
        let q = &samples[4 * k..4 * k + 4];
        out.squeezed.push(average(a, &q[0], &q[1]));
        out.anti_squeezed.push(average(a, &q[2], &q[3]));
    }
    Ok(out)
}

/// Reads both profiles off the diagonals of a Re–Re and an Im–Im grid.
/// Grid point `(x, ±x)` gives `α = √2·x`.
pub fn mean_axis_profiles_from_grids(re_re: &ChiGrid, im_im: &ChiGrid) -> Result<AxisProfiles> {
    if re_re.plane != QuadraturePlane::ReRe || im_im.plane != QuadraturePlane::ImIm {
        return Err(invalid("profiles need a re_re grid and an im_im grid"));
    }
    let missing = |x: f64| Error::Degenerate(format!("grid lacks the diagonal setting at {x:.4}"));
    let lookup = |g: &ChiGrid, x: f64, y: f64| -> Result<ChiSample> {
        let i = ChiGrid::position(&g.axis1, x).ok_or_else(|| missing(x))?;
        let j = ChiGrid::position(&g.axis2, y).ok_or_else(|| missing(y))?;
        Ok(*g.get(i, j))
    };
    let mut out = AxisProfiles { squeezed: Vec::new(), anti_squeezed: Vec::new() };
    for &x in &re_re.axis1 {
        let alpha = x * std::f64::consts::SQRT_2;
        out.squeezed.push(average(alpha, &lookup(re_re, x, -x)?, &lookup(im_im, x, x)?));
        out.anti_squeezed.push(average(alpha, &lookup(re_re, x, x)?, &lookup(im_im, x, -x)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{tmsv_state, ModeDims, StateVector, TmsvParams};
    use crate::tomography::{scan_grid, GridSpec};

    #[test]
    fn vacuum_profiles_are_unit_gaussians() {
        let v: QuantumState = StateVector::ground(ModeDims::symmetric(24).unwrap()).into();
        let alphas = [0.0, 0.5, 1.0, 1.5, 2.0];
        let p = mean_axis_profiles(&v, &alphas, ScanMode::Exact, Execution::default()).unwrap();
        for (s, a) in p.squeezed.iter().zip(&p.anti_squeezed) {
            let expect = (-s.x * s.x / 2.0).exp();
            assert!((s.value - expect).abs() < 1e-10);
            assert!((a.value - expect).abs() < 1e-10);
        }
        assert!((p.squeezed[0].value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn squeezed_profile_is_wider() {
        let t: QuantumState = tmsv_state(TmsvParams::new(0.5, 0.0).unwrap(), ModeDims::symmetric(30).unwrap()).unwrap().state.into();
        let p = mean_axis_profiles(&t, &[1.0], ScanMode::Exact, Execution::default()).unwrap();
        assert!(p.squeezed[0].value > p.anti_squeezed[0].value);
        // χ̄_s(α) = exp(−α² e^{−2r}/2)
        assert!((p.squeezed[0].value - (-0.5 * (-1.0f64).exp()).exp()).abs() < 1e-8);
        assert!((p.anti_squeezed[0].value - (-0.5 * 1.0f64.exp()).exp()).abs() < 1e-8);
    }

    #[test]
    fn grid_diagonals_match_direct_profiles() {
        let t: QuantumState = tmsv_state(TmsvParams::new(0.7, 0.0).unwrap(), ModeDims::symmetric(30).unwrap()).unwrap().state.into();
        let step = 0.25;
        let rr = scan_grid(&t, &GridSpec { plane: QuadraturePlane::ReRe, extent: 1.0, step }, ScanMode::Exact, true, Execution::default()).unwrap();
        let ii = scan_grid(&t, &GridSpec { plane: QuadraturePlane::ImIm, extent: 1.0, step }, ScanMode::Exact, true, Execution::default()).unwrap();
        let from_grid = mean_axis_profiles_from_grids(&rr, &ii).unwrap();
        let alphas: Vec<f64> = rr.axis1.iter().map(|x| x * std::f64::consts::SQRT_2).collect();
        let direct = mean_axis_profiles(&t, &alphas, ScanMode::Exact, Execution::default()).unwrap();
        for (a, b) in from_grid.squeezed.iter().zip(&direct.squeezed) {
            assert!((a.value - b.value).abs() < 1e-12);
        }
        assert!(mean_axis_profiles_from_grids(&ii, &rr).is_err());
    }
}
