//! Joint characteristic function `χ(β₁, β₂)`: exact evaluation, the
//! spin-readout protocol, a closed-form Gaussian oracle, and shot sampling.
//!
//! Phase-space frame: a setting `β` displaces its mode by `D(iβ)`, with
//! `D(ξ) = exp(ξ a† − ξ* a)`. In this frame `Re β` is conjugate to the
//! position quadrature, so for `TMSV(r, 0)` the `{Re β₁, Re β₂}` plane is
//! wide along `β₁ = −β₂` and the `{Im β₁, Im β₂}` plane is wide along
//! `β₁ = β₂`.

mod grid;
mod rng;
mod sampling;

pub use grid::{scan_grid, ChiGrid, GridSpec, QuadraturePlane, ScanMode, CHI_GRID_HEADER};
pub use rng::{RngAlgorithm, RngSpec};
pub use sampling::{measured_re_chi, sample_bernoulli_counts, sample_chi, sample_chi_with, ChiSample, SHOT_BATCH};

use serde::{Deserialize, Serialize};

use crate::dynamics::{apply_conditional_displacement, displacement_matrix, Mode, SdfParams};
use crate::error::{invalid, Error, Result};
use crate::fock::{DensityOperator, ModeDims, Spin, StateVector, TmsvParams};
use crate::linalg::{CMatrix, CVector, C64, I, ZERO};

/// Displacement arguments of one `χ` evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub beta_1: C64,
    pub beta_2: C64,
}

impl MeasurementSetting {
    pub fn new(beta_1: C64, beta_2: C64) -> Result<Self> {
        if !(beta_1.re.is_finite() && beta_1.im.is_finite() && beta_2.re.is_finite() && beta_2.im.is_finite()) {
            return Err(invalid("measurement setting must be finite"));
        }
        Ok(MeasurementSetting { beta_1, beta_2 })
    }

    /// Both displacements along `Re β`.
    pub fn real(b1: f64, b2: f64) -> Self {
        MeasurementSetting { beta_1: C64::new(b1, 0.0), beta_2: C64::new(b2, 0.0) }
    }

    pub fn origin() -> Self {
        Self::real(0.0, 0.0)
    }

    /// `χ(−β₁, −β₂) = χ(β₁, β₂)*`.
    pub fn negated(&self) -> Self {
        MeasurementSetting { beta_1: -self.beta_1, beta_2: -self.beta_2 }
    }

    pub(crate) fn check(&self, dims: ModeDims) -> Result<()> {
        crate::dynamics::check_displacement(self.beta_1.norm(), dims.n_max_1())?;
        crate::dynamics::check_displacement(self.beta_2.norm(), dims.n_max_2())
    }
}

/// A pure or mixed state on the joint space.
#[derive(Clone, Debug)]
pub enum QuantumState {
    Pure(StateVector),
    Mixed(DensityOperator),
}

impl QuantumState {
    pub fn dims(&self) -> ModeDims {
        match self {
            QuantumState::Pure(s) => s.dims(),
            QuantumState::Mixed(r) => r.dims().expect("joint-space density operator"),
        }
    }
}

impl From<StateVector> for QuantumState {
    fn from(s: StateVector) -> Self {
        QuantumState::Pure(s)
    }
}

impl From<DensityOperator> for QuantumState {
    fn from(r: DensityOperator) -> Self {
        QuantumState::Mixed(r)
    }
}

pub(crate) fn mode_displacement(beta: C64, n_max: usize) -> CMatrix {
    displacement_matrix(I * beta, n_max)
}

/// `⟨D(iβ₁) ⊗ D(iβ₂)⟩` with precomputed mode matrices; the spin is traced out.
pub(crate) fn chi_with(state: &QuantumState, d1: &CMatrix, d2: &CMatrix) -> C64 {
    match state {
        QuantumState::Pure(psi) => {
            let mut acc = ZERO;
            for spin in [Spin::Down, Spin::Up] {
                let m = psi.branch_matrix(spin);
                let moved = d1 * &m * d2.transpose();
                acc += m.iter().zip(moved.iter()).map(|(a, b)| a.conj() * b).sum::<C64>();
            }
            acc
        }
        QuantumState::Mixed(rho) => {
            let dims = rho.dims().expect("joint-space density operator");
            let (n1, n2) = (dims.n_max_1(), dims.n_max_2());
            let m = rho.matrix();
            let mut acc = ZERO;
            for spin in [Spin::Down, Spin::Up] {
                let off = spin.index() * dims.mode_dim();
                // Σ ρ[(i,j),(k,l)] D1[k,i] D2[l,j]
                for i in 0..n1 {
                    for k in 0..n1 {
                        let d1ki = d1[(k, i)];
                        if d1ki == ZERO {
                            continue;
                        }
                        let mut inner = ZERO;
                        for j in 0..n2 {
                            let row = off + i * n2 + j;
                            for l in 0..n2 {
                                inner += m[(row, off + k * n2 + l)] * d2[(l, j)];
                            }
                        }
                        acc += inner * d1ki;
                    }
                }
            }
            acc
        }
    }
}

/// Expectation of the joint displacement `D(iβ₁) ⊗ D(iβ₂)` on the oscillators.
pub fn chi_exact(state: &QuantumState, s: &MeasurementSetting) -> Result<C64> {
    let dims = state.dims();
    s.check(dims)?;
    let d1 = mode_displacement(s.beta_1, dims.n_max_1());
    let d2 = mode_displacement(s.beta_2, dims.n_max_2());
    Ok(chi_with(state, &d1, &d2))
}

/// Spin-readout protocol: conditional displacements by `iβ₁/2` on mode 1 and
/// `iβ₂/2` on mode 2, then `⟨σ_z⟩` with `⟨↓|σ_z|↓⟩ = +1`.
pub fn chi_via_spin(prepared: &StateVector, s: &MeasurementSetting) -> Result<f64> {
    let dims = prepared.dims();
    s.check(dims)?;
    let [_, up] = prepared.spin_populations();
    if up > 1e-10 {
        return Err(invalid(format!("protocol needs the spin in |↓⟩, found |↑⟩ weight {up:.2e}")));
    }
    let half = C64::new(0.5, 0.0);
    let step1 = apply_conditional_displacement(prepared, &SdfParams::from_beta(Mode::One, I * s.beta_1 * half))?;
    let step2 = apply_conditional_displacement(&step1, &SdfParams::from_beta(Mode::Two, I * s.beta_2 * half))?;
    let [down, up] = step2.spin_populations();
    Ok(down - up)
}

/// Closed-form `χ` of `TMSV(r, φ)` in this crate's frame:
/// `exp(−½ cosh 2r (|β₁|² + |β₂|²) − sinh 2r · Re(e^{−iφ} β₁ β₂))`.
pub fn chi_gaussian_oracle(params: TmsvParams, s: &MeasurementSetting) -> f64 {
    let (c, sh) = ((2.0 * params.r()).cosh(), (2.0 * params.r()).sinh());
    let cross = (C64::from_polar(1.0, -params.phi()) * s.beta_1 * s.beta_2).re;
    (-0.5 * c * (s.beta_1.norm_sqr() + s.beta_2.norm_sqr()) - sh * cross).exp()
}

/// Projects on the `|↓⟩` branch (mid-circuit postselection) and renormalizes.
pub fn postselect_prep(joint: &StateVector) -> Result<(StateVector, f64)> {
    let dims = joint.dims();
    let block = dims.mode_dim();
    let p = joint.spin_populations()[0];
    if p < 1e-12 {
        return Err(Error::Degenerate(format!("|↓⟩ branch weight {p:.2e} is too small to postselect")));
    }
    let mut amps = CVector::zeros(dims.joint_dim());
    amps.rows_mut(0, block).copy_from(&joint.amplitudes().rows(0, block));
    Ok((StateVector::from_amplitudes(dims, amps)?, p))
}

/// Density-operator form of [`postselect_prep`].
pub fn postselect_prep_density(joint: &DensityOperator) -> Result<(DensityOperator, f64)> {
    let dims = joint.dims().ok_or_else(|| Error::Dimension("postselection needs a joint-space state".into()))?;
    let block = dims.mode_dim();
    let m = joint.matrix();
    let p = (0..block).map(|i| m[(i, i)].re).sum::<f64>();
    if p < 1e-12 {
        return Err(Error::Degenerate(format!("|↓⟩ branch weight {p:.2e} is too small to postselect")));
    }
    let mut out = CMatrix::zeros(dims.joint_dim(), dims.joint_dim());
    out.view_mut((0, 0), (block, block)).copy_from(&(m.view((0, 0), (block, block)) / C64::new(p, 0.0)));
    Ok((DensityOperator::from_matrix_unchecked(crate::fock::Space::Joint(dims), out), p))
}
