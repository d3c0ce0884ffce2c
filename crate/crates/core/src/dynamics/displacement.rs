use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{annihilation, LinearOperator, ModeDims, Space, Spin, StateVector};
use crate::linalg::{anti_hermitian_exp, identity, kron, CMatrix, C64};

/// Coherent-state tail allowed beyond the truncation for any displacement.
pub const DISPLACEMENT_LEAKAGE_BOUND: f64 = 1e-4;

/// Probability a coherent state `|β|` puts on levels `≥ n_max`.
pub fn coherent_tail(beta_abs: f64, n_max: usize) -> f64 {
    let x = beta_abs * beta_abs;
    if x == 0.0 {
        return 0.0;
    }
    // sum upward from n_max in log space; terms decay once n > x
    let ln_x = x.ln();
    let mut ln_fact: f64 = (1..=n_max).map(|k| (k as f64).ln()).sum();
    let mut tail = 0.0;
    let mut n = n_max;
    loop {
        let term = (-x + n as f64 * ln_x - ln_fact).exp();
        tail += term;
        n += 1;
        ln_fact += (n as f64).ln();
        if (n as f64) > x && term < 1e-18 * tail.max(1e-300) {
            break;
        }
        if n > n_max + 10_000 {
            break;
        }
    }
    tail.min(1.0)
}

/// Truncated `exp(ξ a† − ξ* a)` on `n_max` levels.
pub fn displacement_matrix(xi: C64, n_max: usize) -> CMatrix {
    let a = annihilation(n_max);
    let gen = a.adjoint() * xi - &a * xi.conj();
    anti_hermitian_exp(&gen)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    One,
    Two,
}

/// State-dependent force acting on one mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdfParams {
    pub mode: Mode,
    pub beta: C64,
    /// Drive phase and pulse length, when built from a pulse.
    pub phi_m: Option<f64>,
    pub tau: Option<f64>,
}

impl SdfParams {
    pub fn from_beta(mode: Mode, beta: C64) -> Self {
        SdfParams { mode, beta, phi_m: None, tau: None }
    }

    /// `β = −i (Ω/2) τ e^{iφ_m}`.
    pub fn from_pulse(mode: Mode, tau: f64, phi_m: f64, rabi_rate: f64) -> Result<Self> {
        if !(tau.is_finite() && tau >= 0.0) || !phi_m.is_finite() || !rabi_rate.is_finite() {
            return Err(invalid("SDF pulse parameters must be finite with τ ≥ 0"));
        }
        let beta = C64::new(0.0, -0.5 * rabi_rate * tau) * C64::from_polar(1.0, phi_m);
        Ok(SdfParams { mode, beta, phi_m: Some(phi_m), tau: Some(tau) })
    }

    fn n_max(&self, dims: ModeDims) -> usize {
        match self.mode {
            Mode::One => dims.n_max_1(),
            Mode::Two => dims.n_max_2(),
        }
    }

    pub(crate) fn check_leakage(&self, dims: ModeDims) -> Result<()> {
        check_displacement(self.beta.norm(), self.n_max(dims))
    }
}

pub fn check_displacement(beta_abs: f64, n_max: usize) -> Result<()> {
    if !beta_abs.is_finite() {
        return Err(invalid("displacement must be finite"));
    }
    let leakage = coherent_tail(beta_abs, n_max);
    if leakage > DISPLACEMENT_LEAKAGE_BOUND {
        return Err(Error::Leakage { leakage, bound: DISPLACEMENT_LEAKAGE_BOUND, n_max });
    }
    Ok(())
}

/// Dense `exp(σ_x ⊗ (β a_j† − β* a_j))` on the joint space.
pub fn conditional_displacement(p: &SdfParams, dims: ModeDims) -> Result<LinearOperator> {
    p.check_leakage(dims)?;
    let d = displacement_matrix(p.beta, p.n_max(dims));
    let (d_full, d_inv) = match p.mode {
        Mode::One => (kron(&d, &identity(dims.n_max_2())), kron(&d.adjoint(), &identity(dims.n_max_2()))),
        Mode::Two => (kron(&identity(dims.n_max_1()), &d), kron(&identity(dims.n_max_1()), &d.adjoint())),
    };
    let h = C64::new(0.5, 0.0);
    let plus = CMatrix::from_element(2, 2, h);
    let minus = CMatrix::from_row_slice(2, 2, &[h, -h, -h, h]);
    LinearOperator::new(Space::Joint(dims), kron(&plus, &d_full) + kron(&minus, &d_inv))
}

/// Applies the conditional displacement branch-wise without forming the joint matrix.
pub fn apply_conditional_displacement(state: &StateVector, p: &SdfParams) -> Result<StateVector> {
    let dims = state.dims();
    p.check_leakage(dims)?;
    let d = displacement_matrix(p.beta, p.n_max(dims));
    let down = state.branch_matrix(Spin::Down);
    let up = state.branch_matrix(Spin::Up);
    let sum = &down + &up;
    let diff = &down - &up;
    let (fwd, back) = match p.mode {
        Mode::One => (&d * sum, d.adjoint() * diff),
        Mode::Two => (sum * d.transpose(), diff * d.conjugate()),
    };
    let half = C64::new(0.5, 0.0);
    let new_down = (&fwd + &back) * half;
    let new_up = (fwd - back) * half;
    let mut amps = state.amplitudes().clone();
    let block = dims.mode_dim();
    for (k, z) in new_down.transpose().iter().enumerate() {
        amps[k] = *z;
    }
    for (k, z) in new_up.transpose().iter().enumerate() {
        amps[block + k] = *z;
    }
    Ok(StateVector::from_normalized(dims, amps))
}
