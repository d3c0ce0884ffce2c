//! Truncated Fock-space states and operators for one spin and two oscillators.
//!
//! The joint basis is ordered spin ⊗ mode 1 ⊗ mode 2 with the spin index
//! slowest: `index = spin · n₁n₂ + n₁ · n₂_max + n₂`, with `|↓⟩` as spin index
//! 0. All constructors return unit-norm states; truncated series are
//! renormalized and report the discarded probability as a deficit.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{anti_hermitian_exp, identity, kron, CMatrix, CVector, C64, ONE, ZERO};

pub const SPIN_DIM: usize = 2;

/// Default bound on the probability a truncated series may discard.
pub const DEFAULT_MAX_DEFICIT: f64 = 1e-4;

const NORM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spin {
    Down,
    Up,
}

impl Spin {
    pub fn index(self) -> usize {
        match self {
            Spin::Down => 0,
            Spin::Up => 1,
        }
    }

    pub fn from_index(i: usize) -> Spin {
        if i == 0 {
            Spin::Down
        } else {
            Spin::Up
        }
    }
}

/// Fock truncation of the two oscillators; the spin is always two-level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawModeDims")]
pub struct ModeDims {
    n_max_1: usize,
    n_max_2: usize,
}

#[derive(Deserialize)]
struct RawModeDims {
    n_max_1: usize,
    n_max_2: usize,
}

impl TryFrom<RawModeDims> for ModeDims {
    type Error = Error;
    fn try_from(raw: RawModeDims) -> Result<Self> {
        ModeDims::new(raw.n_max_1, raw.n_max_2)
    }
}

impl ModeDims {
    pub fn new(n_max_1: usize, n_max_2: usize) -> Result<Self> {
        if n_max_1 < 2 || n_max_2 < 2 {
            return Err(invalid(format!(
                "each mode needs at least 2 Fock levels, got ({n_max_1}, {n_max_2})"
            )));
        }
        Ok(ModeDims { n_max_1, n_max_2 })
    }

    pub fn symmetric(n_max: usize) -> Result<Self> {
        Self::new(n_max, n_max)
    }

    pub fn n_max_1(&self) -> usize {
        self.n_max_1
    }

    pub fn n_max_2(&self) -> usize {
        self.n_max_2
    }

    pub fn spin_dim(&self) -> usize {
        SPIN_DIM
    }

    /// Dimension of the two-oscillator factor.
    pub fn mode_dim(&self) -> usize {
        self.n_max_1 * self.n_max_2
    }

    pub fn joint_dim(&self) -> usize {
        SPIN_DIM * self.mode_dim()
    }

    pub fn index(&self, spin: Spin, n1: usize, n2: usize) -> usize {
        debug_assert!(n1 < self.n_max_1 && n2 < self.n_max_2);
        spin.index() * self.mode_dim() + n1 * self.n_max_2 + n2
    }

    pub fn unpack(&self, idx: usize) -> (Spin, usize, usize) {
        let block = self.mode_dim();
        let spin = Spin::from_index(idx / block);
        let rest = idx % block;
        (spin, rest / self.n_max_2, rest % self.n_max_2)
    }

    /// True when both truncations are at least as large and one is strictly larger.
    pub fn strictly_contains(&self, other: &ModeDims) -> bool {
        self.n_max_1 >= other.n_max_1
            && self.n_max_2 >= other.n_max_2
            && (self.n_max_1 > other.n_max_1 || self.n_max_2 > other.n_max_2)
    }

    /// Joint indices whose Fock levels both lie below `n_max − guard`.
    pub fn guarded_indices(&self, guard: usize) -> Vec<usize> {
        let lim1 = self.n_max_1.saturating_sub(guard);
        let lim2 = self.n_max_2.saturating_sub(guard);
        (0..self.joint_dim())
            .filter(|&i| {
                let (_, n1, n2) = self.unpack(i);
                n1 < lim1 && n2 < lim2
            })
            .collect()
    }
}

/// The Hilbert space an operator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    Spin,
    Mode(usize),
    Joint(ModeDims),
}

impl Space {
    pub fn dim(&self) -> usize {
        match self {
            Space::Spin => SPIN_DIM,
            Space::Mode(n) => *n,
            Space::Joint(d) => d.joint_dim(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearOperator {
    space: Space,
    matrix: CMatrix,
}

impl LinearOperator {
    pub fn new(space: Space, matrix: CMatrix) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::Dimension(format!(
                "operator is {}x{}, space needs {d}x{d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(LinearOperator { space, matrix })
    }

    pub fn identity(space: Space) -> Self {
        LinearOperator { space, matrix: identity(space.dim()) }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn adjoint(&self) -> LinearOperator {
        LinearOperator { space: self.space, matrix: self.matrix.adjoint() }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Operator product `self · rhs`.
    pub fn compose(&self, rhs: &LinearOperator) -> Result<LinearOperator> {
        if self.space != rhs.space {
            return Err(Error::Dimension("operator spaces differ".into()));
        }
        Ok(LinearOperator { space: self.space, matrix: &self.matrix * &rhs.matrix })
    }

    /// Applies a unitary to a state. The result is renormalization-free; the
    /// caller is responsible for unitarity.
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if self.space != Space::Joint(state.dims) {
            return Err(Error::Dimension("operator does not act on the state's space".into()));
        }
        Ok(StateVector { dims: state.dims, amplitudes: &self.matrix * &state.amplitudes })
    }
}

/// Truncated annihilation and creation operators on `n_max` levels.
pub fn ladder_operators(n_max: usize) -> Result<(LinearOperator, LinearOperator)> {
    if n_max < 2 {
        return Err(invalid(format!("n_max must be at least 2, got {n_max}")));
    }
    let a = annihilation(n_max);
    let ad = a.adjoint();
    Ok((
        LinearOperator { space: Space::Mode(n_max), matrix: a },
        LinearOperator { space: Space::Mode(n_max), matrix: ad },
    ))
}

pub(crate) fn annihilation(n_max: usize) -> CMatrix {
    let mut a = CMatrix::zeros(n_max, n_max);
    for n in 1..n_max {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Spin operators in the (↓, ↑) basis. `sigma_z` follows ⟨↓|σ_z|↓⟩ = +1.
pub struct SpinOperators {
    pub sigma_plus: LinearOperator,
    pub sigma_minus: LinearOperator,
    pub sigma_x: LinearOperator,
    pub sigma_z: LinearOperator,
    pub proj_up: LinearOperator,
    pub proj_down: LinearOperator,
}

pub fn spin_operators() -> SpinOperators {
    let m = |v: [C64; 4]| LinearOperator { space: Space::Spin, matrix: CMatrix::from_row_slice(2, 2, &v) };
    SpinOperators {
        // |↑⟩⟨↓|
        sigma_plus: m([ZERO, ZERO, ONE, ZERO]),
        sigma_minus: m([ZERO, ONE, ZERO, ZERO]),
        sigma_x: m([ZERO, ONE, ONE, ZERO]),
        sigma_z: m([ONE, ZERO, ZERO, -ONE]),
        proj_up: m([ZERO, ZERO, ZERO, ONE]),
        proj_down: m([ONE, ZERO, ZERO, ZERO]),
    }
}

/// Kronecker product spin ⊗ mode 1 ⊗ mode 2.
pub fn embed(
    op_spin: &LinearOperator,
    op_1: &LinearOperator,
    op_2: &LinearOperator,
) -> Result<LinearOperator> {
    let (n1, n2) = match (op_spin.space, op_1.space, op_2.space) {
        (Space::Spin, Space::Mode(n1), Space::Mode(n2)) => (n1, n2),
        _ => {
            return Err(Error::Dimension(
                "embed expects (spin, mode, mode) factors".into(),
            ))
        }
    };
    let dims = ModeDims::new(n1, n2)?;
    let matrix = kron(&kron(&op_spin.matrix, &op_1.matrix), &op_2.matrix);
    LinearOperator::new(Space::Joint(dims), matrix)
}

/// Pure state on the joint space, unit norm.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    dims: ModeDims,
    amplitudes: CVector,
}

impl StateVector {
    /// Builds a state from raw amplitudes, normalizing them.
    pub fn from_amplitudes(dims: ModeDims, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != dims.joint_dim() {
            return Err(Error::Dimension(format!(
                "expected {} amplitudes, got {}",
                dims.joint_dim(),
                amplitudes.len()
            )));
        }
        let norm = amplitudes.norm();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(invalid("state has zero or non-finite norm"));
        }
        Ok(StateVector { dims, amplitudes: amplitudes / C64::new(norm, 0.0) })
    }

    /// Wraps amplitudes that are already unit norm (checked in debug builds).
    pub(crate) fn from_normalized(dims: ModeDims, amplitudes: CVector) -> Self {
        debug_assert!((amplitudes.norm() - 1.0).abs() < 1e-8);
        StateVector { dims, amplitudes }
    }

    pub fn basis(dims: ModeDims, spin: Spin, n1: usize, n2: usize) -> Result<Self> {
        if n1 >= dims.n_max_1 || n2 >= dims.n_max_2 {
            return Err(invalid(format!("Fock state |{n1},{n2}⟩ outside truncation")));
        }
        let mut amps = CVector::zeros(dims.joint_dim());
        amps[dims.index(spin, n1, n2)] = ONE;
        Ok(StateVector { dims, amplitudes: amps })
    }

    /// `|↓⟩ ⊗ |0, 0⟩`.
    pub fn ground(dims: ModeDims) -> Self {
        Self::basis(dims, Spin::Down, 0, 0).expect("ground state always fits")
    }

    pub fn dims(&self) -> ModeDims {
        self.dims
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn amplitude(&self, spin: Spin, n1: usize, n2: usize) -> C64 {
        self.amplitudes[self.dims.index(spin, n1, n2)]
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.dims != other.dims {
            return Err(Error::Dimension("states live on different truncations".into()));
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// Amplitudes of one spin branch as an `n₁ × n₂` matrix.
    pub fn branch_matrix(&self, spin: Spin) -> CMatrix {
        let (n1, n2) = (self.dims.n_max_1, self.dims.n_max_2);
        let off = spin.index() * self.dims.mode_dim();
        DMatrix::from_fn(n1, n2, |i, j| self.amplitudes[off + i * n2 + j])
    }

    /// Probability of each spin branch.
    pub fn spin_populations(&self) -> [f64; 2] {
        let block = self.dims.mode_dim();
        let p = |s: usize| {
            self.amplitudes.rows(s * block, block).iter().map(|z| z.norm_sqr()).sum::<f64>()
        };
        [p(0), p(1)]
    }

    /// Marginal Fock populations of modes 1 and 2.
    pub fn mode_populations(&self) -> (Vec<f64>, Vec<f64>) {
        let mut p1 = vec![0.0; self.dims.n_max_1];
        let mut p2 = vec![0.0; self.dims.n_max_2];
        for (idx, z) in self.amplitudes.iter().enumerate() {
            let (_, n1, n2) = self.dims.unpack(idx);
            let w = z.norm_sqr();
            p1[n1] += w;
            p2[n2] += w;
        }
        (p1, p2)
    }

    /// Mean phonon numbers ⟨n₁⟩, ⟨n₂⟩.
    pub fn mean_numbers(&self) -> (f64, f64) {
        let (p1, p2) = self.mode_populations();
        let mean = |p: &[f64]| p.iter().enumerate().map(|(n, w)| n as f64 * w).sum::<f64>();
        (mean(&p1), mean(&p2))
    }

    /// Re-expresses the state on a truncation at least as large (zero padding).
    pub fn embed_into(&self, dims: ModeDims) -> Result<StateVector> {
        if dims.n_max_1 < self.dims.n_max_1 || dims.n_max_2 < self.dims.n_max_2 {
            return Err(Error::Dimension("target truncation is smaller".into()));
        }
        let mut amps = CVector::zeros(dims.joint_dim());
        for (idx, z) in self.amplitudes.iter().enumerate() {
            let (s, n1, n2) = self.dims.unpack(idx);
            amps[dims.index(s, n1, n2)] = *z;
        }
        Ok(StateVector { dims, amplitudes: amps })
    }
}

/// Density operator with unit trace.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    space: Space,
    matrix: CMatrix,
}

impl DensityOperator {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(space: Space, matrix: CMatrix) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::Dimension(format!("density matrix must be {d}x{d}")));
        }
        let herm = crate::linalg::max_abs(&(&matrix - matrix.adjoint()));
        if herm > NORM_TOL {
            return Err(invalid(format!("density matrix not Hermitian (deviation {herm:.2e})")));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > NORM_TOL || tr.im.abs() > NORM_TOL {
            return Err(invalid(format!("density matrix trace {tr} is not 1")));
        }
        let min_eig = matrix.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < -1e-10 {
            return Err(invalid(format!("density matrix has eigenvalue {min_eig:.2e}")));
        }
        Ok(DensityOperator { space, matrix })
    }

    pub(crate) fn from_matrix_unchecked(space: Space, matrix: CMatrix) -> Self {
        DensityOperator { space, matrix }
    }

    pub fn from_pure(state: &StateVector) -> Self {
        let v = &state.amplitudes;
        DensityOperator { space: Space::Joint(state.dims), matrix: v * v.adjoint() }
    }

    /// Convex mixture `Σ wᵢ |ψᵢ⟩⟨ψᵢ|`; weights are renormalized.
    pub fn mixture(components: &[(f64, StateVector)]) -> Result<Self> {
        let first = components.first().ok_or_else(|| invalid("empty mixture"))?;
        let dims = first.1.dims;
        let total: f64 = components.iter().map(|(w, _)| *w).sum();
        if total <= 0.0 || components.iter().any(|(w, _)| *w < 0.0) {
            return Err(invalid("mixture weights must be non-negative with positive sum"));
        }
        let mut matrix = CMatrix::zeros(dims.joint_dim(), dims.joint_dim());
        for (w, psi) in components {
            if psi.dims != dims {
                return Err(Error::Dimension("mixture components differ in truncation".into()));
            }
            let v = &psi.amplitudes;
            matrix += (v * v.adjoint()) * C64::new(*w / total, 0.0);
        }
        Ok(DensityOperator { space: Space::Joint(dims), matrix })
    }

    /// Zero-padded copy on a larger joint truncation.
    pub fn embed_into(&self, dims: ModeDims) -> Result<DensityOperator> {
        let small = self.dims().ok_or_else(|| Error::Dimension("only joint-space states embed".into()))?;
        if dims.n_max_1 < small.n_max_1 || dims.n_max_2 < small.n_max_2 {
            return Err(Error::Dimension("target truncation is smaller".into()));
        }
        let map: Vec<usize> = (0..small.joint_dim())
            .map(|i| {
                let (s, n1, n2) = small.unpack(i);
                dims.index(s, n1, n2)
            })
            .collect();
        let mut matrix = CMatrix::zeros(dims.joint_dim(), dims.joint_dim());
        for (i, &a) in map.iter().enumerate() {
            for (j, &b) in map.iter().enumerate() {
                matrix[(a, b)] = self.matrix[(i, j)];
            }
        }
        Ok(DensityOperator { space: Space::Joint(dims), matrix })
    }

    /// `U ρ U†` for a unitary `U` on the same space.
    pub fn evolve(&self, u: &LinearOperator) -> Result<DensityOperator> {
        if u.space != self.space {
            return Err(Error::Dimension("operator acts on a different space".into()));
        }
        let m = &u.matrix * &self.matrix * u.matrix.adjoint();
        Ok(DensityOperator { space: self.space, matrix: m })
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dims(&self) -> Option<ModeDims> {
        match self.space {
            Space::Joint(d) => Some(d),
            _ => None,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Diagonal populations.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.matrix.nrows()).map(|i| self.matrix[(i, i)].re).collect()
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity_with(&self, state: &StateVector) -> Result<f64> {
        if self.space != Space::Joint(state.dims) {
            return Err(Error::Dimension("state and density operator differ in space".into()));
        }
        let v = &state.amplitudes;
        Ok(v.dotc(&(&self.matrix * v)).re)
    }

    /// Spectral decomposition into weighted pure states, dropping weights
    /// below `min_weight`. Diagonal operators skip the eigensolver.
    pub fn pure_components(&self, min_weight: f64) -> Result<Vec<(f64, StateVector)>> {
        let dims = self.dims().ok_or_else(|| Error::Dimension("needs a joint-space operator".into()))?;
        let n = self.matrix.nrows();
        let off_diag = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .any(|(i, j)| self.matrix[(i, j)].norm() > 1e-15);
        let mut out = Vec::new();
        if !off_diag {
            for i in 0..n {
                let w = self.matrix[(i, i)].re;
                if w > min_weight {
                    let mut amps = CVector::zeros(n);
                    amps[i] = ONE;
                    out.push((w, StateVector { dims, amplitudes: amps }));
                }
            }
        } else {
            let eig = self.matrix.clone().symmetric_eigen();
            for (k, &w) in eig.eigenvalues.iter().enumerate() {
                if w > min_weight {
                    let v = eig.eigenvectors.column(k).into_owned();
                    out.push((w, StateVector::from_amplitudes(dims, v)?));
                }
            }
        }
        Ok(out)
    }
}

/// Two-mode squeezing parameters: `r ≥ 0` and correlation phase `phi ∈ [0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TmsvParams {
    r: f64,
    phi: f64,
}

impl TmsvParams {
    pub fn new(r: f64, phi: f64) -> Result<Self> {
        if !r.is_finite() || r < 0.0 {
            return Err(invalid(format!("squeezing parameter must be finite and ≥ 0, got {r}")));
        }
        if !phi.is_finite() {
            return Err(invalid("correlation phase must be finite"));
        }
        Ok(TmsvParams { r, phi: phi.rem_euclid(TAU) })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

/// A renormalized truncated state together with the probability it discarded.
#[derive(Clone, Debug)]
pub struct Truncated {
    pub state: StateVector,
    pub deficit: f64,
}

/// Probability outside the first `n_max` terms of the TMSV series: `tanh(r)^(2 n_max)`.
pub fn tmsv_deficit(r: f64, n_max: usize) -> f64 {
    r.tanh().powi(2 * n_max as i32)
}

/// Smallest symmetric truncation whose TMSV deficit is at most `max_deficit`.
pub fn tmsv_truncation_for(r: f64, max_deficit: f64) -> usize {
    let mut n = 2;
    while tmsv_deficit(r, n) > max_deficit {
        n += 1;
    }
    n
}

/// `Σ (e^{iφ} tanh r)^n / cosh r |↓, n, n⟩`, truncated and renormalized.
pub fn tmsv_state(params: TmsvParams, dims: ModeDims) -> Result<Truncated> {
    tmsv_state_with_tolerance(params, dims, DEFAULT_MAX_DEFICIT)
}

pub fn tmsv_state_with_tolerance(
    params: TmsvParams,
    dims: ModeDims,
    max_deficit: f64,
) -> Result<Truncated> {
    require_symmetric(dims)?;
    let n_max = dims.n_max_1;
    let deficit = tmsv_deficit(params.r, n_max);
    if deficit > max_deficit {
        return Err(Error::Truncation { deficit, allowed: max_deficit });
    }
    let amps = tmsv_series(params, dims);
    Ok(Truncated { state: StateVector::from_amplitudes(dims, amps)?, deficit })
}

fn require_symmetric(dims: ModeDims) -> Result<()> {
    if dims.n_max_1 != dims.n_max_2 {
        return Err(Error::Dimension(format!(
            "TMSV states need equal truncations, got ({}, {})",
            dims.n_max_1, dims.n_max_2
        )));
    }
    Ok(())
}

/// Unnormalized truncated series of the TMSV state on the |↓⟩ branch.
pub(crate) fn tmsv_series(params: TmsvParams, dims: ModeDims) -> CVector {
    let mut amps = CVector::zeros(dims.joint_dim());
    let ratio = C64::from_polar(params.r.tanh(), params.phi);
    let mut coeff = C64::new(1.0 / params.r.cosh(), 0.0);
    for n in 0..dims.n_max_1.min(dims.n_max_2) {
        amps[dims.index(Spin::Down, n, n)] = coeff;
        coeff *= ratio;
    }
    amps
}

/// Two-mode squeeze operator on the oscillators, embedded as `I_spin ⊗ S`.
///
/// The generator is `r (e^{iφ} a₁†a₂† − e^{−iφ} a₁a₂)` so that `S|0,0⟩`
/// reproduces [`tmsv_state`] for every phase.
pub fn squeeze2_unitary(params: TmsvParams, dims: ModeDims) -> Result<LinearOperator> {
    let s = two_mode_squeeze(params, dims);
    LinearOperator::new(Space::Joint(dims), kron(&identity(SPIN_DIM), &s))
}

pub(crate) fn two_mode_squeeze(params: TmsvParams, dims: ModeDims) -> CMatrix {
    let a1 = kron(&annihilation(dims.n_max_1), &identity(dims.n_max_2));
    let a2 = kron(&identity(dims.n_max_1), &annihilation(dims.n_max_2));
    let pair = &a1 * &a2;
    let up = pair.adjoint() * C64::from_polar(params.r, params.phi);
    let down = &pair * C64::from_polar(params.r, -params.phi);
    anti_hermitian_exp(&(up - down))
}

/// Even superposition of `TMSV(r, 0)` and `TMSV(r, π)`, renormalized.
///
/// The branches overlap by `sech(2r)`, so the nominal `1/√2` prefactor does
/// not normalize the state; the deficit is relative to the untruncated norm
/// `1 + sech(2r)` of that nominal superposition.
pub fn superposition_state(r: f64, dims: ModeDims) -> Result<Truncated> {
    superposition_state_with_tolerance(r, dims, DEFAULT_MAX_DEFICIT)
}

pub fn superposition_state_with_tolerance(
    r: f64,
    dims: ModeDims,
    max_deficit: f64,
) -> Result<Truncated> {
    require_symmetric(dims)?;
    let plus = tmsv_series(TmsvParams::new(r, 0.0)?, dims);
    let minus = tmsv_series(TmsvParams::new(r, std::f64::consts::PI)?, dims);
    let amps = (plus + minus) * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let full_norm_sq = 1.0 + 1.0 / (2.0 * r).cosh();
    let deficit = (1.0 - amps.norm_squared() / full_norm_sq).max(0.0);
    if deficit > max_deficit {
        return Err(Error::Truncation { deficit, allowed: max_deficit });
    }
    Ok(Truncated { state: StateVector::from_amplitudes(dims, amps)?, deficit })
}

/// Bose–Einstein populations `n̄ⁿ / (1 + n̄)ⁿ⁺¹`, truncated and renormalized.
pub fn thermal_populations(n_bar: f64, n_max: usize) -> Result<Vec<f64>> {
    if !n_bar.is_finite() || n_bar < 0.0 {
        return Err(invalid(format!("thermal occupation must be ≥ 0, got {n_bar}")));
    }
    if n_max < 1 {
        return Err(invalid("thermal state needs at least one level"));
    }
    let ratio = n_bar / (1.0 + n_bar);
    let mut p: Vec<f64> = (0..n_max).map(|n| ratio.powi(n as i32) / (1.0 + n_bar)).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    Ok(p)
}

/// Single-mode thermal state.
pub fn thermal_state(n_bar: f64, n_max: usize) -> Result<DensityOperator> {
    let p = thermal_populations(n_bar, n_max)?;
    let matrix = CMatrix::from_diagonal(&CVector::from_iterator(n_max, p.iter().map(|&x| C64::new(x, 0.0))));
    Ok(DensityOperator::from_matrix_unchecked(Space::Mode(n_max), matrix))
}

/// `|↓⟩⟨↓| ⊗ ρ_th(n̄₁) ⊗ ρ_th(n̄₂)`.
pub fn thermal_joint_state(n_bar_1: f64, n_bar_2: f64, dims: ModeDims) -> Result<DensityOperator> {
    let p1 = thermal_populations(n_bar_1, dims.n_max_1)?;
    let p2 = thermal_populations(n_bar_2, dims.n_max_2)?;
    let mut matrix = CMatrix::zeros(dims.joint_dim(), dims.joint_dim());
    for (n1, w1) in p1.iter().enumerate() {
        for (n2, w2) in p2.iter().enumerate() {
            let i = dims.index(Spin::Down, n1, n2);
            matrix[(i, i)] = C64::new(w1 * w2, 0.0);
        }
    }
    Ok(DensityOperator::from_matrix_unchecked(Space::Joint(dims), matrix))
}

/// `|↓⟩⟨↓| ⊗ S ρ_th(n̄₁) ⊗ ρ_th(n̄₂) S†` with `S` the two-mode squeeze of
/// [`squeeze2_unitary`], exponentiated on the oscillators only.
pub fn squeezed_thermal_state(params: TmsvParams, n_bar_1: f64, n_bar_2: f64, dims: ModeDims) -> Result<DensityOperator> {
    let p1 = thermal_populations(n_bar_1, dims.n_max_1)?;
    let p2 = thermal_populations(n_bar_2, dims.n_max_2)?;
    let s = two_mode_squeeze(params, dims);
    let weights = CVector::from_iterator(dims.mode_dim(), p1.iter().flat_map(|a| p2.iter().map(move |b| C64::new(a * b, 0.0))));
    let mut scaled = s.clone();
    for (j, w) in weights.iter().enumerate() {
        scaled.column_mut(j).scale_mut(w.re);
    }
    let block = scaled * s.adjoint();
    let mut matrix = CMatrix::zeros(dims.joint_dim(), dims.joint_dim());
    let off = Spin::Down.index() * dims.mode_dim();
    matrix.view_mut((off, off), (dims.mode_dim(), dims.mode_dim())).copy_from(&block);
    Ok(DensityOperator::from_matrix_unchecked(Space::Joint(dims), matrix))
}

/// `|⟨a|b⟩|²`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr().min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_restricted;
    use approx::assert_abs_diff_eq;

    fn dims(n: usize) -> ModeDims {
        ModeDims::symmetric(n).unwrap()
    }

    #[test]
    fn ladder_matrix_elements() {
        let (a, ad) = ladder_operators(5).unwrap();
        // a|1⟩ = |0⟩
        let col = a.matrix().column(1);
        assert_eq!(col[0], ONE);
        assert!(col.iter().skip(1).all(|z| *z == ZERO));
        let number = ad.matrix() * a.matrix();
        for n in 0..5 {
            assert_abs_diff_eq!(number[(n, n)].re, n as f64, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(ad.matrix()[(2, 1)].re, 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(ad.matrix(), &a.matrix().adjoint());
        assert!(ladder_operators(1).is_err());
    }

    #[test]
    fn embed_identities_and_traces() {
        let sp = spin_operators();
        let id = |n| LinearOperator::identity(Space::Mode(n));
        let eye = embed(&LinearOperator::identity(Space::Spin), &id(3), &id(4)).unwrap();
        assert_eq!(eye.matrix(), &identity(24));
        let z = embed(&sp.sigma_z, &id(6), &id(6)).unwrap();
        assert_eq!(z.space().dim(), 72);
        assert_abs_diff_eq!(z.trace().norm(), 0.0);
        assert!(embed(&id(2), &id(3), &id(3)).is_err());
    }

    #[test]
    fn basis_ordering_has_spin_slowest() {
        let d = ModeDims::new(3, 4).unwrap();
        assert_eq!(d.index(Spin::Up, 0, 0), 12);
        assert_eq!(d.index(Spin::Down, 1, 2), 6);
        assert_eq!(d.unpack(19), (Spin::Up, 1, 3));
    }

    #[test]
    fn tmsv_vacuum_limit_and_amplitudes() {
        let t = tmsv_state(TmsvParams::new(0.0, 0.0).unwrap(), dims(6)).unwrap();
        assert_eq!(t.state, StateVector::ground(dims(6)));
        assert_eq!(t.deficit, 0.0);

        let raw = tmsv_series(TmsvParams::new(1.0, 0.0).unwrap(), dims(32));
        assert_abs_diff_eq!(raw[0].re, 0.648_054, epsilon = 1e-6);
        let deficit = tmsv_deficit(1.0, 32);
        assert_abs_diff_eq!(deficit, 1.0 - raw.norm_squared(), epsilon = 1e-15);
        assert!((deficit - 2.7e-8).abs() < 0.1e-8, "{deficit}");
    }

    #[test]
    fn tmsv_truncation_guard() {
        let p = TmsvParams::new(1.0, 0.0).unwrap();
        assert!(matches!(tmsv_state(p, dims(6)), Err(Error::Truncation { .. })));
        assert!(tmsv_state_with_tolerance(p, dims(6), 1.0).is_ok());
        assert!(tmsv_state(p, ModeDims::new(32, 30).unwrap()).is_err());
    }

    #[test]
    fn tmsv_mean_number_is_sinh_squared() {
        let t = tmsv_state(TmsvParams::new(1.0, 0.0).unwrap(), dims(40)).unwrap();
        let (m1, m2) = t.state.mean_numbers();
        assert_abs_diff_eq!(m1, 1.0f64.sinh().powi(2), epsilon = 1e-5);
        assert_abs_diff_eq!(m1, 1.3811, epsilon = 1e-4);
        assert_abs_diff_eq!(m1, m2, epsilon = 1e-14);
    }

    #[test]
    fn tmsv_phase_wraps() {
        let p = TmsvParams::new(0.5, -std::f64::consts::FRAC_PI_2).unwrap();
        assert_abs_diff_eq!(p.phi(), 1.5 * std::f64::consts::PI, epsilon = 1e-15);
        assert!(TmsvParams::new(-0.1, 0.0).is_err());
        assert!(TmsvParams::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn squeeze_unitary_matches_series() {
        let d = dims(20);
        for phi in [0.0, 1.1] {
            let p = TmsvParams::new(0.5, phi).unwrap();
            let s = squeeze2_unitary(p, d).unwrap();
            let out = s.apply(&StateVector::ground(d)).unwrap();
            let target = tmsv_state(p, d).unwrap().state;
            assert!(fidelity(&target, &out).unwrap() >= 1.0 - 1e-6);
        }
        let id = squeeze2_unitary(TmsvParams::new(0.0, 0.0).unwrap(), dims(5)).unwrap();
        assert!(crate::linalg::max_abs(&(id.matrix() - identity(50))) < 1e-14);
    }

    #[test]
    fn evolving_a_pure_projector_matches_applying_the_unitary() {
        let d = dims(10);
        let s = squeeze2_unitary(TmsvParams::new(0.4, 0.2).unwrap(), d).unwrap();
        let vac = StateVector::ground(d);
        let rho = DensityOperator::from_pure(&vac).evolve(&s).unwrap();
        let direct = DensityOperator::from_pure(&s.apply(&vac).unwrap());
        assert!(crate::linalg::max_abs(&(rho.matrix() - direct.matrix())) < 1e-13);
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
        let wrong = squeeze2_unitary(TmsvParams::new(0.4, 0.2).unwrap(), dims(6)).unwrap();
        assert!(rho.evolve(&wrong).is_err());
    }

    #[test]
    fn density_embedding_matches_state_embedding() {
        let psi = tmsv_state(TmsvParams::new(0.3, 0.5).unwrap(), dims(4)).unwrap().state;
        let big = ModeDims::new(6, 5).unwrap();
        let a = DensityOperator::from_pure(&psi).embed_into(big).unwrap();
        let b = DensityOperator::from_pure(&psi.embed_into(big).unwrap());
        assert_eq!(a, b);
        assert!(DensityOperator::from_pure(&psi).embed_into(dims(3)).is_err());
    }

    #[test]
    fn squeezed_thermal_matches_evolved_thermal() {
        let d = dims(7);
        let p = TmsvParams::new(0.6, 0.4).unwrap();
        let fast = squeezed_thermal_state(p, 0.3, 0.1, d).unwrap();
        let slow = thermal_joint_state(0.3, 0.1, d).unwrap().evolve(&squeeze2_unitary(p, d).unwrap()).unwrap();
        assert!(crate::linalg::max_abs(&(fast.matrix() - slow.matrix())) < 1e-12);
        let cold = squeezed_thermal_state(p, 0.0, 0.0, d).unwrap();
        let pure = DensityOperator::from_pure(&squeeze2_unitary(p, d).unwrap().apply(&StateVector::ground(d)).unwrap());
        assert!(crate::linalg::max_abs(&(cold.matrix() - pure.matrix())) < 1e-12);
    }

    #[test]
    fn squeeze_unitarity_and_inverse_on_guard_band() {
        let d = dims(12);
        let guard = d.guarded_indices(4);
        let n = d.joint_dim();
        for r in [0.3, 1.0] {
            let s = squeeze2_unitary(TmsvParams::new(r, 0.0).unwrap(), d).unwrap();
            let dev = s.matrix().adjoint() * s.matrix() - identity(n);
            assert!(max_abs_restricted(&dev, &guard) <= 1e-8);
            // S(−r) = S(r, φ+π)
            let inv = squeeze2_unitary(TmsvParams::new(r, std::f64::consts::PI).unwrap(), d).unwrap();
            let prod = s.matrix() * inv.matrix() - identity(n);
            assert!(max_abs_restricted(&prod, &guard) <= 1e-6);
        }
    }

    #[test]
    fn superposition_overlap_and_norm() {
        let d = dims(40);
        let t0 = tmsv_state(TmsvParams::new(1.0, 0.0).unwrap(), d).unwrap().state;
        let tpi = tmsv_state(TmsvParams::new(1.0, std::f64::consts::PI).unwrap(), d).unwrap().state;
        let overlap = tpi.inner(&t0).unwrap();
        assert_abs_diff_eq!(overlap.re, 1.0 / 2.0f64.cosh(), epsilon = 1e-8);
        assert_abs_diff_eq!(overlap.re, 0.265_80, epsilon = 1e-5);
        let raw = (t0.amplitudes() + tpi.amplitudes()) * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        assert_abs_diff_eq!(raw.norm_squared(), 1.265_80, epsilon = 1e-5);

        let s = superposition_state(1.0, d).unwrap();
        assert_abs_diff_eq!(s.state.norm(), 1.0, epsilon = 1e-12);
        // only even Fock pairs survive
        assert!(s.state.amplitude(Spin::Down, 1, 1).norm() < 1e-15);
        let vac = superposition_state(0.0, dims(4)).unwrap().state;
        assert_eq!(vac, StateVector::ground(dims(4)));
    }

    #[test]
    fn thermal_populations_match_bose_einstein() {
        let rho = thermal_state(0.06, 20).unwrap();
        assert_abs_diff_eq!(rho.populations()[0], 1.0 / 1.06, epsilon = 1e-10);
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-12);
        let cold = thermal_state(0.0, 5).unwrap();
        assert_eq!(cold.populations(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(thermal_state(-0.1, 5).is_err());
        // survives full validation
        DensityOperator::new(rho.space(), rho.matrix().clone()).unwrap();
    }

    #[test]
    fn fidelity_cases() {
        let d = dims(30);
        let a = StateVector::basis(d, Spin::Down, 1, 1).unwrap();
        let b = StateVector::basis(d, Spin::Down, 2, 1).unwrap();
        assert_eq!(fidelity(&a, &a).unwrap(), 1.0);
        assert_eq!(fidelity(&a, &b).unwrap(), 0.0);
        let t = tmsv_state_with_tolerance(TmsvParams::new(1.0, 0.0).unwrap(), d, 1.0).unwrap();
        let g = StateVector::ground(d);
        // renormalization shifts this by the (tiny) deficit only
        assert_abs_diff_eq!(fidelity(&g, &t.state).unwrap(), 1.0 / 1f64.cosh().powi(2), epsilon = 1e-5);
        assert_abs_diff_eq!(1.0 / 1f64.cosh().powi(2), 0.419_97, epsilon = 1e-5);
        assert!(fidelity(&a, &StateVector::ground(dims(4))).is_err());
    }

    #[test]
    fn density_validation_rejects_bad_input() {
        let d = dims(2);
        let mut m = CMatrix::zeros(8, 8);
        m[(0, 0)] = C64::new(0.5, 0.0);
        assert!(DensityOperator::new(Space::Joint(d), m.clone()).is_err());
        m[(1, 1)] = C64::new(0.5, 0.0);
        m[(0, 1)] = C64::new(0.0, 0.1);
        assert!(DensityOperator::new(Space::Joint(d), m.clone()).is_err());
        m[(1, 0)] = C64::new(0.0, -0.1);
        assert!(DensityOperator::new(Space::Joint(d), m).is_ok());
    }

    #[test]
    fn pure_components_reassemble() {
        let d = dims(4);
        let a = StateVector::basis(d, Spin::Down, 1, 0).unwrap();
        let t = tmsv_state_with_tolerance(TmsvParams::new(0.4, 0.0).unwrap(), d, 1.0).unwrap().state;
        let rho = DensityOperator::mixture(&[(0.3, a), (0.7, t)]).unwrap();
        let parts = rho.pure_components(1e-14).unwrap();
        let again = DensityOperator::mixture(&parts).unwrap();
        assert!(crate::linalg::max_abs(&(again.matrix() - rho.matrix())) < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn tmsv_is_normalized_and_monotone(r in 0.0f64..1.5, phi in 0.0f64..6.3) {
                let n = tmsv_truncation_for(r, 1e-10).max(4);
                let t = tmsv_state(TmsvParams::new(r, phi).unwrap(), dims(n)).unwrap();
                prop_assert!((t.state.norm() - 1.0).abs() < 1e-12);
                let probs: Vec<f64> = (0..n).map(|k| t.state.amplitude(Spin::Down, k, k).norm_sqr()).collect();
                for w in probs.windows(2) {
                    prop_assert!(w[1] <= w[0]);
                }
            }

            #[test]
            fn thermal_trace_is_one(n_bar in 0.0f64..3.0, n in 2usize..30) {
                let p = thermal_populations(n_bar, n).unwrap();
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
