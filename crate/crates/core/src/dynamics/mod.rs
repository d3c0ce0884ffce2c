//! Control Hamiltonian, time evolution, conditional displacements and the
//! two-segment commutator diagnostic.
//!
//! The control Hamiltonian for one segment is
//! `H = (Ω/2) σ₊ (a₁ e^{−iφ_r} + a₂† e^{−iφ_b}) + h.c.` in the interaction frame.

mod bch;
mod chain;
mod displacement;
mod propagate;

pub use bch::{bch_commutator, bch_third_order_residual, predicted_commutator, BchCoefficients, BchDecomposition};
pub use chain::{SectorPropagator, SegmentKernel, Sidebands};
pub use displacement::{
    apply_conditional_displacement, check_displacement, coherent_tail, conditional_displacement, displacement_matrix, Mode, SdfParams,
    DISPLACEMENT_LEAKAGE_BOUND,
};
pub use propagate::{
    mode_edge_population, propagate, propagate_density, propagate_density_with, propagate_with, Propagation,
    PropagationOptions, TruncationWarning,
};

use crate::error::{Error, Result};
use crate::fock::{ModeDims, Space, Spin, LinearOperator};
use crate::linalg::{CMatrix, C64};
use crate::waveform::PhaseWaveform;

/// A waveform bound to a truncation.
#[derive(Clone, Debug)]
pub struct ControlHamiltonianSpec {
    pub dims: ModeDims,
    pub waveform: PhaseWaveform,
    /// Disabling one sideband isolates the other half of the Hamiltonian.
    pub sidebands: Sidebands,
}

impl ControlHamiltonianSpec {
    pub fn new(dims: ModeDims, waveform: PhaseWaveform) -> Self {
        ControlHamiltonianSpec { dims, waveform, sidebands: Sidebands::default() }
    }

    pub fn with_sidebands(mut self, sidebands: Sidebands) -> Self {
        self.sidebands = sidebands;
        self
    }

    pub fn n_seg(&self) -> usize {
        self.waveform.n_seg()
    }

    pub(crate) fn check_segment(&self, k: usize) -> Result<()> {
        if k >= self.n_seg() {
            return Err(Error::OutOfRange { index: k, len: self.n_seg() });
        }
        Ok(())
    }

    pub fn sector_propagator(&self) -> SectorPropagator {
        SectorPropagator::new(self.dims, self.waveform.rabi_rate(), self.sidebands)
    }
}

/// Dense Hamiltonian of segment `k`.
pub fn hamiltonian_segment(spec: &ControlHamiltonianSpec, k: usize) -> Result<LinearOperator> {
    spec.check_segment(k)?;
    let w = &spec.waveform;
    let m = hamiltonian_matrix(spec.dims, w.rabi_rate(), w.phi_r()[k], w.phi_b()[k], spec.sidebands);
    LinearOperator::new(Space::Joint(spec.dims), m)
}

pub(crate) fn hamiltonian_matrix(dims: ModeDims, rabi: f64, phi_r: f64, phi_b: f64, sb: Sidebands) -> CMatrix {
    let n = dims.joint_dim();
    let mut h = CMatrix::zeros(n, n);
    let half = 0.5 * rabi;
    for n1 in 0..dims.n_max_1() {
        for n2 in 0..dims.n_max_2() {
            let down = dims.index(Spin::Down, n1, n2);
            // ⟨↑, n₁−1, n₂| σ₊ a₁ |↓, n₁, n₂⟩ = √n₁
            if sb.red && n1 > 0 {
                let up = dims.index(Spin::Up, n1 - 1, n2);
                let z = C64::from_polar(half * (n1 as f64).sqrt(), -phi_r);
                h[(up, down)] += z;
                h[(down, up)] += z.conj();
            }
            // ⟨↑, n₁, n₂+1| σ₊ a₂† |↓, n₁, n₂⟩ = √(n₂+1)
            if sb.blue && n2 + 1 < dims.n_max_2() {
                let up = dims.index(Spin::Up, n1, n2 + 1);
                let z = C64::from_polar(half * ((n2 + 1) as f64).sqrt(), -phi_b);
                h[(up, down)] += z;
                h[(down, up)] += z.conj();
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{fidelity, tmsv_state_with_tolerance, StateVector, TmsvParams};
    use crate::linalg::{hermitian_exp, identity, max_abs};
    use std::f64::consts::{PI, TAU};

    fn random_waveform(n_seg: usize, seed: u64, t: f64, rabi: f64) -> PhaseWaveform {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let r = (0..n_seg).map(|_| rng.random::<f64>() * TAU).collect();
        let b = (0..n_seg).map(|_| rng.random::<f64>() * TAU).collect();
        PhaseWaveform::new(r, b, t, rabi).unwrap()
    }

    #[test]
    fn single_matrix_elements() {
        let dims = ModeDims::symmetric(4).unwrap();
        let (phi_r, phi_b) = (0.4, 1.3);
        let w = PhaseWaveform::constant(phi_r, phi_b, 1, 1.0, 2.0).unwrap();
        let spec = ControlHamiltonianSpec::new(dims, w);
        let h = hamiltonian_segment(&spec, 0).unwrap();
        let m = h.matrix();
        let jc = m[(dims.index(Spin::Up, 0, 0), dims.index(Spin::Down, 1, 0))];
        assert!((jc - C64::from_polar(1.0, -phi_r)).norm() < 1e-15);
        let ajc = m[(dims.index(Spin::Up, 0, 1), dims.index(Spin::Down, 0, 0))];
        assert!((ajc - C64::from_polar(1.0, -phi_b)).norm() < 1e-15);
        assert!(max_abs(&(m - m.adjoint())) <= 1e-12);
        assert!(matches!(hamiltonian_segment(&spec, 1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn sector_propagator_matches_dense_exponential() {
        for dims in [ModeDims::symmetric(5).unwrap(), ModeDims::new(3, 6).unwrap()] {
            let rabi = TAU * 2e3;
            let prop = SectorPropagator::new(dims, rabi, Sidebands::default());
            let dt = 3.7e-6;
            let kernel = prop.kernel(dt);
            for (phi_r, phi_b) in [(0.0, 0.0), (0.3, 2.1), (5.0, -1.0)] {
                let dense = hamiltonian_matrix(dims, rabi, phi_r, phi_b, Sidebands::default());
                let exact = hermitian_exp(&dense, dt);
                let u = prop.unitary(&kernel, phi_r, phi_b);
                assert!(max_abs(&(&u - &exact)) < 1e-12);
                assert!(max_abs(&(u.adjoint() * &u - identity(dims.joint_dim()))) <= 1e-10);
                let v = crate::linalg::CVector::from_fn(dims.joint_dim(), |i, _| C64::new(i as f64, 1.0));
                let hv = prop.apply_hamiltonian(phi_r, phi_b, &v);
                assert!((hv - &dense * &v).norm() < 1e-9 * rabi);
            }
        }
    }

    #[test]
    fn red_sideband_rabi_flop() {
        let dims = ModeDims::symmetric(4).unwrap();
        let rabi = TAU * 2e3;
        let w = PhaseWaveform::constant(0.0, 0.0, 10, 250e-6, rabi).unwrap();
        let spec = ControlHamiltonianSpec::new(dims, w).with_sidebands(Sidebands { red: true, blue: false });
        let init = StateVector::basis(dims, Spin::Down, 1, 0).unwrap();
        let out = propagate(&spec, &init).unwrap();
        let p = out.state.amplitude(Spin::Up, 0, 0).norm_sqr();
        assert!((p - 1.0).abs() <= 1e-6, "{p}");
    }

    #[test]
    fn near_zero_duration_is_identity() {
        let dims = ModeDims::symmetric(5).unwrap();
        let w = random_waveform(8, 1, 1e-300, TAU * 2e3);
        let spec = ControlHamiltonianSpec::new(dims, w);
        let init = tmsv_state_with_tolerance(TmsvParams::new(0.3, 0.0).unwrap(), dims, 1.0).unwrap().state;
        let out = propagate(&spec, &init).unwrap();
        assert!((out.state.amplitudes() - init.amplitudes()).norm() < 1e-13);
    }

    #[test]
    fn inverse_waveform_returns_initial_state() {
        let dims = ModeDims::symmetric(6).unwrap();
        let w = random_waveform(40, 7, 4e-4, TAU * 2e3);
        let spec = ControlHamiltonianSpec::new(dims, w.clone());
        let init = StateVector::basis(dims, Spin::Down, 1, 2).unwrap();
        let fwd = propagate(&spec, &init).unwrap();
        let back = propagate(&ControlHamiltonianSpec::new(dims, w.inverse()), &fwd.state).unwrap();
        assert!(fidelity(&back.state, &init).unwrap() >= 1.0 - 1e-8);
        assert!((fwd.state.norm() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn phase_shift_by_pi_negates_hamiltonian() {
        let dims = ModeDims::symmetric(3).unwrap();
        let h = hamiltonian_matrix(dims, 1.0, 0.2, 0.9, Sidebands::default());
        let g = hamiltonian_matrix(dims, 1.0, 0.2 + PI, 0.9 + PI, Sidebands::default());
        assert!(max_abs(&(h + g)) < 1e-15);
    }
}
