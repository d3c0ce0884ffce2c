//! Commutator of neighbouring segment Hamiltonians.
//!
//! With `σ_z = |↓⟩⟨↓| − |↑⟩⟨↑|` (this crate's sign) the commutator of the
//! segment Hamiltonians with phases `(φ_r0, φ_b0)` and `(φ_r1, φ_b1)` is
//!
//! ```text
//! [H₀, H₁] = −(Ω²/4) σ_z (Θ_rb a₁†a₂† + Θ_br a₁a₂)
//!            + (Ω²/2) i sin Δ_r (|↑⟩⟨↑| − σ_z n₁)
//!            − (Ω²/2) i sin Δ_b (|↓⟩⟨↓| + σ_z n₂)
//! Θ_rb = e^{i(φ_r1 − φ_b0)} − e^{i(φ_r0 − φ_b1)}
//! Θ_br = e^{i(φ_b1 − φ_r0)} − e^{i(φ_b0 − φ_r1)}
//! Δ_j  = φ_j1 − φ_j0
//! ```
//!
//! The squeezing term is anti-Hermitian as a commutator must be, so its two
//! coefficients satisfy `Θ_br = −Θ_rb*`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fock::{annihilation, ModeDims};
use crate::linalg::{anti_hermitian_exp, commutator, hermitian_exp, identity, kron, max_abs, max_abs_restricted, CMatrix, C64, I};

use super::{hamiltonian_matrix, ControlHamiltonianSpec};

/// Coefficients on `{σ_z a₁†a₂†, σ_z a₁a₂, σ_z n₁, |↑⟩⟨↑|, σ_z n₂, |↓⟩⟨↓|}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BchCoefficients {
    pub squeeze_create: C64,
    pub squeeze_annih: C64,
    pub number_1: C64,
    pub proj_up: C64,
    pub number_2: C64,
    pub proj_down: C64,
}

impl BchCoefficients {
    fn as_array(&self) -> [C64; 6] {
        [self.squeeze_create, self.squeeze_annih, self.number_1, self.proj_up, self.number_2, self.proj_down]
    }

    fn from_slice(c: &[C64]) -> Self {
        BchCoefficients {
            squeeze_create: c[0],
            squeeze_annih: c[1],
            number_1: c[2],
            proj_up: c[3],
            number_2: c[4],
            proj_down: c[5],
        }
    }

    /// Analytic coefficients for the two phase pairs.
    pub fn predicted(rabi: f64, (phi_r0, phi_b0): (f64, f64), (phi_r1, phi_b1): (f64, f64)) -> Self {
        let q = 0.25 * rabi * rabi;
        let e = |x: f64| C64::from_polar(1.0, x);
        let theta_rb = e(phi_r1 - phi_b0) - e(phi_r0 - phi_b1);
        let theta_br = e(phi_b1 - phi_r0) - e(phi_b0 - phi_r1);
        let sr = I * (2.0 * q * (phi_r1 - phi_r0).sin());
        let sb = I * (2.0 * q * (phi_b1 - phi_b0).sin());
        BchCoefficients {
            squeeze_create: -theta_rb * q,
            squeeze_annih: -theta_br * q,
            number_1: -sr,
            proj_up: sr,
            number_2: -sb,
            proj_down: -sb,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.as_array().iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BchDecomposition {
    /// Least-squares projection of the numeric commutator on the guard band.
    pub fitted: BchCoefficients,
    pub predicted: BchCoefficients,
    /// Max-norm of `[H_k, H_{k+1}]` minus the analytic operator, on the guard band.
    pub residual_norm: f64,
    /// Max-norm of `[H_k, H_{k+1}]` on the guard band.
    pub commutator_norm: f64,
}

const GUARD: usize = 4;

fn basis_operators(dims: ModeDims) -> [CMatrix; 6] {
    let (n1, n2) = (dims.n_max_1(), dims.n_max_2());
    let a1 = kron(&annihilation(n1), &identity(n2));
    let a2 = kron(&identity(n1), &annihilation(n2));
    let c = |re: f64| C64::new(re, 0.0);
    let sz = CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]);
    let up = CMatrix::from_row_slice(2, 2, &[c(0.0), c(0.0), c(0.0), c(1.0)]);
    let down = CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]);
    let eye = identity(n1 * n2);
    [
        kron(&sz, &(a1.adjoint() * a2.adjoint())),
        kron(&sz, &(&a1 * &a2)),
        kron(&sz, &(a1.adjoint() * &a1)),
        kron(&up, &eye),
        kron(&sz, &(a2.adjoint() * &a2)),
        kron(&down, &eye),
    ]
}

/// Analytic commutator operator for the given coefficients.
pub fn predicted_commutator(dims: ModeDims, coeffs: &BchCoefficients) -> CMatrix {
    let basis = basis_operators(dims);
    let mut out = CMatrix::zeros(dims.joint_dim(), dims.joint_dim());
    for (b, c) in basis.iter().zip(coeffs.as_array()) {
        out += b * c;
    }
    out
}

fn segment_phases(spec: &ControlHamiltonianSpec, k: usize) -> (f64, f64) {
    (spec.waveform.phi_r()[k], spec.waveform.phi_b()[k])
}

fn check_pair(spec: &ControlHamiltonianSpec, k: usize) -> Result<()> {
    spec.check_segment(k + 1)?;
    if spec.dims.n_max_1() <= GUARD || spec.dims.n_max_2() <= GUARD {
        return Err(invalid(format!("commutator diagnostic needs n_max > {GUARD}")));
    }
    Ok(())
}

/// Projects `[H_k, H_{k+1}]` on the six-operator basis and compares it with
/// the analytic form.
pub fn bch_commutator(spec: &ControlHamiltonianSpec, k: usize) -> Result<BchDecomposition> {
    check_pair(spec, k)?;
    let dims = spec.dims;
    let rabi = spec.waveform.rabi_rate();
    let (p0, p1) = (segment_phases(spec, k), segment_phases(spec, k + 1));
    let h0 = hamiltonian_matrix(dims, rabi, p0.0, p0.1, spec.sidebands);
    let h1 = hamiltonian_matrix(dims, rabi, p1.0, p1.1, spec.sidebands);
    let comm = commutator(&h0, &h1);

    let keep = dims.guarded_indices(GUARD);
    let m = keep.len();
    let restrict = |x: &CMatrix| -> Vec<C64> {
        let mut v = Vec::with_capacity(m * m);
        for &i in &keep {
            for &j in &keep {
                v.push(x[(i, j)]);
            }
        }
        v
    };
    let basis = basis_operators(dims);
    let cols: Vec<Vec<C64>> = basis.iter().map(restrict).collect();
    let a = DMatrix::from_fn(m * m, 6, |r, c| cols[c][r]);
    let b = nalgebra::DVector::from_vec(restrict(&comm));
    let fitted = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| invalid(format!("projection failed: {e}")))?;

    let predicted = BchCoefficients::predicted(rabi, p0, p1);
    let residual = &comm - predicted_commutator(dims, &predicted);
    Ok(BchDecomposition {
        fitted: BchCoefficients::from_slice(fitted.as_slice()),
        predicted,
        residual_norm: max_abs_restricted(&residual, &keep),
        commutator_norm: max_abs_restricted(&comm, &keep),
    })
}

/// `‖U_{k+1} U_k − exp(−i(H_k + H_{k+1})δt + ½[H_k, H_{k+1}]δt²)‖_max` at segment length `dt`.
pub fn bch_third_order_residual(spec: &ControlHamiltonianSpec, k: usize, dt: f64) -> Result<f64> {
    spec.check_segment(k + 1)?;
    let dims = spec.dims;
    let rabi = spec.waveform.rabi_rate();
    let (p0, p1) = (segment_phases(spec, k), segment_phases(spec, k + 1));
    let h0 = hamiltonian_matrix(dims, rabi, p0.0, p0.1, spec.sidebands);
    let h1 = hamiltonian_matrix(dims, rabi, p1.0, p1.1, spec.sidebands);
    let product = hermitian_exp(&h1, dt) * hermitian_exp(&h0, dt);
    let exponent = (&h0 + &h1) * C64::new(0.0, -dt) + commutator(&h0, &h1) * C64::new(0.5 * dt * dt, 0.0);
    Ok(max_abs(&(product - anti_hermitian_exp(&exponent))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::PhaseWaveform;
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn spec(phases: [(f64, f64); 2], n: usize) -> ControlHamiltonianSpec {
        let w = PhaseWaveform::new(vec![phases[0].0, phases[1].0], vec![phases[0].1, phases[1].1], 1e-4, 1.3).unwrap();
        ControlHamiltonianSpec::new(ModeDims::symmetric(n).unwrap(), w)
    }

    #[test]
    fn constant_phases_commute() {
        let d = bch_commutator(&spec([(0.7, 2.0), (0.7, 2.0)], 8), 0).unwrap();
        assert!(d.fitted.max_abs() < 1e-12);
        assert!(d.predicted.max_abs() < 1e-15);
        assert!(d.residual_norm < 1e-12);
    }

    #[test]
    fn quarter_turn_red_phase() {
        let d = bch_commutator(&spec([(0.0, 0.0), (FRAC_PI_2, 0.0)], 8), 0).unwrap();
        let q = 0.25 * 1.3f64.powi(2);
        // Θ_rb = −1 + i, sin Δ_r = 1
        let theta = C64::new(-1.0, 1.0);
        assert!((d.predicted.squeeze_create + theta * q).norm() < 1e-15);
        assert!((d.fitted.squeeze_create - d.predicted.squeeze_create).norm() < 1e-12);
        assert!((d.fitted.proj_up - I * (2.0 * q)).norm() < 1e-12);
        assert!(d.residual_norm <= 1e-10 * d.commutator_norm);
    }

    #[test]
    fn random_phases_match_analytic_form() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut p = || rng.random::<f64>() * TAU;
            let d = bch_commutator(&spec([(p(), p()), (p(), p())], 8), 0).unwrap();
            assert!(d.residual_norm <= 1e-10 * d.commutator_norm, "{d:?}");
            let squeeze = d.fitted.squeeze_annih + d.fitted.squeeze_create.conj();
            assert!(squeeze.norm() < 1e-12);
        }
    }

    #[test]
    fn residual_scales_cubically() {
        let s = spec([(0.3, 1.9), (2.2, 0.4)], 6);
        let dt = 0.05 / 1.3;
        let r1 = bch_third_order_residual(&s, 0, dt).unwrap();
        let r2 = bch_third_order_residual(&s, 0, dt / 2.0).unwrap();
        let ratio = r1 / r2;
        assert!((7.5..8.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn last_segment_has_no_partner() {
        assert!(bch_commutator(&spec([(0.0, 0.0); 2], 8), 1).is_err());
        assert!(bch_commutator(&spec([(0.0, 0.0); 2], 4), 0).is_err());
    }
}
