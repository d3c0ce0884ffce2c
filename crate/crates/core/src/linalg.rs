//! Dense complex linear-algebra helpers shared by the simulation modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// `exp(-i h t)` for a Hermitian `h`, via eigendecomposition.
pub fn hermitian_exp(h: &CMatrix, t: f64) -> CMatrix {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| C64::from_polar(1.0, -l * t)),
    );
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    scaled * v.adjoint()
}

/// `exp(k)` for an anti-Hermitian `k`.
pub fn anti_hermitian_exp(k: &CMatrix) -> CMatrix {
    // k = -i h with h = i k Hermitian
    let h = k * I;
    hermitian_exp(&h, 1.0)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Largest entry modulus of `m` restricted to the index set `keep` (rows and columns).
pub fn max_abs_restricted(m: &CMatrix, keep: &[usize]) -> f64 {
    let mut out = 0.0f64;
    for &i in keep {
        for &j in keep {
            out = out.max(m[(i, j)].norm());
        }
    }
    out
}
