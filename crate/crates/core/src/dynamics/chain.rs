//! Exact segment propagation by sector decomposition.
//!
//! The sideband Hamiltonian conserves `n₁ − n₂ + s` (with `s = 1` for `|↑⟩`),
//! and inside each conserved sector it couples basis states along a single
//! path: `|↓,n₁,n₂⟩ → |↑,n₁,n₂+1⟩` (blue) and `|↑,m₁,m₂⟩ → |↓,m₁+1,m₂⟩` (red).
//! On a path the Hamiltonian is `G R G†` with `R` real tridiagonal and
//! independent of the phases, and `G` diagonal with entries
//! `exp(i(c_r φ_r − c_b φ_b))`, where `c_r`, `c_b` count the red and blue
//! links passed from the start of the path. So `R` is diagonalized once and
//! every segment costs one small dense product per path.

use nalgebra::DMatrix;

use crate::fock::{ModeDims, Spin};
use crate::linalg::{CMatrix, CVector, C64, ZERO};

/// Which halves of the control Hamiltonian are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Sidebands {
    pub red: bool,
    pub blue: bool,
}

impl Default for Sidebands {
    fn default() -> Self {
        Sidebands { red: true, blue: true }
    }
}

#[derive(Clone, Debug)]
struct Chain {
    indices: Vec<usize>,
    /// Link magnitudes in units of Ω/2.
    links: Vec<f64>,
    eigvals: Vec<f64>,
    eigvecs: DMatrix<f64>,
}

/// Phase-independent structure of the control Hamiltonian for one truncation.
#[derive(Clone, Debug)]
pub struct SectorPropagator {
    dims: ModeDims,
    rabi_rate: f64,
    chains: Vec<Chain>,
    red_count: Vec<f64>,
    blue_count: Vec<f64>,
}

/// Per-path `V exp(−i Ω λ δt / 2) Vᵀ` for a fixed segment duration.
#[derive(Clone, Debug)]
pub struct SegmentKernel {
    dt: f64,
    blocks: Vec<CMatrix>,
}

impl SegmentKernel {
    pub fn dt(&self) -> f64 {
        self.dt
    }
}

impl SectorPropagator {
    pub fn new(dims: ModeDims, rabi_rate: f64, sidebands: Sidebands) -> Self {
        let (n1_max, n2_max) = (dims.n_max_1(), dims.n_max_2());
        let mut red_count = vec![0.0; dims.joint_dim()];
        let mut blue_count = vec![0.0; dims.joint_dim()];
        let mut chains = Vec::new();

        let starts = (0..n2_max)
            .map(|n2| (Spin::Down, 0, n2))
            .chain((0..n1_max).map(|m1| (Spin::Up, m1, 0)));
        for start in starts {
            let (mut spin, mut n1, mut n2) = start;
            let (mut cr, mut cb) = (0.0, 0.0);
            let mut indices = vec![dims.index(spin, n1, n2)];
            let mut links = Vec::new();
            red_count[indices[0]] = 0.0;
            blue_count[indices[0]] = 0.0;
            loop {
                let next = match spin {
                    Spin::Down if n2 + 1 < n2_max => {
                        cb += 1.0;
                        let g = if sidebands.blue { ((n2 + 1) as f64).sqrt() } else { 0.0 };
                        Some((Spin::Up, n1, n2 + 1, g))
                    }
                    Spin::Up if n1 + 1 < n1_max => {
                        cr += 1.0;
                        let g = if sidebands.red { ((n1 + 1) as f64).sqrt() } else { 0.0 };
                        Some((Spin::Down, n1 + 1, n2, g))
                    }
                    _ => None,
                };
                let Some((s, a, b, g)) = next else { break };
                spin = s;
                n1 = a;
                n2 = b;
                let idx = dims.index(spin, n1, n2);
                red_count[idx] = cr;
                blue_count[idx] = cb;
                indices.push(idx);
                links.push(g);
            }
            let len = indices.len();
            let r = DMatrix::from_fn(len, len, |i, j| {
                if i == j + 1 {
                    links[j]
                } else if j == i + 1 {
                    links[i]
                } else {
                    0.0
                }
            });
            let eig = r.symmetric_eigen();
            chains.push(Chain {
                indices,
                links,
                eigvals: eig.eigenvalues.as_slice().to_vec(),
                eigvecs: eig.eigenvectors,
            });
        }
        debug_assert_eq!(chains.iter().map(|c| c.indices.len()).sum::<usize>(), dims.joint_dim());
        SectorPropagator { dims, rabi_rate, chains, red_count, blue_count }
    }

    pub fn dims(&self) -> ModeDims {
        self.dims
    }

    pub fn rabi_rate(&self) -> f64 {
        self.rabi_rate
    }

    /// `∂ψ/∂φ_r` for every basis state (the count of red links).
    pub fn red_count(&self) -> &[f64] {
        &self.red_count
    }

    /// Count of blue links; the gauge phase derivative in `φ_b` is its negative.
    pub fn blue_count(&self) -> &[f64] {
        &self.blue_count
    }

    pub fn kernel(&self, dt: f64) -> SegmentKernel {
        let half = 0.5 * self.rabi_rate * dt;
        let blocks = self
            .chains
            .iter()
            .map(|c| {
                let n = c.indices.len();
                let v = &c.eigvecs;
                let ph: Vec<C64> = c.eigvals.iter().map(|l| C64::from_polar(1.0, -half * l)).collect();
                CMatrix::from_fn(n, n, |i, j| {
                    (0..n).fold(ZERO, |acc, k| acc + ph[k] * (v[(i, k)] * v[(j, k)]))
                })
            })
            .collect();
        SegmentKernel { dt, blocks }
    }

    fn gauge(&self, idx: usize, phi_r: f64, phi_b: f64) -> C64 {
        C64::from_polar(1.0, self.red_count[idx] * phi_r - self.blue_count[idx] * phi_b)
    }

    /// `v ← U v` with `U = exp(−i H(φ_r, φ_b) δt)`.
    pub fn apply(&self, kernel: &SegmentKernel, phi_r: f64, phi_b: f64, v: &mut CVector) {
        self.apply_impl(kernel, phi_r, phi_b, v, false)
    }

    /// `v ← U† v`.
    pub fn apply_adjoint(&self, kernel: &SegmentKernel, phi_r: f64, phi_b: f64, v: &mut CVector) {
        self.apply_impl(kernel, phi_r, phi_b, v, true)
    }

    fn apply_impl(&self, kernel: &SegmentKernel, phi_r: f64, phi_b: f64, v: &mut CVector, adjoint: bool) {
        let mut x = Vec::new();
        for (chain, w) in self.chains.iter().zip(&kernel.blocks) {
            let n = chain.indices.len();
            if n == 1 {
                let z = w[(0, 0)];
                v[chain.indices[0]] *= if adjoint { z.conj() } else { z };
                continue;
            }
            let g: Vec<C64> = chain.indices.iter().map(|&i| self.gauge(i, phi_r, phi_b)).collect();
            x.clear();
            x.extend(chain.indices.iter().zip(&g).map(|(&i, gi)| v[i] * gi.conj()));
            for (row, &idx) in chain.indices.iter().enumerate() {
                let mut acc = ZERO;
                for (col, xc) in x.iter().enumerate() {
                    let wij = w[(row, col)];
                    acc += if adjoint { wij.conj() } else { wij } * xc;
                }
                v[idx] = acc * g[row];
            }
        }
    }

    /// `H v` for the segment phases.
    pub fn apply_hamiltonian(&self, phi_r: f64, phi_b: f64, v: &CVector) -> CVector {
        let mut out = CVector::zeros(v.len());
        let half = 0.5 * self.rabi_rate;
        for chain in &self.chains {
            let idx = &chain.indices;
            let g: Vec<C64> = idx.iter().map(|&i| self.gauge(i, phi_r, phi_b)).collect();
            let x: Vec<C64> = idx.iter().zip(&g).map(|(&i, gi)| v[i] * gi.conj()).collect();
            for j in 0..idx.len() {
                let mut acc = ZERO;
                if j > 0 {
                    acc += x[j - 1] * chain.links[j - 1];
                }
                if j + 1 < idx.len() {
                    acc += x[j + 1] * chain.links[j];
                }
                out[idx[j]] = acc * g[j] * half;
            }
        }
        out
    }

    /// Dense segment unitary, for diagnostics.
    pub fn unitary(&self, kernel: &SegmentKernel, phi_r: f64, phi_b: f64) -> CMatrix {
        let n = self.dims.joint_dim();
        let mut u = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = CVector::zeros(n);
            e[j] = C64::new(1.0, 0.0);
            self.apply(kernel, phi_r, phi_b, &mut e);
            u.set_column(j, &e);
        }
        u
    }
}
