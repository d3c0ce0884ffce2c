use crate::error::{invalid, Error, Result};
use crate::fock::{DensityOperator, ModeDims, Space, StateVector};
use crate::linalg::CVector;

use super::ControlHamiltonianSpec;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationOptions {
    /// Edge population above which a [`TruncationWarning`] is attached.
    pub leakage_threshold: f64,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions { leakage_threshold: 1e-4 }
    }
}

/// Non-fatal: the evolution ran, but populated the top Fock levels.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TruncationWarning {
    pub leakage: f64,
    pub threshold: f64,
}

impl std::fmt::Display for TruncationWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "truncation leakage {:.3e} exceeds {:.1e}", self.leakage, self.threshold)
    }
}

#[derive(Clone, Debug)]
pub struct Propagation<S> {
    pub state: S,
    /// Largest top-two-level population of either mode over all segment boundaries.
    pub leakage: f64,
    pub warning: Option<TruncationWarning>,
}

/// Population in the top two Fock levels, maximized over the two modes.
pub fn mode_edge_population(dims: ModeDims, v: &CVector) -> f64 {
    let (l1, l2) = (dims.n_max_1() - 2, dims.n_max_2() - 2);
    let (mut p1, mut p2) = (0.0, 0.0);
    for (idx, z) in v.iter().enumerate() {
        let (_, n1, n2) = dims.unpack(idx);
        let w = z.norm_sqr();
        if n1 >= l1 {
            p1 += w;
        }
        if n2 >= l2 {
            p2 += w;
        }
    }
    f64::max(p1, p2)
}

fn evolve(spec: &ControlHamiltonianSpec, v: &mut CVector, mut on_boundary: impl FnMut(&CVector)) {
    let prop = spec.sector_propagator();
    let kernel = prop.kernel(spec.waveform.segment_duration());
    on_boundary(v);
    for (r, b) in spec.waveform.phi_r().iter().zip(spec.waveform.phi_b()) {
        prop.apply(&kernel, *r, *b, v);
        on_boundary(v);
    }
}

fn finish<S>(state: S, leakage: f64, opts: PropagationOptions) -> Propagation<S> {
    let warning = (leakage > opts.leakage_threshold)
        .then_some(TruncationWarning { leakage, threshold: opts.leakage_threshold });
    Propagation { state, leakage, warning }
}

/// Applies the segment propagators in time order to a pure state.
pub fn propagate(spec: &ControlHamiltonianSpec, initial: &StateVector) -> Result<Propagation<StateVector>> {
    propagate_with(spec, initial, PropagationOptions::default())
}

pub fn propagate_with(
    spec: &ControlHamiltonianSpec,
    initial: &StateVector,
    opts: PropagationOptions,
) -> Result<Propagation<StateVector>> {
    if initial.dims() != spec.dims {
        return Err(Error::Dimension("initial state truncation differs from the Hamiltonian's".into()));
    }
    let mut v = initial.amplitudes().clone();
    let mut leakage = 0.0f64;
    evolve(spec, &mut v, |v| leakage = leakage.max(mode_edge_population(spec.dims, v)));
    Ok(finish(StateVector::from_normalized(spec.dims, v), leakage, opts))
}

/// Evolves `ρ → U ρ U†` by propagating its spectral components.
pub fn propagate_density(
    spec: &ControlHamiltonianSpec,
    initial: &DensityOperator,
) -> Result<Propagation<DensityOperator>> {
    propagate_density_with(spec, initial, PropagationOptions::default())
}

pub fn propagate_density_with(
    spec: &ControlHamiltonianSpec,
    initial: &DensityOperator,
    opts: PropagationOptions,
) -> Result<Propagation<DensityOperator>> {
    if initial.space() != Space::Joint(spec.dims) {
        return Err(Error::Dimension("initial state truncation differs from the Hamiltonian's".into()));
    }
    let components = initial.pure_components(1e-15)?;
    if components.is_empty() {
        return Err(invalid("density operator has no positive weight"));
    }
    let mut boundary = vec![0.0; spec.n_seg() + 1];
    let mut out = Vec::with_capacity(components.len());
    for (w, psi) in components {
        let mut v = psi.amplitudes().clone();
        let mut b = 0;
        evolve(spec, &mut v, |v| {
            boundary[b] += w * mode_edge_population(spec.dims, v);
            b += 1;
        });
        out.push((w, StateVector::from_normalized(spec.dims, v)));
    }
    let leakage = boundary.into_iter().fold(0.0, f64::max);
    Ok(finish(DensityOperator::mixture(&out)?, leakage, opts))
}
