//! Simulation and analysis core for preparing two-mode squeezed vacuum states
//! in a spin coupled to two oscillators by phase-modulated sideband drives.
//!
//! Layers, bottom up:
//! - [`fock`]: truncated Fock-space states and operators
//! - [`waveform`]: piecewise-constant phase controls, filtering, splines, CSV
//! - [`dynamics`]: control Hamiltonian, propagation, commutator diagnostic
//! - [`optimizer`]: cost, exact gradients, multi-start L-BFGS
//! - [`tomography`]: characteristic-function evaluation and shot sampling
//! - [`analysis`]: Gaussian fits, EPR and Bell estimators, two-ridge fits

pub mod error;
pub mod exec;
pub mod fock;
pub mod linalg;
pub mod waveform;
pub mod dynamics;
pub mod tomography;
pub mod analysis;
pub mod optimizer;

pub use error::{Error, Result};
pub use exec::Execution;
