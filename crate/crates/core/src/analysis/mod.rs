//! Estimators and fits on characteristic-function data.

mod bell;
mod epr;
mod gaussian;
mod profiles;
pub mod solvers;
mod superposition;

pub use bell::{
    bell_signal, bell_trace, optimize_bell_settings, optimize_bell_settings_with, predicted_bell, predicted_bell_variance,
    run_bell_experiment, run_bell_experiment_with, BellOptimum, BellResult, BellSearch, BellSettings, CLASSICAL_BOUND, SEARCH_BOUND,
    TMSV_LIMIT,
};
pub use epr::{reid_criterion, squeezing_db, variance_reciprocity, EprResult, REID_BOUND};
pub use gaussian::{fit_gaussian_1d, fit_gaussian_2d, GaussianFit1D, GaussianFit2D, ProfilePoint};
pub use profiles::{mean_axis_profiles, mean_axis_profiles_from_grids, profile_settings, AxisProfiles};
pub use superposition::{fit_superposition, fit_superposition_with, superposition_model, synthetic_superposition_grid, TwoGaussianFit};
