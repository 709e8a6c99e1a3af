//! Grid oracle for the smoothed objective.
//!
//! Densities live on uniform grids of at most two axes with at most 64
//! nodes each. All integrals use the midpoint rule, so identities between
//! operators hold to rounding rather than to quadrature error. This is a
//! verification instrument: the fitting code never calls it.

mod grid;
mod kernel;
mod objective;
mod ops;
mod suite;

pub use grid::{Axis, GridDensity, MAX_DIM, MAX_NODES};
pub use kernel::{Kernel1D, Smoother};
pub use objective::{
    closed_form_minimizer, ica_contrast, ica_objective, majorizer_b, majorizer_b_with, mm_weights,
    objective_ell, objective_ell_with, penalty, penalty_with, rotation, smoothed_components,
    FactoredDensity, LatentTarget,
};
pub use ops::{kl_div, op_n, op_n_with, op_p, op_s, op_s_star, pull_back, transform};
pub use suite::{mm_spot_check, run_suite, CheckOutcome, SpotCheck, CHECK_BUDGET};
