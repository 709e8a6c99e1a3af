//! Nonparametric ICA mixture estimation.
//!
//! Each outer iteration computes responsibilities, mixing weights, a weighted
//! FastICA unmixing per component, and a product of weighted univariate KDEs
//! per component on the unmixed coordinates. `Mode::Npem` fixes every
//! unmixing to the identity, which gives the conditional-independence model.

mod config;
mod fit;
mod model;

pub use config::{FitConfig, Init, Mode};
pub use fit::{
    density_step, fit, fit_from_posterior, ica_step, initial_posterior, update_lambda, IcaState,
};
pub use model::{
    log_likelihood, posterior, predict, Component, FitReport, MixtureModel, PosteriorMatrix,
    LOG_DENSITY_FLOOR,
};
