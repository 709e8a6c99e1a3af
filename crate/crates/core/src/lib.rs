//! Nonparametric mixtures of ICA models.
//!
//! Each mixture component is an invertible linear map of a random vector
//! with independent coordinates. The coordinate densities are weighted
//! kernel density estimates. Fitting alternates responsibilities, weighted
//! FastICA, and weighted KDE.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`). Data
//! handling, evaluation, and the grid oracle work in `f64`.

pub mod data;
pub mod error;
pub mod eval;
pub mod nsmmica;
pub mod numerics;
pub mod oracle;
pub mod scalar;
pub mod wfastica;
pub mod wkde;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = numerics::Matrix<f64>;
pub type Matrix32 = numerics::Matrix<f32>;
pub type MixtureModel64 = nsmmica::MixtureModel<f64>;
pub type MixtureModel32 = nsmmica::MixtureModel<f32>;
pub type PosteriorMatrix64 = nsmmica::PosteriorMatrix<f64>;
pub type Kde64 = wkde::WeightedKde1D<f64>;
