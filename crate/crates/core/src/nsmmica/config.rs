use crate::error::{Error, Result};
use crate::wfastica::Nonlinearity;

/// Whether each component gets its own unmixing (`Ica`) or the identity
/// (`Npem`, the conditional-independence model).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Ica,
    Npem,
}

/// How the first posterior matrix is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Init {
    /// Seeded k-means; each point gets `kmeans_confidence` on its cluster.
    #[default]
    KMeans,
    /// Rows drawn from a symmetric Dirichlet(1).
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub m: usize,
    pub mode: Mode,
    pub max_outer: usize,
    /// Relative log-likelihood change that stops the outer loop.
    pub outer_tol: f64,
    /// Fixed-point tolerance for the inner FastICA loop.
    pub ica_tol: f64,
    pub ica_max_inner: usize,
    pub nonlinearity: Nonlinearity,
    pub bandwidth_coef: f64,
    pub init: Init,
    pub kmeans_restarts: usize,
    /// Initial responsibility of a point for its own k-means cluster; the
    /// remainder is split evenly. 1.0 means hard labels.
    pub kmeans_confidence: f64,
    pub seed: u64,
    pub min_lambda: f64,
    /// Consecutive iterations below `min_lambda` before a component counts as dead.
    pub dying_patience: usize,
    /// Reinitialize dead components instead of failing.
    pub reinit_dying: bool,
    /// Recompute posteriors from the new weights and unmixings (with the
    /// previous densities) before the density step. When false the density
    /// step reuses the posteriors from the start of the iteration.
    pub recompute_posterior_after_ica: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            m: 2,
            mode: Mode::Ica,
            max_outer: 300,
            outer_tol: 1e-7,
            ica_tol: 1e-4,
            ica_max_inner: 100,
            nonlinearity: Nonlinearity::default(),
            bandwidth_coef: 0.5,
            init: Init::KMeans,
            kmeans_restarts: 10,
            kmeans_confidence: 0.9,
            seed: 0,
            min_lambda: 1e-4,
            dying_patience: 3,
            reinit_dying: false,
            recompute_posterior_after_ica: false,
        }
    }
}

impl FitConfig {
    pub fn with_components(m: usize) -> Self {
        Self {
            m,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.m == 0 {
            return bad("need at least one component".into());
        }
        if !(self.outer_tol > 0.0) || !(self.ica_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if !(self.bandwidth_coef > 0.0) || !self.bandwidth_coef.is_finite() {
            return bad(format!("bandwidth coefficient must be positive, got {}", self.bandwidth_coef));
        }
        if self.max_outer == 0 || self.ica_max_inner == 0 {
            return bad("iteration caps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.min_lambda) {
            return bad(format!("min_lambda must lie in [0, 1), got {}", self.min_lambda));
        }
        if let Nonlinearity::LogCosh { alpha } = self.nonlinearity {
            Nonlinearity::logcosh(alpha)?;
        }
        if self.init == Init::KMeans && self.kmeans_restarts == 0 {
            return bad("k-means initialization needs at least one restart".into());
        }
        let floor = 1.0 / self.m as f64;
        if self.m > 1 && !(self.kmeans_confidence > floor && self.kmeans_confidence <= 1.0) {
            return bad(format!(
                "k-means confidence must lie in ({floor}, 1], got {}",
                self.kmeans_confidence
            ));
        }
        Ok(())
    }
}
