use std::time::{Duration, Instant};

use npica::data::{pca_project, standardize, Dataset, Pca, Standardizer};
use npica::eval::{best_permutation_error, PermutationMatch};
use npica::nsmmica::{fit, predict, FitConfig};
use npica::{Matrix64, MixtureModel64, PosteriorMatrix64, Result};

/// Column transforms learned at fit time and replayed at predict time.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocess {
    pub columns: Vec<String>,
    pub standardizer: Option<Standardizer>,
    pub pca: Option<Pca>,
    pub pca_correlation: bool,
}

impl Preprocess {
    /// Learns the transforms on `ds` and returns them with the transformed
    /// matrix. Standardization runs before PCA.
    pub fn fit(ds: &Dataset, standardize_cols: bool, pca_dim: Option<usize>, correlation: bool) -> Result<(Self, Matrix64)> {
        let mut x = ds.x.clone();
        let standardizer = if standardize_cols {
            let (z, st) = standardize(&x, &ds.names)?;
            x = z;
            Some(st)
        } else {
            None
        };
        let pca = match pca_dim {
            Some(d) => {
                let (scores, p) = pca_project(&x, d, correlation)?;
                x = scores;
                Some(p)
            }
            None => None,
        };
        Ok((
            Self {
                columns: ds.names.clone(),
                standardizer,
                pca,
                pca_correlation: correlation,
            },
            x,
        ))
    }

    /// Selects the fit-time columns by name and applies the transforms.
    pub fn apply(&self, ds: &Dataset) -> Result<Matrix64> {
        let mut x = ds.select_columns(&self.columns)?.x;
        if let Some(st) = &self.standardizer {
            x = st.apply(&x)?;
        }
        if let Some(p) = &self.pca {
            x = p.project(&x)?;
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub config: FitConfig,
    pub standardize: bool,
    pub pca: Option<usize>,
    pub pca_corr: bool,
}

impl FitOptions {
    pub fn new(config: FitConfig) -> Self {
        Self {
            config,
            standardize: false,
            pca: None,
            pca_corr: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: MixtureModel64,
    pub preprocess: Preprocess,
    pub labels: Vec<usize>,
    pub posterior: PosteriorMatrix64,
    /// Best-permutation error against the dataset labels, when present.
    pub error: Option<PermutationMatch>,
    pub elapsed: Duration,
}

/// Preprocesses, fits, and labels the training rows.
pub fn fit_dataset(ds: &Dataset, opts: &FitOptions) -> Result<Fitted> {
    let t0 = Instant::now();
    let (preprocess, x) = Preprocess::fit(ds, opts.standardize, opts.pca, opts.pca_corr)?;
    let model = fit(&x, &opts.config)?;
    let (labels, posterior) = predict(&model, &x)?;
    let error = match &ds.labels {
        Some(truth) => Some(best_permutation_error(&labels, truth)?),
        None => None,
    };
    Ok(Fitted {
        model,
        preprocess,
        labels,
        posterior,
        error,
        elapsed: t0.elapsed(),
    })
}
