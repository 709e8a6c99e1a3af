use std::fs;
use std::io::Write;
use std::path::Path;

use npica::data::{Pca, Standardizer};
use npica::nsmmica::{Component, FitConfig, FitReport, Init, Mode, MixtureModel};
use npica::wfastica::Nonlinearity;
use npica::wkde::WeightedKde1D;
use npica::{Matrix64, MixtureModel64};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::pipeline::Preprocess;

/// Bumped on any incompatible change to the layout below.
pub const FORMAT_VERSION: u32 = 1;

/// On-disk model. Floats are written in shortest round-trip form, so
/// loading restores every number bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub m: usize,
    pub r: usize,
    pub lambda: Vec<f64>,
    pub label_column: Option<String>,
    pub preprocessing: PreprocessFile,
    pub components: Vec<ComponentFile>,
    pub fit_report: ReportFile,
    pub config: ConfigFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessFile {
    /// Input columns in the order the model consumes them.
    pub columns: Vec<String>,
    pub standardize: Option<StandardizeFile>,
    pub pca: Option<PcaFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeFile {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaFile {
    pub correlation: bool,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Row-major, inputs × d.
    pub loadings: Vec<f64>,
    pub d: usize,
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentFile {
    pub lambda: f64,
    pub mean: Vec<f64>,
    /// Row-major r × r.
    pub a: Vec<f64>,
    pub a_inv: Vec<f64>,
    pub coordinates: Vec<KdeFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeFile {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub outer_iters: usize,
    pub converged: bool,
    pub final_loglik: Option<f64>,
    pub loglik_trace: Vec<f64>,
    pub lambda_trace: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    pub mode: String,
    pub init: String,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub ica_tol: f64,
    pub ica_max_inner: usize,
    pub nonlinearity: String,
    pub alpha1: Option<f64>,
    pub bandwidth_coef: f64,
    pub min_lambda: f64,
    pub kmeans_confidence: f64,
    pub recompute_posterior_after_ica: bool,
}

impl ConfigFile {
    pub fn from_config(c: &FitConfig) -> Self {
        let (nonlinearity, alpha1) = match c.nonlinearity {
            Nonlinearity::LogCosh { alpha } => ("logcosh".to_string(), Some(alpha)),
            Nonlinearity::Gauss => ("gauss".to_string(), None),
        };
        Self {
            mode: match c.mode {
                Mode::Ica => "ica",
                Mode::Npem => "npem",
            }
            .into(),
            init: match c.init {
                Init::KMeans => "kmeans",
                Init::Random => "random",
            }
            .into(),
            seed: c.seed,
            max_iter: c.max_outer,
            tol: c.outer_tol,
            ica_tol: c.ica_tol,
            ica_max_inner: c.ica_max_inner,
            nonlinearity,
            alpha1,
            bandwidth_coef: c.bandwidth_coef,
            min_lambda: c.min_lambda,
            kmeans_confidence: c.kmeans_confidence,
            recompute_posterior_after_ica: c.recompute_posterior_after_ica,
        }
    }
}

fn matrix_file(m: &Matrix64) -> Vec<f64> {
    m.as_slice().to_vec()
}

fn matrix_from(rows: usize, cols: usize, v: &[f64], what: &str) -> CliResult<Matrix64> {
    Matrix64::from_vec(rows, cols, v.to_vec()).map_err(|e| CliError::Data(format!("model file, {what}: {e}")))
}

impl ModelFile {
    pub fn from_fit(model: &MixtureModel64, pre: &Preprocess, label_column: Option<&str>, config: &FitConfig) -> Self {
        let report = &model.report;
        Self {
            format_version: FORMAT_VERSION,
            m: model.m(),
            r: model.r(),
            lambda: model.lambdas(),
            label_column: label_column.map(str::to_string),
            preprocessing: PreprocessFile {
                columns: pre.columns.clone(),
                standardize: pre.standardizer.as_ref().map(|s| StandardizeFile {
                    means: s.means.clone(),
                    sds: s.sds.clone(),
                }),
                pca: pre.pca.as_ref().map(|p| PcaFile {
                    correlation: pre.pca_correlation,
                    means: p.means.clone(),
                    scales: p.scales.clone(),
                    loadings: matrix_file(&p.loadings),
                    d: p.d(),
                    explained_variance: p.explained_variance.clone(),
                    total_variance: p.total_variance,
                }),
            },
            components: model
                .components
                .iter()
                .map(|c| ComponentFile {
                    lambda: c.lambda,
                    mean: c.mean.clone(),
                    a: matrix_file(&c.a),
                    a_inv: matrix_file(&c.a_inv),
                    coordinates: c
                        .kdes
                        .iter()
                        .map(|k| KdeFile {
                            points: k.points().to_vec(),
                            weights: k.weights().to_vec(),
                            bandwidth: k.bandwidth(),
                        })
                        .collect(),
                })
                .collect(),
            fit_report: ReportFile {
                outer_iters: report.outer_iters,
                converged: report.converged,
                final_loglik: report.final_loglik(),
                loglik_trace: report.loglik_trace.clone(),
                lambda_trace: report.lambda_trace.clone(),
                warnings: report.warnings.clone(),
            },
            config: ConfigFile::from_config(config),
        }
    }

    pub fn to_model(&self) -> CliResult<MixtureModel64> {
        if self.format_version != FORMAT_VERSION {
            return Err(CliError::Data(format!(
                "model format version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.components.len() != self.m {
            return Err(CliError::Data(format!(
                "model declares {} components but stores {}",
                self.m,
                self.components.len()
            )));
        }
        let r = self.r;
        let components = self
            .components
            .iter()
            .map(|c| {
                let kdes = c
                    .coordinates
                    .iter()
                    .map(|k| WeightedKde1D::from_stored(k.points.clone(), k.weights.clone(), k.bandwidth))
                    .collect::<npica::Result<Vec<_>>>()?;
                Ok(Component::new(
                    c.lambda,
                    c.mean.clone(),
                    matrix_from(r, r, &c.a, "A")?,
                    matrix_from(r, r, &c.a_inv, "A inverse")?,
                    kdes,
                )?)
            })
            .collect::<CliResult<Vec<_>>>()?;
        let rep = &self.fit_report;
        let report = FitReport {
            outer_iters: rep.outer_iters,
            loglik_trace: rep.loglik_trace.clone(),
            lambda_trace: rep.lambda_trace.clone(),
            converged: rep.converged,
            warnings: rep.warnings.clone(),
        };
        let model = MixtureModel::new(components, report)?;
        if model.r() != r {
            return Err(CliError::Data(format!("model declares r = {r} but stores r = {}", model.r())));
        }
        Ok(model)
    }

    pub fn to_preprocess(&self) -> CliResult<Preprocess> {
        let p = &self.preprocessing;
        let pca = match &p.pca {
            Some(f) => Some(Pca {
                means: f.means.clone(),
                scales: f.scales.clone(),
                loadings: matrix_from(f.means.len(), f.d, &f.loadings, "PCA loadings")?,
                explained_variance: f.explained_variance.clone(),
                total_variance: f.total_variance,
            }),
            None => None,
        };
        Ok(Preprocess {
            columns: p.columns.clone(),
            standardizer: p.standardize.as_ref().map(|s| Standardizer {
                means: s.means.clone(),
                sds: s.sds.clone(),
            }),
            pca_correlation: p.pca.as_ref().is_some_and(|f| f.correlation),
            pca,
        })
    }

    pub fn to_json(&self) -> CliResult<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> CliResult<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Writes next to `path` and renames into place, so a failed write
    /// never leaves a partial model behind.
    pub fn save(&self, path: &Path) -> CliResult<()> {
        let json = self.to_json()?;
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => std::env::current_dir()?,
        };
        let name = path
            .file_name()
            .ok_or_else(|| CliError::Usage(format!("`{}` is not a file path", path.display())))?;
        let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
        let result = (|| -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(json.as_bytes())?;
            f.write_all(b"\n")?;
            f.sync_all()?;
            fs::rename(&tmp, path)
        })();
        if let Err(e) = result {
            let _ = fs::remove_file(&tmp);
            return Err(CliError::Data(format!("cannot write `{}`: {e}", path.display())));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let s = fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read `{}`: {e}", path.display())))?;
        Self::from_json(&s)
    }
}
