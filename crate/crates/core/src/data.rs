//! Dataset loading, preprocessing and synthetic generators.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{determinant, sym_eig, Matrix, SymEigResult};

/// Feature matrix with optional class ids and column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix<f64>,
    pub labels: Option<Vec<usize>>,
    pub names: Vec<String>,
    /// Original label strings, indexed by class id.
    pub label_names: Vec<String>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn r(&self) -> usize {
        self.x.cols()
    }

    pub fn class_count(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |&v| v + 1)
    }

    /// Keeps the columns named in `names`, in that order.
    pub fn select_columns(&self, names: &[String]) -> Result<Dataset> {
        let idx = names
            .iter()
            .map(|name| {
                self.names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| Error::InvalidInput(format!("input has no column `{name}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(self.n() * idx.len());
        for row in self.x.iter_rows() {
            data.extend(idx.iter().map(|&k| row[k]));
        }
        Ok(Dataset {
            x: Matrix::from_vec(self.n(), idx.len(), data)?,
            labels: self.labels.clone(),
            names: names.to_vec(),
            label_names: self.label_names.clone(),
        })
    }
}

/// Reads a headed, comma-separated table. Every column except
/// `label_column` must be numeric; labels may be any string and are mapped
/// to ids in order of first appearance.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_csv(file, label_column)
}

pub fn read_csv<R: std::io::Read>(reader: R, label_column: Option<&str>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: "empty file or missing header".into(),
        });
    }
    let label_idx = match label_column {
        Some(name) => Some(header.iter().position(|h| h == name).ok_or_else(|| {
            Error::InvalidInput(format!("label column `{name}` not in header {header:?}"))
        })?),
        None => None,
    };
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(k, _)| Some(k) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if names.is_empty() {
        return Err(Error::InvalidInput("no feature columns".into()));
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let mut n = 0;
    for (i, rec) in rdr.records().enumerate() {
        // Row numbers are 1-based and count the header.
        let row = i + 2;
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: rec.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        for (k, cell) in rec.iter().enumerate() {
            if Some(k) == label_idx {
                let next = label_names.len();
                let id = *label_ids.entry(cell.to_owned()).or_insert_with(|| {
                    label_names.push(cell.to_owned());
                    next
                });
                labels.push(id);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: k + 1,
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: k + 1,
                    message: format!("`{cell}` is not finite"),
                });
            }
            data.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Parse {
            row: 2,
            column: 1,
            message: "no data rows".into(),
        });
    }
    Ok(Dataset {
        x: Matrix::from_vec(n, names.len(), data)?,
        labels: label_idx.map(|_| labels),
        names,
        label_names,
    })
}

/// Writes features (shortest round-trip decimal form) followed by a `label`
/// column when labels are present.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv_to(ds, file)
}

pub fn write_csv_to<W: std::io::Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = ds.names.clone();
    if ds.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for (i, row) in ds.x.iter_rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        if let Some(l) = &ds.labels {
            let id = l[i];
            rec.push(
                ds.label_names
                    .get(id)
                    .cloned()
                    .unwrap_or_else(|| id.to_string()),
            );
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-column location and population scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    pub fn apply(&self, x: &Matrix<f64>) -> Result<Matrix<f64>> {
        self.check(x)?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (k, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.means[k]) / self.sds[k];
            }
        }
        Ok(out)
    }

    pub fn invert(&self, z: &Matrix<f64>) -> Result<Matrix<f64>> {
        self.check(z)?;
        let mut out = z.clone();
        for i in 0..out.rows() {
            for (k, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = *v * self.sds[k] + self.means[k];
            }
        }
        Ok(out)
    }

    fn check(&self, x: &Matrix<f64>) -> Result<()> {
        if x.cols() != self.means.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} columns, got {}",
                self.means.len(),
                x.cols()
            )));
        }
        Ok(())
    }
}

fn column_means(x: &Matrix<f64>) -> Vec<f64> {
    let n = x.rows() as f64;
    let mut m = vec![0.0; x.cols()];
    for row in x.iter_rows() {
        for (a, v) in m.iter_mut().zip(row) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|v| *v /= n);
    m
}

/// Centers each column and divides by its population standard deviation.
/// `names` is only used to label errors.
pub fn standardize(x: &Matrix<f64>, names: &[String]) -> Result<(Matrix<f64>, Standardizer)> {
    let n = x.rows() as f64;
    let means = column_means(x);
    let mut sds = vec![0.0; x.cols()];
    for row in x.iter_rows() {
        for ((s, v), m) in sds.iter_mut().zip(row).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    for (k, s) in sds.iter_mut().enumerate() {
        *s = (*s / n).sqrt();
        let scale = means[k].abs().max(1.0);
        if !(*s > 1e-12 * scale) {
            let name = names.get(k).cloned().unwrap_or_else(|| format!("#{}", k + 1));
            return Err(Error::InvalidInput(format!("column `{name}` is constant")));
        }
    }
    let st = Standardizer { means, sds };
    Ok((st.apply(x)?, st))
}

/// Projection onto leading principal axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub means: Vec<f64>,
    /// Divisors applied before projecting; all ones for covariance PCA.
    pub scales: Vec<f64>,
    /// r × d, columns are unit principal axes.
    pub loadings: Matrix<f64>,
    /// Variance along each retained axis, descending.
    pub explained_variance: Vec<f64>,
    /// Variance of the full (scaled) data, for ratios.
    pub total_variance: f64,
}

impl Pca {
    pub fn d(&self) -> usize {
        self.loadings.cols()
    }

    pub fn explained_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| v / self.total_variance)
            .collect()
    }

    pub fn project(&self, x: &Matrix<f64>) -> Result<Matrix<f64>> {
        if x.cols() != self.means.len() {
            return Err(Error::InvalidInput(format!(
                "PCA expects {} columns, got {}",
                self.means.len(),
                x.cols()
            )));
        }
        let mut c = x.clone();
        for i in 0..c.rows() {
            for (k, v) in c.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.means[k]) / self.scales[k];
            }
        }
        Ok(c.matmul(&self.loadings))
    }

    /// Maps scores back to the input space (exact when `d = r`).
    pub fn reconstruct(&self, scores: &Matrix<f64>) -> Matrix<f64> {
        let mut x = scores.matmul(&self.loadings.transpose());
        for i in 0..x.rows() {
            for (k, v) in x.row_mut(i).iter_mut().enumerate() {
                *v = *v * self.scales[k] + self.means[k];
            }
        }
        x
    }
}

/// Principal component scores of the centered data. `correlation` switches
/// from the covariance matrix to the correlation matrix.
pub fn pca_project(x: &Matrix<f64>, d: usize, correlation: bool) -> Result<(Matrix<f64>, Pca)> {
    let (n, r) = (x.rows(), x.cols());
    if d == 0 || d > r {
        return Err(Error::InvalidInput(format!("PCA dimension must lie in 1..={r}, got {d}")));
    }
    let means = column_means(x);
    let mut c = x.clone();
    for i in 0..n {
        for (k, v) in c.row_mut(i).iter_mut().enumerate() {
            *v -= means[k];
        }
    }
    let mut scales = vec![1.0; r];
    if correlation {
        for k in 0..r {
            let s = (c.column(k).iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
            if !(s > 0.0) {
                return Err(Error::InvalidInput(format!("column {} is constant", k + 1)));
            }
            scales[k] = s;
        }
        for i in 0..n {
            for (k, v) in c.row_mut(i).iter_mut().enumerate() {
                *v /= scales[k];
            }
        }
    }
    let cov = c.transpose().matmul(&c).scale(1.0 / n as f64).symmetrized();
    let SymEigResult {
        eigenvalues,
        eigenvectors,
    } = sym_eig(&cov)?;
    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let rank_floor = 1e-12 * eigenvalues[0].max(f64::MIN_POSITIVE);
    if eigenvalues[d - 1] <= rank_floor {
        let rank = eigenvalues.iter().filter(|&&v| v > rank_floor).count();
        return Err(Error::InvalidInput(format!(
            "PCA dimension {d} exceeds the data rank {rank}"
        )));
    }
    let mut loadings = Matrix::zeros(r, d);
    for k in 0..r {
        for j in 0..d {
            loadings[(k, j)] = eigenvectors[(k, j)];
        }
    }
    let scores = c.matmul(&loadings);
    Ok((
        scores,
        Pca {
            means,
            scales,
            loadings,
            explained_variance: eigenvalues[..d].to_vec(),
            total_variance: total,
        },
    ))
}

/// Unit-variance source families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// Uniform on `[-√3, √3]`.
    Uniform,
    /// Laplace with scale `1/√2`.
    Laplace,
    /// Equal mixture of `N(±0.9, 0.19)`.
    BimodalGauss,
}

const BIMODAL_MU: f64 = 0.9;

impl SourceKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "laplace" => Ok(Self::Laplace),
            "bimodal" | "bimodal-gauss" => Ok(Self::BimodalGauss),
            other => Err(Error::InvalidInput(format!(
                "unknown source kind `{other}` (uniform, laplace, bimodal-gauss)"
            ))),
        }
    }

    /// Log-density of the unit-variance source.
    pub fn log_pdf(self, y: f64) -> f64 {
        match self {
            Self::Uniform => {
                if y.abs() <= 3f64.sqrt() {
                    -(2.0 * 3f64.sqrt()).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::Laplace => {
                let b = 1.0 / 2f64.sqrt();
                -(2.0 * b).ln() - y.abs() / b
            }
            Self::BimodalGauss => {
                let var = 1.0 - BIMODAL_MU * BIMODAL_MU;
                let lp = |m: f64| -0.5 * (y - m) * (y - m) / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln();
                let (a, b) = (lp(BIMODAL_MU), lp(-BIMODAL_MU));
                let m = a.max(b);
                m + (0.5 * (a - m).exp() + 0.5 * (b - m).exp()).ln()
            }
        }
    }

    pub fn sample<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            Self::Uniform => 3f64.sqrt() * (2.0 * rng.gen::<f64>() - 1.0),
            Self::Laplace => {
                let u: f64 = rng.gen::<f64>() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln() / 2f64.sqrt()
            }
            Self::BimodalGauss => {
                let sd = (1.0 - BIMODAL_MU * BIMODAL_MU).sqrt();
                let z: f64 = StandardNormal.sample(rng);
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                sign * BIMODAL_MU + sd * z
            }
        }
    }
}

/// Generative description of an ICA mixture: `x = A_j y + shift_j` with
/// independent unit-variance coordinates `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub m: usize,
    pub r: usize,
    pub n: usize,
    pub lambdas: Vec<f64>,
    /// `source_kinds[j][k]`.
    pub source_kinds: Vec<Vec<SourceKind>>,
    pub a: Vec<Matrix<f64>>,
    pub shifts: Vec<Vec<f64>>,
    pub seed: u64,
}

impl SynthSpec {
    /// Random well-conditioned mixing matrices (singular values in
    /// `[0.5, 1]`), shifts spread along random directions with pairwise
    /// distances of at least `separation`, sources alternating uniform and
    /// Laplace.
    pub fn random(m: usize, r: usize, n: usize, lambdas: Vec<f64>, separation: f64, seed: u64) -> Result<Self> {
        if m == 0 || r == 0 {
            return Err(Error::InvalidInput("m and r must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a11c_e000_0001);
        let a = (0..m)
            .map(|_| random_well_conditioned(r, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let source_kinds = (0..m)
            .map(|j| {
                (0..r)
                    .map(|k| {
                        if (j + k) % 2 == 0 {
                            SourceKind::Uniform
                        } else {
                            SourceKind::Laplace
                        }
                    })
                    .collect()
            })
            .collect();
        let shifts = spread_shifts(m, r, separation, &mut rng);
        let spec = Self {
            m,
            r,
            n,
            lambdas,
            source_kinds,
            a,
            shifts,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.lambdas.len() != self.m
            || self.a.len() != self.m
            || self.shifts.len() != self.m
            || self.source_kinds.len() != self.m
        {
            return bad(format!("per-component fields must have length m = {}", self.m));
        }
        if self.lambdas.iter().any(|&l| !(l >= 0.0)) {
            return bad("mixing weights must be nonnegative".into());
        }
        let s: f64 = self.lambdas.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return bad(format!("mixing weights sum to {s}, not 1"));
        }
        for j in 0..self.m {
            if self.a[j].rows() != self.r || self.a[j].cols() != self.r {
                return bad(format!("A_{j} must be {0}x{0}", self.r));
            }
            if determinant(&self.a[j]).abs() < 1e-12 {
                return bad(format!("A_{j} is singular"));
            }
            if self.shifts[j].len() != self.r || self.source_kinds[j].len() != self.r {
                return bad(format!("component {j} fields must have length r = {}", self.r));
            }
        }
        Ok(())
    }
}

impl SynthSpec {
    /// Labels maximizing the true `λⱼ fⱼ(x)`; their error against the
    /// generating labels is the best any clustering can do on average.
    pub fn bayes_labels(&self, x: &Matrix<f64>) -> Result<Vec<usize>> {
        let inv: Vec<Matrix<f64>> = self.a.iter().map(crate::numerics::invert).collect::<Result<_>>()?;
        let log_det: Vec<f64> = self.a.iter().map(|a| determinant(a).abs().ln()).collect();
        Ok(x.iter_rows()
            .map(|row| {
                let mut best = (0, f64::NEG_INFINITY);
                for j in 0..self.m {
                    let c: Vec<f64> = row.iter().zip(&self.shifts[j]).map(|(a, b)| a - b).collect();
                    let y = inv[j].mat_vec(&c);
                    let lp = self.lambdas[j].ln() - log_det[j]
                        + y.iter()
                            .zip(&self.source_kinds[j])
                            .map(|(&v, k)| k.log_pdf(v))
                            .sum::<f64>();
                    if lp > best.1 {
                        best = (j, lp);
                    }
                }
                best.0
            })
            .collect())
    }
}

fn random_orthogonal<R: Rng>(r: usize, rng: &mut R) -> Result<Matrix<f64>> {
    let g = Matrix::from_vec(
        r,
        r,
        (0..r * r).map(|_| StandardNormal.sample(rng)).collect(),
    )?;
    // Polar factor G (GᵀG)^{-1/2} is orthogonal.
    let gtg = g.transpose().matmul(&g).symmetrized();
    Ok(g.matmul(&crate::numerics::spd_inv_sqrt(&gtg)?))
}

fn random_well_conditioned<R: Rng>(r: usize, rng: &mut R) -> Result<Matrix<f64>> {
    let u = random_orthogonal(r, rng)?;
    let v = random_orthogonal(r, rng)?;
    let s: Vec<f64> = (0..r).map(|_| 0.5 * 2f64.powf(rng.gen::<f64>())).collect();
    Ok(u.matmul(&Matrix::from_diag(&s)).matmul(&v.transpose()))
}

fn spread_shifts<R: Rng>(m: usize, r: usize, separation: f64, rng: &mut R) -> Vec<Vec<f64>> {
    // Points on a random line, `separation` apart, centered at the origin.
    let mut dir: Vec<f64> = (0..r).map(|_| StandardNormal.sample(rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    dir.iter_mut().for_each(|v| *v /= norm);
    let mid = (m as f64 - 1.0) / 2.0;
    (0..m)
        .map(|j| dir.iter().map(|d| d * separation * (j as f64 - mid)).collect())
        .collect()
}

/// Draws `spec.n` observations with their generating component as label.
pub fn synth(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, r) = (spec.n, spec.r);
    let mut data = Vec::with_capacity(n * r);
    let mut labels = Vec::with_capacity(n);
    let mut y = vec![0.0; r];
    for _ in 0..n {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut j = spec.m - 1;
        for (c, &l) in spec.lambdas.iter().enumerate() {
            acc += l;
            if u < acc {
                j = c;
                break;
            }
        }
        for (yk, kind) in y.iter_mut().zip(&spec.source_kinds[j]) {
            *yk = kind.sample(&mut rng);
        }
        let x = spec.a[j].mat_vec(&y);
        data.extend(x.iter().zip(&spec.shifts[j]).map(|(a, b)| a + b));
        labels.push(j);
    }
    Ok(Dataset {
        x: Matrix::from_vec(n, r, data)?,
        labels: Some(labels),
        names: (1..=r).map(|k| format!("x{k}")).collect(),
        label_names: (0..spec.m).map(|j| j.to_string()).collect(),
    })
}

/// Grey levels and contrast of the two patch sources used by [`synth_patches`]:
/// a darker smooth "painting" and a lighter speckled "newspaper".
pub const PATCH_LEVELS: [f64; 2] = [0.5, 0.62];
pub const PATCH_CONTRAST: f64 = 0.15;

/// Flattened `side × side` patches from two stationary random fields, on a
/// pixel-intensity scale. See [`synth_patches_with`].
pub fn synth_patches(n: usize, side: usize, seed: u64) -> Result<Dataset> {
    synth_patches_with(n, side, PATCH_LEVELS, PATCH_CONTRAST, seed)
}

/// Class 0 is a spatially smooth field: Laplace innovations blurred by a
/// separable binomial filter, so neighbouring pixels are strongly
/// correlated. Class 1 is white Laplace noise. Each field has unit marginal
/// variance before it is mapped to `levels[class] + contrast · field`, so
/// with equal levels the classes differ only in spatial structure. Values
/// are not clipped.
pub fn synth_patches_with(n: usize, side: usize, levels: [f64; 2], contrast: f64, seed: u64) -> Result<Dataset> {
    if side == 0 || n == 0 {
        return Err(Error::InvalidInput("need a positive patch size and count".into()));
    }
    if !(contrast > 0.0 && contrast.is_finite()) || levels.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "patch levels must be finite and contrast positive, got {levels:?} and {contrast}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taps = [1.0, 4.0, 6.0, 4.0, 1.0];
    let pad = taps.len() / 2;
    let wide = side + 2 * pad;
    let tap_sq: f64 = taps.iter().map(|t| t * t).sum();
    // The separable sum has variance (Σt²)² per unit innovation.
    let norm = tap_sq;
    let r = side * side;
    let mut data = Vec::with_capacity(n * r);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let class = usize::from(rng.gen::<bool>());
        if class == 1 {
            data.extend((0..r).map(|_| levels[1] + contrast * SourceKind::Laplace.sample(&mut rng)));
        } else {
            let raw: Vec<f64> = (0..wide * wide)
                .map(|_| SourceKind::Laplace.sample(&mut rng))
                .collect();
            let mut rows = vec![0.0; wide * side];
            for i in 0..wide {
                for c in 0..side {
                    rows[i * side + c] = (0..taps.len()).map(|t| taps[t] * raw[i * wide + c + t]).sum();
                }
            }
            for i in 0..side {
                for c in 0..side {
                    let v: f64 = (0..taps.len()).map(|t| taps[t] * rows[(i + t) * side + c]).sum();
                    data.push(levels[0] + contrast * v / norm);
                }
            }
        }
        labels.push(class);
    }
    Ok(Dataset {
        x: Matrix::from_vec(n, r, data)?,
        labels: Some(labels),
        names: (0..r).map(|k| format!("p{}_{}", k / side, k % side)).collect(),
        label_names: vec!["smooth".into(), "white".into()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture(name: &str) -> std::path::PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
    }

    fn class_sizes(labels: &[usize]) -> Vec<usize> {
        let k = labels.iter().max().unwrap() + 1;
        let mut c = vec![0; k];
        labels.iter().for_each(|&l| c[l] += 1);
        c
    }

    #[test]
    fn bundled_fixtures() {
        let iris = load_csv(fixture("iris.csv"), Some("species")).unwrap();
        assert_eq!((iris.n(), iris.r()), (150, 4));
        assert_eq!(class_sizes(iris.labels.as_ref().unwrap()), vec![50, 50, 50]);
        let wine = load_csv(fixture("wine.csv"), Some("cultivar")).unwrap();
        assert_eq!((wine.n(), wine.r()), (178, 13));
        assert_eq!(class_sizes(wine.labels.as_ref().unwrap()), vec![59, 71, 48]);
        let tone = load_csv(fixture("tone.csv"), None).unwrap();
        assert_eq!((tone.n(), tone.r()), (150, 2));
    }

    #[test]
    fn labels_in_first_appearance_order() {
        let ds = read_csv("a,cls\n1,b\n2,a\n3,b\n".as_bytes(), Some("cls")).unwrap();
        assert_eq!(ds.labels.unwrap(), vec![0, 1, 0]);
        assert_eq!(ds.label_names, vec!["b", "a"]);
        assert_eq!(ds.names, vec!["a"]);
    }

    #[test]
    fn parse_errors_carry_location() {
        match read_csv("a,b\n1,2\n3,x\n".as_bytes(), None) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (3, 2)),
            other => panic!("{other:?}"),
        }
        match read_csv("a,b\n1,2\n3\n".as_bytes(), None) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_csv("".as_bytes(), None), Err(Error::Parse { .. })));
        assert!(matches!(read_csv("a,b\n".as_bytes(), None), Err(Error::Parse { .. })));
    }

    #[test]
    fn standardize_two_points() {
        let x = Matrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let (z, st) = standardize(&x, &["c".into()]).unwrap();
        assert_eq!(z.as_slice(), &[-1.0, 1.0]);
        assert_eq!(st.invert(&z).unwrap(), x);
        let (z2, _) = standardize(&z, &["c".into()]).unwrap();
        assert!(z2.max_abs_diff(&z) < 1e-12);
    }

    #[test]
    fn standardize_names_constant_column() {
        let x = Matrix::from_rows(&[vec![1.0, 3.0], vec![2.0, 3.0]]).unwrap();
        let err = standardize(&x, &["a".into(), "flat".into()]).unwrap_err();
        assert!(err.to_string().contains("flat"));
    }

    #[test]
    fn pca_full_basis_reconstructs() {
        let wine = load_csv(fixture("wine.csv"), Some("cultivar")).unwrap();
        let (scores, pca) = pca_project(&wine.x, 13, false).unwrap();
        assert!(pca.reconstruct(&scores).max_abs_diff(&wine.x) < 1e-8);
        let (s5, p5) = pca_project(&wine.x, 5, false).unwrap();
        assert_eq!(s5.cols(), 5);
        assert!(p5.explained_variance.windows(2).all(|w| w[0] >= w[1]));
        assert!(p5.project(&wine.x).unwrap().max_abs_diff(&s5) < 1e-9);
    }

    #[test]
    fn pca_rank_one() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        let (_, pca) = pca_project(&x, 1, false).unwrap();
        assert!((pca.explained_ratio()[0] - 1.0).abs() < 1e-12);
        assert!(pca_project(&x, 2, false).is_err());
    }

    #[test]
    fn pca_scores_uncorrelated() {
        let iris = load_csv(fixture("iris.csv"), Some("species")).unwrap();
        for corr in [false, true] {
            let (s, _) = pca_project(&iris.x, 3, corr).unwrap();
            let cov = s.transpose().matmul(&s).scale(1.0 / s.rows() as f64);
            for a in 0..3 {
                for b in 0..3 {
                    if a != b {
                        assert!(cov[(a, b)].abs() < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let spec = SynthSpec::random(2, 3, 50, vec![0.5, 0.5], 4.0, 3).unwrap();
        let ds = synth(&spec).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), Some("label")).unwrap();
        assert_eq!(back.x, ds.x);
        // Ids come back in first-appearance order; compare as partitions.
        let orig = ds.labels.unwrap();
        let got = back.labels.unwrap();
        let m = crate::eval::best_permutation_error(&got, &orig).unwrap();
        assert_eq!(m.error_rate, 0.0);
    }

    #[test]
    fn synth_uniform_sources_uncorrelated() {
        let spec = SynthSpec {
            m: 1,
            r: 2,
            n: 2000,
            lambdas: vec![1.0],
            source_kinds: vec![vec![SourceKind::Uniform; 2]],
            a: vec![Matrix::identity(2)],
            shifts: vec![vec![0.0, 0.0]],
            seed: 11,
        };
        let ds = synth(&spec).unwrap();
        let (z, _) = standardize(&ds.x, &[]).unwrap();
        let rho = z.column(0).iter().zip(z.column(1)).map(|(a, b)| a * b).sum::<f64>() / 2000.0;
        assert!(rho.abs() < 0.05, "rho {rho}");
    }

    #[test]
    fn synth_component_counts_binomial() {
        let spec = SynthSpec::random(2, 2, 4000, vec![0.5, 0.5], 4.0, 7).unwrap();
        let ds = synth(&spec).unwrap();
        let c0 = ds.labels.unwrap().iter().filter(|&&l| l == 0).count() as f64;
        let sd = (4000.0f64 * 0.25).sqrt();
        assert!((c0 - 2000.0).abs() < 3.0 * sd);
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = SynthSpec::random(2, 3, 300, vec![0.3, 0.7], 5.0, 99).unwrap();
        assert_eq!(synth(&spec).unwrap(), synth(&spec).unwrap());
    }

    #[test]
    fn source_second_moments_are_identity() {
        let n = 20000;
        for kind in [SourceKind::Uniform, SourceKind::Laplace, SourceKind::BimodalGauss] {
            let spec = SynthSpec {
                m: 1,
                r: 2,
                n,
                lambdas: vec![1.0],
                source_kinds: vec![vec![kind; 2]],
                a: vec![Matrix::identity(2)],
                shifts: vec![vec![0.0; 2]],
                seed: 5,
            };
            let x = synth(&spec).unwrap().x;
            let mom = x.transpose().matmul(&x).scale(1.0 / n as f64);
            // Fourth moments are at most 6 for these families, so 3σ ≤ 3·√5/√n.
            let tol = 3.0 * 5f64.sqrt() / (n as f64).sqrt();
            assert!(mom.max_abs_diff(&Matrix::identity(2)) < tol, "{kind:?}: {mom:?}");
        }
    }

    #[test]
    fn source_densities_integrate_to_one() {
        for kind in [SourceKind::Uniform, SourceKind::Laplace, SourceKind::BimodalGauss] {
            let dx = 1e-3;
            let mass: f64 = (-20000..=20000).map(|i| kind.log_pdf(i as f64 * dx).exp() * dx).sum();
            assert!((mass - 1.0).abs() < 2e-3, "{kind:?}: {mass}");
        }
    }

    #[test]
    fn bayes_labels_on_separated_mixture() {
        let spec = SynthSpec::random(2, 2, 1000, vec![0.5, 0.5], 8.0, 1).unwrap();
        let ds = synth(&spec).unwrap();
        let b = spec.bayes_labels(&ds.x).unwrap();
        let e = crate::eval::best_permutation_error(&b, ds.labels.as_ref().unwrap()).unwrap();
        assert!(e.error_rate < 0.01);
    }

    #[test]
    fn patches_have_unit_variance_per_class() {
        let ds = synth_patches_with(400, 6, [0.0, 0.0], 1.0, 1).unwrap();
        assert_eq!(ds.r(), 36);
        let labels = ds.labels.unwrap();
        for class in 0..2 {
            let rows: Vec<usize> = (0..400).filter(|&i| labels[i] == class).collect();
            let x = ds.x.select_rows(&rows);
            let var = x.as_slice().iter().map(|v| v * v).sum::<f64>() / x.as_slice().len() as f64;
            assert!((var - 1.0).abs() < 0.15, "class {class}: {var}");
        }
    }

    #[test]
    fn patch_levels_and_contrast_are_affine() {
        let base = synth_patches_with(50, 4, [0.0, 0.0], 1.0, 9).unwrap();
        let img = synth_patches(50, 4, 9).unwrap();
        assert_eq!(base.labels, img.labels);
        let labels = img.labels.as_ref().unwrap();
        for i in 0..50 {
            for k in 0..16 {
                let want = PATCH_LEVELS[labels[i]] + PATCH_CONTRAST * base.x[(i, k)];
                assert!((img.x[(i, k)] - want).abs() <= 1e-12);
            }
        }
        assert!(synth_patches_with(5, 2, [0.0, 0.0], 0.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn standardize_round_trips(
            rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 4..30)
        ) {
            let x = Matrix::from_rows(&rows).unwrap();
            if let Ok((z, st)) = standardize(&x, &[]) {
                let back = st.invert(&z).unwrap();
                prop_assert!(back.max_abs_diff(&x) <= 1e-12 * (1.0 + x.max_abs()));
            }
        }
    }
}
