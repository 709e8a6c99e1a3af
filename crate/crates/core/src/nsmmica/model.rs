use crate::error::{Error, Result};
use crate::numerics::{determinant, Matrix};
use crate::scalar::Scalar;
use crate::wfastica::{apply_rows, subtract_row};
use crate::wkde::WeightedKde1D;

/// Log-density floor used for rows where every component underflows.
pub const LOG_DENSITY_FLOOR: f64 = -745.0;

/// One mixture component: weight, affine unmixing `u = A⁻¹ (x − mean)` and
/// one KDE per latent coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Component<T> {
    pub lambda: T,
    pub mean: Vec<T>,
    pub a: Matrix<T>,
    pub a_inv: Matrix<T>,
    pub kdes: Vec<WeightedKde1D<T>>,
    log_abs_det_a: T,
}

impl<T: Scalar> Component<T> {
    pub fn new(
        lambda: T,
        mean: Vec<T>,
        a: Matrix<T>,
        a_inv: Matrix<T>,
        kdes: Vec<WeightedKde1D<T>>,
    ) -> Result<Self> {
        let r = mean.len();
        if !(lambda >= T::zero()) || lambda > T::one() {
            return Err(Error::InvalidInput(format!(
                "component weight must lie in [0, 1], got {lambda}"
            )));
        }
        if a.rows() != r || a.cols() != r || a_inv.rows() != r || a_inv.cols() != r {
            return Err(Error::InvalidInput(format!(
                "mixing matrices must be {r}x{r}"
            )));
        }
        if kdes.len() != r {
            return Err(Error::InvalidInput(format!(
                "expected {r} coordinate densities, got {}",
                kdes.len()
            )));
        }
        if !a.is_finite() || !a_inv.is_finite() {
            return Err(Error::InvalidInput("mixing matrix is not finite".into()));
        }
        let det = determinant(&a);
        if det == T::zero() || !det.is_finite() {
            return Err(Error::SingularMatrix {
                pivot: det.to_f64_lossy(),
            });
        }
        Ok(Self {
            lambda,
            mean,
            a,
            a_inv,
            kdes,
            log_abs_det_a: det.abs().ln(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_abs_det_a(&self) -> T {
        self.log_abs_det_a
    }

    pub fn bandwidths(&self) -> Vec<T> {
        self.kdes.iter().map(WeightedKde1D::bandwidth).collect()
    }

    /// Latent coordinates `A⁻¹ (xᵢ − mean)` for every row.
    pub fn transform(&self, x: &Matrix<T>) -> Matrix<T> {
        apply_rows(&subtract_row(x, &self.mean), &self.a_inv)
    }

    /// `ln λ + ln f(xᵢ)` for every row, where
    /// `f(x) = |det A|⁻¹ ∏ₖ qₖ([A⁻¹(x − mean)]ₖ)`.
    pub fn weighted_log_density(&self, x: &Matrix<T>) -> Vec<T> {
        let u = self.transform(x);
        let base = self.lambda.ln() - self.log_abs_det_a;
        let mut out = vec![base; x.rows()];
        for (k, kde) in self.kdes.iter().enumerate() {
            let col = u.column(k);
            for (o, v) in out.iter_mut().zip(kde.log_eval_batch(&col)) {
                *o = *o + v;
            }
        }
        out
    }
}

/// Summary of a fit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitReport {
    pub outer_iters: usize,
    pub loglik_trace: Vec<f64>,
    pub lambda_trace: Vec<Vec<f64>>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn final_loglik(&self) -> Option<f64> {
        self.loglik_trace.last().copied()
    }
}

/// Fitted (or hand-assembled) mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel<T> {
    pub components: Vec<Component<T>>,
    pub report: FitReport,
}

impl<T: Scalar> MixtureModel<T> {
    pub fn new(components: Vec<Component<T>>, report: FitReport) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::InvalidInput("a mixture needs at least one component".into()));
        };
        let r = first.dim();
        if components.iter().any(|c| c.dim() != r) {
            return Err(Error::InvalidInput("components disagree on dimension".into()));
        }
        Ok(Self { components, report })
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn r(&self) -> usize {
        self.components[0].dim()
    }

    pub fn lambdas(&self) -> Vec<T> {
        self.components.iter().map(|c| c.lambda).collect()
    }

    fn check_dims(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.r() {
            return Err(Error::InvalidInput(format!(
                "model dimension {} but data has {} columns",
                self.r(),
                x.cols()
            )));
        }
        Ok(())
    }
}

/// n × m responsibilities; rows sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix<T> {
    n: usize,
    m: usize,
    values: Vec<T>,
}

impl<T: Scalar> PosteriorMatrix<T> {
    /// Validates entries in `[0, 1]` and unit row sums.
    pub fn new(n: usize, m: usize, values: Vec<T>) -> Result<Self> {
        if n == 0 || m == 0 || values.len() != n * m {
            return Err(Error::InvalidInput(format!(
                "posterior needs {n}x{m} entries, got {}",
                values.len()
            )));
        }
        let tol = T::c(1e-12).max(T::epsilon() * T::from_usize_lossy(4 * m));
        for (i, row) in values.chunks_exact(m).enumerate() {
            if row.iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
                return Err(Error::InvalidInput(format!(
                    "posterior row {i} has entries outside [0, 1]"
                )));
            }
            let s: T = row.iter().copied().sum();
            if (s - T::one()).abs() > tol {
                return Err(Error::InvalidInput(format!(
                    "posterior row {i} sums to {s}"
                )));
            }
        }
        Ok(Self { n, m, values })
    }

    /// One-hot labels softened to `hit` on the label and the remainder spread
    /// evenly over the other components.
    pub fn from_labels(labels: &[usize], m: usize, hit: T) -> Result<Self> {
        if m == 1 {
            return Self::new(labels.len(), 1, vec![T::one(); labels.len()]);
        }
        let miss = (T::one() - hit) / T::from_usize_lossy(m - 1);
        let mut values = Vec::with_capacity(labels.len() * m);
        for &l in labels {
            if l >= m {
                return Err(Error::InvalidInput(format!("label {l} >= {m}")));
            }
            values.extend((0..m).map(|j| if j == l { hit } else { miss }));
        }
        Self::new(labels.len(), m, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.n).map(|i| self.values[i * self.m + j]).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.m + j]
    }

    /// Rows reordered by index.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.m);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            n: idx.len(),
            m: self.m,
            values,
        }
    }

    /// Argmax per row; ties go to the smallest index.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.values
            .chunks_exact(self.m)
            .map(|row| {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// `ln λⱼ fⱼ(xᵢ)` for every observation and component (row-major n × m).
pub(crate) fn log_density_table<T: Scalar>(model: &MixtureModel<T>, x: &Matrix<T>) -> Vec<T> {
    let n = x.rows();
    let m = model.m();
    let mut table = vec![T::zero(); n * m];
    for (j, c) in model.components.iter().enumerate() {
        for (i, v) in c.weighted_log_density(x).into_iter().enumerate() {
            table[i * m + j] = v;
        }
    }
    table
}

/// Normalizes each row of a log-density table by max-shift. Rows where every
/// entry is `-inf` become uniform; their count is returned.
pub(crate) fn posterior_from_table<T: Scalar>(
    table: &[T],
    n: usize,
    m: usize,
) -> (PosteriorMatrix<T>, usize) {
    let mut values = vec![T::zero(); n * m];
    let mut fallback = 0;
    let uniform = T::one() / T::from_usize_lossy(m);
    for (row, out) in table.chunks_exact(m).zip(values.chunks_exact_mut(m)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        if max == T::neg_infinity() || max.is_nan() {
            out.iter_mut().for_each(|v| *v = uniform);
            fallback += 1;
            continue;
        }
        let mut s = T::zero();
        for (o, &v) in out.iter_mut().zip(row) {
            *o = (v - max).exp();
            s = s + *o;
        }
        out.iter_mut().for_each(|v| *v = *v / s);
    }
    (PosteriorMatrix { n, m, values }, fallback)
}

/// Sum over rows of `ln Σⱼ λⱼ fⱼ(xᵢ)`; rows with no finite entry contribute
/// [`LOG_DENSITY_FLOOR`]. Returns the number of floored rows.
pub(crate) fn loglik_from_table<T: Scalar>(table: &[T], m: usize) -> (T, usize) {
    let mut total = T::zero();
    let mut floored = 0;
    for row in table.chunks_exact(m) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        if max == T::neg_infinity() || max.is_nan() {
            total = total + T::c(LOG_DENSITY_FLOOR);
            floored += 1;
            continue;
        }
        let s: T = row.iter().map(|&v| (v - max).exp()).sum();
        total = total + max + s.ln();
    }
    (total, floored)
}

/// Responsibilities `pᵢⱼ ∝ λⱼ fⱼ(xᵢ)`, computed in log space.
pub fn posterior<T: Scalar>(model: &MixtureModel<T>, x: &Matrix<T>) -> Result<PosteriorMatrix<T>> {
    model.check_dims(x)?;
    let table = log_density_table(model, x);
    let (p, fallback) = posterior_from_table(&table, x.rows(), model.m());
    if fallback > 0 {
        log::warn!("{fallback} rows had zero density under every component; assigned uniformly");
    }
    Ok(p)
}

/// Observed-data log-likelihood `Σᵢ ln Σⱼ λⱼ fⱼ(xᵢ)`.
pub fn log_likelihood<T: Scalar>(model: &MixtureModel<T>, x: &Matrix<T>) -> Result<T> {
    model.check_dims(x)?;
    let table = log_density_table(model, x);
    let (ll, floored) = loglik_from_table(&table, model.m());
    if floored > 0 {
        log::warn!("{floored} rows had zero likelihood; floored at {LOG_DENSITY_FLOOR}");
    }
    Ok(ll)
}

/// Hard labels (maximum posterior, ties to the smallest index) and the
/// posterior itself.
pub fn predict<T: Scalar>(
    model: &MixtureModel<T>,
    x: &Matrix<T>,
) -> Result<(Vec<usize>, PosteriorMatrix<T>)> {
    let p = posterior(model, x)?;
    Ok((p.hard_labels(), p))
}
