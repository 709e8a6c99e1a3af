//! Weighted FastICA: centering, whitening and the symmetric-orthogonalization
//! fixed point, with observation weights (posterior probabilities) in every
//! moment.
//!
//! All weighted moments are normalized by `Σ wᵢ`. Reductions run over
//! observations in index order, so results are bit-reproducible.

use crate::error::{Error, Result};
use crate::numerics::{
    dot, invert, spd_inv_sqrt, sym_eig, Matrix, EIGEN_FLOOR,
};
use crate::scalar::Scalar;

/// Contrast nonlinearity `g` (and its derivative) for the fixed point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonlinearity {
    /// `g(y) = tanh(α y)`, `α ∈ [1, 2]`.
    LogCosh { alpha: f64 },
    /// `g(y) = y exp(-y²/2)`.
    Gauss,
}

impl Default for Nonlinearity {
    fn default() -> Self {
        Nonlinearity::LogCosh { alpha: 1.0 }
    }
}

impl Nonlinearity {
    pub fn logcosh(alpha: f64) -> Result<Self> {
        if !(1.0..=2.0).contains(&alpha) {
            return Err(Error::InvalidInput(format!(
                "logcosh alpha must lie in [1, 2], got {alpha}"
            )));
        }
        Ok(Nonlinearity::LogCosh { alpha })
    }
}

/// `(g(y), g'(y))`.
#[inline]
pub fn g_and_gprime<T: Scalar>(nl: Nonlinearity, y: T) -> (T, T) {
    match nl {
        Nonlinearity::LogCosh { alpha } => {
            let a = T::c(alpha);
            let t = (a * y).tanh();
            (t, a * (T::one() - t * t))
        }
        Nonlinearity::Gauss => {
            let e = (-y * y * T::c(0.5)).exp();
            (y * e, (T::one() - y * y) * e)
        }
    }
}

/// Affine whitening `z = V (x − mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitening<T> {
    pub mean: Vec<T>,
    /// `E D^{-1/2} Eᵀ`, symmetric.
    pub v: Matrix<T>,
    /// `E D^{1/2} Eᵀ`.
    pub v_inv: Matrix<T>,
}

/// Unmixing for whitened data: rows of `w` are orthonormal, `a_inv = W V`
/// and `a = V⁻¹ W⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct Unmixing<T> {
    pub w: Matrix<T>,
    pub a_inv: Matrix<T>,
    pub a: Matrix<T>,
    pub inner_iters: usize,
    /// False when the sweep cap was hit before the tolerance.
    pub converged: bool,
}

fn weight_total<T: Scalar>(w: &[T]) -> Result<T> {
    let total: T = w.iter().copied().sum();
    if w.iter().any(|v| !(*v >= T::zero())) {
        return Err(Error::InvalidInput("weights must be nonnegative".into()));
    }
    if !(total > T::zero()) {
        return Err(Error::EmptyComponent(0));
    }
    Ok(total)
}

/// Weighted column means.
pub fn weighted_mean<T: Scalar>(x: &Matrix<T>, w: &[T]) -> Result<Vec<T>> {
    if w.len() != x.rows() {
        return Err(Error::InvalidInput(format!(
            "{} weights for {} observations",
            w.len(),
            x.rows()
        )));
    }
    let total = weight_total(w)?;
    let mut mean = vec![T::zero(); x.cols()];
    for (row, &wi) in x.iter_rows().zip(w) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m = *m + wi * v;
        }
    }
    for m in &mut mean {
        *m = *m / total;
    }
    Ok(mean)
}

/// Subtracts the weighted mean from every row.
pub fn weighted_center<T: Scalar>(x: &Matrix<T>, w: &[T]) -> Result<(Matrix<T>, Vec<T>)> {
    let mean = weighted_mean(x, w)?;
    Ok((subtract_row(x, &mean), mean))
}

pub(crate) fn subtract_row<T: Scalar>(x: &Matrix<T>, v: &[T]) -> Matrix<T> {
    let mut out = x.clone();
    for i in 0..out.rows() {
        for (o, &m) in out.row_mut(i).iter_mut().zip(v) {
            *o = *o - m;
        }
    }
    out
}

/// `Σ wᵢ xᵢ xᵢᵀ / Σ wᵢ` (no re-centering).
pub fn weighted_second_moment<T: Scalar>(x: &Matrix<T>, w: &[T]) -> Result<Matrix<T>> {
    let total = weight_total(w)?;
    let r = x.cols();
    let mut c = Matrix::zeros(r, r);
    for (row, &wi) in x.iter_rows().zip(w) {
        if wi == T::zero() {
            continue;
        }
        for a in 0..r {
            let wa = wi * row[a];
            for b in a..r {
                c[(a, b)] = c[(a, b)] + wa * row[b];
            }
        }
    }
    for a in 0..r {
        for b in a..r {
            let v = c[(a, b)] / total;
            c[(a, b)] = v;
            c[(b, a)] = v;
        }
    }
    Ok(c)
}

/// Whitens centered data so its weighted covariance is the identity.
///
/// The returned `Whitening::mean` is the weighted mean of the input, which is
/// zero up to rounding for centered input.
pub fn weighted_whiten<T: Scalar>(
    xc: &Matrix<T>,
    w: &[T],
) -> Result<(Matrix<T>, Whitening<T>)> {
    let mean = weighted_mean(xc, w)?;
    let cov = weighted_second_moment(xc, w)?;
    let eig = sym_eig(&cov)?;
    let largest = eig.eigenvalues[0];
    let smallest = *eig.eigenvalues.last().expect("r >= 1");
    let floor = T::c(EIGEN_FLOOR) * largest.max(T::zero());
    if !(largest > T::zero()) || smallest <= floor {
        return Err(Error::DegenerateCovariance {
            eigenvalue: smallest.to_f64_lossy(),
            floor: floor.to_f64_lossy(),
        });
    }
    let v1 = eig.compose(|d| T::one() / d.sqrt());
    let v1_inv = eig.compose(|d| d.sqrt());
    // One refinement pass: ill-conditioned covariances leave a residual of
    // order eps·cond after the first whitening, the second removes it.
    let z1 = apply_rows(xc, &v1);
    let eig2 = sym_eig(&weighted_second_moment(&z1, w)?)?;
    let v2 = eig2.compose(|d| T::one() / d.sqrt());
    let v = v2.matmul(&v1);
    let v_inv = v1_inv.matmul(&eig2.compose(|d| d.sqrt()));
    let z = apply_rows(&z1, &v2);
    Ok((z, Whitening { mean, v, v_inv }))
}

/// Centers and whitens in one call; `mean` is the weighted mean removed.
pub fn whiten_weighted<T: Scalar>(x: &Matrix<T>, w: &[T]) -> Result<(Matrix<T>, Whitening<T>)> {
    let (xc, mean) = weighted_center(x, w)?;
    let (z, mut wh) = weighted_whiten(&xc, w)?;
    wh.mean = mean;
    Ok((z, wh))
}

/// Returns `X Mᵀ`, i.e. `M xᵢ` for every row `xᵢ`.
pub fn apply_rows<T: Scalar>(x: &Matrix<T>, m: &Matrix<T>) -> Matrix<T> {
    x.matmul(&m.transpose())
}

/// `(W Wᵀ)^{-1/2} W`.
pub fn symmetric_orthogonalize<T: Scalar>(w: &Matrix<T>) -> Result<Matrix<T>> {
    let wwt = w.matmul(&w.transpose());
    let s = spd_inv_sqrt(&wwt).map_err(|e| match e {
        Error::DegenerateCovariance { eigenvalue, .. } => Error::NumericalFailure(format!(
            "W Wᵀ is singular during symmetric orthogonalization (eigenvalue {eigenvalue:e})"
        )),
        other => other,
    })?;
    Ok(s.matmul(w))
}

/// Result of the fixed-point iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint<T> {
    /// Orthonormal rows.
    pub w: Matrix<T>,
    pub sweeps: usize,
    /// False when the sweep cap was hit before the tolerance.
    pub converged: bool,
}

/// Symmetric FastICA fixed point on whitened, weighted data.
///
/// One sweep updates every row `wₖ ← E_p[z g(wₖᵀz)] − wₖ E_p[g'(wₖᵀz)]` and
/// then re-orthogonalizes. Iteration stops once
/// `maxₖ | |wₖ_prev · wₖ| − 1 | ≤ tol` or after `max_inner` sweeps.
pub fn fixed_point<T: Scalar>(
    z: &Matrix<T>,
    weights: &[T],
    nl: Nonlinearity,
    tol: T,
    max_inner: usize,
    w_init: &Matrix<T>,
) -> Result<FixedPoint<T>> {
    let r = z.cols();
    if w_init.rows() != r || w_init.cols() != r {
        return Err(Error::InvalidInput(format!(
            "W_init must be {r}x{r}, got {}x{}",
            w_init.rows(),
            w_init.cols()
        )));
    }
    if weights.len() != z.rows() {
        return Err(Error::InvalidInput("weights/observations mismatch".into()));
    }
    let total = weight_total(weights)?;
    let mut wm = symmetric_orthogonalize(w_init)?;
    let mut sweeps = 0;
    let mut converged = false;
    let mut g_acc = vec![T::zero(); r * r];
    let mut gp_acc = vec![T::zero(); r];
    let mut y = vec![T::zero(); r];

    while sweeps < max_inner {
        sweeps += 1;
        g_acc.iter_mut().for_each(|v| *v = T::zero());
        gp_acc.iter_mut().for_each(|v| *v = T::zero());
        for (zi, &pi) in z.iter_rows().zip(weights) {
            if pi == T::zero() {
                continue;
            }
            for (k, yk) in y.iter_mut().enumerate() {
                *yk = dot(wm.row(k), zi);
            }
            for k in 0..r {
                let (g, gp) = g_and_gprime(nl, y[k]);
                let pg = pi * g;
                let acc = &mut g_acc[k * r..(k + 1) * r];
                for (a, &zv) in acc.iter_mut().zip(zi) {
                    *a = *a + pg * zv;
                }
                gp_acc[k] = gp_acc[k] + pi * gp;
            }
        }
        let mut next = Matrix::zeros(r, r);
        for k in 0..r {
            let mean_gp = gp_acc[k] / total;
            for c in 0..r {
                next[(k, c)] = g_acc[k * r + c] / total - wm[(k, c)] * mean_gp;
            }
        }
        // A collapsed update (rows nearly parallel) cannot be orthogonalized;
        // keep the last orthonormal iterate and report non-convergence.
        let next = match symmetric_orthogonalize(&next) {
            Ok(m) => m,
            Err(Error::NumericalFailure(msg)) => {
                log::debug!("FastICA sweep {sweeps} collapsed: {msg}");
                break;
            }
            Err(e) => return Err(e),
        };
        let lim = (0..r)
            .map(|k| (dot(wm.row(k), next.row(k)).abs() - T::one()).abs())
            .fold(T::zero(), T::max);
        wm = next;
        if lim <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("FastICA fixed point hit the {max_inner}-sweep cap");
    }
    Ok(FixedPoint {
        w: wm,
        sweeps,
        converged,
    })
}

/// Composes whitening and unmixing into `A⁻¹ = W V` and `A = V⁻¹ W⁻¹`.
pub fn compose_unmixing<T: Scalar>(wh: &Whitening<T>, fp: FixedPoint<T>) -> Result<Unmixing<T>> {
    let a_inv = fp.w.matmul(&wh.v);
    let a = wh.v_inv.matmul(&invert(&fp.w)?);
    Ok(Unmixing {
        w: fp.w,
        a_inv,
        a,
        inner_iters: fp.sweeps,
        converged: fp.converged,
    })
}

/// Amari index of `P`, normalized to `[0, 1]`; zero iff `P` is a scaled
/// permutation.
pub fn amari_distance<T: Scalar>(p: &Matrix<T>) -> Result<T> {
    if !p.is_square() {
        return Err(Error::InvalidInput("amari_distance needs a square matrix".into()));
    }
    let n = p.rows();
    if n == 1 {
        return Ok(T::zero());
    }
    let abs = p.map(|v| v.abs());
    let mut total = T::zero();
    for i in 0..n {
        let row = abs.row(i);
        let max = row.iter().copied().fold(T::zero(), T::max);
        if max == T::zero() {
            return Err(Error::InvalidInput(format!("row {i} is all zero")));
        }
        total = total + row.iter().copied().sum::<T>() / max - T::one();
    }
    for j in 0..n {
        let col = abs.column(j);
        let max = col.iter().copied().fold(T::zero(), T::max);
        if max == T::zero() {
            return Err(Error::InvalidInput(format!("column {j} is all zero")));
        }
        total = total + col.iter().copied().sum::<T>() / max - T::one();
    }
    let nf = T::from_usize_lossy(n);
    Ok(total / (T::c(2.0) * nf * (nf - T::one())))
}
