//! Weighted univariate Gaussian kernel density estimates and the iterative
//! bandwidth rule `h = c · (n λ)^(-1/5)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default bandwidth coefficient.
pub const DEFAULT_BANDWIDTH_COEF: f64 = 0.5;

/// Bandwidth for a component with mixing weight `lambda` out of `n`
/// observations, using the default coefficient.
pub fn bandwidth_update<T: Scalar>(n: usize, lambda: T) -> T {
    bandwidth_with_coef(T::c(DEFAULT_BANDWIDTH_COEF), n, lambda).0
}

/// `coef · (n λ)^(-0.2)`. The effective sample size is clamped to 1 from
/// below; the flag reports when that happened (a dying component).
pub fn bandwidth_with_coef<T: Scalar>(coef: T, n: usize, lambda: T) -> (T, bool) {
    let eff = T::from_usize_lossy(n) * lambda;
    if eff < T::one() || !eff.is_finite() {
        log::warn!(
            "effective sample size {} < 1; clamping bandwidth",
            eff.to_f64_lossy()
        );
        return (coef, true);
    }
    (coef * eff.powf(T::c(-0.2)), false)
}

/// Weighted Gaussian KDE on the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedKde1D<T> {
    points: Vec<T>,
    weights: Vec<T>,
    log_weights: Vec<T>,
    bandwidth: T,
    clusters: Vec<Cluster<T>>,
}

/// Shape and sign checks shared by the constructors; returns the weight total.
fn check_inputs<T: Scalar>(points: &[T], weights: &[T], bandwidth: T) -> Result<T> {
    if points.is_empty() {
        return Err(Error::InvalidInput("kde needs at least one point".into()));
    }
    if points.len() != weights.len() {
        return Err(Error::InvalidInput(format!(
            "kde has {} points but {} weights",
            points.len(),
            weights.len()
        )));
    }
    if !(bandwidth > T::zero()) || !bandwidth.is_finite() {
        return Err(Error::InvalidInput(format!(
            "kde bandwidth must be positive, got {bandwidth}"
        )));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidInput("kde points must be finite".into()));
    }
    if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
        return Err(Error::InvalidInput(
            "kde weights must be finite and nonnegative".into(),
        ));
    }
    let total: T = weights.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::InvalidInput("kde weights sum to zero".into()));
    }
    Ok(total)
}

/// A run of sorted points narrower than `CLUSTER_WIDTH · h`, summarized by
/// Taylor moments around its center:
/// `Σᵢ wᵢ φ(x − yᵢ) = e^(s − x²/2) Σₖ cₖ xᵏ` with `x = (u − center)/h`,
/// `yᵢ = (pᵢ − center)/h`, `cₖ = Σᵢ e^(ln wᵢ − s) e^(−yᵢ²/2) yᵢᵏ / k!`.
#[derive(Debug, Clone, PartialEq)]
struct Cluster<T> {
    start: usize,
    end: usize,
    center: T,
    /// Largest log-weight in the cluster; `-inf` when all weights are zero.
    log_scale: T,
    /// Empty for clusters small enough to sum directly.
    coefs: Vec<T>,
}

impl<T: Scalar> WeightedKde1D<T> {
    /// Weights are renormalized to sum to one. Points are stored in
    /// ascending order (ties by weight), so getters return that order.
    pub fn new(points: Vec<T>, weights: Vec<T>, bandwidth: T) -> Result<Self> {
        let total = check_inputs(&points, &weights, bandwidth)?;
        // Sorted storage lets evaluation visit points nearest-first.
        let mut pairs: Vec<(T, T)> = points.into_iter().zip(weights.into_iter().map(|w| w / total)).collect();
        pairs.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("finite")
                .then(a.1.partial_cmp(&b.1).expect("finite"))
        });
        let (points, weights): (Vec<T>, Vec<T>) = pairs.into_iter().unzip();
        Ok(Self::assemble(points, weights, bandwidth))
    }

    /// Rebuilds a KDE from the exact storage of another one (sorted points,
    /// weights already summing to one), without renormalizing. Used to
    /// reload saved models bit for bit.
    pub fn from_stored(points: Vec<T>, weights: Vec<T>, bandwidth: T) -> Result<Self> {
        let total = check_inputs(&points, &weights, bandwidth)?;
        let sorted = points.windows(2).zip(weights.windows(2)).all(|(p, w)| {
            p[0] < p[1] || (p[0] == p[1] && w[0] <= w[1])
        });
        if !sorted {
            return Err(Error::InvalidInput("stored kde points are not in ascending order".into()));
        }
        if (total - T::one()).abs() > T::c(1e-9) {
            return Err(Error::InvalidInput(format!("stored kde weights sum to {total}, not 1")));
        }
        Ok(Self::assemble(points, weights, bandwidth))
    }

    fn assemble(points: Vec<T>, weights: Vec<T>, bandwidth: T) -> Self {
        let log_weights: Vec<T> = weights.iter().map(|w| w.ln()).collect();
        let clusters = build_clusters(&points, &log_weights, bandwidth);
        Self {
            points,
            weights,
            log_weights,
            bandwidth,
            clusters,
        }
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `Σ wᵢ φ((u − pᵢ)/h) / h`.
    pub fn eval(&self, u: T) -> T {
        let inv_h = T::one() / self.bandwidth;
        let half = T::c(0.5);
        let s: T = self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| {
                let z = (u - p) * inv_h;
                w * (-half * z * z).exp()
            })
            .sum();
        s * inv_h * norm_const::<T>()
    }

    /// `ln eval(u)` by log-sum-exp over kernels; `-inf` when every kernel
    /// underflows.
    ///
    /// Clusters are visited in order of distance from `u`. Weights sum to
    /// one, so once the next cluster's nearest kernel term is far enough
    /// below the running total the remaining terms cannot change it beyond
    /// rounding, and the scan stops. Clusters whose Taylor series would be
    /// too long for the query distance are summed point by point.
    pub fn log_eval(&self, u: T) -> T {
        let nc = self.clusters.len();
        let inv_h = T::one() / self.bandwidth;
        let half = T::c(0.5);
        let stop = T::c(TRUNCATION_MARGIN);
        let t_max = T::c(SERIES_REACH);
        let mut hi = self.clusters.partition_point(|c| self.points[c.end - 1] < u);
        let mut lo = hi;
        let mut acc = LogAcc::new();
        loop {
            let gap = |c: &Cluster<T>| {
                let (a, b) = (self.points[c.start], self.points[c.end - 1]);
                if u < a {
                    a - u
                } else if u > b {
                    u - b
                } else {
                    T::zero()
                }
            };
            let left = (lo > 0).then(|| gap(&self.clusters[lo - 1]));
            let right = (hi < nc).then(|| gap(&self.clusters[hi]));
            let (d, idx) = match (left, right) {
                (Some(l), Some(r)) if l <= r => (l, lo - 1),
                (Some(_), Some(r)) => (r, hi),
                (Some(l), None) => (l, lo - 1),
                (None, Some(r)) => (r, hi),
                (None, None) => break,
            };
            let q = half * (d * inv_h) * (d * inv_h);
            if q > stop - acc.lower_bound() {
                break;
            }
            if idx < lo {
                lo -= 1;
            } else {
                hi += 1;
            }
            let c = &self.clusters[idx];
            if c.log_scale == T::neg_infinity() {
                continue;
            }
            let x = (u - c.center) * inv_h;
            let reach = x.abs() * CLUSTER_WIDTH_HALF::<T>();
            if c.coefs.is_empty() || reach > t_max {
                for i in c.start..c.end {
                    let z = (u - self.points[i]) * inv_h;
                    acc.add(self.log_weights[i] - half * z * z, T::one());
                }
            } else {
                let poly = c.coefs.iter().rev().fold(T::zero(), |s, &k| s * x + k);
                acc.add(c.log_scale - half * x * x, poly.max(T::zero()));
            }
        }
        let (max, sum) = (acc.max, acc.sum);
        if max == T::neg_infinity() || !(sum > T::zero()) || max + sum.ln() < T::c(LOG_UNDERFLOW) {
            return T::neg_infinity();
        }
        max + sum.ln() - self.bandwidth.ln() + norm_const::<T>().ln()
    }

    /// `log_eval` over many queries. Queries are independent, so the parallel
    /// split does not change any result.
    pub fn log_eval_batch(&self, queries: &[T]) -> Vec<T> {
        queries.par_iter().map(|&u| self.log_eval(u)).collect()
    }
}

/// Below this log-kernel value `exp` underflows in double precision.
const LOG_UNDERFLOW: f64 = -745.2;

/// Nats below the running total at which the nearest-first scan stops
/// (e^-37 < 10⁻¹⁶).
const TRUNCATION_MARGIN: f64 = 37.0;

/// Cluster width in bandwidths.
const CLUSTER_WIDTH: f64 = 0.4;

#[allow(non_snake_case)]
#[inline]
fn CLUSTER_WIDTH_HALF<T: Scalar>() -> T {
    T::c(CLUSTER_WIDTH / 2.0)
}

/// Largest `|x|·max|y|` served by the series. The truncation error after
/// `SERIES_TERMS` terms, inflated by the `e^(2t)` cancellation factor, stays
/// below 10⁻¹⁶ relative: `e⁴ · 2²⁶ / 26! ≈ 10⁻¹⁷`.
const SERIES_REACH: f64 = 2.0;
const SERIES_TERMS: usize = 26;

/// Clusters with at most this many points are always summed directly.
const DIRECT_MAX: usize = 12;

fn build_clusters<T: Scalar>(points: &[T], log_weights: &[T], h: T) -> Vec<Cluster<T>> {
    let width = T::c(CLUSTER_WIDTH) * h;
    let inv_h = T::one() / h;
    let half = T::c(0.5);
    let mut out = Vec::new();
    let mut start = 0;
    while start < points.len() {
        let mut end = start + 1;
        while end < points.len() && points[end] - points[start] <= width {
            end += 1;
        }
        let center = half * (points[start] + points[end - 1]);
        let log_scale = log_weights[start..end]
            .iter()
            .copied()
            .fold(T::neg_infinity(), T::max);
        let mut coefs = Vec::new();
        if end - start > DIRECT_MAX && log_scale > T::neg_infinity() {
            coefs = vec![T::zero(); SERIES_TERMS];
            for i in start..end {
                let y = (points[i] - center) * inv_h;
                let mut term = (log_weights[i] - log_scale - half * y * y).exp();
                for (k, c) in coefs.iter_mut().enumerate() {
                    *c = *c + term;
                    term = term * y / T::from_usize_lossy(k + 1);
                }
            }
        }
        out.push(Cluster {
            start,
            end,
            center,
            log_scale,
            coefs,
        });
        start = end;
    }
    out
}

/// Running `ln Σ vᵢ e^(aᵢ)` held as `(max, Σ vᵢ e^(aᵢ − max))`.
struct LogAcc<T> {
    max: T,
    sum: T,
}

impl<T: Scalar> LogAcc<T> {
    fn new() -> Self {
        Self {
            max: T::neg_infinity(),
            sum: T::zero(),
        }
    }

    #[inline]
    fn add(&mut self, a: T, v: T) {
        if a == T::neg_infinity() || v == T::zero() {
            return;
        }
        if a > self.max {
            self.sum = self.sum * (self.max - a).exp() + v;
            self.max = a;
        } else {
            self.sum = self.sum + v * (a - self.max).exp();
        }
    }

    /// A value no larger than the log of the current total. Every added
    /// `v` is at least `e^-2.1` of its cluster's leading weight, which
    /// gives the slack below.
    #[inline]
    fn lower_bound(&self) -> T {
        self.max - T::c(3.0)
    }
}

#[inline]
fn norm_const<T: Scalar>() -> T {
    T::one() / (T::c(2.0) * T::PI()).sqrt()
}
