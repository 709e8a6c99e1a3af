//! Scoring clusterings against known classes, the k-means baseline, and
//! weighted least squares for regression readouts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

/// Largest cluster count handled by the brute-force permutation search.
pub const MAX_PERMUTATION_CLUSTERS: usize = 8;

/// `counts[t][p]`: observations with true class `t` and predicted label `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

/// Result of [`best_permutation_error`].
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationMatch {
    pub error_rate: f64,
    /// `perm[p]` is the true class assigned to predicted label `p`.
    pub perm: Vec<usize>,
    pub confusion: ConfusionMatrix,
}

impl PermutationMatch {
    /// Predicted labels rewritten into true-class ids.
    pub fn relabel(&self, pred: &[usize]) -> Vec<usize> {
        pred.iter().map(|&p| self.perm[p]).collect()
    }
}

fn label_count(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |&v| v + 1)
}

/// Smallest misclassification rate over all matchings of predicted labels
/// to true classes.
pub fn best_permutation_error(pred: &[usize], truth: &[usize]) -> Result<PermutationMatch> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} true labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("no labels to compare".into()));
    }
    let kt = label_count(truth);
    let kp = label_count(pred);
    let k = kt.max(kp);
    if k > MAX_PERMUTATION_CLUSTERS {
        return Err(Error::TooManyClusters { count: k });
    }
    let mut counts = vec![vec![0usize; kp]; kt];
    for (&p, &t) in pred.iter().zip(truth) {
        counts[t][p] += 1;
    }
    let hit = |t: usize, p: usize| -> usize {
        if t < kt && p < kp {
            counts[t][p]
        } else {
            0
        }
    };

    // Heap's algorithm over k labels; the first best found wins ties.
    let mut perm: Vec<usize> = (0..k).collect();
    let score = |perm: &[usize]| -> usize { (0..k).map(|p| hit(perm[p], p)).sum() };
    let mut best = (score(&perm), perm.clone());
    let mut c = vec![0usize; k];
    let mut i = 1;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let s = score(&perm);
            if s > best.0 {
                best = (s, perm.clone());
            }
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    let n = pred.len();
    let mut perm = best.1;
    perm.truncate(kp);
    Ok(PermutationMatch {
        error_rate: (n - best.0) as f64 / n as f64,
        perm,
        confusion: ConfusionMatrix { counts },
    })
}

/// Outcome of [`kmeans`].
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit<T> {
    pub labels: Vec<usize>,
    pub centroids: Matrix<T>,
    pub wcss: T,
    /// WCSS after each Lloyd iteration of the winning restart.
    pub wcss_trace: Vec<T>,
}

const KMEANS_MAX_ITERS: usize = 300;

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn nearest<T: Scalar>(x: &[T], centroids: &Matrix<T>) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (j, c) in centroids.iter_rows().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_seed<T: Scalar>(x: &Matrix<T>, k: usize, rng: &mut ChaCha8Rng) -> Matrix<T> {
    let n = x.rows();
    let mut centroids = Matrix::zeros(k, x.cols());
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).copy_from_slice(x.row(first));
    let mut d2: Vec<f64> = x
        .iter_rows()
        .map(|r| sq_dist(r, x.row(first)).to_f64_lossy())
        .collect();
    for j in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        centroids.row_mut(j).copy_from_slice(x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)).to_f64_lossy());
        }
    }
    centroids
}

fn lloyd<T: Scalar>(x: &Matrix<T>, mut centroids: Matrix<T>) -> KMeansFit<T> {
    let (n, r, k) = (x.rows(), x.cols(), centroids.rows());
    let mut labels = vec![0usize; n];
    let mut trace: Vec<T> = Vec::new();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, row) in x.iter_rows().enumerate() {
            let (j, _) = nearest(row, &centroids);
            changed |= labels[i] != j;
            labels[i] = j;
        }
        // Reseed empty clusters from the observation farthest from its centroid.
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        for j in 0..k {
            if sizes[j] > 0 {
                continue;
            }
            let (far, _) = (0..n)
                .map(|i| (i, sq_dist(x.row(i), centroids.row(labels[i]))))
                .filter(|&(i, _)| sizes[labels[i]] > 1)
                .fold((usize::MAX, T::neg_infinity()), |b, c| if c.1 > b.1 { c } else { b });
            if far == usize::MAX {
                continue;
            }
            sizes[labels[far]] -= 1;
            labels[far] = j;
            sizes[j] = 1;
            changed = true;
        }
        let mut sums = Matrix::<T>::zeros(k, r);
        for (i, row) in x.iter_rows().enumerate() {
            for (s, &v) in sums.row_mut(labels[i]).iter_mut().zip(row) {
                *s = *s + v;
            }
        }
        for j in 0..k {
            if sizes[j] > 0 {
                let c = T::from_usize_lossy(sizes[j]);
                for (dst, &s) in centroids.row_mut(j).iter_mut().zip(sums.row(j)) {
                    *dst = s / c;
                }
            }
        }
        let after: T = x
            .iter_rows()
            .zip(&labels)
            .map(|(row, &l)| sq_dist(row, centroids.row(l)))
            .sum();
        // Rounding can nudge a converged WCSS upward; treat that as a stall.
        let stalled = trace.last().is_some_and(|&prev| after >= prev);
        if !trace.last().is_some_and(|&prev| after > prev) {
            trace.push(after);
        }
        if !changed || stalled {
            break;
        }
    }
    let wcss = *trace.last().expect("at least one iteration");
    KMeansFit {
        labels,
        centroids,
        wcss,
        wcss_trace: trace,
    }
}

/// Lloyd's algorithm from k-means++ seeds; the restart with the smallest
/// within-cluster sum of squares wins, earliest restart on ties.
pub fn kmeans<T: Scalar>(x: &Matrix<T>, k: usize, restarts: usize, seed: u64) -> Result<KMeansFit<T>> {
    if k == 0 || k > x.rows() {
        return Err(Error::InvalidInput(format!(
            "k must lie in 1..={}, got {k}",
            x.rows()
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidInput("need at least one restart".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansFit<T>> = None;
    for _ in 0..restarts {
        let fit = lloyd(x, plus_plus_seed(x, k, &mut rng));
        debug_assert!(fit.wcss_trace.windows(2).all(|w| w[1] <= w[0]));
        if best.as_ref().map_or(true, |b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Weighted simple regression `y ≈ beta0 + beta1 x`.
#[derive(Debug, Clone, PartialEq)]
pub struct WlsFit {
    pub beta0: f64,
    pub beta1: f64,
    pub weight_total: f64,
}

/// Minimizes `Σ wᵢ (yᵢ − β₀ − β₁ xᵢ)²`.
pub fn weighted_ls(x: &[f64], y: &[f64], w: &[f64]) -> Result<WlsFit> {
    if x.len() != y.len() || x.len() != w.len() {
        return Err(Error::InvalidInput("x, y and weights differ in length".into()));
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
    }
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return Err(Error::InvalidInput("weights sum to zero".into()));
    }
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
        sxx += wi * (xi - mx) * (xi - mx);
        sxy += wi * (xi - mx) * (yi - my);
    }
    if !(sxx > 1e-300) {
        return Err(Error::InvalidInput(
            "x has no weighted spread; slope undefined".into(),
        ));
    }
    let beta1 = sxy / sxx;
    Ok(WlsFit {
        beta0: my - beta1 * mx,
        beta1,
        weight_total: sw,
    })
}
