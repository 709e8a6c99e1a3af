use super::grid::{Axis, GridDensity};
use crate::error::{Error, Result};

const BALANCE_TOL: f64 = 1e-15;
const BALANCE_MAX_ITERS: usize = 10_000;

/// Gaussian kernel `s_h(v, z) = φ((v − z)/h)/h` discretized on one axis.
///
/// The quadrature weights `s_h(x_a, x_b)·Δ` are rescaled to `d_a K_ab d_b`
/// so that every row and every column sums to one. The matrix stays
/// symmetric, so the smoother equals its adjoint and conserves mass exactly.
#[derive(Debug, Clone)]
pub struct Kernel1D {
    h: f64,
    n: usize,
    weights: Vec<f64>,
}

impl Kernel1D {
    pub fn new(axis: &Axis, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
        }
        let n = axis.len();
        let nodes = axis.nodes();
        let mut k = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                k[a * n + b] = Self::density(h, nodes[a], nodes[b]) * axis.step();
            }
        }
        // symmetric Sinkhorn: d <- sqrt(d / (K d))
        let mut d = vec![1.0; n];
        let mut prev = f64::INFINITY;
        for _ in 0..BALANCE_MAX_ITERS {
            let kd: Vec<f64> = (0..n)
                .map(|a| (0..n).map(|b| k[a * n + b] * d[b]).sum::<f64>())
                .collect();
            let worst = (0..n).map(|a| (d[a] * kd[a] - 1.0).abs()).fold(0.0, f64::max);
            // rounding floor reached once progress stalls
            if worst < BALANCE_TOL || (worst >= prev && worst < 1e-12) {
                break;
            }
            prev = worst;
            for a in 0..n {
                d[a] = (d[a] / kd[a]).sqrt();
            }
        }
        for a in 0..n {
            for b in 0..n {
                k[a * n + b] *= d[a] * d[b];
            }
        }
        Ok(Self { h, n, weights: k })
    }

    /// Unnormalized continuous kernel value.
    pub fn density(h: f64, v: f64, z: f64) -> f64 {
        let u = (v - z) / h;
        (-0.5 * u * u).exp() / (h * (2.0 * std::f64::consts::PI).sqrt())
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Balanced quadrature weight, the discrete `s_h(x_a, x_b)·Δ`.
    pub fn weight(&self, a: usize, b: usize) -> f64 {
        self.weights[a * self.n + b]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.weights.chunks(self.n).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|b| (0..self.n).map(|a| self.weight(a, b)).sum())
            .collect()
    }

    /// `(S v)_a = Σ_b s(x_a, x_b) v_b Δ`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.n)
            .map(|row| row.iter().zip(v).map(|(k, x)| k * x).sum())
            .collect()
    }

    /// `(S* v)_a = Σ_b s(x_b, x_a) v_b Δ`.
    pub fn apply_adjoint(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|a| (0..self.n).map(|b| self.weight(b, a) * v[b]).sum())
            .collect()
    }
}

/// Product kernel over every axis of a grid.
#[derive(Debug, Clone)]
pub struct Smoother {
    axes: Vec<Axis>,
    kernels: Vec<Kernel1D>,
}

impl Smoother {
    pub fn new(axes: &[Axis], h: f64) -> Result<Self> {
        let kernels = axes
            .iter()
            .map(|a| Kernel1D::new(a, h))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            axes: axes.to_vec(),
            kernels,
        })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn kernel(&self, axis: usize) -> &Kernel1D {
        &self.kernels[axis]
    }

    /// Applies the product kernel to raw grid values (any sign).
    pub fn apply_values(&self, v: &[f64], adjoint: bool) -> Vec<f64> {
        let go = |k: &Kernel1D, x: &[f64]| {
            if adjoint {
                k.apply_adjoint(x)
            } else {
                k.apply(x)
            }
        };
        match self.kernels.as_slice() {
            [k] => go(k, v),
            [k0, k1] => {
                let (n0, n1) = (k0.len(), k1.len());
                let mut tmp = Vec::with_capacity(n0 * n1);
                for row in v.chunks(n1) {
                    tmp.extend(go(k1, row));
                }
                let mut out = vec![0.0; n0 * n1];
                let mut col = vec![0.0; n0];
                for j in 0..n1 {
                    for i in 0..n0 {
                        col[i] = tmp[i * n1 + j];
                    }
                    for (i, x) in go(k0, &col).into_iter().enumerate() {
                        out[i * n1 + j] = x;
                    }
                }
                out
            }
            _ => unreachable!("grids have one or two axes"),
        }
    }

    pub fn smooth(&self, f: &GridDensity) -> Result<GridDensity> {
        self.check(f)?;
        Ok(GridDensity::from_parts(
            f.axes().to_vec(),
            clamp_nonneg(self.apply_values(f.values(), false)),
        ))
    }

    pub fn smooth_adjoint(&self, f: &GridDensity) -> Result<GridDensity> {
        self.check(f)?;
        Ok(GridDensity::from_parts(
            f.axes().to_vec(),
            clamp_nonneg(self.apply_values(f.values(), true)),
        ))
    }

    pub(crate) fn check(&self, f: &GridDensity) -> Result<()> {
        if f.axes() != self.axes.as_slice() {
            return Err(Error::InvalidInput("smoother built for a different grid".into()));
        }
        Ok(())
    }
}

// Products of nonnegative numbers; only guards against -0.0.
fn clamp_nonneg(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.max(0.0)).collect()
}
