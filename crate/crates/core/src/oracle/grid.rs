use crate::error::{Error, Result};

/// Largest grid the oracle accepts along one axis.
pub const MAX_NODES: usize = 64;
/// Largest dimension the oracle accepts.
pub const MAX_DIM: usize = 2;

/// Uniform axis of cell midpoints: node `i` sits at `start + i * step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    start: f64,
    step: f64,
    len: usize,
}

impl Axis {
    /// Splits `[lo, hi]` into `len` equal cells and places a node at each
    /// cell midpoint, so node sums times `step` are midpoint-rule integrals.
    pub fn cells(lo: f64, hi: f64, len: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!("bad axis range [{lo}, {hi}]")));
        }
        if !(2..=MAX_NODES).contains(&len) {
            return Err(Error::InvalidInput(format!(
                "axis needs between 2 and {MAX_NODES} nodes, got {len}"
            )));
        }
        let step = (hi - lo) / len as f64;
        Ok(Self {
            start: lo + 0.5 * step,
            step,
            len,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn node(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.node(i)).collect()
    }

    /// Left node index and fraction for linear interpolation, clamped to
    /// the outermost nodes.
    fn locate(&self, x: f64) -> (usize, f64) {
        let t = ((x - self.start) / self.step).clamp(0.0, (self.len - 1) as f64);
        let i = (t.floor() as usize).min(self.len - 2);
        (i, t - i as f64)
    }
}

/// Nonnegative function sampled on a tensor grid of at most two axes.
/// Values are row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    axes: Vec<Axis>,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self> {
        check_axes(&axes)?;
        let size: usize = axes.iter().map(Axis::len).product();
        if values.len() != size {
            return Err(Error::InvalidInput(format!(
                "grid has {size} nodes but {} values were given",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "grid value {} at node {i} is not a finite nonnegative number",
                values[i]
            )));
        }
        Ok(Self { axes, values })
    }

    pub fn from_fn(axes: Vec<Axis>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        check_axes(&axes)?;
        let values = points(&axes).iter().map(|p| f(p)).collect();
        Self::new(axes, values)
    }

    /// Skips validation; callers guarantee finite nonnegative values.
    pub(crate) fn from_parts(axes: Vec<Axis>, values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| *v >= 0.0 && v.is_finite()));
        Self { axes, values }
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::step).product()
    }

    /// Midpoint-rule integral.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.axes == other.axes
    }

    /// Node coordinates in storage order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        points(&self.axes)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.axes.clone(), self.values.iter().map(|v| v * c).collect())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Marginal along `axis`: values integrated over the other axis.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        match self.dim() {
            1 => self.values.clone(),
            _ => {
                let (n0, n1) = (self.axes[0].len, self.axes[1].len);
                if axis == 0 {
                    let d = self.axes[1].step;
                    (0..n0)
                        .map(|i| self.values[i * n1..(i + 1) * n1].iter().sum::<f64>() * d)
                        .collect()
                } else {
                    let d = self.axes[0].step;
                    (0..n1)
                        .map(|j| (0..n0).map(|i| self.values[i * n1 + j]).sum::<f64>() * d)
                        .collect()
                }
            }
        }
    }

    /// Linear (1-D) or bilinear (2-D) interpolation, clamped to the edge
    /// nodes outside the grid.
    pub fn interp(&self, x: &[f64]) -> f64 {
        match self.dim() {
            1 => {
                let (i, t) = self.axes[0].locate(x[0]);
                (1.0 - t) * self.values[i] + t * self.values[i + 1]
            }
            _ => {
                let n1 = self.axes[1].len;
                let (i, s) = self.axes[0].locate(x[0]);
                let (j, t) = self.axes[1].locate(x[1]);
                let v = |a: usize, b: usize| self.values[a * n1 + b];
                (1.0 - s) * ((1.0 - t) * v(i, j) + t * v(i, j + 1))
                    + s * ((1.0 - t) * v(i + 1, j) + t * v(i + 1, j + 1))
            }
        }
    }
}

fn check_axes(axes: &[Axis]) -> Result<()> {
    if axes.is_empty() || axes.len() > MAX_DIM {
        return Err(Error::InvalidInput(format!(
            "grid dimension must be 1 or {MAX_DIM}, got {}",
            axes.len()
        )));
    }
    Ok(())
}

fn points(axes: &[Axis]) -> Vec<Vec<f64>> {
    match axes {
        [a] => a.nodes().into_iter().map(|x| vec![x]).collect(),
        [a, b] => {
            let ys = b.nodes();
            a.nodes()
                .into_iter()
                .flat_map(|x| ys.iter().map(move |&y| vec![x, y]))
                .collect()
        }
        _ => unreachable!("checked by check_axes"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_nodes_and_mass() {
        let a = Axis::cells(0.0, 1.0, 4).unwrap();
        assert_eq!(a.nodes(), vec![0.125, 0.375, 0.625, 0.875]);
        let g = GridDensity::from_fn(vec![a, a], |_| 1.0).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-15);
        assert_eq!(g.marginal(0), vec![1.0; 4]);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Axis::cells(0.0, 1.0, 65).is_err());
        assert!(Axis::cells(1.0, 0.0, 8).is_err());
        let a = Axis::cells(0.0, 1.0, 4).unwrap();
        assert!(GridDensity::new(vec![a; 3], vec![0.0; 64]).is_err());
        assert!(GridDensity::new(vec![a], vec![1.0, -1.0, 0.0, 0.0]).is_err());
        assert!(GridDensity::new(vec![a], vec![1.0; 3]).is_err());
    }

    #[test]
    fn bilinear_reproduces_affine_functions() {
        let a = Axis::cells(-1.0, 1.0, 8).unwrap();
        let g = GridDensity::from_fn(vec![a, a], |p| 3.0 + p[0] - 0.5 * p[1]).unwrap();
        for &(x, y) in &[(0.1, -0.3), (-0.6, 0.77), (0.0, 0.0)] {
            assert!((g.interp(&[x, y]) - (3.0 + x - 0.5 * y)).abs() < 1e-12);
        }
        // clamped outside
        let edge = g.interp(&[a.node(7), 0.0]);
        assert!((g.interp(&[5.0, 0.0]) - edge).abs() < 1e-12);
    }

    #[test]
    fn marginals_agree_with_mass() {
        let a = Axis::cells(-2.0, 2.0, 10).unwrap();
        let b = Axis::cells(-1.0, 3.0, 6).unwrap();
        let g = GridDensity::from_fn(vec![a, b], |p| (-(p[0] * p[0]) - p[1].abs()).exp()).unwrap();
        let m0: f64 = g.marginal(0).iter().sum::<f64>() * a.step();
        let m1: f64 = g.marginal(1).iter().sum::<f64>() * b.step();
        assert!((m0 - g.mass()).abs() < 1e-13);
        assert!((m1 - g.mass()).abs() < 1e-13);
    }
}
