use super::grid::GridDensity;
use super::kernel::Smoother;
use crate::error::{Error, Result};
use crate::numerics::{determinant, invert, Matrix};

/// `S_h f`.
pub fn op_s(f: &GridDensity, h: f64) -> Result<GridDensity> {
    Smoother::new(f.axes(), h)?.smooth(f)
}

/// `S_h* f`. Equal to [`op_s`] for the symmetric kernel.
pub fn op_s_star(f: &GridDensity, h: f64) -> Result<GridDensity> {
    Smoother::new(f.axes(), h)?.smooth_adjoint(f)
}

/// `𝒩_h f = exp(S_h* log f)`.
pub fn op_n(f: &GridDensity, h: f64) -> Result<GridDensity> {
    op_n_with(f, &Smoother::new(f.axes(), h)?)
}

pub fn op_n_with(f: &GridDensity, sm: &Smoother) -> Result<GridDensity> {
    sm.check(f)?;
    let logs = log_positive(f.values())?;
    let v = sm.apply_values(&logs, true).into_iter().map(f64::exp).collect();
    Ok(GridDensity::from_parts(f.axes().to_vec(), v))
}

/// Product of the marginals over `(∫f)^(r−1)`.
pub fn op_p(f: &GridDensity) -> Result<GridDensity> {
    let total = f.mass();
    if !(total > 0.0) {
        return Err(Error::Domain("projection of a function with zero mass".into()));
    }
    if f.dim() == 1 {
        return Ok(f.clone());
    }
    let (m0, m1) = (f.marginal(0), f.marginal(1));
    let v = m0
        .iter()
        .flat_map(|a| m1.iter().map(move |b| a * b / total))
        .collect();
    Ok(GridDensity::from_parts(f.axes().to_vec(), v))
}

/// `∫ g1 log(g1/g2) + g2 − g1` with `0 log 0 = 0`; `+∞` when `g2` vanishes
/// where `g1` does not.
pub fn kl_div(g1: &GridDensity, g2: &GridDensity) -> Result<f64> {
    if !g1.same_grid(g2) {
        return Err(Error::InvalidInput("KL divergence needs a shared grid".into()));
    }
    let mut s = 0.0;
    for (&a, &b) in g1.values().iter().zip(g2.values()) {
        if a > 0.0 {
            if b <= 0.0 {
                return Ok(f64::INFINITY);
            }
            s += a * (a / b).ln();
        }
        s += b - a;
    }
    Ok(s * g1.cell_volume())
}

/// `f_A(x) = f(A⁻¹x)/|det A|`, interpolated on the grid of `f` and
/// rescaled so that the grid integral equals that of `f`.
pub fn transform(f: &GridDensity, a: &Matrix<f64>) -> Result<GridDensity> {
    let (a_inv, det) = checked_inverse(f, a)?;
    let v = f
        .points()
        .iter()
        .map(|x| f.interp(&a_inv.mat_vec(x)) / det)
        .collect();
    rescale(f, v, f.mass())
}

/// `f∘A`, rescaled so that `|det A|·∫(f∘A) = ∫f` on the grid.
pub fn pull_back(f: &GridDensity, a: &Matrix<f64>) -> Result<GridDensity> {
    let (_, det) = checked_inverse(f, a)?;
    let v = f.points().iter().map(|y| f.interp(&a.mat_vec(y))).collect();
    rescale(f, v, f.mass() / det)
}

pub(crate) fn checked_inverse(f: &GridDensity, a: &Matrix<f64>) -> Result<(Matrix<f64>, f64)> {
    if a.rows() != f.dim() || a.cols() != f.dim() {
        return Err(Error::InvalidInput(format!(
            "matrix is {}x{} but the grid has dimension {}",
            a.rows(),
            a.cols(),
            f.dim()
        )));
    }
    let det = determinant(a).abs();
    Ok((invert(a)?, det))
}

fn rescale(f: &GridDensity, v: Vec<f64>, target: f64) -> Result<GridDensity> {
    let out = GridDensity::from_parts(f.axes().to_vec(), v);
    let m = out.mass();
    if target == 0.0 {
        return Ok(out);
    }
    if !(m > 0.0) {
        return Err(Error::Domain("linear map moved all mass off the grid".into()));
    }
    out.scaled(target / m)
}

pub(crate) fn log_positive(v: &[f64]) -> Result<Vec<f64>> {
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            if x > 0.0 {
                Ok(x.ln())
            } else {
                Err(Error::Domain(format!("log of nonpositive value {x} at node {i}")))
            }
        })
        .collect()
}
