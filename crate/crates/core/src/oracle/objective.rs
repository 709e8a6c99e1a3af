use super::grid::{Axis, GridDensity};
use super::kernel::Smoother;
use super::ops::{checked_inverse, log_positive, pull_back, transform};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// `e(u) = θ ∏_k e_k(u_k)` with each factor sampled on its own axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredDensity {
    theta: f64,
    factors: Vec<GridDensity>,
}

impl FactoredDensity {
    pub fn new(theta: f64, factors: Vec<GridDensity>) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidInput(format!("theta must be positive, got {theta}")));
        }
        if factors.is_empty() || factors.len() > 2 || factors.iter().any(|f| f.dim() != 1) {
            return Err(Error::InvalidInput(
                "need one or two one-dimensional factors".into(),
            ));
        }
        Ok(Self { theta, factors })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn factors(&self) -> &[GridDensity] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn axes(&self) -> Vec<Axis> {
        self.factors.iter().map(|f| f.axes()[0]).collect()
    }

    pub fn mass(&self) -> f64 {
        self.factors.iter().fold(self.theta, |m, f| m * f.mass())
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.theta * c, self.factors.clone())
    }

    /// The full tensor-grid function.
    pub fn to_grid(&self) -> GridDensity {
        let v = match self.factors.as_slice() {
            [a] => a.values().iter().map(|x| self.theta * x).collect(),
            [a, b] => a
                .values()
                .iter()
                .flat_map(|x| b.values().iter().map(move |y| self.theta * x * y))
                .collect(),
            _ => unreachable!("checked in new"),
        };
        GridDensity::from_parts(self.axes(), v)
    }

    /// `S_h* log e`, computed factor by factor. Needs positive factors.
    pub fn smoothed_log(&self, sm: &Smoother) -> Result<Vec<f64>> {
        if sm.axes() != self.axes().as_slice() {
            return Err(Error::InvalidInput("smoother built for a different grid".into()));
        }
        let parts = self
            .factors
            .iter()
            .enumerate()
            .map(|(k, f)| Ok(sm.kernel(k).apply_adjoint(&log_positive(f.values())?)))
            .collect::<Result<Vec<_>>>()?;
        let lt = self.theta.ln();
        Ok(match parts.as_slice() {
            [a] => a.iter().map(|x| lt + x).collect(),
            [a, b] => a
                .iter()
                .flat_map(|x| b.iter().map(move |y| lt + x + y))
                .collect(),
            _ => unreachable!(),
        })
    }

    /// `𝒩_h e`.
    pub fn op_n(&self, sm: &Smoother) -> Result<GridDensity> {
        let v = self.smoothed_log(sm)?.into_iter().map(f64::exp).collect();
        Ok(GridDensity::from_parts(self.axes(), v))
    }
}

fn check_problem(axes: &[Axis], e: &[FactoredDensity], a: &[Matrix<f64>]) -> Result<()> {
    if e.is_empty() || e.len() != a.len() {
        return Err(Error::InvalidInput(format!(
            "{} components but {} matrices",
            e.len(),
            a.len()
        )));
    }
    if e.iter().any(|ej| ej.axes() != axes) {
        return Err(Error::InvalidInput(
            "components must live on the target grid".into(),
        ));
    }
    Ok(())
}

/// `(𝒩_h e_j)_{A_j}` for every component, on the shared grid.
pub fn smoothed_components(
    e: &[FactoredDensity],
    a: &[Matrix<f64>],
    sm: &Smoother,
) -> Result<Vec<GridDensity>> {
    check_problem(sm.axes(), e, a)?;
    e.iter()
        .zip(a)
        .map(|(ej, aj)| transform(&ej.op_n(sm)?, aj))
        .collect()
}

fn sum_grids(parts: &[GridDensity]) -> GridDensity {
    let mut v = vec![0.0; parts[0].values().len()];
    for p in parts {
        for (s, x) in v.iter_mut().zip(p.values()) {
            *s += x;
        }
    }
    GridDensity::from_parts(parts[0].axes().to_vec(), v)
}

/// `∫ g log(g / Σ_j (𝒩_h e_j)_{A_j}) + Σ_j ∫ e_j`.
///
/// The last term uses `∫(e_j)_{A_j} = ∫e_j` directly instead of
/// interpolating the transformed component.
pub fn objective_ell(
    g: &GridDensity,
    e: &[FactoredDensity],
    a: &[Matrix<f64>],
    h: f64,
) -> Result<f64> {
    let sm = Smoother::new(g.axes(), h)?;
    objective_ell_with(g, e, a, &sm)
}

pub fn objective_ell_with(
    g: &GridDensity,
    e: &[FactoredDensity],
    a: &[Matrix<f64>],
    sm: &Smoother,
) -> Result<f64> {
    let total = sum_grids(&smoothed_components(e, a, sm)?);
    let mut s = 0.0;
    for (&gv, &tv) in g.values().iter().zip(total.values()) {
        if gv > 0.0 {
            if tv <= 0.0 {
                return Ok(f64::INFINITY);
            }
            s += gv * (gv / tv).ln();
        }
    }
    Ok(s * g.cell_volume() + e.iter().map(FactoredDensity::mass).sum::<f64>())
}

/// `∫ Σ_j (e_j)_{A_j} − ∫ Σ_j (𝒩_h e_j)_{A_j}`.
pub fn penalty(e: &[FactoredDensity], a: &[Matrix<f64>], h: f64) -> Result<f64> {
    let axes = e
        .first()
        .ok_or_else(|| Error::InvalidInput("no components".into()))?
        .axes();
    penalty_with(e, a, &Smoother::new(&axes, h)?)
}

pub fn penalty_with(e: &[FactoredDensity], a: &[Matrix<f64>], sm: &Smoother) -> Result<f64> {
    let smoothed: f64 = smoothed_components(e, a, sm)?.iter().map(GridDensity::mass).sum();
    Ok(e.iter().map(FactoredDensity::mass).sum::<f64>() - smoothed)
}

/// MM weights `w_j = (𝒩_h e_j)_{A_j} / Σ_k (𝒩_h e_k)_{A_k}`; zero where
/// every component vanishes.
pub fn mm_weights(e: &[FactoredDensity], a: &[Matrix<f64>], sm: &Smoother) -> Result<Vec<GridDensity>> {
    let parts = smoothed_components(e, a, sm)?;
    let total = sum_grids(&parts);
    Ok(parts
        .iter()
        .map(|p| {
            let v = p
                .values()
                .iter()
                .zip(total.values())
                .map(|(x, t)| if *t > 0.0 { x / t } else { 0.0 })
                .collect();
            GridDensity::from_parts(p.axes().to_vec(), v)
        })
        .collect())
}

/// `−∫ g Σ_j w_j log (𝒩_h e_j)_{A_j} + Σ_j ∫ e_j`.
pub fn majorizer_b(
    g: &GridDensity,
    e: &[FactoredDensity],
    a: &[Matrix<f64>],
    w0: &[GridDensity],
    h: f64,
) -> Result<f64> {
    majorizer_b_with(g, e, a, w0, &Smoother::new(g.axes(), h)?)
}

pub fn majorizer_b_with(
    g: &GridDensity,
    e: &[FactoredDensity],
    a: &[Matrix<f64>],
    w0: &[GridDensity],
    sm: &Smoother,
) -> Result<f64> {
    if w0.len() != e.len() || w0.iter().any(|w| !w.same_grid(g)) {
        return Err(Error::InvalidInput("one weight grid per component on the target grid".into()));
    }
    let parts = smoothed_components(e, a, sm)?;
    let mut s = 0.0;
    for (w, p) in w0.iter().zip(&parts) {
        for ((&gv, &wv), &pv) in g.values().iter().zip(w.values()).zip(p.values()) {
            let gw = gv * wv;
            if gw > 0.0 {
                if pv <= 0.0 {
                    return Ok(f64::INFINITY);
                }
                s -= gw * pv.ln();
            }
        }
    }
    Ok(s * g.cell_volume() + e.iter().map(FactoredDensity::mass).sum::<f64>())
}

/// The weighted target of one component seen through its mixing matrix:
/// `ψ(y) = (g·w_j)(A_j y)` together with `|det A_j|`.
#[derive(Debug, Clone)]
pub struct LatentTarget {
    psi: GridDensity,
    det_abs: f64,
}

impl LatentTarget {
    pub fn new(g: &GridDensity, w: &GridDensity, a: &Matrix<f64>) -> Result<Self> {
        if !g.same_grid(w) {
            return Err(Error::InvalidInput("weights must share the target grid".into()));
        }
        let gw = GridDensity::new(
            g.axes().to_vec(),
            g.values().iter().zip(w.values()).map(|(x, y)| x * y).collect(),
        )?;
        if !(gw.mass() > 0.0) {
            return Err(Error::Domain("weighted target has zero mass".into()));
        }
        let (_, det_abs) = checked_inverse(&gw, a)?;
        Ok(Self {
            psi: pull_back(&gw, a)?,
            det_abs,
        })
    }

    pub fn psi(&self) -> &GridDensity {
        &self.psi
    }

    pub fn det_abs(&self) -> f64 {
        self.det_abs
    }

    /// `|det A|·∫ψ = ∫ g·w`.
    pub fn mass(&self) -> f64 {
        self.det_abs * self.psi.mass()
    }

    /// `ê(u) = |det A| / Ψ^(r−1) · ∏_k Σ_y ψ(y) s_h(u_k, y_k) Δy`, with the
    /// quadrature over the full grid for every factor node.
    pub fn closed_form(&self, sm: &Smoother) -> Result<FactoredDensity> {
        sm.check(&self.psi)?;
        let axes = self.psi.axes();
        let r = axes.len();
        let shape = self.psi.shape();
        let n_last = *shape.last().unwrap_or(&1);
        let psi = self.psi.values();
        let factors = (0..r)
            .map(|k| {
                let kern = sm.kernel(k);
                let ax = axes[k];
                let other = self.psi.cell_volume() / ax.step();
                let v = (0..ax.len())
                    .map(|a| {
                        let s: f64 = psi
                            .iter()
                            .enumerate()
                            .map(|(flat, p)| {
                                let idx = if r == 1 || k == 1 { flat % n_last } else { flat / n_last };
                                p * kern.weight(a, idx)
                            })
                            .sum();
                        s * other
                    })
                    .collect();
                GridDensity::new(vec![ax], v)
            })
            .collect::<Result<Vec<_>>>()?;
        let psi_mass = self.psi.mass();
        FactoredDensity::new(self.det_abs / psi_mass.powi(r as i32 - 1), factors)
    }

    /// The same minimizer as `P∘S_h(|det A|·ψ)`.
    pub fn closed_form_operator(&self, sm: &Smoother) -> Result<GridDensity> {
        super::ops::op_p(&sm.smooth(&self.psi.scaled(self.det_abs)?)?)
    }

    /// Margins `q̂_k` of the smoothed, normalized latent target.
    pub fn marginals(&self, sm: &Smoother) -> Result<Vec<GridDensity>> {
        sm.check(&self.psi)?;
        let total = self.psi.mass();
        self.psi
            .axes()
            .iter()
            .enumerate()
            .map(|(k, ax)| {
                let q = sm.kernel(k).apply(&self.psi.marginal(k));
                GridDensity::new(vec![*ax], q.into_iter().map(|x| (x / total).max(0.0)).collect())
            })
            .collect()
    }

    /// `b_j` after the change of variables `x = A y`:
    /// `−|det A| ∫ ψ·S_h* log e + ∫g·w · log|det A| + ∫e`.
    pub fn majorizer(&self, e: &FactoredDensity, sm: &Smoother) -> Result<f64> {
        let logs = e.smoothed_log(sm)?;
        let cross: f64 = self
            .psi
            .values()
            .iter()
            .zip(&logs)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, l)| p * l)
            .sum();
        Ok(-self.det_abs * cross * self.psi.cell_volume()
            + self.mass() * self.det_abs.ln()
            + e.mass())
    }
}

/// Minimizer of `b_j` over `e_j` with `A_j` fixed.
pub fn closed_form_minimizer(
    g: &GridDensity,
    w0_j: &GridDensity,
    a_j: &Matrix<f64>,
    h: f64,
) -> Result<FactoredDensity> {
    LatentTarget::new(g, w0_j, a_j)?.closed_form(&Smoother::new(g.axes(), h)?)
}

fn neg_entropy(q: &GridDensity) -> f64 {
    q.values()
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| v * v.ln())
        .sum::<f64>()
        * q.cell_volume()
}

/// `log|det A| + Σ_k ∫ q̂_k log q̂_k`.
pub fn ica_objective(q_hat: &[GridDensity], a: &Matrix<f64>) -> f64 {
    crate::numerics::determinant(a).abs().ln() + q_hat.iter().map(neg_entropy).sum::<f64>()
}

/// `log|det A| − Σ_k ∫ q̂_k log q̂_k`, the quantity that `b_j(ê_j(A), A)`
/// actually tracks: `b_j = Ψ·contrast + Ψ − Ψ log Ψ` with `Ψ = ∫g·w_j`.
pub fn ica_contrast(q_hat: &[GridDensity], a: &Matrix<f64>) -> f64 {
    crate::numerics::determinant(a).abs().ln() - q_hat.iter().map(neg_entropy).sum::<f64>()
}

/// 2-D rotation by `phi`.
pub fn rotation(phi: f64) -> Matrix<f64> {
    let (s, c) = phi.sin_cos();
    Matrix::from_rows(&[vec![c, -s], vec![s, c]]).expect("finite rotation")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gauss(x: f64, mu: f64, var: f64) -> f64 {
        (-(x - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    fn axis() -> Axis {
        Axis::cells(-5.0, 5.0, 40).unwrap()
    }

    fn target() -> GridDensity {
        let a = axis();
        let g = GridDensity::from_fn(vec![a, a], |p| {
            0.4 * gauss(p[0], -1.2, 0.5) * gauss(p[1], 0.3, 1.0)
                + 0.6 * gauss(p[0] + 0.4 * p[1], 1.0, 0.6) * gauss(p[1], -0.5, 0.8)
        })
        .unwrap();
        g.scaled(1.0 / g.mass()).unwrap()
    }

    fn random_factored(rng: &mut ChaCha8Rng, ax: Axis) -> FactoredDensity {
        let f = |rng: &mut ChaCha8Rng| {
            GridDensity::new(vec![ax], (0..ax.len()).map(|_| rng.gen_range(0.2..1.5)).collect())
                .unwrap()
        };
        let a = f(rng);
        let b = f(rng);
        FactoredDensity::new(rng.gen_range(0.02..0.1), vec![a, b]).unwrap()
    }

    fn product_of(g: &GridDensity) -> FactoredDensity {
        // g is not a product in general; use its marginals
        let ax = g.axes().to_vec();
        let f0 = GridDensity::new(vec![ax[0]], g.marginal(0)).unwrap();
        let f1 = GridDensity::new(vec![ax[1]], g.marginal(1)).unwrap();
        FactoredDensity::new(1.0 / g.mass(), vec![f0, f1]).unwrap()
    }

    #[test]
    fn factored_grid_matches_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = random_factored(&mut rng, axis());
        assert!((e.to_grid().mass() - e.mass()).abs() < 1e-12 * e.mass());
        assert!(FactoredDensity::new(0.0, e.factors().to_vec()).is_err());
    }

    #[test]
    fn ell_of_the_target_itself_is_one_plus_bias() {
        let a = axis();
        let g = GridDensity::from_fn(vec![a, a], |p| gauss(p[0], 0.0, 1.0) * gauss(p[1], 0.5, 0.7))
            .unwrap();
        let g = g.scaled(1.0 / g.mass()).unwrap();
        let e = vec![product_of(&g)];
        let id = vec![Matrix::identity(2)];
        let mut prev = f64::INFINITY;
        for h in [0.6, 0.3, 0.15, 0.05] {
            let ell = objective_ell(&g, &e, &id, h).unwrap();
            let bias = ell - 1.0;
            assert!(bias > 0.0 && bias < prev, "h={h} ell={ell}");
            prev = bias;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn ell_splits_into_kl_plus_penalty() {
        let g = target();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e: Vec<_> = (0..2).map(|_| random_factored(&mut rng, axis())).collect();
        let a = vec![rotation(0.3), Matrix::from_rows(&[vec![1.1, 0.2], vec![-0.1, 0.9]]).unwrap()];
        let h = 0.35;
        let sm = Smoother::new(g.axes(), h).unwrap();
        let ell = objective_ell_with(&g, &e, &a, &sm).unwrap();
        let total = sum_grids(&smoothed_components(&e, &a, &sm).unwrap());
        let kl = super::super::ops::kl_div(&g, &total).unwrap();
        let pen = penalty_with(&e, &a, &sm).unwrap();
        assert!((ell - (kl + pen + g.mass())).abs() < 1e-10);
    }

    #[test]
    fn scaling_e_shifts_ell_in_closed_form() {
        let g = target();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let e: Vec<_> = (0..2).map(|_| random_factored(&mut rng, axis())).collect();
        let a = vec![Matrix::identity(2), rotation(-0.5)];
        let base = objective_ell(&g, &e, &a, 0.3).unwrap();
        for c in [0.5, 2.0, 7.0] {
            let ec: Vec<_> = e.iter().map(|x| x.scaled(c).unwrap()).collect();
            let got = objective_ell(&g, &ec, &a, 0.3).unwrap() - base;
            let mass: f64 = e.iter().map(FactoredDensity::mass).sum();
            let want = -g.mass() * c.ln() + (c - 1.0) * mass;
            assert!((got - want).abs() < 1e-10, "c={c}");
        }
    }

    #[test]
    fn penalty_vanishes_for_constants_and_is_nonnegative() {
        let ax = axis();
        let c = GridDensity::from_fn(vec![ax], |_| 0.3).unwrap();
        let e = vec![FactoredDensity::new(2.0, vec![c.clone(), c]).unwrap()];
        assert!(penalty(&e, &[Matrix::identity(2)], 0.5).unwrap().abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let e = vec![random_factored(&mut rng, ax)];
            assert!(penalty(&e, &[Matrix::identity(2)], rng.gen_range(0.1..1.0)).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn penalty_shrinks_with_bandwidth() {
        let g = target();
        let e = vec![product_of(&g)];
        let id = [Matrix::identity(2)];
        let mut prev = f64::INFINITY;
        for h in [1.0, 0.5, 0.25, 0.12] {
            let p = penalty(&e, &id, h).unwrap();
            assert!(p >= 0.0 && p < prev, "h={h} p={p}");
            prev = p;
        }
    }

    #[test]
    fn majorizer_touches_and_dominates() {
        let g = target();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sm = Smoother::new(g.axes(), 0.4).unwrap();
        let e0: Vec<_> = (0..2).map(|_| random_factored(&mut rng, axis())).collect();
        let a0 = vec![rotation(0.2), rotation(-0.7)];
        let w0 = mm_weights(&e0, &a0, &sm).unwrap();
        let b0 = majorizer_b_with(&g, &e0, &a0, &w0, &sm).unwrap();
        let l0 = objective_ell_with(&g, &e0, &a0, &sm).unwrap();
        for _ in 0..20 {
            let e: Vec<_> = e0
                .iter()
                .map(|ej| {
                    let f = ej
                        .factors()
                        .iter()
                        .map(|f| {
                            let v = f.values().iter().map(|x| x * rng.gen_range(0.7..1.4)).collect();
                            GridDensity::new(f.axes().to_vec(), v).unwrap()
                        })
                        .collect();
                    FactoredDensity::new(ej.theta() * rng.gen_range(0.5..2.0), f).unwrap()
                })
                .collect();
            let a: Vec<_> = a0.iter().map(|m| m.matmul(&rotation(rng.gen_range(-0.3..0.3)))).collect();
            let db = majorizer_b_with(&g, &e, &a, &w0, &sm).unwrap() - b0;
            let dl = objective_ell_with(&g, &e, &a, &sm).unwrap() - l0;
            assert!(db >= dl - 1e-10, "db={db} dl={dl}");
        }
    }

    #[test]
    fn degenerate_weights_reduce_to_one_component() {
        let g = target();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sm = Smoother::new(g.axes(), 0.4).unwrap();
        let e: Vec<_> = (0..2).map(|_| random_factored(&mut rng, axis())).collect();
        let a = vec![Matrix::identity(2), rotation(0.4)];
        let one = GridDensity::from_fn(g.axes().to_vec(), |_| 1.0).unwrap();
        let zero = GridDensity::from_fn(g.axes().to_vec(), |_| 0.0).unwrap();
        let b = majorizer_b_with(&g, &e, &a, &[one.clone(), zero], &sm).unwrap();
        let b1 = LatentTarget::new(&g, &one, &a[0]).unwrap().majorizer(&e[0], &sm).unwrap();
        assert!((b - (b1 + e[1].mass())).abs() < 1e-10);
    }

    #[test]
    fn both_closed_form_routes_agree() {
        let g = target();
        let sm = Smoother::new(g.axes(), 0.3).unwrap();
        let w = GridDensity::from_fn(g.axes().to_vec(), |p| 1.0 / (1.0 + (-p[0]).exp())).unwrap();
        for a in [Matrix::identity(2), rotation(0.6), Matrix::from_rows(&[vec![1.2, 0.3], vec![0.1, 0.8]]).unwrap()] {
            let t = LatentTarget::new(&g, &w, &a).unwrap();
            let direct = t.closed_form(&sm).unwrap().to_grid();
            let op = t.closed_form_operator(&sm).unwrap();
            assert!(direct.max_abs_diff(&op) < 1e-10);
            assert!((direct.mass() - t.mass()).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_of_a_product_is_its_smoothing() {
        let ax = axis();
        let g = GridDensity::from_fn(vec![ax, ax], |p| gauss(p[0], 0.3, 0.9) * gauss(p[1], -0.2, 1.3))
            .unwrap();
        let one = GridDensity::from_fn(vec![ax, ax], |_| 1.0).unwrap();
        let e = closed_form_minimizer(&g, &one, &Matrix::identity(2), 0.4).unwrap();
        let sg = super::super::ops::op_s(&g, 0.4).unwrap();
        assert!(e.to_grid().max_abs_diff(&sg) < 1e-12);
    }

    #[test]
    fn closed_form_beats_nonnegative_perturbations() {
        let g = target();
        let sm = Smoother::new(g.axes(), 0.35).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let e0: Vec<_> = (0..2).map(|_| random_factored(&mut rng, axis())).collect();
        let a = vec![rotation(0.25), Matrix::identity(2)];
        let w0 = mm_weights(&e0, &a, &sm).unwrap();
        let t = LatentTarget::new(&g, &w0[0], &a[0]).unwrap();
        let best = t.closed_form(&sm).unwrap();
        let b0 = t.majorizer(&best, &sm).unwrap();
        for _ in 0..30 {
            let eps = 10f64.powf(rng.gen_range(-3.0..-0.3));
            let f = best
                .factors()
                .iter()
                .map(|f| {
                    let top = f.values().iter().cloned().fold(0.0, f64::max);
                    let v = f
                        .values()
                        .iter()
                        .map(|x| x + if rng.gen_bool(0.3) { eps * top * rng.gen::<f64>() } else { 0.0 })
                        .collect();
                    GridDensity::new(f.axes().to_vec(), v).unwrap()
                })
                .collect();
            let p = FactoredDensity::new(best.theta() * (1.0 + eps * rng.gen::<f64>()), f).unwrap();
            assert!(t.majorizer(&p, &sm).unwrap() >= b0);
        }
    }

    #[test]
    fn latent_and_observed_majorizers_agree_at_identity() {
        let g = target();
        let sm = Smoother::new(g.axes(), 0.35).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let e = vec![random_factored(&mut rng, axis())];
        let one = GridDensity::from_fn(g.axes().to_vec(), |_| 1.0).unwrap();
        let id = vec![Matrix::identity(2)];
        let x = majorizer_b_with(&g, &e, &id, &[one.clone()], &sm).unwrap();
        let y = LatentTarget::new(&g, &one, &id[0]).unwrap().majorizer(&e[0], &sm).unwrap();
        assert!((x - y).abs() < 1e-12);
    }

    #[test]
    fn plugged_in_majorizer_is_the_entropy_contrast() {
        let g = target();
        let sm = Smoother::new(g.axes(), 0.3).unwrap();
        let w = GridDensity::from_fn(g.axes().to_vec(), |p| 1.0 / (1.0 + p[1].exp())).unwrap();
        for a in [Matrix::identity(2), rotation(0.4), Matrix::from_rows(&[vec![1.3, 0.0], vec![0.2, 0.9]]).unwrap()] {
            let t = LatentTarget::new(&g, &w, &a).unwrap();
            let b = t.majorizer(&t.closed_form(&sm).unwrap(), &sm).unwrap();
            let q = t.marginals(&sm).unwrap();
            let psi = t.mass();
            let want = psi * ica_contrast(&q, &a) + psi - psi * psi.ln();
            assert!((b - want).abs() < 1e-10, "b={b} want={want}");
        }
    }

    #[test]
    fn ica_objective_reference_values() {
        let u = Axis::cells(0.0, 1.0, 16).unwrap();
        let unif = GridDensity::from_fn(vec![u], |_| 1.0).unwrap();
        assert!(ica_objective(&[unif.clone(), unif], &Matrix::identity(2)).abs() < 1e-12);
        let ax = Axis::cells(-9.0, 9.0, 64).unwrap();
        let n = GridDensity::from_fn(vec![ax], |x| gauss(x[0], 0.0, 1.0)).unwrap();
        let v = ica_objective(&[n.clone(), n], &Matrix::identity(2));
        assert!((v - 2.0 * -1.41894).abs() < 1e-3, "{v}");
    }

    #[test]
    fn rotating_independent_uniforms_raises_the_contrast() {
        let ax = Axis::cells(-3.0, 3.0, 48).unwrap();
        let half = 3f64.sqrt();
        let g = GridDensity::from_fn(vec![ax, ax], |p| {
            if p[0].abs() < half && p[1].abs() < half { 1.0 / 12.0 } else { 0.0 }
        })
        .unwrap();
        let one = GridDensity::from_fn(vec![ax, ax], |_| 1.0).unwrap();
        let sm = Smoother::new(g.axes(), 0.2).unwrap();
        let at = |phi: f64| {
            let a = rotation(phi);
            let q = LatentTarget::new(&g, &one, &a).unwrap().marginals(&sm).unwrap();
            (ica_contrast(&q, &a), ica_objective(&q, &a))
        };
        let (c0, o0) = at(0.0);
        for k in 1..=16 {
            let (c, o) = at(k as f64 * std::f64::consts::FRAC_PI_2 / 17.0);
            assert!(c > c0, "k={k}");
            // the negentropy form moves the other way
            assert!(o < o0, "k={k}");
        }
    }
}
