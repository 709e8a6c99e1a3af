use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use super::config::{FitConfig, Init, Mode};
use super::model::{
    log_density_table, loglik_from_table, posterior_from_table, Component, FitReport,
    MixtureModel, PosteriorMatrix,
};
use crate::error::{Error, Result};
use crate::eval::kmeans;
use crate::numerics::Matrix;
use crate::scalar::Scalar;
use crate::wfastica::{
    apply_rows, compose_unmixing, fixed_point, subtract_row, weighted_mean, whiten_weighted,
    Whitening,
};
use crate::wkde::{bandwidth_with_coef, WeightedKde1D};

/// Per-component affine unmixing produced by the ICA step.
#[derive(Debug, Clone, PartialEq)]
pub struct IcaState<T> {
    pub mean: Vec<T>,
    pub a: Matrix<T>,
    pub a_inv: Matrix<T>,
    /// Orthonormal unmixing of the whitened data; warm start for the next call.
    pub w: Matrix<T>,
    /// `None` in npEM mode or when the step fell back.
    pub whitening: Option<Whitening<T>>,
    pub inner_iters: usize,
    pub converged: bool,
}

impl<T: Scalar> IcaState<T> {
    fn identity(mean: Vec<T>) -> Self {
        let r = mean.len();
        Self {
            mean,
            a: Matrix::identity(r),
            a_inv: Matrix::identity(r),
            w: Matrix::identity(r),
            whitening: None,
            inner_iters: 0,
            converged: true,
        }
    }
}

/// `λⱼ = (1/n) Σᵢ pᵢⱼ`.
pub fn update_lambda<T: Scalar>(p: &PosteriorMatrix<T>) -> Vec<T> {
    let n = T::from_usize_lossy(p.n());
    let mut sums = vec![T::zero(); p.m()];
    for i in 0..p.n() {
        for (s, &v) in sums.iter_mut().zip(p.row(i)) {
            *s = *s + v;
        }
    }
    sums.into_iter().map(|s| s / n).collect()
}

/// Weighted centering, whitening and symmetric FastICA for one component.
///
/// Returns the new state and, when the step could not run (too little weight
/// or a degenerate covariance), a warning; in that case the previous state is
/// kept, or the identity with the weighted mean on the first iteration.
pub fn ica_step<T: Scalar>(
    x: &Matrix<T>,
    p_j: &[T],
    cfg: &FitConfig,
    prev: Option<&IcaState<T>>,
) -> Result<(IcaState<T>, Option<String>)> {
    let r = x.cols();
    let mass: T = p_j.iter().copied().sum();
    if cfg.mode == Mode::Npem {
        return Ok((IcaState::identity(weighted_mean(x, p_j)?), None));
    }
    let fallback = |why: String| -> Result<(IcaState<T>, Option<String>)> {
        let state = match prev {
            Some(s) => s.clone(),
            None => IcaState::identity(weighted_mean(x, p_j)?),
        };
        Ok((state, Some(why)))
    };
    if mass < T::from_usize_lossy(r) {
        return fallback(format!(
            "effective sample size {:.3} < dimension {r}; ICA skipped",
            mass.to_f64_lossy()
        ));
    }
    let (z, wh) = match whiten_weighted(x, p_j) {
        Ok(v) => v,
        Err(e @ Error::DegenerateCovariance { .. }) => return fallback(format!("{e}; ICA skipped")),
        Err(e) => return Err(e),
    };
    let init = prev.map_or_else(|| Matrix::identity(r), |s| s.w.clone());
    let fp = fixed_point(
        &z,
        p_j,
        cfg.nonlinearity,
        T::c(cfg.ica_tol),
        cfg.ica_max_inner,
        &init,
    )?;
    let u = compose_unmixing(&wh, fp)?;
    let state = IcaState {
        mean: wh.mean.clone(),
        a: u.a,
        a_inv: u.a_inv,
        w: u.w,
        whitening: Some(wh),
        inner_iters: u.inner_iters,
        converged: u.converged,
    };
    Ok((state, None))
}

/// Builds one KDE per (component, latent coordinate) from the weighted,
/// unmixed data. Bandwidths follow `coef · (n λⱼ)^(-1/5)`; the returned
/// warnings name components whose effective sample size was clamped.
pub fn density_step<T: Scalar>(
    x: &Matrix<T>,
    p: &PosteriorMatrix<T>,
    states: &[IcaState<T>],
    lambdas: &[T],
    cfg: &FitConfig,
) -> Result<(Vec<Vec<WeightedKde1D<T>>>, Vec<String>)> {
    let n = x.rows();
    let mut out = Vec::with_capacity(states.len());
    let mut warnings = Vec::new();
    for (j, (state, &lambda)) in states.iter().zip(lambdas).enumerate() {
        let weights = p.column(j);
        if !(weights.iter().copied().sum::<T>() > T::zero()) {
            return Err(Error::EmptyComponent(j));
        }
        let (h, clamped) = bandwidth_with_coef(T::c(cfg.bandwidth_coef), n, lambda);
        if clamped {
            warnings.push(format!(
                "component {j}: effective sample size below 1, bandwidth clamped"
            ));
        }
        let u = apply_rows(&subtract_row(x, &state.mean), &state.a_inv);
        let kdes = (0..x.cols())
            .map(|k| WeightedKde1D::new(u.column(k), weights.clone(), h))
            .collect::<Result<Vec<_>>>()?;
        out.push(kdes);
    }
    Ok((out, warnings))
}

fn assemble<T: Scalar>(
    lambdas: &[T],
    states: &[IcaState<T>],
    kdes: Vec<Vec<WeightedKde1D<T>>>,
    report: FitReport,
) -> Result<MixtureModel<T>> {
    let components = lambdas
        .iter()
        .zip(states)
        .zip(kdes)
        .map(|((&l, s), k)| Component::new(l, s.mean.clone(), s.a.clone(), s.a_inv.clone(), k))
        .collect::<Result<Vec<_>>>()?;
    MixtureModel::new(components, report)
}

/// Initial responsibilities according to `cfg.init`.
pub fn initial_posterior<T: Scalar>(x: &Matrix<T>, cfg: &FitConfig) -> Result<PosteriorMatrix<T>> {
    let n = x.rows();
    let m = cfg.m;
    match cfg.init {
        Init::KMeans => {
            let km = kmeans(x, m, cfg.kmeans_restarts, cfg.seed)?;
            PosteriorMatrix::from_labels(&km.labels, m, T::c(cfg.kmeans_confidence))
        }
        Init::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut values = Vec::with_capacity(n * m);
            for _ in 0..n {
                let draws: Vec<f64> = (0..m).map(|_| Exp1.sample(&mut rng)).collect();
                let s: f64 = draws.iter().sum();
                let row: Vec<T> = draws.iter().map(|d| T::c(d / s)).collect();
                let rs: T = row.iter().copied().sum();
                values.extend(row.into_iter().map(|v| v / rs));
            }
            PosteriorMatrix::new(n, m, values)
        }
    }
}

/// Fits the mixture, initializing per `cfg.init`.
pub fn fit<T: Scalar>(x: &Matrix<T>, cfg: &FitConfig) -> Result<MixtureModel<T>> {
    cfg.validate()?;
    check_shape(x, cfg)?;
    let p0 = initial_posterior(x, cfg)?;
    fit_from_posterior(x, cfg, p0)
}

fn check_shape<T: Scalar>(x: &Matrix<T>, cfg: &FitConfig) -> Result<()> {
    if x.rows() <= x.cols() {
        return Err(Error::InvalidInput(format!(
            "need more observations ({}) than dimensions ({})",
            x.rows(),
            x.cols()
        )));
    }
    if cfg.m > x.rows() {
        return Err(Error::InvalidInput(format!(
            "{} components for {} observations",
            cfg.m,
            x.rows()
        )));
    }
    Ok(())
}

/// Runs the outer loop from given initial responsibilities.
///
/// Each iteration: posterior (from the previous model, skipped on the first
/// pass), mixing weights, per-component ICA, per-coordinate weighted KDE.
/// Stops when `|Δℓ| / (|ℓ| + 1) < outer_tol` or after `max_outer` passes.
pub fn fit_from_posterior<T: Scalar>(
    x: &Matrix<T>,
    cfg: &FitConfig,
    p0: PosteriorMatrix<T>,
) -> Result<MixtureModel<T>> {
    cfg.validate()?;
    check_shape(x, cfg)?;
    let n = x.rows();
    let m = cfg.m;
    if p0.n() != n || p0.m() != m {
        return Err(Error::InvalidInput(format!(
            "initial posterior is {}x{}, expected {n}x{m}",
            p0.n(),
            p0.m()
        )));
    }

    let mut report = FitReport::default();
    let mut p = p0;
    let mut states: Vec<Option<IcaState<T>>> = vec![None; m];
    let mut dying = vec![0usize; m];
    let mut prev_ll: Option<f64> = None;
    let mut prev_model: Option<MixtureModel<T>> = None;
    let mut last_table: Option<Vec<T>> = None;

    for t in 1..=cfg.max_outer {
        // Step 2: mixing weights.
        let mut lambdas = update_lambda(&p);
        let mut reinitialized = false;
        for j in 0..m {
            if lambdas[j].to_f64_lossy() < cfg.min_lambda {
                dying[j] += 1;
                report.warnings.push(format!(
                    "iteration {t}: component {j} weight {:e} below {:e}",
                    lambdas[j].to_f64_lossy(),
                    cfg.min_lambda
                ));
                let empty = lambdas[j] == T::zero();
                if dying[j] >= cfg.dying_patience || empty {
                    if !cfg.reinit_dying {
                        return Err(Error::DyingComponent {
                            component: j,
                            lambda: lambdas[j].to_f64_lossy(),
                            iterations: dying[j],
                        });
                    }
                    p = reinit_component(&p, j, last_table.as_deref())?;
                    states[j] = None;
                    dying[j] = 0;
                    reinitialized = true;
                    report
                        .warnings
                        .push(format!("iteration {t}: component {j} reinitialized"));
                }
            } else {
                dying[j] = 0;
            }
        }
        if reinitialized {
            lambdas = update_lambda(&p);
        }

        // Step 3: per-component ICA.
        for j in 0..m {
            let (state, warn) = ica_step(x, &p.column(j), cfg, states[j].as_ref())?;
            if let Some(w) = warn {
                report.warnings.push(format!("iteration {t}: component {j}: {w}"));
            }
            states[j] = Some(state);
        }
        let current: Vec<IcaState<T>> = states.iter().map(|s| s.clone().expect("set")).collect();

        if cfg.recompute_posterior_after_ica {
            if let Some(prev) = &prev_model {
                let mut probe = prev.clone();
                for ((c, s), &l) in probe.components.iter_mut().zip(&current).zip(&lambdas) {
                    *c = Component::new(l, s.mean.clone(), s.a.clone(), s.a_inv.clone(), c.kdes.clone())?;
                }
                let table = log_density_table(&probe, x);
                p = posterior_from_table(&table, n, m).0;
            }
        }

        // Step 4: densities.
        let (kdes, warns) = density_step(x, &p, &current, &lambdas, cfg)?;
        report
            .warnings
            .extend(warns.into_iter().map(|w| format!("iteration {t}: {w}")));
        let model = assemble(&lambdas, &current, kdes, FitReport::default())?;

        // Step 1 for the next pass, and the convergence monitor.
        let table = log_density_table(&model, x);
        let (ll, floored) = loglik_from_table(&table, m);
        if floored > 0 {
            report.warnings.push(format!(
                "iteration {t}: {floored} rows had zero likelihood"
            ));
        }
        let (p_next, fallback) = posterior_from_table(&table, n, m);
        if fallback > 0 {
            report.warnings.push(format!(
                "iteration {t}: {fallback} rows assigned uniformly"
            ));
        }
        let ll = ll.to_f64_lossy();
        report.loglik_trace.push(ll);
        report
            .lambda_trace
            .push(lambdas.iter().map(|l| l.to_f64_lossy()).collect());
        report.outer_iters = t;
        log::debug!("iteration {t}: loglik {ll:.6}");

        let done = prev_ll.is_some_and(|prev| (ll - prev).abs() / (ll.abs() + 1.0) < cfg.outer_tol);
        prev_ll = Some(ll);
        p = p_next;
        last_table = Some(table);
        prev_model = Some(model);
        if done {
            report.converged = true;
            break;
        }
    }

    let mut model = prev_model.expect("max_outer >= 1");
    model.report = report;
    Ok(model)
}

/// Hands component `j` the ⌈n/m⌉ worst-explained observations.
fn reinit_component<T: Scalar>(
    p: &PosteriorMatrix<T>,
    j: usize,
    table: Option<&[T]>,
) -> Result<PosteriorMatrix<T>> {
    let (n, m) = (p.n(), p.m());
    let score = |i: usize| -> T {
        match table {
            Some(t) => t[i * m..(i + 1) * m]
                .iter()
                .copied()
                .fold(T::neg_infinity(), T::max),
            None => p.row(i).iter().copied().fold(T::zero(), T::max),
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        score(a)
            .partial_cmp(&score(b))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let take = n.div_ceil(m);
    let mut values = p.as_slice().to_vec();
    let hit = T::c(0.9);
    let miss = if m > 1 {
        (T::one() - hit) / T::from_usize_lossy(m - 1)
    } else {
        T::zero()
    };
    for &i in &order[..take] {
        for k in 0..m {
            values[i * m + k] = if k == j { hit } else { miss };
        }
    }
    PosteriorMatrix::new(n, m, values)
}
