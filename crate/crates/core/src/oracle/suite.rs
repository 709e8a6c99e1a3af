use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grid::{Axis, GridDensity};
use super::kernel::Smoother;
use super::objective::{
    majorizer_b_with, mm_weights, objective_ell_with, penalty_with, rotation, FactoredDensity,
    LatentTarget,
};
use super::ops::{kl_div, op_p};
use crate::error::Result;
use crate::numerics::Matrix;

/// One row of the oracle table.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

/// Every check is expected to finish well inside this budget.
pub const CHECK_BUDGET: Duration = Duration::from_secs(1);

struct Problem {
    g: GridDensity,
    e: Vec<FactoredDensity>,
    a: Vec<Matrix<f64>>,
    h: f64,
}

fn gauss(x: f64, mu: f64, var: f64) -> f64 {
    (-(x - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn random_problem(rng: &mut ChaCha8Rng) -> Problem {
    let ax = Axis::cells(-4.0, 4.0, 24).expect("valid axis");
    let bumps: Vec<(f64, f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                rng.gen_range(0.2..1.0),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(0.3..1.5),
                rng.gen_range(0.3..1.5),
            )
        })
        .collect();
    let g = GridDensity::from_fn(vec![ax, ax], |p| {
        bumps
            .iter()
            .map(|&(w, m0, m1, v0, v1)| w * gauss(p[0], m0, v0) * gauss(p[1], m1, v1))
            .sum::<f64>()
    })
    .expect("positive target");
    let g = g.scaled(1.0 / g.mass()).expect("finite scale");
    let m = rng.gen_range(1..=3);
    let e = (0..m)
        .map(|_| {
            let f = |rng: &mut ChaCha8Rng| {
                GridDensity::new(vec![ax], (0..ax.len()).map(|_| rng.gen_range(0.1..1.5)).collect())
                    .expect("positive factor")
            };
            let (f0, f1) = (f(rng), f(rng));
            FactoredDensity::new(rng.gen_range(0.02..0.2), vec![f0, f1]).expect("valid factored")
        })
        .collect();
    let a = (0..m)
        .map(|_| {
            let s = Matrix::from_diag(&[rng.gen_range(0.8..1.25), rng.gen_range(0.8..1.25)]);
            rotation(rng.gen_range(-1.0..1.0)).matmul(&s)
        })
        .collect();
    Problem {
        g,
        e,
        a,
        h: rng.gen_range(0.15..1.0),
    }
}

fn random_density(rng: &mut ChaCha8Rng) -> GridDensity {
    let ax = Axis::cells(-3.0, 3.0, 32).expect("valid axis");
    let v = (0..ax.len() * ax.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
    let f = GridDensity::new(vec![ax, ax], v).expect("nonnegative");
    f.scaled(1.0 / f.mass()).expect("finite scale")
}

fn timed(name: &'static str, check: impl FnOnce() -> Result<(bool, String)>) -> CheckOutcome {
    let t0 = Instant::now();
    let (passed, detail) = match check() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    let elapsed = t0.elapsed();
    CheckOutcome {
        name,
        passed: passed && elapsed < CHECK_BUDGET,
        detail,
        elapsed,
    }
}

fn penalty_nonnegative(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let p = random_problem(&mut rng);
        let sm = Smoother::new(p.g.axes(), p.h)?;
        worst = worst.min(penalty_with(&p.e, &p.a, &sm)?);
    }
    Ok((worst >= -1e-10, format!("min penalty over 100 problems {worst:.3e}")))
}

fn projection_commutes(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let f = random_density(&mut rng);
        let sm = Smoother::new(f.axes(), rng.gen_range(0.05..2.0))?;
        let lhs = op_p(&sm.smooth(&f)?)?;
        let rhs = sm.smooth(&op_p(&f)?)?;
        worst = worst.max(lhs.max_abs_diff(&rhs));
    }
    Ok((worst <= 1e-10, format!("max |PSf - SPf| {worst:.3e}")))
}

fn projection_unit_mass(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        worst = worst.max((op_p(&random_density(&mut rng))?.mass() - 1.0).abs());
    }
    Ok((worst <= 1e-10, format!("max |∫Pf - 1| {worst:.3e}")))
}

fn kl_properties(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut self_max = 0.0f64;
    let mut min_kl = f64::INFINITY;
    for _ in 0..20 {
        let f = random_density(&mut rng);
        let g = random_density(&mut rng).scaled(rng.gen_range(0.5..2.0))?;
        self_max = self_max.max(kl_div(&f, &f)?.abs());
        min_kl = min_kl.min(kl_div(&f, &g)?);
    }
    Ok((
        self_max == 0.0 && min_kl >= 0.0,
        format!("max KL(f,f) {self_max:.1e}, min KL(f,g) {min_kl:.3e}"),
    ))
}

fn majorization(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..10 {
        let p = random_problem(&mut rng);
        let sm = Smoother::new(p.g.axes(), p.h)?;
        let w0 = mm_weights(&p.e, &p.a, &sm)?;
        let b0 = majorizer_b_with(&p.g, &p.e, &p.a, &w0, &sm)?;
        let l0 = objective_ell_with(&p.g, &p.e, &p.a, &sm)?;
        let q = random_problem(&mut rng);
        let e: Vec<_> = p
            .e
            .iter()
            .zip(q.e.iter().cycle())
            .map(|(x, y)| FactoredDensity::new(x.theta(), y.factors().to_vec()))
            .collect::<Result<_>>()?;
        let a: Vec<_> = p
            .a
            .iter()
            .map(|m| m.matmul(&rotation(rng.gen_range(-0.3..0.3))))
            .collect();
        let db = majorizer_b_with(&p.g, &e, &a, &w0, &sm)? - b0;
        let dl = objective_ell_with(&p.g, &e, &a, &sm)? - l0;
        worst = worst.min(db - dl);
    }
    Ok((worst >= -1e-10, format!("min (Δb - Δℓ) {worst:.3e}")))
}

/// Weighted target and weights for the closed-form checks.
fn latent_case(rng: &mut ChaCha8Rng) -> Result<(LatentTarget, Smoother)> {
    let p = random_problem(rng);
    let sm = Smoother::new(p.g.axes(), p.h)?;
    let w0 = mm_weights(&p.e, &p.a, &sm)?;
    Ok((LatentTarget::new(&p.g, &w0[0], &p.a[0])?, sm))
}

fn closed_form_routes(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let (t, sm) = latent_case(&mut rng)?;
        let direct = t.closed_form(&sm)?.to_grid();
        worst = worst.max(direct.max_abs_diff(&t.closed_form_operator(&sm)?));
    }
    Ok((worst <= 1e-10, format!("max |direct - P∘S| {worst:.3e}")))
}

fn closed_form_minimal(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t, sm) = latent_case(&mut rng)?;
    let best = t.closed_form(&sm)?;
    let b0 = t.majorizer(&best, &sm)?;
    let mut margin = f64::INFINITY;
    for _ in 0..100 {
        let eps = 10f64.powf(rng.gen_range(-3.0..-0.3));
        let factors = best
            .factors()
            .iter()
            .map(|f| {
                let top = f.values().iter().cloned().fold(0.0, f64::max);
                let v = f
                    .values()
                    .iter()
                    .map(|x| {
                        x + if rng.gen_bool(0.3) {
                            eps * top * rng.gen::<f64>()
                        } else {
                            0.0
                        }
                    })
                    .collect();
                GridDensity::new(f.axes().to_vec(), v)
            })
            .collect::<Result<Vec<_>>>()?;
        let theta = best.theta() * (1.0 + eps * rng.gen::<f64>());
        let b = t.majorizer(&FactoredDensity::new(theta, factors)?, &sm)?;
        margin = margin.min(b - b0);
    }
    Ok((margin >= 0.0, format!("min b(perturbed) - b(closed form) {margin:.3e}")))
}

/// Result of the mass check on the MM iteration.
#[derive(Debug, Clone)]
pub struct SpotCheck {
    pub total_mass: f64,
    pub objective_trace: Vec<f64>,
    pub angles: Vec<f64>,
}

/// Runs `iterations` MM steps on a two-component 2-D grid problem. Each
/// step recomputes the weights, then for every component picks the best
/// rotation among small moves around the current one and applies the
/// closed-form update for it.
pub fn mm_spot_check(iterations: usize) -> Result<SpotCheck> {
    let ax = Axis::cells(-5.0, 5.0, 32)?;
    let (c, s) = (0.5f64.sqrt(), 0.5f64.sqrt());
    let g = GridDensity::from_fn(vec![ax, ax], |p| {
        let (u, v) = (c * p[0] + s * p[1], -s * p[0] + c * p[1]);
        0.35 * gauss(u, -1.5, 0.3) * gauss(v, 0.0, 1.2)
            + 0.65 * gauss(p[0], 1.2, 0.6) * gauss(p[1], 0.5, 0.8)
    })?;
    let g = g.scaled(1.0 / g.mass())?;
    let sm = Smoother::new(g.axes(), 0.4)?;
    let start = |mu: f64| -> Result<FactoredDensity> {
        let f0 = GridDensity::from_fn(vec![ax], |x| gauss(x[0], mu, 2.0))?;
        let f1 = GridDensity::from_fn(vec![ax], |x| gauss(x[0], 0.0, 2.0))?;
        FactoredDensity::new(0.5, vec![f0, f1])
    };
    let mut e = vec![start(-1.0)?, start(1.0)?];
    let mut angles = vec![0.0, 0.0];
    let mut a: Vec<_> = angles.iter().map(|&p| rotation(p)).collect();
    let mut trace = vec![objective_ell_with(&g, &e, &a, &sm)?];
    for _ in 0..iterations {
        let w0 = mm_weights(&e, &a, &sm)?;
        for j in 0..e.len() {
            let mut best: Option<(f64, f64, FactoredDensity)> = None;
            for step in [-0.1, -0.03, 0.0, 0.03, 0.1] {
                let phi = angles[j] + step;
                let t = LatentTarget::new(&g, &w0[j], &rotation(phi))?;
                let ej = t.closed_form(&sm)?;
                let b = t.majorizer(&ej, &sm)?;
                if best.as_ref().map_or(true, |(bb, _, _)| b < *bb) {
                    best = Some((b, phi, ej));
                }
            }
            let (_, phi, ej) = best.expect("at least one candidate");
            angles[j] = phi;
            a[j] = rotation(phi);
            e[j] = ej;
        }
        trace.push(objective_ell_with(&g, &e, &a, &sm)?);
    }
    Ok(SpotCheck {
        total_mass: e.iter().map(FactoredDensity::mass).sum(),
        objective_trace: trace,
        angles,
    })
}

fn mass_sums_to_one() -> Result<(bool, String)> {
    let r = mm_spot_check(50)?;
    let first = r.objective_trace[0];
    let last = *r.objective_trace.last().expect("non-empty trace");
    Ok((
        (r.total_mass - 1.0).abs() <= 1e-3,
        format!(
            "∫Σê = {:.6} after 50 iterations; ℓ {first:.5} -> {last:.5}",
            r.total_mass
        ),
    ))
}

/// Runs every oracle check. Deterministic for a given seed.
pub fn run_suite(seed: u64) -> Vec<CheckOutcome> {
    vec![
        timed("penalty nonnegative on 100 random problems", || penalty_nonnegative(seed)),
        timed("P and S_h commute", || projection_commutes(seed + 1)),
        timed("P output integrates to 1", || projection_unit_mass(seed + 2)),
        timed("KL(f,f) = 0 and KL >= 0", || kl_properties(seed + 3)),
        timed("majorizer dominates objective changes", || majorization(seed + 4)),
        timed("closed form beats 100 perturbations", || closed_form_minimal(seed + 5)),
        timed("closed form matches operator form", || closed_form_routes(seed + 6)),
        timed("MM iterate mass sums to 1", mass_sums_to_one),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for row in run_suite(0) {
            assert!(row.passed, "{}: {} ({:?})", row.name, row.detail, row.elapsed);
        }
    }

    #[test]
    fn spot_check_keeps_unit_mass_and_descends() {
        let r = mm_spot_check(10).unwrap();
        assert!((r.total_mass - 1.0).abs() < 1e-3);
        let t = &r.objective_trace;
        assert!(t.last().unwrap() < &t[0]);
    }
}
