//! Certified solver for the strongly convex regularized ERM subproblem
//!
//! ```text
//! F(x) = (1/m) sum_j F(x; s_j) + reg |x - anchor|^2,   x in domain
//! ```
//!
//! `F` is `2 reg`-strongly convex, so for any `y` in the domain and any
//! `g` in the subdifferential of `F` at `y`,
//!
//! ```text
//! F(y) - min F <= -<g, y+ - y> - reg |y+ - y|^2,   y+ = P(y - g / (2 reg))
//! ```
//!
//! which is the gradient-mapping bound `|g|^2 / (4 reg)` when `y+` is
//! interior. The solver stops as soon as this bound drops below the
//! requested tolerance at one of its candidates.
//!
//! Iterates follow projected subgradient steps `1 / (2 reg t)` on the loss,
//! with the quadratic regularizer applied in closed form. Candidates checked
//! at each checkpoint are the current iterate, a tail average, the kinks of
//! the loss nearest to the iterate, and a short prox-gradient polish from
//! the best of these.

use crate::domain::Domain;
use crate::error::{invalid, Error, Result};
use crate::loss::{min_norm_in_ball, weighted_subdifferential, Kink, LossOracle};
use crate::rng::RngStream;
use crate::types::{Dataset, Vector};

const CHECK_EVERY: usize = 8;
const POLISH_STEPS: usize = 40;
const KINK_CANDIDATES: usize = 2;

pub const DEFAULT_MAX_ITERS: usize = 200_000;

pub struct RegularizedProblem<'a> {
    pub loss: &'a dyn LossOracle,
    pub batch: &'a [Vector],
    pub anchor: Vector,
    pub reg_weight: f64,
    pub domain: Domain,
}

impl<'a> RegularizedProblem<'a> {
    pub fn new(
        loss: &'a dyn LossOracle,
        batch: &'a [Vector],
        anchor: Vector,
        reg_weight: f64,
        domain: Domain,
    ) -> Result<Self> {
        if batch.is_empty() {
            return invalid("regularized problem needs a nonempty batch");
        }
        if !(reg_weight > 0.0 && reg_weight.is_finite()) {
            return invalid(format!("reg_weight must be positive, got {reg_weight}"));
        }
        if !domain.contains(&anchor, 1e-9) {
            return invalid("domain must contain the anchor");
        }
        Ok(Self {
            loss,
            batch,
            anchor,
            reg_weight,
            domain,
        })
    }

    pub fn value(&self, x: &Vector) -> f64 {
        let m = self.batch.len() as f64;
        self.batch.iter().map(|s| self.loss.value(x, s)).sum::<f64>() / m
            + self.reg_weight * (x - &self.anchor).norm_squared()
    }

    pub fn strong_convexity(&self) -> f64 {
        2.0 * self.reg_weight
    }

    /// Gap tolerance that guarantees `|x - x*| <= dist`.
    pub fn gap_for_distance(&self, dist: f64) -> f64 {
        self.reg_weight * dist * dist
    }

    /// Distance to the minimizer implied by an optimality gap.
    pub fn distance_for_gap(&self, gap: f64) -> f64 {
        (gap.max(0.0) / self.reg_weight).sqrt()
    }

    fn loss_grad(&self, x: &Vector) -> Vector {
        let mut g = Vector::zeros(x.len());
        for s in self.batch {
            g += self.loss.subgrad(x, s);
        }
        g / self.batch.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vector,
    /// Certified upper bound on `F(x) - min F`.
    pub gap_bound: f64,
    pub objective: f64,
    pub iterations: usize,
    /// Best objective value seen, recorded at every checkpoint.
    pub best_objective_trace: Vec<f64>,
}

struct Certifier<'p, 'a> {
    problem: &'p RegularizedProblem<'a>,
    kinks: Vec<Option<Kink>>,
}

impl Certifier<'_, '_> {
    /// Upper bound on `F(y) - min F` for `y` in the domain.
    fn gap(&self, y: &Vector) -> f64 {
        let p = self.problem;
        let w = 1.0 / p.batch.len() as f64;
        let (mut c, r) = weighted_subdifferential(
            p.loss,
            y,
            p.batch
                .iter()
                .zip(&self.kinks)
                .map(|(s, k)| (w, s, k.as_ref())),
        );
        c.axpy(2.0 * p.reg_weight, &(y - &p.anchor), 1.0);
        let mu = p.strong_convexity();
        let mut best = f64::INFINITY;
        let mut choices = vec![min_norm_in_ball(&c, r)];
        if r > 0.0 {
            choices.push(c);
        }
        for g in choices {
            let Ok(next) = p.domain.project(&(y - &g / mu)) else {
                continue;
            };
            let d = next - y;
            let gap = -g.dot(&d) - 0.5 * mu * d.norm_squared();
            best = best.min(gap.max(0.0));
        }
        best
    }
}

struct Best {
    x: Vector,
    gap: f64,
    objective: f64,
}

/// Minimizes the regularized problem to a certified gap of at most `tol`.
///
/// Deterministic: the full batch is swept in order at every iteration.
pub fn solve(problem: &RegularizedProblem, tol: f64, max_iters: usize) -> Result<Solution> {
    if !(tol > 0.0) {
        return invalid(format!("tolerance must be positive, got {tol}"));
    }
    let cert = Certifier {
        problem,
        kinks: problem.batch.iter().map(|s| problem.loss.kink(s)).collect(),
    };
    let reg = problem.reg_weight;
    let mu = problem.strong_convexity();
    let a = &problem.anchor;

    let mut x = problem.domain.project(a)?;
    let mut best = Best {
        gap: cert.gap(&x),
        objective: problem.value(&x),
        x: x.clone(),
    };
    let mut trace = vec![best.objective];
    let consider = |y: Vector, best: &mut Best| -> f64 {
        let gap = cert.gap(&y);
        let objective = problem.value(&y);
        if objective < best.objective {
            best.objective = objective;
        }
        if gap < best.gap {
            best.gap = gap;
            best.x = y;
        }
        gap
    };
    let done = |best: &Best, trace: Vec<f64>, iterations: usize| Solution {
        objective: problem.value(&best.x),
        x: best.x.clone(),
        gap_bound: best.gap,
        iterations,
        best_objective_trace: trace,
    };

    if best.gap <= tol {
        return Ok(done(&best, trace, 0));
    }
    polish(problem, &cert, &mut best, tol);
    if best.gap <= tol {
        trace.push(best.objective);
        return Ok(done(&best, trace, 0));
    }

    let mut tail_sum = Vector::zeros(x.len());
    let mut tail_count = 0usize;
    for t in 1..=max_iters {
        let g = problem.loss_grad(&x);
        let gamma = 1.0 / (mu * t as f64);
        let pre = (&x - &g * gamma + a * (2.0 * gamma * reg)) / (1.0 + 2.0 * gamma * reg);
        x = problem.domain.project(&pre)?;

        if t.is_power_of_two() {
            tail_sum.fill(0.0);
            tail_count = 0;
        }
        tail_sum += &x;
        tail_count += 1;

        if t % CHECK_EVERY != 0 {
            continue;
        }
        if consider(x.clone(), &mut best) <= tol {
            trace.push(best.objective);
            return Ok(done(&best, trace, t));
        }
        if let Ok(avg) = problem.domain.project(&(&tail_sum / tail_count as f64)) {
            if consider(avg, &mut best) <= tol {
                trace.push(best.objective);
                return Ok(done(&best, trace, t));
            }
        }
        for k in nearest_kinks(&cert.kinks, &x, KINK_CANDIDATES) {
            if problem.domain.contains(&k, 0.0) && consider(k, &mut best) <= tol {
                trace.push(best.objective);
                return Ok(done(&best, trace, t));
            }
        }
        if t.is_power_of_two() {
            polish(problem, &cert, &mut best, tol);
            if best.gap <= tol {
                trace.push(best.objective);
                return Ok(done(&best, trace, t));
            }
        }
        trace.push(best.objective);
    }
    Err(Error::Convergence {
        best: best.x.iter().copied().collect(),
        residual: best.gap,
        iterations: max_iters,
    })
}

/// Prox-gradient steps from the best candidate, with the step size adapted
/// on the certified gap: accepted steps double it, rejected steps quarter it.
fn polish(problem: &RegularizedProblem, cert: &Certifier, best: &mut Best, tol: f64) {
    let reg = problem.reg_weight;
    let a = &problem.anchor;
    let mut y = best.x.clone();
    let mut gap = best.gap;
    let mut gamma = 1e6 / reg;
    for _ in 0..POLISH_STEPS {
        let g = problem.loss_grad(&y);
        let pre = (&y - &g * gamma + a * (2.0 * gamma * reg)) / (1.0 + 2.0 * gamma * reg);
        let Ok(next) = problem.domain.project(&pre) else {
            return;
        };
        let next_gap = cert.gap(&next);
        if next_gap < gap {
            y = next;
            gap = next_gap;
            gamma *= 2.0;
            let objective = problem.value(&y);
            best.objective = best.objective.min(objective);
            if gap < best.gap {
                best.gap = gap;
                best.x = y.clone();
            }
            if gap <= tol {
                return;
            }
        } else {
            gamma /= 4.0;
            if gamma * reg < 1e-9 {
                return;
            }
        }
    }
}

fn nearest_kinks(kinks: &[Option<Kink>], x: &Vector, count: usize) -> Vec<Vector> {
    let mut found: Vec<(f64, &Vector)> = kinks
        .iter()
        .flatten()
        .map(|k| ((&k.at - x).norm(), &k.at))
        .collect();
    found.sort_by(|p, q| p.0.total_cmp(&q.0));
    found.dedup_by(|p, q| p.1 == q.1);
    found.into_iter().take(count).map(|(_, v)| v.clone()).collect()
}

/// Problem data shared by a family of regularized problems that differ only
/// in their batch.
pub struct ProblemTemplate<'a> {
    pub loss: &'a dyn LossOracle,
    pub anchor: Vector,
    pub reg_weight: f64,
    pub domain: Domain,
}

impl<'a> ProblemTemplate<'a> {
    pub fn instantiate<'b>(&'b self, batch: &'b [Vector]) -> Result<RegularizedProblem<'b>>
    where
        'a: 'b,
    {
        RegularizedProblem::new(
            self.loss,
            batch,
            self.anchor.clone(),
            self.reg_weight,
            self.domain.clone(),
        )
    }
}

/// Largest observed `|x(S) - x(S')|` over `trials` random single-sample
/// replacements, where `x(.)` is the certified solution of the template on
/// the given batch and the replacement sample comes from `replacement`.
pub fn empirical_sensitivity(
    template: &ProblemTemplate,
    data: &Dataset,
    mut replacement: impl FnMut(&mut RngStream) -> Vector,
    trials: usize,
    tol: f64,
    max_iters: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    if trials == 0 {
        return invalid("need at least one trial");
    }
    let base = solve(&template.instantiate(data.samples())?, tol, max_iters)?;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let i = (rng.uniform() * data.len() as f64) as usize;
        let neighbour = data.with_replaced(i.min(data.len() - 1), replacement(rng))?;
        let sol = solve(&template.instantiate(neighbour.samples())?, tol, max_iters)?;
        worst = worst.max((&sol.x - &base.x).norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::test_losses::{Absolute, Squared};

    fn pts(xs: &[f64]) -> Vec<Vector> {
        xs.iter().map(|&v| Vector::from_element(1, v)).collect()
    }

    fn line(lo: f64, hi: f64) -> Domain {
        Domain::ball(Vector::from_element(1, 0.5 * (lo + hi)), 0.5 * (hi - lo)).unwrap()
    }

    /// Brute-force minimizer over a uniform grid of the interval.
    fn grid_argmin(p: &RegularizedProblem, lo: f64, hi: f64, h: f64) -> f64 {
        let steps = ((hi - lo) / h).round() as usize;
        (0..=steps)
            .map(|k| lo + k as f64 * h)
            .map(|t| (p.value(&Vector::from_element(1, t)), t))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap()
            .1
    }

    #[test]
    fn quadratic_closed_form() {
        let loss = Squared { lipschitz: 4.0 };
        let batch = pts(&[0.0, 1.0]);
        let p = RegularizedProblem::new(&loss, &batch, Vector::zeros(1), 1.0, line(-1.0, 1.0))
            .unwrap();
        let sol = solve(&p, 1e-14, DEFAULT_MAX_ITERS).unwrap();
        assert!((sol.x[0] - 0.25).abs() < 1e-6, "{}", sol.x[0]);
    }

    #[test]
    fn heavy_regularization_pins_anchor() {
        let loss = Squared { lipschitz: 4.0 };
        let batch = pts(&[0.9, -0.7, 0.3]);
        let anchor = Vector::from_element(1, 0.2);
        let p = RegularizedProblem::new(&loss, &batch, anchor, 1e6, line(-1.0, 1.0)).unwrap();
        let sol = solve(&p, 1e-12, DEFAULT_MAX_ITERS).unwrap();
        assert!((sol.x[0] - 0.2).abs() < 1e-3);
    }

    #[test]
    fn absolute_loss_matches_grid() {
        let batch = pts(&[0.2, 0.8]);
        let p = RegularizedProblem::new(
            &Absolute,
            &batch,
            Vector::from_element(1, 0.5),
            1.0,
            line(0.0, 1.0),
        )
        .unwrap();
        let sol = solve(&p, 1e-10, DEFAULT_MAX_ITERS).unwrap();
        let oracle = grid_argmin(&p, 0.0, 1.0, 1e-4);
        assert!((sol.x[0] - oracle).abs() < 1e-3);
    }

    #[test]
    fn minimizer_at_a_kink_is_certified() {
        // Three samples at 0.3 dominate: the minimizer sits exactly on the kink.
        let batch = pts(&[0.3, 0.3, 0.3, 0.9]);
        let p = RegularizedProblem::new(&Absolute, &batch, Vector::zeros(1), 0.5, line(-1.0, 1.0))
            .unwrap();
        let sol = solve(&p, 1e-12, DEFAULT_MAX_ITERS).unwrap();
        assert_eq!(sol.x[0], 0.3);
        assert!(sol.gap_bound <= 1e-12);
    }

    #[test]
    fn certificate_is_sound_on_closed_forms() {
        let loss = Squared { lipschitz: 8.0 };
        for (k, reg) in [0.1, 0.5, 2.0, 10.0].into_iter().enumerate() {
            let batch = pts(&[-0.4, 0.1 * k as f64, 0.7]);
            let anchor = Vector::from_element(1, -0.2);
            // Stationarity: (2/3) sum (x - s_j) + 2 reg (x - a) = 0.
            let mean: f64 = batch.iter().map(|s| s[0]).sum::<f64>() / 3.0;
            let xstar = (2.0 * mean + 2.0 * reg * -0.2) / (2.0 + 2.0 * reg);
            let p = RegularizedProblem::new(&loss, &batch, anchor, reg, line(-1.0, 1.0)).unwrap();
            let tol = 1e-9;
            let sol = solve(&p, tol, DEFAULT_MAX_ITERS).unwrap();
            let fstar = p.value(&Vector::from_element(1, xstar));
            assert!(p.value(&sol.x) - fstar <= tol + 1e-15);
        }
    }

    #[test]
    fn best_objective_never_increases() {
        let batch = pts(&[0.1, 0.15, 0.5, 0.55, 0.9]);
        let p = RegularizedProblem::new(
            &Absolute,
            &batch,
            Vector::from_element(1, -0.8),
            0.05,
            line(-1.0, 1.0),
        )
        .unwrap();
        let sol = solve(&p, 1e-12, DEFAULT_MAX_ITERS).unwrap();
        for w in sol.best_objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn exhausted_iterations_report_best_iterate() {
        let batch = pts(&[0.1, 0.15, 0.5, 0.55, 0.9]);
        let p = RegularizedProblem::new(
            &Absolute,
            &batch,
            Vector::from_element(1, -0.8),
            0.05,
            line(-1.0, 1.0),
        )
        .unwrap();
        match solve(&p, 1e-300, 3) {
            Err(Error::Convergence { best, iterations, .. }) => {
                assert_eq!(best.len(), 1);
                assert_eq!(iterations, 3);
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn anchor_outside_domain_rejected() {
        let batch = pts(&[0.0]);
        let r = RegularizedProblem::new(
            &Absolute,
            &batch,
            Vector::from_element(1, 3.0),
            1.0,
            line(-1.0, 1.0),
        );
        assert!(r.is_err());
        let p = RegularizedProblem::new(&Absolute, &batch, Vector::zeros(1), 1.0, line(-1.0, 1.0))
            .unwrap();
        assert!(solve(&p, 0.0, 10).is_err());
    }

    #[test]
    fn identical_replacement_has_zero_sensitivity() {
        let loss = Squared { lipschitz: 4.0 };
        let same = Dataset::new(pts(&[0.1; 4])).unwrap();
        let template = ProblemTemplate {
            loss: &loss,
            anchor: Vector::zeros(1),
            reg_weight: 2.0,
            domain: line(-1.0, 1.0),
        };
        let mut rng = RngStream::new(3, 0);
        let s = empirical_sensitivity(
            &template,
            &same,
            |_| Vector::from_element(1, 0.1),
            20,
            1e-14,
            DEFAULT_MAX_ITERS,
            &mut rng,
        )
        .unwrap();
        assert_eq!(s, 0.0);
    }
}
