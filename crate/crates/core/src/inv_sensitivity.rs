//! Smoothed gradient-based inverse sensitivity mechanism on a grid.
//!
//! The output density is `p(x) ∝ exp(-eps n G(x) / (2L))` where `G(x)` is the
//! smallest norm of the empirical (minimum-norm) subgradient within distance
//! `rho` of `x`. The domain is replaced by a lattice of spacing `h <= rho/4`,
//! which limits the mechanism to one and two dimensions.
//!
//! Window infimum: in 2-D it is the minimum over lattice points inside the
//! window. In 1-D the subgradient is monotone, so when it changes sign between
//! the outermost window points a stationary point lies in between and the
//! infimum is exactly 0; otherwise it is the smaller endpoint magnitude. Both
//! rules are infima of the subgradient norm over a data-independent set, so
//! replacing one sample moves `G` by at most `2L/n`.

use rayon::prelude::*;

use crate::domain::Domain;
use crate::error::{invalid, Error, Result};
use crate::loss::{EmpiricalObjective, LossOracle, Objective};
use crate::rng::RngStream;
use crate::types::{check_finite, Dataset, GrowthSpec, Vector};

pub const MAX_GRID_POINTS: usize = 10_000_000;

#[derive(Debug, Clone)]
pub struct GridDensity {
    pub points: Vec<Vector>,
    pub logweights: Vec<f64>,
    /// `ln sum_j exp(logweights_j)`.
    pub log_normalizer: f64,
    pub spacing: f64,
    cdf: Vec<f64>,
}

impl GridDensity {
    pub fn from_logweights(points: Vec<Vector>, logweights: Vec<f64>, spacing: f64) -> Result<Self> {
        if points.is_empty() || points.len() != logweights.len() {
            return invalid("need one log-weight per grid point and at least one point");
        }
        if logweights.iter().any(|w| !w.is_finite()) {
            return invalid("log-weights must be finite");
        }
        let m = logweights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logweights.iter().map(|w| (w - m).exp()).sum();
        let log_normalizer = m + total.ln();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = logweights
            .iter()
            .map(|w| {
                acc += (w - log_normalizer).exp();
                acc
            })
            .collect();
        let last = *cdf.last().unwrap();
        cdf.iter_mut().for_each(|c| *c /= last);
        Ok(Self {
            points,
            logweights,
            log_normalizer,
            spacing,
            cdf,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn probability(&self, j: usize) -> f64 {
        (self.logweights[j] - self.log_normalizer).exp()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.probability(j)).collect()
    }

    /// Total probability of grid points satisfying `pred`.
    pub fn mass_where(&self, pred: impl Fn(&Vector) -> bool) -> f64 {
        (0..self.len())
            .filter(|&j| pred(&self.points[j]))
            .map(|j| self.probability(j))
            .sum()
    }
}

/// Lattice of spacing at most `h` covering the domain. The spacing is shrunk
/// so the bounding box `center ± radius` is tiled exactly.
fn lattice(domain: &Domain, h: f64) -> Result<(Vec<Vector>, f64, usize)> {
    let d = domain.dim();
    if d == 0 || d > 2 {
        return Err(Error::Resource(format!(
            "grid mechanism supports dimension 1 or 2, got {d}"
        )));
    }
    let r = domain.radius();
    let cells = (2.0 * r / h).ceil();
    let side = cells + 1.0;
    if !side.is_finite() || side.powi(d as i32) > MAX_GRID_POINTS as f64 {
        return Err(Error::Resource(format!(
            "grid with spacing {h:e} in dimension {d} exceeds {MAX_GRID_POINTS} points; use a coarser spacing or a lower dimension"
        )));
    }
    let cells = cells as usize;
    let step = 2.0 * r / cells as f64;
    let c = domain.center();
    let coord = |i: usize, k: usize| c[k] - r + i as f64 * step;
    let mut pts = Vec::new();
    if d == 1 {
        for i in 0..=cells {
            pts.push(Vector::from_element(1, coord(i, 0)));
        }
    } else {
        for i in 0..=cells {
            for j in 0..=cells {
                pts.push(Vector::from_vec(vec![coord(i, 0), coord(j, 1)]));
            }
        }
    }
    pts.retain(|p| domain.contains(p, 1e-12 * r.max(1.0)));
    Ok((pts, step, cells + 1))
}

fn window_infimum_1d(signed: &[f64]) -> f64 {
    let (first, last) = (signed[0], signed[signed.len() - 1]);
    if first <= 0.0 && last >= 0.0 {
        0.0
    } else {
        signed.iter().fold(f64::INFINITY, |m, g| m.min(g.abs()))
    }
}

fn check_args(rho: f64, h: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return invalid(format!("rho must be positive, got {rho}"));
    }
    if !(h > 0.0 && h <= rho / 4.0 * (1.0 + 1e-12)) {
        return invalid(format!("grid spacing {h:e} must be positive and at most rho/4 = {:e}", rho / 4.0));
    }
    Ok(())
}

/// `G(x)` evaluated on the lattice `x + h k` for integer `k` with
/// `|h k| <= rho`, restricted to the domain.
pub fn smoothed_grad_norm(
    loss: &dyn LossOracle,
    data: &Dataset,
    x: &Vector,
    rho: f64,
    domain: &Domain,
    h: f64,
) -> Result<f64> {
    check_args(rho, h)?;
    check_finite(x, "x")?;
    if !domain.contains(x, 1e-9) {
        return invalid("x must lie in the domain");
    }
    let obj = EmpiricalObjective::new(loss, data);
    let m = (rho / h + 1e-9).floor() as i64;
    let tol = 1e-12 * domain.radius().max(1.0);
    match x.len() {
        1 => {
            let signed: Vec<f64> = (-m..=m)
                .map(|k| Vector::from_element(1, x[0] + k as f64 * h))
                .filter(|y| domain.contains(y, tol))
                .map(|y| obj.subgrad(&y)[0])
                .collect();
            Ok(window_infimum_1d(&signed))
        }
        2 => {
            let mut best = f64::INFINITY;
            for a in -m..=m {
                for b in -m..=m {
                    let off = Vector::from_vec(vec![a as f64 * h, b as f64 * h]);
                    if off.norm() > rho * (1.0 + 1e-12) {
                        continue;
                    }
                    let y = x + off;
                    if domain.contains(&y, tol) {
                        best = best.min(obj.subgrad(&y).norm());
                    }
                }
            }
            Ok(best)
        }
        d => Err(Error::Resource(format!(
            "grid mechanism supports dimension 1 or 2, got {d}"
        ))),
    }
}

/// Density with the honest exponent `-eps n G / (2L)`.
pub fn build_density(
    loss: &dyn LossOracle,
    data: &Dataset,
    domain: &Domain,
    rho: f64,
    epsilon: f64,
    h: f64,
) -> Result<GridDensity> {
    build_density_scaled(loss, data, domain, rho, epsilon, h, 1.0)
}

/// As [`build_density`] with the exponent multiplied by `exponent_scale`.
/// A scale above 1 under-randomizes the mechanism and is only meant for
/// auditing the privacy falsifier.
pub fn build_density_scaled(
    loss: &dyn LossOracle,
    data: &Dataset,
    domain: &Domain,
    rho: f64,
    epsilon: f64,
    h: f64,
    exponent_scale: f64,
) -> Result<GridDensity> {
    check_args(rho, h)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return invalid(format!("epsilon must be positive and finite, got {epsilon}"));
    }
    if !(exponent_scale >= 0.0 && exponent_scale.is_finite()) {
        return invalid("exponent scale must be finite and nonnegative");
    }
    let (points, step, side) = lattice(domain, h)?;
    let obj = EmpiricalObjective::new(loss, data);
    let grads: Vec<Vector> = points.par_iter().map(|p| obj.subgrad(p)).collect();
    let m = (rho / step + 1e-9).floor() as i64;

    let g_rho: Vec<f64> = if domain.dim() == 1 {
        let signed: Vec<f64> = grads.iter().map(|g| g[0]).collect();
        let n = signed.len() as i64;
        (0..n)
            .into_par_iter()
            .map(|j| {
                let lo = (j - m).max(0) as usize;
                let hi = (j + m).min(n - 1) as usize;
                window_infimum_1d(&signed[lo..=hi])
            })
            .collect()
    } else {
        // Index lattice points by their integer coordinates for window lookups.
        let r = domain.radius();
        let c = domain.center();
        let idx_of = |p: &Vector, k: usize| ((p[k] - (c[k] - r)) / step).round() as i64;
        let mut lookup = vec![usize::MAX; side * side];
        for (j, p) in points.iter().enumerate() {
            lookup[idx_of(p, 0) as usize * side + idx_of(p, 1) as usize] = j;
        }
        let norms: Vec<f64> = grads.iter().map(|g| g.norm()).collect();
        let offsets: Vec<(i64, i64)> = (-m..=m)
            .flat_map(|a| (-m..=m).map(move |b| (a, b)))
            .filter(|&(a, b)| ((a * a + b * b) as f64).sqrt() * step <= rho * (1.0 + 1e-12))
            .collect();
        points
            .par_iter()
            .map(|p| {
                let (i0, j0) = (idx_of(p, 0), idx_of(p, 1));
                let mut best = f64::INFINITY;
                for &(a, b) in &offsets {
                    let (i, j) = (i0 + a, j0 + b);
                    if i < 0 || j < 0 || i >= side as i64 || j >= side as i64 {
                        continue;
                    }
                    let q = lookup[i as usize * side + j as usize];
                    if q != usize::MAX {
                        best = best.min(norms[q]);
                    }
                }
                best
            })
            .collect()
    };

    let coef = exponent_scale * epsilon * data.len() as f64 / (2.0 * loss.lipschitz());
    let logweights = g_rho.iter().map(|g| -coef * g).collect();
    GridDensity::from_logweights(points, logweights, step)
}

/// Inverse-CDF draw of one grid point.
pub fn sample(density: &GridDensity, rng: &mut RngStream) -> Vector {
    let u = rng.uniform();
    let j = density.cdf.partition_point(|&c| c <= u).min(density.len() - 1);
    density.points[j].clone()
}

/// Build the density and draw once.
pub fn run(
    loss: &dyn LossOracle,
    data: &Dataset,
    domain: &Domain,
    rho: f64,
    epsilon: f64,
    h: f64,
    rng: &mut RngStream,
) -> Result<Vector> {
    let density = build_density(loss, data, domain, rho, epsilon, h)?;
    Ok(sample(&density, rng))
}

/// `(L/lambda)^{1/(k-1)} (d/(n eps))^{k/(k-1)}` with `k = kappa_lower`.
pub fn rho_for_growth(lipschitz: f64, growth: &GrowthSpec, d: usize, n: usize, epsilon: f64) -> f64 {
    let k = growth.kappa_lower;
    (lipschitz / growth.lambda).powf(1.0 / (k - 1.0))
        * (d as f64 / (n as f64 * epsilon)).powf(k / (k - 1.0))
}

/// High-probability excess empirical risk bound
/// `lambda^{-1/(k-1)} (2 L K / (n eps))^{k/(k-1)} + L rho` with
/// `K = ln(1/beta) + d ln(1 + R/rho)`.
#[allow(clippy::too_many_arguments)]
pub fn excess_risk_bound(
    lipschitz: f64,
    n: usize,
    epsilon: f64,
    beta: f64,
    d: usize,
    r: f64,
    rho: f64,
    growth: &GrowthSpec,
) -> f64 {
    let k = growth.kappa;
    let big_k = (1.0 / beta).ln() + d as f64 * (1.0 + r / rho).ln();
    growth.lambda.powf(-1.0 / (k - 1.0))
        * (2.0 * lipschitz * big_k / (n as f64 * epsilon)).powf(k / (k - 1.0))
        + lipschitz * rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::test_losses::Absolute;

    fn at(v: f64, n: usize) -> Dataset {
        Dataset::new(vec![Vector::from_element(1, v); n]).unwrap()
    }

    #[test]
    fn smoothed_norm_examples() {
        let dom = Domain::ball(Vector::from_element(1, 0.5), 0.5).unwrap();
        let data = at(0.5, 5);
        let rho = 0.01;
        let h = rho / 4.0;
        let g = |x: f64| {
            smoothed_grad_norm(&Absolute, &data, &Vector::from_element(1, x), rho, &dom, h).unwrap()
        };
        assert_eq!(g(0.5), 0.0);
        assert_eq!(g(0.5 + 2.0 * rho), 1.0);
        assert_eq!(g(0.5 + 0.7 * rho), 0.0);
        assert_eq!(g(0.5 - 0.3 * rho), 0.0);
    }

    #[test]
    fn two_point_frequencies() {
        let pts = vec![Vector::from_element(1, 0.0), Vector::from_element(1, 1.0)];
        let dens = GridDensity::from_logweights(pts, vec![3f64.ln(), 0.0], 1.0).unwrap();
        assert!((dens.probability(0) - 0.75).abs() < 1e-15);
        let mut rng = RngStream::new(11, 0);
        let hits = (0..100_000).filter(|_| sample(&dens, &mut rng)[0] == 0.0).count();
        let p = hits as f64 / 1e5;
        assert!((p - 0.75).abs() < 4.0 * (0.75f64 * 0.25 / 1e5).sqrt(), "{p}");
    }

    #[test]
    fn probabilities_sum_to_one() {
        let dom = Domain::ball(Vector::from_element(1, 0.5), 0.5).unwrap();
        let dens = build_density(&Absolute, &at(0.3, 7), &dom, 0.02, 1.0, 0.005).unwrap();
        let total: f64 = dens.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_field_is_flat_off_the_window() {
        // All samples at 2 > domain: f_S(x) = |x - 2| has slope -1 on [0, 1].
        let dom = Domain::ball(Vector::from_element(1, 0.5), 0.5).unwrap();
        let dens = build_density(&Absolute, &at(2.0, 4), &dom, 0.04, 1.0, 0.01).unwrap();
        let p = dens.probabilities();
        for j in 1..p.len() {
            assert!((p[j] / p[0] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn tiny_epsilon_is_nearly_uniform() {
        let dom = Domain::ball(Vector::from_element(1, 0.5), 0.5).unwrap();
        let dens = build_density(&Absolute, &at(0.3, 10), &dom, 0.02, 1e-12, 0.005).unwrap();
        let p = dens.probabilities();
        let (lo, hi) = p.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        assert!(hi / lo < 1.0 + 1e-9);
    }

    #[test]
    fn window_mass_matches_piecewise_integral() {
        // G = 0 within rho of c and 1 elsewhere, so the density is two-level.
        let c = 0.4;
        let (rho, t, eps, n) = (0.05, 0.1, 0.1, 20);
        let dom = Domain::ball(Vector::from_element(1, 0.5), 0.5).unwrap();
        let h = 1e-5;
        let dens = build_density(&Absolute, &at(c, n), &dom, rho, eps, h).unwrap();
        let mass = dens.mass_where(|p| (p[0] - c).abs() <= rho + t);
        let low = (-eps * n as f64 / 2.0).exp();
        let exact = (2.0 * rho + 2.0 * t * low) / (2.0 * rho + (1.0 - 2.0 * rho) * low);
        assert!((mass - exact).abs() < 1e-3, "{mass} vs {exact}");
    }

    #[test]
    fn symmetric_density_has_centered_mean() {
        let dom = Domain::ball(Vector::from_element(1, 0.5), 0.5).unwrap();
        let dens = build_density(&Absolute, &at(0.5, 3), &dom, 0.02, 1.0, 0.005).unwrap();
        let mut rng = RngStream::new(12, 0);
        let draws: Vec<f64> = (0..20_000).map(|_| sample(&dens, &mut rng)[0]).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.5).abs() < 4.0 * (var / draws.len() as f64).sqrt());
    }

    #[test]
    fn golden_draws() {
        let dom = Domain::ball(Vector::from_element(1, 0.5), 0.5).unwrap();
        let dens = build_density(&Absolute, &at(0.3, 10), &dom, 0.04, 1.0, 0.01).unwrap();
        let mut rng = RngStream::new(2024, 7);
        let draws: Vec<f64> = (0..4).map(|_| sample(&dens, &mut rng)[0]).collect();
        assert_eq!(draws, GOLDEN);
    }

    const GOLDEN: [f64; 4] = [0.27, 0.29, 0.28, 0.3];

    #[test]
    fn two_dimensional_grid() {
        let dom = Domain::centered(2, 1.0).unwrap();
        let data = Dataset::new(vec![Vector::from_vec(vec![0.2, -0.1]); 3]).unwrap();
        let loss = crate::loss::test_losses::Squared { lipschitz: 4.0 };
        let dens = build_density(&loss, &data, &dom, 0.2, 1.0, 0.05).unwrap();
        let total: f64 = dens.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let g = smoothed_grad_norm(&loss, &data, &dens.points[0], 0.2, &dom, dens.spacing).unwrap();
        assert!((dens.logweights[0] + 3.0 / 8.0 * g).abs() < 1e-9);
        // Mode is the lattice region within rho of the minimizer.
        let best = dens
            .logweights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(best > -1e-12);
    }

    #[test]
    fn oversized_grids_are_rejected() {
        let dom = Domain::centered(2, 1.0).unwrap();
        let data = Dataset::new(vec![Vector::zeros(2)]).unwrap();
        let loss = crate::loss::test_losses::Squared { lipschitz: 4.0 };
        let err = build_density(&loss, &data, &dom, 1e-4, 1.0, 2.5e-5).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
        assert!(build_density(&loss, &data, &dom, 0.2, 1.0, 0.05).is_ok());
        assert!(build_density(&loss, &data, &dom, 0.1, 1.0, 0.05).is_err());
    }

    #[test]
    fn risk_bound_reference() {
        let g = GrowthSpec::new(1.0, 2.0, 2.0).unwrap();
        let b = excess_risk_bound(1.0, 1000, 1.0, 0.1, 1, 1.0, 1e-3, &g);
        let k = 10f64.ln() + 1001f64.ln();
        assert!((k - 9.211).abs() < 1e-3);
        assert!((b - 1.3394e-3).abs() < 1e-7, "{b}");
        let mut prev = 0.0;
        for rho in [1e-2, 1e-4, 1e-6, 1e-8] {
            let v = excess_risk_bound(1.0, 1000, 1.0, 0.1, 1, 1.0, rho, &g) - rho;
            assert!(v > prev);
            prev = v;
        }
        let r1 = excess_risk_bound(1.0, 1000, 1.0, 0.1, 1, 1.0, 1e-3, &g) - 1e-3;
        let r2 = excess_risk_bound(1.0, 2000, 1.0, 0.1, 1, 1.0, 1e-3, &g) - 1e-3;
        assert!((r1 / r2 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rho_default() {
        let g = GrowthSpec::new(1.0, 2.0, 2.0).unwrap();
        assert!((rho_for_growth(2.0, &g, 1, 100, 1.0) - 2e-4).abs() < 1e-15);
    }
}
