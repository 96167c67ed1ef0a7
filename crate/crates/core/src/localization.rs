//! Localization-based private solver.
//!
//! The data is split into `k = ceil(log2 n)` disjoint batches of `n0 = n / k`
//! samples. Phase `i` solves a regularized ERM on batch `i` over a trust
//! region of radius `2 L eta_i n0` around the previous iterate, with
//! `eta_i = 16^{-i} eta`, then perturbs the minimizer with Laplace (pure DP)
//! or Gaussian (approximate DP) noise scaled to `eta_i`. Each sample is used
//! in exactly one phase.

use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::erm::{self, RegularizedProblem};
use crate::error::{invalid, Result};
use crate::loss::LossOracle;
use crate::mechanisms::{gaussian_sigma, sample_noise, NoiseKind, NoiseSpec};
use crate::rng::RngStream;
use crate::types::{Dataset, PrivacyParams, Vector};

/// Which Gaussian noise scale to use when `delta > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianCalibration {
    /// `sigma_i = 4 L eta_i sqrt(ln(1/delta)) / epsilon`.
    #[default]
    AsWritten,
    /// Generic Gaussian-mechanism scale `2 (4 L eta_i) ln(2/delta) / epsilon`.
    StrictLemma,
}

/// Knobs shared by the localization and epoch solvers that do not change the
/// algorithm's definition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseOptions {
    pub calibration: GaussianCalibration,
    /// Scales every noise draw. `1.0` is the calibrated mechanism; `0.5`
    /// halves the noise (a deliberately broken mechanism for audits); `0.0`
    /// turns noise off.
    pub multiplier: f64,
    pub max_solver_iters: usize,
}

impl Default for NoiseOptions {
    fn default() -> Self {
        Self {
            calibration: GaussianCalibration::AsWritten,
            multiplier: 1.0,
            max_solver_iters: erm::DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationConfig {
    pub eta: f64,
    pub beta: f64,
    pub privacy: PrivacyParams,
    pub k: usize,
    pub n0: usize,
    pub noise: NoiseOptions,
}

/// `ceil(log2 n)`, at least 1.
pub fn phase_count(n: usize) -> usize {
    if n <= 2 {
        1
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

impl LocalizationConfig {
    pub fn new(n: usize, eta: f64, beta: f64, privacy: PrivacyParams) -> Result<Self> {
        if n == 0 {
            return invalid("dataset size must be positive");
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return invalid(format!("step size must be positive, got {eta}"));
        }
        let k = phase_count(n);
        Ok(Self {
            eta,
            beta,
            privacy,
            k,
            n0: n / k,
            noise: NoiseOptions::default(),
        })
    }

    pub fn with_noise(mut self, noise: NoiseOptions) -> Self {
        self.noise = noise;
        self
    }

    pub fn phase_eta(&self, i: usize) -> f64 {
        self.eta * 16f64.powi(-(i as i32))
    }

    /// Trust-region radius of phase `i` (1-based).
    pub fn phase_radius(&self, lipschitz: f64, i: usize) -> f64 {
        2.0 * lipschitz * self.phase_eta(i) * self.n0 as f64
    }

    /// Calibrated noise scale of phase `i`, before the multiplier.
    pub fn phase_sigma(&self, lipschitz: f64, dim: usize, i: usize) -> Result<f64> {
        let eta_i = self.phase_eta(i);
        let eps = self.privacy.epsilon;
        if self.privacy.is_pure() {
            return Ok(4.0 * lipschitz * eta_i * (dim as f64).sqrt() / eps);
        }
        let delta = self.privacy.delta;
        match self.noise.calibration {
            GaussianCalibration::AsWritten => {
                Ok(4.0 * lipschitz * eta_i * (1.0 / delta).ln().sqrt() / eps)
            }
            GaussianCalibration::StrictLemma => gaussian_sigma(4.0 * lipschitz * eta_i, eps, delta),
        }
    }
}

/// The high-probability guarantee wants `beta <= 1/(n+d)`; the step-size
/// formula itself only needs `ln(1/beta) > 0`.
fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return invalid(format!("beta must lie in (0, 1), got {beta}"));
    }
    Ok(())
}

fn check_positive(vals: &[(&str, f64)]) -> Result<()> {
    for (name, v) in vals {
        if !(*v > 0.0 && v.is_finite()) {
            return invalid(format!("{name} must be positive and finite, got {v}"));
        }
    }
    Ok(())
}

/// `(R/L) min(1/sqrt(n ln(1/beta)), epsilon / (d ln(1/beta)))`.
pub fn default_eta_pure(r: f64, l: f64, n: usize, beta: f64, epsilon: f64, d: usize) -> Result<f64> {
    check_positive(&[("R", r), ("L", l), ("epsilon", epsilon)])?;
    check_beta(beta)?;
    let lb = (1.0 / beta).ln();
    let stat = 1.0 / (n as f64 * lb).sqrt();
    let private = epsilon / (d as f64 * lb);
    Ok(r / l * stat.min(private))
}

/// `(R/L) min(1/sqrt(n ln(1/beta)), epsilon / (sqrt(d ln(1/delta)) ln(1/beta)))`.
pub fn default_eta_approx(
    r: f64,
    l: f64,
    n: usize,
    beta: f64,
    epsilon: f64,
    delta: f64,
    d: usize,
) -> Result<f64> {
    check_positive(&[("R", r), ("L", l), ("epsilon", epsilon)])?;
    check_beta(beta)?;
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0, 1), got {delta}"));
    }
    let lb = (1.0 / beta).ln();
    let stat = 1.0 / (n as f64 * lb).sqrt();
    let private = epsilon / ((d as f64 * (1.0 / delta).ln()).sqrt() * lb);
    Ok(r / l * stat.min(private))
}

#[derive(Debug, Clone)]
pub struct PhaseRecord {
    pub eta: f64,
    pub anchor: Vector,
    pub radius: f64,
    /// Certified minimizer of the phase objective.
    pub xhat: Vector,
    pub gap_bound: f64,
    pub sigma: f64,
    /// Noised iterate after projection onto the domain.
    pub x: Vector,
}

#[derive(Debug, Clone)]
pub struct LocalizationRun {
    pub x: Vector,
    pub phases: Vec<PhaseRecord>,
}

pub fn run(
    loss: &dyn LossOracle,
    data: &Dataset,
    domain: &Domain,
    x0: &Vector,
    cfg: &LocalizationConfig,
    rng: &mut RngStream,
) -> Result<Vector> {
    run_traced(loss, data, domain, x0, cfg, rng).map(|r| r.x)
}

pub fn run_traced(
    loss: &dyn LossOracle,
    data: &Dataset,
    domain: &Domain,
    x0: &Vector,
    cfg: &LocalizationConfig,
    rng: &mut RngStream,
) -> Result<LocalizationRun> {
    if cfg.n0 == 0 || data.len() < cfg.k * cfg.n0 {
        return invalid(format!(
            "need k * n0 = {} samples, dataset has {}",
            cfg.k * cfg.n0,
            data.len()
        ));
    }
    if !domain.contains(x0, 1e-9) {
        return invalid("initial point must lie in the domain");
    }
    let l = loss.lipschitz();
    let dim = x0.len();
    let mut x = x0.clone();
    let mut phases = Vec::with_capacity(cfg.k);
    for i in 1..=cfg.k {
        let range = (i - 1) * cfg.n0..i * cfg.n0;
        let eta_i = cfg.phase_eta(i);
        let radius = cfg.phase_radius(l, i);
        let region = Domain::within(domain, x.clone(), radius)?;
        let batch = &data.samples()[range];
        let problem = RegularizedProblem::new(
            loss,
            batch,
            x.clone(),
            1.0 / (eta_i * cfg.n0 as f64),
            region,
        )?;
        let sigma = cfg.phase_sigma(l, dim, i)?;
        let target = (4.0 * l * eta_i).min(sigma) / 100.0;
        let target = target
            .max(1e-10 * l * eta_i)
            .max(1e3 * f64::EPSILON * (1.0 + x.norm()));
        let sol = erm::solve(
            &problem,
            problem.gap_for_distance(target),
            cfg.noise.max_solver_iters,
        )?;

        let scaled = sigma * cfg.noise.multiplier;
        let noised = if scaled > 0.0 {
            let kind = if cfg.privacy.is_pure() {
                NoiseKind::LaplaceIid
            } else {
                NoiseKind::GaussianIso
            };
            &sol.x + sample_noise(&NoiseSpec::new(kind, scaled, dim)?, rng)
        } else {
            sol.x.clone()
        };
        let next = domain.project(&noised)?;
        phases.push(PhaseRecord {
            eta: eta_i,
            anchor: x,
            radius,
            xhat: sol.x,
            gap_bound: sol.gap_bound,
            sigma: scaled,
            x: next.clone(),
        });
        x = next;
    }
    Ok(LocalizationRun { x, phases })
}
