//! Epoch-based solver adapting to unknown growth.
//!
//! Given only a lower estimate `kappa_lower` of the growth exponent, the data
//! is split into `T = ceil(2 log2 n / (kappa_lower - 1))` blocks. Epoch `i`
//! runs the localization solver on block `i` over the ball of radius
//! `R0 / 2^i` around the current iterate (intersected with the domain) with
//! step size `eta0 / 2^i`.

use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{invalid, Result};
use crate::localization::{self, LocalizationConfig, LocalizationRun, NoiseOptions};
use crate::loss::LossOracle;
use crate::rng::RngStream;
use crate::types::{Dataset, PrivacyParams, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochConfig {
    pub kappa_lower: f64,
    /// Overall confidence; each epoch runs with `beta^2`.
    pub beta: f64,
    pub privacy: PrivacyParams,
    pub epochs: usize,
    pub n0: usize,
    pub r0: f64,
    pub eta0: f64,
    pub noise: NoiseOptions,
}

/// `ceil(2 log2(n) / (kappa_lower - 1))`, at least 1.
pub fn epoch_count(n: usize, kappa_lower: f64) -> usize {
    let t = (2.0 * (n as f64).log2() / (kappa_lower - 1.0)).ceil();
    (t as usize).max(1)
}

/// `(R0 / 2L) min(1/sqrt(n0 ln(n0) ln(1/beta)), private branch)` where the
/// private branch is `epsilon / (d ln(1/beta))` for pure DP and
/// `epsilon / (sqrt(d ln(1/delta)) ln(1/beta))` otherwise.
pub fn default_eta0(
    r0: f64,
    lipschitz: f64,
    n0: usize,
    beta: f64,
    privacy: &PrivacyParams,
    d: usize,
) -> Result<f64> {
    if n0 < 2 {
        return invalid(format!("per-epoch sample size must be at least 2, got {n0}"));
    }
    if !(r0 > 0.0 && lipschitz > 0.0) {
        return invalid("R0 and L must be positive");
    }
    if !(beta > 0.0 && beta < 1.0) {
        return invalid(format!("beta must lie in (0, 1), got {beta}"));
    }
    let lb = (1.0 / beta).ln();
    let n0f = n0 as f64;
    let stat = 1.0 / (n0f * n0f.ln() * lb).sqrt();
    let private = if privacy.is_pure() {
        privacy.epsilon / (d as f64 * lb)
    } else {
        if !(privacy.delta < 1.0) {
            return invalid("delta must be below 1");
        }
        privacy.epsilon / ((d as f64 * (1.0 / privacy.delta).ln()).sqrt() * lb)
    };
    Ok(r0 / (2.0 * lipschitz) * stat.min(private))
}

impl EpochConfig {
    pub fn new(
        n: usize,
        d: usize,
        lipschitz: f64,
        domain: &Domain,
        kappa_lower: f64,
        beta: f64,
        privacy: PrivacyParams,
    ) -> Result<Self> {
        if !(kappa_lower > 1.0) {
            return invalid(format!("kappa_lower must exceed 1, got {kappa_lower}"));
        }
        let epochs = epoch_count(n, kappa_lower);
        let n0 = n / epochs;
        if n0 < 2 {
            return invalid(format!(
                "n = {n} is too small for {epochs} epochs (need at least 2 samples per epoch)"
            ));
        }
        let r0 = domain.diameter();
        let eta0 = default_eta0(r0, lipschitz, n0, beta, &privacy, d)?;
        Ok(Self {
            kappa_lower,
            beta,
            privacy,
            epochs,
            n0,
            r0,
            eta0,
            noise: NoiseOptions::default(),
        })
    }

    pub fn with_noise(mut self, noise: NoiseOptions) -> Self {
        self.noise = noise;
        self
    }

    pub fn epoch_radius(&self, i: usize) -> f64 {
        self.r0 * 0.5f64.powi(i as i32)
    }

    pub fn epoch_eta(&self, i: usize) -> f64 {
        self.eta0 * 0.5f64.powi(i as i32)
    }
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    /// Center of the epoch's ball (the incoming iterate).
    pub center: Vector,
    pub radius: f64,
    pub eta: f64,
    pub inner: LocalizationRun,
}

impl EpochRecord {
    pub fn output(&self) -> &Vector {
        &self.inner.x
    }

    /// Whether `x` lies in this epoch's constraint set.
    pub fn contains(&self, domain: &Domain, x: &Vector, tol: f64) -> bool {
        domain.contains(x, tol) && (x - &self.center).norm() <= self.radius + tol
    }
}

#[derive(Debug, Clone)]
pub struct EpochRun {
    pub x: Vector,
    pub epochs: Vec<EpochRecord>,
}

impl EpochRun {
    /// Largest epoch index whose constraint set contains `xstar`, and whether
    /// every earlier epoch contained it too.
    pub fn last_containing(&self, domain: &Domain, xstar: &Vector) -> Option<(usize, bool)> {
        let inside: Vec<bool> = self
            .epochs
            .iter()
            .map(|e| e.contains(domain, xstar, 1e-12))
            .collect();
        let i0 = inside.iter().rposition(|&b| b)?;
        Some((i0, inside[..=i0].iter().all(|&b| b)))
    }
}

pub fn run(
    loss: &dyn LossOracle,
    data: &Dataset,
    domain: &Domain,
    x0: &Vector,
    cfg: &EpochConfig,
    rng: &mut RngStream,
) -> Result<Vector> {
    run_traced(loss, data, domain, x0, cfg, rng).map(|r| r.x)
}

pub fn run_traced(
    loss: &dyn LossOracle,
    data: &Dataset,
    domain: &Domain,
    x0: &Vector,
    cfg: &EpochConfig,
    rng: &mut RngStream,
) -> Result<EpochRun> {
    if data.len() < cfg.epochs * cfg.n0 {
        return invalid(format!(
            "need {} samples for {} epochs, dataset has {}",
            cfg.epochs * cfg.n0,
            cfg.epochs,
            data.len()
        ));
    }
    if !domain.contains(x0, 1e-9) {
        return invalid("initial point must lie in the domain");
    }
    let inner_beta = cfg.beta * cfg.beta;
    let mut x = x0.clone();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for i in 0..cfg.epochs {
        let radius = cfg.epoch_radius(i);
        let eta = cfg.epoch_eta(i);
        let region = Domain::within(domain, x.clone(), radius)?;
        let block = data.slice(i * cfg.n0..(i + 1) * cfg.n0)?;
        let inner_cfg =
            LocalizationConfig::new(cfg.n0, eta, inner_beta, cfg.privacy)?.with_noise(cfg.noise);
        let inner = localization::run_traced(loss, &block, &region, &x, &inner_cfg, rng)?;
        let next = inner.x.clone();
        epochs.push(EpochRecord {
            center: x,
            radius,
            eta,
            inner,
        });
        x = next;
    }
    Ok(EpochRun { x, epochs })
}
