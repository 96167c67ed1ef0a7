//! End-to-end privacy falsification of the one-dimensional pipelines.

use std::path::Path;

use dpsco::epoch::{self, EpochConfig};
use dpsco::instances::{InstanceSpec, ProblemInstance, PureConvexParams};
use dpsco::inv_sensitivity::{self, GridDensity};
use dpsco::localization::{self, default_eta_pure, LocalizationConfig, NoiseOptions};
use dpsco::mechanisms::{empirical_dp_test, DpTestReport};
use dpsco::rng::derive_seed;
use dpsco::{Dataset, PrivacyParams, RngStream, Vector};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Localization,
    EpochGrowth,
    InvSensitivity,
}

impl Pipeline {
    pub const ALL: [Pipeline; 3] = [Self::Localization, Self::EpochGrowth, Self::InvSensitivity];

    pub fn name(self) -> &'static str {
        match self {
            Self::Localization => "localization",
            Self::EpochGrowth => "epoch_growth",
            Self::InvSensitivity => "inv_sensitivity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighbors {
    /// Pure-convex instance only: half the samples at each end of the
    /// support, alternating; the neighbour moves sample 1 to the midpoint.
    /// The two empirical gradients then differ on half the domain.
    BoundarySplit,
    /// Both datasets drawn from the instance; sample 0 is redrawn.
    Drawn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub master_seed: u64,
    pub n: usize,
    pub trials: usize,
    pub bins: usize,
    /// Declared budgets; `inf` entries are reported as skipped.
    pub epsilon: Vec<f64>,
    /// Noise scale multiplier. `0.5` is the sabotage mode; the grid mechanism
    /// multiplies its exponent by the reciprocal.
    pub noise_multiplier: f64,
    pub pipelines: Vec<Pipeline>,
    pub beta: f64,
    pub kappa_lower: f64,
    pub rho: f64,
    /// `rho / 4` when absent.
    pub grid_spacing: Option<f64>,
    pub neighbors: Neighbors,
    pub instance: InstanceSpec,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            n: 32,
            trials: 100_000,
            bins: 10,
            epsilon: vec![0.5, 1.0, 2.0],
            noise_multiplier: 1.0,
            pipelines: Pipeline::ALL.to_vec(),
            beta: 0.1,
            kappa_lower: 2.0,
            rho: 0.05,
            grid_spacing: None,
            neighbors: Neighbors::BoundarySplit,
            instance: InstanceSpec::PureConvex(PureConvexParams::default()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRow {
    pub pipeline: Pipeline,
    pub epsilon: f64,
    pub noise_multiplier: f64,
    pub report: Option<DpTestReport>,
    /// Set when the row was skipped.
    pub notice: Option<String>,
}

impl AuditRow {
    pub fn pass(&self) -> Option<bool> {
        self.report.as_ref().map(|r| r.pass)
    }
}

impl AuditConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.n < 2 || self.n > 64 {
            return bad("audit n must lie in [2, 64]");
        }
        if self.trials == 0 || self.bins < 2 {
            return bad("audit needs trials >= 1 and bins >= 2");
        }
        if !(self.noise_multiplier > 0.0 && self.noise_multiplier.is_finite()) {
            return bad("noise_multiplier must be positive");
        }
        if self.epsilon.iter().any(|e| !(*e > 0.0)) {
            return bad("epsilon values must be positive");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.kappa_lower > 1.0 && self.rho > 0.0) {
            return bad("kappa_lower must exceed 1 and rho must be positive");
        }
        if crate::config::instance_dim(&self.instance) != 1 {
            return bad("the audit runs one-dimensional pipelines only");
        }
        Ok(())
    }

    pub fn grid_spacing(&self) -> f64 {
        self.grid_spacing.unwrap_or(self.rho / 4.0)
    }
}

/// The neighbouring pair the audit compares.
pub fn neighbours(cfg: &AuditConfig, inst: &ProblemInstance) -> Result<(Dataset, Dataset)> {
    match cfg.neighbors {
        Neighbors::BoundarySplit => {
            let InstanceSpec::PureConvex(p) = &inst.spec else {
                return Err(HarnessError::Config(
                    "boundary_split neighbours need the pure_convex instance".into(),
                ));
            };
            let s: Vec<Vector> = (0..cfg.n)
                .map(|i| Vector::from_element(1, if i % 2 == 0 { -p.spread } else { p.spread }))
                .collect();
            let s = Dataset::new(s)?;
            let t = s.with_replaced(1, Vector::from_element(1, 0.0))?;
            Ok((s, t))
        }
        Neighbors::Drawn => {
            let mut rng = RngStream::new(derive_seed(cfg.master_seed, 1), 0);
            let s = inst.draw(cfg.n, &mut rng)?;
            let t = s.with_replaced(0, (inst.sampler)(&mut rng))?;
            Ok((s, t))
        }
    }
}

fn scalar(x: &Vector) -> f64 {
    x[0]
}

/// Runs one pipeline at one budget.
pub fn audit_one(
    cfg: &AuditConfig,
    inst: &ProblemInstance,
    pair: &(Dataset, Dataset),
    pipeline: Pipeline,
    epsilon: f64,
) -> Result<AuditRow> {
    let mut row = AuditRow {
        pipeline,
        epsilon,
        noise_multiplier: cfg.noise_multiplier,
        report: None,
        notice: None,
    };
    if epsilon.is_infinite() {
        row.notice = Some("skipped: epsilon = inf makes no privacy claim to falsify".into());
        return Ok(row);
    }
    let privacy = PrivacyParams::pure(epsilon)?;
    let noise = NoiseOptions {
        multiplier: cfg.noise_multiplier,
        ..NoiseOptions::default()
    };
    let (s, t) = pair;
    let domain = &inst.domain;
    let loss = inst.loss.as_ref();
    let l = inst.lipschitz();
    let x0 = domain.center().clone();
    let rng = RngStream::new(derive_seed(cfg.master_seed, 2), pipeline as u64);
    let report: DpTestReport = match pipeline {
        Pipeline::Localization => {
            let eta = default_eta_pure(domain.diameter(), l, cfg.n, cfg.beta, epsilon, 1)?;
            let lc = LocalizationConfig::new(cfg.n, eta, cfg.beta, privacy)?.with_noise(noise);
            let mech = |data: &Dataset, r: &mut RngStream| {
                localization::run(loss, data, domain, &x0, &lc, r).map(|x| scalar(&x))
            };
            empirical_dp_test(mech, s, t, epsilon, cfg.trials, cfg.bins, &rng)?
        }
        Pipeline::EpochGrowth => {
            let ec = EpochConfig::new(cfg.n, 1, l, domain, cfg.kappa_lower, cfg.beta, privacy)?
                .with_noise(noise);
            let mech = |data: &Dataset, r: &mut RngStream| {
                epoch::run(loss, data, domain, &x0, &ec, r).map(|x| scalar(&x))
            };
            empirical_dp_test(mech, s, t, epsilon, cfg.trials, cfg.bins, &rng)?
        }
        Pipeline::InvSensitivity => {
            let h = cfg.grid_spacing();
            let scale = 1.0 / cfg.noise_multiplier;
            let build = |data: &Dataset| -> Result<GridDensity> {
                Ok(inv_sensitivity::build_density_scaled(
                    loss, data, domain, cfg.rho, epsilon, h, scale,
                )?)
            };
            let (ds, dt) = (build(s)?, build(t)?);
            let mech = |data: &Dataset, r: &mut RngStream| {
                let density = if data == s { &ds } else { &dt };
                Ok(scalar(&inv_sensitivity::sample(density, r)))
            };
            empirical_dp_test(mech, s, t, epsilon, cfg.trials, cfg.bins, &rng)?
        }
    };
    row.report = Some(report);
    Ok(row)
}

/// Every configured pipeline at every configured budget.
pub fn privacy_audit(cfg: &AuditConfig) -> Result<Vec<AuditRow>> {
    cfg.validate()?;
    let inst = cfg.instance.build()?;
    let pair = neighbours(cfg, &inst)?;
    let mut rows = Vec::new();
    for &p in &cfg.pipelines {
        for &e in &cfg.epsilon {
            rows.push(audit_one(cfg, &inst, &pair, p, e)?);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_split_pair_differs_in_one_place() {
        let cfg = AuditConfig::default();
        let inst = cfg.instance.build().unwrap();
        let (s, t) = neighbours(&cfg, &inst).unwrap();
        assert_eq!(s.len(), 32);
        let diff: Vec<usize> = (0..32).filter(|&i| s.get(i) != t.get(i)).collect();
        assert_eq!(diff, vec![1]);
        assert_eq!(t.get(1).unwrap()[0], 0.0);
    }

    #[test]
    fn infinite_epsilon_is_skipped() {
        let cfg = AuditConfig {
            epsilon: vec![f64::INFINITY],
            pipelines: vec![Pipeline::InvSensitivity],
            trials: 10,
            ..Default::default()
        };
        let rows = privacy_audit(&cfg).unwrap();
        assert!(rows[0].report.is_none());
        assert!(rows[0].notice.as_ref().unwrap().contains("skipped"));
        assert_eq!(rows[0].pass(), None);
    }

    #[test]
    fn rejects_multidimensional_instances() {
        let text = "[instance]\nid = \"pure_convex\"\nd = 2\n";
        assert!(AuditConfig::parse(text).is_err());
        assert!(AuditConfig::parse("n = 100\n").is_err());
        assert!(AuditConfig::parse("epsilon = [1.0, inf]\n").is_ok());
    }

    #[test]
    fn sabotaged_grid_is_caught_quickly() {
        let base = AuditConfig {
            epsilon: vec![1.0],
            pipelines: vec![Pipeline::InvSensitivity],
            trials: 20_000,
            ..Default::default()
        };
        let honest = privacy_audit(&base).unwrap();
        assert_eq!(honest[0].pass(), Some(true));
        let broken = privacy_audit(&AuditConfig {
            noise_multiplier: 0.5,
            ..base
        })
        .unwrap();
        assert_eq!(broken[0].pass(), Some(false));
    }
}
