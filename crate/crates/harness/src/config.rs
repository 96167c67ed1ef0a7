//! Experiment configuration files.
//!
//! A config is a TOML document with top-level keys, an `[instance]` table,
//! an optional `[options]` table and a `[sweep]` table. See the README for
//! the full grammar.

use std::path::{Path, PathBuf};

use dpsco::instances::{InstanceSpec, ProblemInstance};
use dpsco::localization::GaussianCalibration;
use dpsco::erm::DEFAULT_MAX_ITERS;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Localization,
    EpochGrowth,
    InvSensitivity,
    ErmOracle,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Localization => "localization",
            Self::EpochGrowth => "epoch_growth",
            Self::InvSensitivity => "inv_sensitivity",
            Self::ErmOracle => "erm_oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmOptions {
    /// Starting point; the domain center when absent.
    pub x0: Option<Vec<f64>>,
    /// Localization step size; the default formula when absent.
    pub eta: Option<f64>,
    /// Inverse-sensitivity smoothing radius; derived from the growth
    /// certificate when absent.
    pub rho: Option<f64>,
    /// Grid spacing; `rho / 4` when absent.
    pub grid_spacing: Option<f64>,
    pub noise_multiplier: f64,
    pub gaussian_calibration: GaussianCalibration,
    pub max_solver_iters: usize,
}

impl Default for AlgorithmOptions {
    fn default() -> Self {
        Self {
            x0: None,
            eta: None,
            rho: None,
            grid_spacing: None,
            noise_multiplier: 1.0,
            gaussian_calibration: GaussianCalibration::AsWritten,
            max_solver_iters: DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub n: Vec<usize>,
    /// Overrides the instance dimension; empty keeps it.
    #[serde(default)]
    pub d: Vec<usize>,
    #[serde(default = "default_epsilon")]
    pub epsilon: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: Vec<f64>,
    /// Empty keeps the instance's own lower estimate.
    #[serde(default)]
    pub kappa_lower: Vec<f64>,
}

fn default_epsilon() -> Vec<f64> {
    vec![1.0]
}

fn default_delta() -> Vec<f64> {
    vec![0.0]
}

fn default_beta() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub algorithm: Algorithm,
    pub seeds: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub master_seed: u64,
    /// CSV path; the JSON summary goes next to it with a `.json` extension.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Fill the `wall_ms` column. Off by default so reruns are byte-identical.
    #[serde(default)]
    pub record_timing: bool,
    pub instance: InstanceSpec,
    #[serde(default)]
    pub options: AlgorithmOptions,
    pub sweep: Sweep,
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub kappa_lower: Option<f64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.seeds == 0 {
            return bad("seeds must be at least 1".into());
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        let s = &self.sweep;
        if s.n.is_empty() {
            return bad("sweep.n must list at least one sample size".into());
        }
        if s.n.contains(&0) || s.d.contains(&0) {
            return bad("sample sizes and dimensions must be positive".into());
        }
        if s.epsilon.is_empty() || s.delta.is_empty() {
            return bad("sweep.epsilon and sweep.delta must be non-empty".into());
        }
        for &e in &s.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return bad(format!("epsilon must be finite and positive, got {e}"));
            }
        }
        for &d in &s.delta {
            if !(0.0..1.0).contains(&d) {
                return bad(format!("delta must lie in [0, 1), got {d}"));
            }
        }
        let o = &self.options;
        if !(o.noise_multiplier >= 0.0 && o.noise_multiplier.is_finite()) {
            return bad("noise_multiplier must be non-negative".into());
        }
        for (name, v) in [("eta", o.eta), ("rho", o.rho), ("grid_spacing", o.grid_spacing)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        let dims = self.dims();
        for &d in &dims {
            let inst = self.instance_for(d)?;
            if let Some(x0) = &o.x0 {
                if x0.len() != d {
                    return bad(format!("x0 has {} entries, dimension is {d}", x0.len()));
                }
                let x = dpsco::Vector::from_vec(x0.clone());
                if !inst.domain.contains(&x, 1e-9) {
                    return bad("x0 must lie in the domain".into());
                }
            }
            for &kl in &s.kappa_lower {
                if let Some(g) = inst.growth {
                    g.with_kappa_lower(kl)?;
                } else if !(kl > 1.0) {
                    return bad(format!("kappa_lower must exceed 1, got {kl}"));
                }
            }
            if self.algorithm == Algorithm::EpochGrowth
                && s.kappa_lower.is_empty()
                && inst.growth.is_none()
            {
                return bad("epoch_growth on an instance without growth needs sweep.kappa_lower".into());
            }
            if self.algorithm == Algorithm::InvSensitivity && o.rho.is_none() && inst.growth.is_none() {
                return bad("inv_sensitivity on an instance without growth needs options.rho".into());
            }
        }
        Ok(())
    }

    fn dims(&self) -> Vec<usize> {
        if self.sweep.d.is_empty() {
            vec![instance_dim(&self.instance)]
        } else {
            self.sweep.d.clone()
        }
    }

    /// The instance with its dimension set to `d`.
    pub fn instance_for(&self, d: usize) -> Result<ProblemInstance> {
        Ok(with_dim(&self.instance, d)?.build()?)
    }

    /// Grid cells in row order: `n` outermost, then `d`, `epsilon`, `delta`
    /// and `kappa_lower`.
    pub fn cells(&self) -> Vec<Cell> {
        let s = &self.sweep;
        let kls: Vec<Option<f64>> = if s.kappa_lower.is_empty() {
            vec![None]
        } else {
            s.kappa_lower.iter().copied().map(Some).collect()
        };
        let mut out = Vec::new();
        for &n in &s.n {
            for &d in &self.dims() {
                for &epsilon in &s.epsilon {
                    for &delta in &s.delta {
                        for &kappa_lower in &kls {
                            out.push(Cell {
                                n,
                                d,
                                epsilon,
                                delta,
                                kappa_lower,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form, with the
    /// output path and timing flag left out.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output = None;
        canon.record_timing = false;
        let json = serde_json::to_string(&canon).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn instance_dim(spec: &InstanceSpec) -> usize {
    match spec {
        InstanceSpec::UniformConvex(p) => p.d,
        InstanceSpec::SharpGrowth(_) => 1,
        InstanceSpec::KnormRegression(p) => p.d,
        InstanceSpec::PureConvex(p) => p.d,
    }
}

pub fn with_dim(spec: &InstanceSpec, d: usize) -> Result<InstanceSpec> {
    let mut out = spec.clone();
    match &mut out {
        InstanceSpec::UniformConvex(p) => {
            if p.d != d && p.direction.is_some() {
                return Err(HarnessError::Config(
                    "cannot sweep d with an explicit direction".into(),
                ));
            }
            p.d = d;
        }
        InstanceSpec::SharpGrowth(_) => {
            if d != 1 {
                return Err(HarnessError::Config("sharp_growth is one-dimensional".into()));
            }
        }
        InstanceSpec::KnormRegression(p) => {
            if p.d != d && p.x_true.is_some() {
                return Err(HarnessError::Config("cannot sweep d with an explicit x_true".into()));
            }
            p.d = d;
        }
        InstanceSpec::PureConvex(p) => p.d = d,
    }
    Ok(out)
}
