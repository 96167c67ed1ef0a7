//! Problem generators with known population optima and growth certificates.

mod pure_convex;
mod regression;
mod sharp;
mod uniform_convex;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::Result;
use crate::growth::{verify_growth, verify_kl, ProbeReport};
use crate::loss::{EmpiricalObjective, LossOracle, Objective};
use crate::rng::RngStream;
use crate::types::{Dataset, GrowthSpec, Vector};

pub use pure_convex::{make_pure_convex, PureConvexLoss, PureConvexParams};
pub use regression::{make_knorm_regression, sphere_moment, KNormLoss, KNormParams};
pub use sharp::{make_sharp_growth_1d, SharpLoss, SharpParams};
pub use uniform_convex::{make_uniform_convex, UniformConvexLoss, UniformConvexParams};

pub type Sampler = Arc<dyn Fn(&mut RngStream) -> Vector + Send + Sync>;

/// Instance descriptor: an id plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum InstanceSpec {
    UniformConvex(UniformConvexParams),
    SharpGrowth(SharpParams),
    KnormRegression(KNormParams),
    PureConvex(PureConvexParams),
}

impl InstanceSpec {
    pub const IDS: [&'static str; 4] =
        ["uniform_convex", "sharp_growth", "knorm_regression", "pure_convex"];

    /// Default parameters for an instance id.
    pub fn default_for(id: &str) -> Option<Self> {
        Some(match id {
            "uniform_convex" => Self::UniformConvex(UniformConvexParams::default()),
            "sharp_growth" => Self::SharpGrowth(SharpParams::default()),
            "knorm_regression" => Self::KnormRegression(KNormParams::default()),
            "pure_convex" => Self::PureConvex(PureConvexParams::default()),
            _ => return None,
        })
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::UniformConvex(_) => "uniform_convex",
            Self::SharpGrowth(_) => "sharp_growth",
            Self::KnormRegression(_) => "knorm_regression",
            Self::PureConvex(_) => "pure_convex",
        }
    }

    pub fn build(&self) -> Result<ProblemInstance> {
        match self {
            Self::UniformConvex(p) => make_uniform_convex(p),
            Self::SharpGrowth(p) => make_sharp_growth_1d(p),
            Self::KnormRegression(p) => make_knorm_regression(p),
            Self::PureConvex(p) => make_pure_convex(p),
        }
    }
}

#[derive(Clone)]
pub struct ProblemInstance {
    pub spec: InstanceSpec,
    pub loss: Arc<dyn LossOracle>,
    pub sampler: Sampler,
    pub population: Arc<dyn Objective>,
    pub domain: Domain,
    /// `None` for instances without a growth certificate.
    pub growth: Option<GrowthSpec>,
    pub xstar: Vector,
    pub fstar: f64,
    pub description: String,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("description", &self.description)
            .field("growth", &self.growth)
            .field("xstar", &self.xstar.as_slice())
            .field("fstar", &self.fstar)
            .finish()
    }
}

impl ProblemInstance {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn lipschitz(&self) -> f64 {
        self.loss.lipschitz()
    }

    pub fn draw(&self, n: usize, rng: &mut RngStream) -> Result<Dataset> {
        Dataset::new((0..n).map(|_| (self.sampler)(rng)).collect())
    }

    pub fn excess_population(&self, x: &Vector) -> f64 {
        self.population.value(x) - self.fstar
    }

    /// Minimizer and minimum of the empirical risk over the domain.
    pub fn empirical_optimum(&self, data: &Dataset) -> Result<(Vector, f64)> {
        let emp = EmpiricalObjective::new(self.loss.as_ref(), data);
        let x = match &self.spec {
            InstanceSpec::UniformConvex(p) => {
                uniform_convex::empirical_minimizer(p, data.samples(), &self.domain)
            }
            InstanceSpec::SharpGrowth(_) => {
                let a = self.xstar[0].abs();
                let (lo, hi) = (Vector::from_element(1, -a), Vector::from_element(1, a));
                if emp.value(&lo) < emp.value(&hi) {
                    lo
                } else {
                    hi
                }
            }
            InstanceSpec::KnormRegression(_) => self.xstar.clone(),
            InstanceSpec::PureConvex(_) => {
                let mut atoms: Vec<(f64, Vector)> = Vec::new();
                for s in data.samples() {
                    match atoms.iter_mut().find(|(_, a)| a == s) {
                        Some(slot) => slot.0 += 1.0,
                        None => atoms.push((1.0, s.clone())),
                    }
                }
                pure_convex::geometric_median(&atoms)
            }
        };
        let v = emp.value(&x);
        Ok((x, v))
    }

    /// Growth and KL probe reports, or `None` without a certificate.
    pub fn certify(&self, probes: usize, rng: &mut RngStream) -> Option<(ProbeReport, ProbeReport)> {
        let g = self.growth?;
        let pop = self.population.as_ref();
        let growth = verify_growth(pop, &self.xstar, self.fstar, &g, probes, &self.domain, rng);
        let kl = verify_kl(pop, &self.xstar, self.fstar, &g, probes, &self.domain, rng);
        Some((growth, kl))
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::*;

    /// Brute-force minimizer of `f` over a 1-D interval with spacing `h`.
    pub fn grid_min_1d(f: &dyn Objective, lo: f64, hi: f64, h: f64) -> (f64, f64) {
        let steps = ((hi - lo) / h).round() as usize;
        let mut best = (lo, f64::INFINITY);
        for i in 0..=steps {
            let x = lo + i as f64 * h;
            let v = f.value(&Vector::from_element(1, x));
            if v < best.1 {
                best = (x, v);
            }
        }
        best
    }

    /// Coarse-to-fine grid minimization in 1-D: a scan at spacing `coarse`
    /// followed by a scan at spacing `fine` around the coarse winner.
    pub fn refined_min_1d(f: &dyn Objective, lo: f64, hi: f64, coarse: f64, fine: f64) -> (f64, f64) {
        let (x0, _) = grid_min_1d(f, lo, hi, coarse);
        grid_min_1d(f, (x0 - 2.0 * coarse).max(lo), (x0 + 2.0 * coarse).min(hi), fine)
    }

    /// Central finite-difference gradient.
    pub fn fd_grad(f: &dyn Objective, x: &Vector, h: f64) -> Vector {
        Vector::from_fn(x.len(), |i, _| {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += h;
            b[i] -= h;
            (f.value(&a) - f.value(&b)) / (2.0 * h)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_default_instance_builds_and_certifies() {
        for id in InstanceSpec::IDS {
            let inst = InstanceSpec::default_for(id).unwrap().build().unwrap();
            assert_eq!(inst.spec.id(), id);
            assert!(inst.domain.contains(&inst.xstar, 1e-12));
            let mut rng = RngStream::new(31, 0);
            if let Some((g, k)) = inst.certify(2_000, &mut rng) {
                assert!(g.max_violation <= 1e-7, "{id} growth {}", g.max_violation);
                assert!(k.max_violation <= 1e-7, "{id} kl {}", k.max_violation);
            }
        }
        assert!(InstanceSpec::default_for("nope").is_none());
    }

    #[test]
    fn empirical_optimum_beats_probes() {
        for id in InstanceSpec::IDS {
            let inst = InstanceSpec::default_for(id).unwrap().build().unwrap();
            let mut rng = RngStream::new(12, 0);
            let data = inst.draw(40, &mut rng).unwrap();
            let (x, v) = inst.empirical_optimum(&data).unwrap();
            assert!(inst.domain.contains(&x, 1e-9));
            let emp = EmpiricalObjective::new(inst.loss.as_ref(), &data);
            for _ in 0..2_000 {
                let d = inst.dim();
                let y = inst
                    .domain
                    .project(&Vector::from_fn(d, |_, _| 2.0 * rng.uniform() - 1.0))
                    .unwrap();
                assert!(emp.value(&y) >= v - 1e-9, "{id}: {} < {v}", emp.value(&y));
            }
        }
    }

    #[test]
    fn draws_are_reproducible() {
        let inst = InstanceSpec::default_for("uniform_convex").unwrap().build().unwrap();
        let a = inst.draw(50, &mut RngStream::new(8, 3)).unwrap();
        let b = inst.draw(50, &mut RngStream::new(8, 3)).unwrap();
        let c = inst.draw(50, &mut RngStream::new(8, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
