use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{InstanceSpec, ProblemInstance};
use crate::domain::Domain;
use crate::error::{invalid, Result};
use crate::loss::{FiniteExpectation, Kink, LossOracle};
use crate::rng::RngStream;
use crate::types::{GrowthSpec, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SharpParams {
    pub kappa: f64,
    pub bias_delta: f64,
    /// +1 or -1.
    pub sign: f64,
    pub kappa_lower: Option<f64>,
}

impl Default for SharpParams {
    fn default() -> Self {
        Self {
            kappa: 1.5,
            bias_delta: 0.25,
            sign: 1.0,
            kappa_lower: None,
        }
    }
}

/// For `s = +1`: `a - x` left of `a` and `(x - a)^kappa` right of it.
/// `F(x; -1) = F(-x; +1)`.
#[derive(Debug, Clone)]
pub struct SharpLoss {
    pub kappa: f64,
    pub a: f64,
}

impl SharpLoss {
    fn profile(&self, y: f64) -> f64 {
        if y <= self.a {
            self.a - y
        } else {
            (y - self.a).powf(self.kappa)
        }
    }

    fn slope(&self, y: f64) -> f64 {
        if y < self.a {
            -1.0
        } else if y > self.a {
            self.kappa * (y - self.a).powf(self.kappa - 1.0)
        } else {
            0.0
        }
    }
}

impl LossOracle for SharpLoss {
    fn value(&self, x: &Vector, s: &Vector) -> f64 {
        self.profile(s[0] * x[0])
    }

    fn subgrad(&self, x: &Vector, s: &Vector) -> Vector {
        Vector::from_element(1, s[0] * self.slope(s[0] * x[0]))
    }

    fn lipschitz(&self) -> f64 {
        2.0
    }

    fn point_dim(&self) -> usize {
        1
    }

    fn sample_dim(&self) -> usize {
        1
    }

    fn kink(&self, s: &Vector) -> Option<Kink> {
        Some(Kink {
            at: Vector::from_element(1, s[0] * self.a),
            center: Vector::from_element(1, -0.5 * s[0]),
            radius: 0.5,
        })
    }
}

pub fn make_sharp_growth_1d(p: &SharpParams) -> Result<ProblemInstance> {
    if !(p.kappa > 1.0 && p.kappa <= 2.0) {
        return invalid(format!("kappa must lie in (1, 2], got {}", p.kappa));
    }
    if !(p.bias_delta > 0.0 && p.bias_delta <= 0.5) {
        return invalid(format!("bias_delta must lie in (0, 1/2], got {}", p.bias_delta));
    }
    if p.sign != 1.0 && p.sign != -1.0 {
        return invalid("sign must be +1 or -1");
    }
    let growth = GrowthSpec::new(1.0, p.kappa, p.kappa_lower.unwrap_or(p.kappa))?;
    let a = 0.5 * p.bias_delta.powf(1.0 / (p.kappa - 1.0));
    let plus = (1.0 + p.bias_delta * p.sign) / 2.0;
    let loss = SharpLoss { kappa: p.kappa, a };
    let population = FiniteExpectation::new(
        loss.clone(),
        vec![
            (plus, Vector::from_element(1, 1.0)),
            (1.0 - plus, Vector::from_element(1, -1.0)),
        ],
    );
    let sampler = Arc::new(move |rng: &mut RngStream| {
        Vector::from_element(1, if rng.uniform() < plus { 1.0 } else { -1.0 })
    });
    Ok(ProblemInstance {
        spec: InstanceSpec::SharpGrowth(p.clone()),
        loss: Arc::new(loss),
        sampler,
        population: Arc::new(population),
        domain: Domain::centered(1, 1.0)?,
        growth: Some(growth),
        xstar: Vector::from_element(1, a * p.sign),
        fstar: a * (1.0 - p.bias_delta),
        description: format!(
            "sharp_growth(kappa={}, delta={}, sign={})",
            p.kappa, p.bias_delta, p.sign
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::oracle::refined_min_1d;

    fn inst(kappa: f64, delta: f64, sign: f64) -> ProblemInstance {
        make_sharp_growth_1d(&SharpParams {
            kappa,
            bias_delta: delta,
            sign,
            kappa_lower: None,
        })
        .unwrap()
    }

    #[test]
    fn reference_values() {
        let i = inst(1.5, 0.25, 1.0);
        assert_eq!(i.xstar[0], 0.03125);
        assert_eq!(i.fstar, 0.0234375);
        let m = inst(1.5, 0.25, -1.0);
        assert_eq!(m.xstar[0], -0.03125);
        assert_eq!(m.fstar, 0.0234375);
        assert!((i.population.value(&i.xstar) - i.fstar).abs() < 1e-15);
    }

    #[test]
    fn matches_grid_minimizer() {
        for (k, d, s) in [(1.5, 0.25, 1.0), (2.0, 0.5, -1.0), (1.2, 0.4, 1.0)] {
            let i = inst(k, d, s);
            let (x, v) = refined_min_1d(i.population.as_ref(), -1.0, 1.0, 1e-3, 1e-6);
            assert!((x - i.xstar[0]).abs() < 1e-4, "kappa {k}: {x} vs {}", i.xstar[0]);
            assert!((v - i.fstar).abs() < 1e-6);
        }
    }

    #[test]
    fn kink_subdifferential_contains_zero_at_minimizer() {
        let i = inst(1.5, 0.25, 1.0);
        assert_eq!(i.population.subgrad(&i.xstar)[0], 0.0);
        let left = Vector::from_element(1, 0.0);
        assert!((i.population.subgrad(&left)[0] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        let bad = |kappa, bias_delta| {
            make_sharp_growth_1d(&SharpParams {
                kappa,
                bias_delta,
                ..Default::default()
            })
            .is_err()
        };
        assert!(bad(1.5, 0.0));
        assert!(bad(1.5, 0.6));
        assert!(bad(2.5, 0.25));
        assert!(bad(1.0, 0.25));
    }

    #[test]
    fn growth_holds_on_many_probes() {
        let i = inst(1.5, 0.25, 1.0);
        let (g, k) = i.certify(10_000, &mut RngStream::new(3, 0)).unwrap();
        assert!(g.max_violation <= 0.0, "{}", g.max_violation);
        assert!(k.max_violation <= 0.0);
    }
}
