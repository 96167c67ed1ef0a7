use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{InstanceSpec, ProblemInstance};
use crate::domain::Domain;
use crate::error::{invalid, Result};
use crate::loss::{LossOracle, Objective};
use crate::rng::RngStream;
use crate::types::{GrowthSpec, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniformConvexParams {
    pub d: usize,
    pub kappa: f64,
    pub lambda: f64,
    pub lipschitz: f64,
    pub radius: f64,
    pub bias_delta: f64,
    /// Sign pattern `v in {-1, +1}^d`; all ones when absent.
    pub direction: Option<Vec<f64>>,
    pub kappa_lower: Option<f64>,
}

impl Default for UniformConvexParams {
    fn default() -> Self {
        Self {
            d: 1,
            kappa: 2.0,
            lambda: 1.0,
            lipschitz: 4.0,
            radius: 1.0,
            bias_delta: 0.1,
            direction: None,
            kappa_lower: None,
        }
    }
}

/// `F(x; s) = (sigma/kappa)|x|^kappa + (L/2)<x, s>` with
/// `sigma = lambda 2^{kappa-2}`.
#[derive(Debug, Clone)]
pub struct UniformConvexLoss {
    pub d: usize,
    pub sigma: f64,
    pub kappa: f64,
    pub lipschitz: f64,
}

impl UniformConvexLoss {
    fn power_grad(&self, x: &Vector) -> Vector {
        let r = x.norm();
        if r == 0.0 {
            Vector::zeros(x.len())
        } else {
            x * (self.sigma * r.powf(self.kappa - 2.0))
        }
    }
}

impl LossOracle for UniformConvexLoss {
    fn value(&self, x: &Vector, s: &Vector) -> f64 {
        self.sigma / self.kappa * x.norm().powf(self.kappa) + 0.5 * self.lipschitz * x.dot(s)
    }

    fn subgrad(&self, x: &Vector, s: &Vector) -> Vector {
        self.power_grad(x) + s * (0.5 * self.lipschitz)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn point_dim(&self) -> usize {
        self.d
    }

    fn sample_dim(&self) -> usize {
        self.d
    }
}

/// `(sigma/kappa)|x|^kappa + <u, x>`.
struct Population {
    loss: UniformConvexLoss,
    u: Vector,
}

impl Objective for Population {
    fn value(&self, x: &Vector) -> f64 {
        self.loss.sigma / self.loss.kappa * x.norm().powf(self.loss.kappa) + self.u.dot(x)
    }

    fn subgrad(&self, x: &Vector) -> Vector {
        self.loss.power_grad(x) + &self.u
    }

    fn dim(&self) -> usize {
        self.loss.d
    }
}

pub fn make_uniform_convex(p: &UniformConvexParams) -> Result<ProblemInstance> {
    if p.d == 0 {
        return invalid("dimension must be positive");
    }
    if !(p.kappa >= 2.0 && p.kappa.is_finite()) {
        return invalid(format!("kappa must be at least 2, got {}", p.kappa));
    }
    if !(p.lambda > 0.0 && p.lipschitz > 0.0 && p.radius > 0.0) {
        return invalid("lambda, L and R must be positive");
    }
    if !(0.0..=1.0).contains(&p.bias_delta) {
        return invalid(format!("bias_delta must lie in [0, 1], got {}", p.bias_delta));
    }
    let lhs = 2f64.powf(p.kappa - 1.0) * p.lambda * p.radius.powf(p.kappa - 1.0);
    if lhs > p.lipschitz {
        return invalid(format!(
            "parameter window violated: 2^(kappa-1) lambda R^(kappa-1) = {lhs} exceeds L = {}",
            p.lipschitz
        ));
    }
    let v = match &p.direction {
        Some(v) => {
            if v.len() != p.d || v.iter().any(|&x| x != 1.0 && x != -1.0) {
                return invalid("direction must have d entries, each +1 or -1");
            }
            Vector::from_vec(v.clone())
        }
        None => Vector::from_element(p.d, 1.0),
    };
    let growth = GrowthSpec::new(p.lambda, p.kappa, p.kappa_lower.unwrap_or(p.kappa))?;

    let k = p.kappa;
    let sigma = p.lambda * 2f64.powf(k - 2.0);
    let u = &v * (p.lipschitz * p.bias_delta / (2.0 * p.d as f64));
    let un = u.norm();
    let (xstar, fstar) = if un == 0.0 {
        (Vector::zeros(p.d), 0.0)
    } else {
        let scale = (un / sigma).powf(1.0 / (k - 1.0));
        let kstar = k / (k - 1.0);
        let fstar = -(1.0 / kstar) * (1.0 / sigma).powf(1.0 / (k - 1.0)) * un.powf(kstar);
        (-&u * (scale / un), fstar)
    };
    if xstar.norm() >= p.radius {
        return invalid(format!(
            "minimizer norm {} is not interior to the radius-{} ball; need |u| < sigma R^(kappa-1)",
            xstar.norm(),
            p.radius
        ));
    }

    let loss = UniformConvexLoss {
        d: p.d,
        sigma,
        kappa: k,
        lipschitz: p.lipschitz,
    };
    let population = Population {
        loss: loss.clone(),
        u,
    };
    let (d, plus) = (p.d, (1.0 + p.bias_delta) / 2.0);
    let sampler = Arc::new(move |rng: &mut RngStream| {
        let j = rng.random_range(0..d);
        let sign = if rng.uniform() < plus { 1.0 } else { -1.0 };
        let mut s = Vector::zeros(d);
        s[j] = sign * v[j];
        s
    });
    Ok(ProblemInstance {
        spec: InstanceSpec::UniformConvex(p.clone()),
        loss: Arc::new(loss),
        sampler,
        population: Arc::new(population),
        domain: Domain::centered(p.d, p.radius)?,
        growth: Some(growth),
        xstar,
        fstar,
        description: format!(
            "uniform_convex(d={}, kappa={}, lambda={}, L={}, R={}, delta={})",
            p.d, p.kappa, p.lambda, p.lipschitz, p.radius, p.bias_delta
        ),
    })
}

/// Minimizer of the sample mean: the linear term is `(L/2) mean(s)`, and the
/// optimal radius along its negative direction is clipped to the domain.
pub(super) fn empirical_minimizer(p: &UniformConvexParams, samples: &[Vector], domain: &Domain) -> Vector {
    let mut u = Vector::zeros(p.d);
    for s in samples {
        u += s;
    }
    u *= 0.5 * p.lipschitz / samples.len() as f64;
    let un = u.norm();
    if un == 0.0 {
        return domain.center().clone();
    }
    let sigma = p.lambda * 2f64.powf(p.kappa - 2.0);
    let r = (un / sigma).powf(1.0 / (p.kappa - 1.0)).min(p.radius);
    -u * (r / un)
}
