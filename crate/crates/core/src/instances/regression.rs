use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{InstanceSpec, ProblemInstance};
use crate::domain::Domain;
use crate::error::{invalid, Result};
use crate::growth::probe_points;
use crate::loss::{LossOracle, Objective};
use crate::rng::RngStream;
use crate::types::{GrowthSpec, Vector};

const FIT_PROBES: usize = 10_000;
const FIT_SEED: u64 = 0x6b6e_6f72_6d00;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KNormParams {
    pub d: usize,
    pub kappa: u32,
    pub radius: f64,
    /// Norm of the design vectors.
    pub scale: f64,
    pub x_true: Option<Vec<f64>>,
    pub kappa_lower: Option<f64>,
}

impl Default for KNormParams {
    fn default() -> Self {
        Self {
            d: 2,
            kappa: 4,
            radius: 1.0,
            scale: 1.0,
            x_true: None,
            kappa_lower: None,
        }
    }
}

/// `F(x; (a, b)) = |b - <a, x>|^kappa`; samples are `(a_1, ..., a_d, b)`.
#[derive(Debug, Clone)]
pub struct KNormLoss {
    pub d: usize,
    pub kappa: f64,
    pub lipschitz: f64,
}

impl KNormLoss {
    fn residual(&self, x: &Vector, s: &Vector) -> f64 {
        s[self.d] - s.rows(0, self.d).dot(x)
    }
}

impl LossOracle for KNormLoss {
    fn value(&self, x: &Vector, s: &Vector) -> f64 {
        self.residual(x, s).abs().powf(self.kappa)
    }

    fn subgrad(&self, x: &Vector, s: &Vector) -> Vector {
        let r = self.residual(x, s);
        let c = -self.kappa * r.abs().powf(self.kappa - 1.0) * r.signum();
        s.rows(0, self.d).into_owned() * c
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn point_dim(&self) -> usize {
        self.d
    }

    fn sample_dim(&self) -> usize {
        self.d + 1
    }
}

/// `E |u_1|^kappa` for `u` uniform on the unit sphere in `R^d`.
pub fn sphere_moment(d: usize, kappa: f64) -> f64 {
    let d = d as f64;
    (ln_gamma(d / 2.0) + ln_gamma((kappa + 1.0) / 2.0)
        - 0.5 * std::f64::consts::PI.ln()
        - ln_gamma((d + kappa) / 2.0))
    .exp()
}

/// `c |x - x_true|^kappa` with `c = E|u_1|^kappa scale^kappa`.
struct Population {
    coef: f64,
    kappa: f64,
    x_true: Vector,
}

impl Objective for Population {
    fn value(&self, x: &Vector) -> f64 {
        self.coef * (x - &self.x_true).norm().powf(self.kappa)
    }

    fn subgrad(&self, x: &Vector) -> Vector {
        let e = x - &self.x_true;
        let r = e.norm();
        if r == 0.0 {
            e
        } else {
            e * (self.coef * self.kappa * r.powf(self.kappa - 2.0))
        }
    }

    fn dim(&self) -> usize {
        self.x_true.len()
    }
}

pub fn make_knorm_regression(p: &KNormParams) -> Result<ProblemInstance> {
    if p.d == 0 {
        return invalid("dimension must be positive");
    }
    if p.kappa < 2 {
        return invalid(format!("kappa must be an integer of at least 2, got {}", p.kappa));
    }
    if !(p.radius > 0.0 && p.scale > 0.0) {
        return invalid("radius and scale must be positive");
    }
    let x_true = match &p.x_true {
        Some(v) if v.len() == p.d => Vector::from_vec(v.clone()),
        Some(_) => return invalid("x_true must have d entries"),
        None => Vector::from_fn(p.d, |i, _| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * 0.4 * p.radius / (p.d as f64).sqrt()
        }),
    };
    if x_true.norm() >= p.radius {
        return invalid("x_true must be interior to the domain");
    }
    let k = p.kappa as f64;
    let lipschitz = k * p.scale.powf(k) * (x_true.norm() + p.radius).powf(k - 1.0);
    let loss = KNormLoss {
        d: p.d,
        kappa: k,
        lipschitz,
    };
    let population = Population {
        coef: sphere_moment(p.d, k) * p.scale.powf(k),
        kappa: k,
        x_true: x_true.clone(),
    };
    let domain = Domain::centered(p.d, p.radius)?;

    let mut rng = RngStream::new(FIT_SEED, p.d as u64);
    let lambda = probe_points(&x_true, &domain, FIT_PROBES, true, &mut rng)
        .iter()
        .filter_map(|x| {
            let r = (x - &x_true).norm();
            (r > 0.0).then(|| k * population.value(x) / r.powf(k))
        })
        .fold(f64::INFINITY, f64::min)
        * (1.0 - 1e-9);
    let growth = GrowthSpec::new(lambda, k, p.kappa_lower.unwrap_or(k))?;

    let (d, scale, xt) = (p.d, p.scale, x_true.clone());
    let sampler = Arc::new(move |rng: &mut RngStream| {
        let g = Vector::from_fn(d, |_, _| StandardNormal.sample(rng));
        let a = g.normalize() * scale;
        let b = a.dot(&xt);
        let mut s = Vector::zeros(d + 1);
        s.rows_mut(0, d).copy_from(&a);
        s[d] = b;
        s
    });
    Ok(ProblemInstance {
        spec: InstanceSpec::KnormRegression(p.clone()),
        loss: Arc::new(loss),
        sampler,
        population: Arc::new(population),
        domain,
        growth: Some(growth),
        xstar: x_true,
        fstar: 0.0,
        description: format!(
            "knorm_regression(d={}, kappa={}, R={}, scale={}, fitted lambda={lambda:.6e})",
            p.d, p.kappa, p.radius, p.scale
        ),
    })
}
