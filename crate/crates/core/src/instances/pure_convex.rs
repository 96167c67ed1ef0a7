use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{InstanceSpec, ProblemInstance};
use crate::domain::Domain;
use crate::error::{invalid, Result};
use crate::loss::{FiniteExpectation, Kink, LossOracle};
use crate::rng::RngStream;
use crate::types::Vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PureConvexParams {
    pub d: usize,
    pub lipschitz: f64,
    pub radius: f64,
    /// Probability of the sample at the origin.
    pub atom: f64,
    /// Distance of the remaining samples `±spread e_j` from the origin.
    pub spread: f64,
}

impl Default for PureConvexParams {
    fn default() -> Self {
        Self {
            d: 1,
            lipschitz: 1.0,
            radius: 1.0,
            atom: 0.0,
            spread: 1.0,
        }
    }
}

/// `F(x; s) = L |x - s|`.
#[derive(Debug, Clone)]
pub struct PureConvexLoss {
    pub d: usize,
    pub lipschitz: f64,
}

impl LossOracle for PureConvexLoss {
    fn value(&self, x: &Vector, s: &Vector) -> f64 {
        self.lipschitz * (x - s).norm()
    }

    fn subgrad(&self, x: &Vector, s: &Vector) -> Vector {
        let e = x - s;
        let r = e.norm();
        if r == 0.0 {
            e
        } else {
            e * (self.lipschitz / r)
        }
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

    fn kink(&self, s: &Vector) -> Option<Kink> {
        Some(Kink {
            at: s.clone(),
            center: Vector::zeros(self.d),
            radius: self.lipschitz,
        })
    }
}

/// Symmetric absolute-deviation instance with no growth certificate. The
/// population minimizer is the origin (unique when `atom > 0`, and the
/// canonical choice of the flat minimizing set otherwise).
pub fn make_pure_convex(p: &PureConvexParams) -> Result<ProblemInstance> {
    if p.d == 0 {
        return invalid("dimension must be positive");
    }
    if !(p.lipschitz > 0.0 && p.radius > 0.0 && p.spread > 0.0) {
        return invalid("L, R and spread must be positive");
    }
    if p.spread > p.radius {
        return invalid("spread must not exceed the domain radius");
    }
    if !(0.0..1.0).contains(&p.atom) {
        return invalid(format!("atom must lie in [0, 1), got {}", p.atom));
    }
    let d = p.d;
    let side = (1.0 - p.atom) / (2.0 * d as f64);
    let mut atoms = Vec::with_capacity(2 * d + 1);
    if p.atom > 0.0 {
        atoms.push((p.atom, Vector::zeros(d)));
    }
    for j in 0..d {
        for sign in [1.0, -1.0] {
            let mut s = Vector::zeros(d);
            s[j] = sign * p.spread;
            atoms.push((side, s));
        }
    }
    let loss = PureConvexLoss {
        d,
        lipschitz: p.lipschitz,
    };
    let population = FiniteExpectation::new(loss.clone(), atoms);
    let (atom, spread) = (p.atom, p.spread);
    let sampler = Arc::new(move |rng: &mut RngStream| {
        let mut s = Vector::zeros(d);
        if rng.uniform() >= atom {
            let j = rng.random_range(0..d);
            s[j] = if rng.uniform() < 0.5 { spread } else { -spread };
        }
        s
    });
    Ok(ProblemInstance {
        spec: InstanceSpec::PureConvex(p.clone()),
        loss: Arc::new(loss),
        sampler,
        population: Arc::new(population),
        domain: Domain::centered(d, p.radius)?,
        growth: None,
        xstar: Vector::zeros(d),
        fstar: p.lipschitz * (1.0 - p.atom) * p.spread,
        description: format!(
            "pure_convex(d={}, L={}, R={}, atom={}, spread={})",
            p.d, p.lipschitz, p.radius, p.atom, p.spread
        ),
    })
}

/// Weighted geometric median `argmin sum_j w_j |x - a_j|` by Weiszfeld's
/// iteration, after checking whether one of the atoms is already optimal.
/// Atoms must be distinct.
pub(super) fn geometric_median(atoms: &[(f64, Vector)]) -> Vector {
    let d = atoms[0].1.len();
    for (j, (wj, aj)) in atoms.iter().enumerate() {
        let mut pull = Vector::zeros(d);
        for (k, (wk, ak)) in atoms.iter().enumerate() {
            if k != j {
                let e = ak - aj;
                pull += &e * (wk / e.norm());
            }
        }
        if pull.norm() <= *wj {
            return aj.clone();
        }
    }
    let total: f64 = atoms.iter().map(|(w, _)| w).sum();
    let mut x = atoms.iter().fold(Vector::zeros(d), |acc, (w, a)| acc + a * (w / total));
    for _ in 0..10_000 {
        let mut num = Vector::zeros(d);
        let mut den = 0.0;
        for (w, a) in atoms {
            let r = (&x - a).norm().max(1e-300);
            num += a * (w / r);
            den += w / r;
        }
        let next = num / den;
        let step = (&next - &x).norm();
        x = next;
        if step <= 1e-15 * (1.0 + x.norm()) {
            break;
        }
    }
    x
}
