//! Per-sample loss oracles and the objectives built from them.

use crate::types::{Dataset, Vector};

/// Subdifferential of a loss at its non-differentiable point, represented as
/// a Euclidean ball `{center + u : |u| <= radius}`.
///
/// Every loss shipped with the crate is non-differentiable at (at most) one
/// point per sample, and its subdifferential there is a ball (an interval in
/// one dimension).
#[derive(Debug, Clone, PartialEq)]
pub struct Kink {
    pub at: Vector,
    pub center: Vector,
    pub radius: f64,
}

/// A convex, `L`-Lipschitz per-sample loss `F(x; s)`.
pub trait LossOracle: Send + Sync {
    fn value(&self, x: &Vector, s: &Vector) -> f64;

    /// Minimum-norm element of the subdifferential of `F(.; s)` at `x`.
    fn subgrad(&self, x: &Vector, s: &Vector) -> Vector;

    /// Declared l2 Lipschitz constant.
    fn lipschitz(&self) -> f64;

    fn point_dim(&self) -> usize;

    fn sample_dim(&self) -> usize;

    /// The non-differentiable point of `F(.; s)` and its subdifferential, if
    /// the loss has one.
    fn kink(&self, _s: &Vector) -> Option<Kink> {
        None
    }
}

/// A deterministic objective `f: R^d -> R` (population or empirical risk).
pub trait Objective: Send + Sync {
    fn value(&self, x: &Vector) -> f64;

    /// Minimum-norm subgradient.
    fn subgrad(&self, x: &Vector) -> Vector;

    fn dim(&self) -> usize;
}

/// Minimum-norm point of the ball `{center + u : |u| <= radius}`.
pub fn min_norm_in_ball(center: &Vector, radius: f64) -> Vector {
    let n = center.norm();
    if n <= radius {
        Vector::zeros(center.len())
    } else {
        center * (1.0 - radius / n)
    }
}

/// Weighted sum of per-sample subdifferentials at `x`, as a ball.
///
/// Samples whose kink sits exactly at `x` contribute their kink ball;
/// every other sample contributes its (unique) gradient.
pub(crate) fn weighted_subdifferential<'a>(
    loss: &dyn LossOracle,
    x: &Vector,
    terms: impl Iterator<Item = (f64, &'a Vector, Option<&'a Kink>)>,
) -> (Vector, f64) {
    let mut center = Vector::zeros(x.len());
    let mut radius = 0.0;
    for (w, s, kink) in terms {
        match kink {
            Some(k) if &k.at == x => {
                center.axpy(w, &k.center, 1.0);
                radius += w * k.radius;
            }
            _ => center.axpy(w, &loss.subgrad(x, s), 1.0),
        }
    }
    (center, radius)
}

/// Empirical risk `f_S(x) = (1/n) sum_i F(x; s_i)`.
pub struct EmpiricalObjective<'a> {
    loss: &'a dyn LossOracle,
    data: &'a Dataset,
    kinks: Vec<Option<Kink>>,
}

impl<'a> EmpiricalObjective<'a> {
    pub fn new(loss: &'a dyn LossOracle, data: &'a Dataset) -> Self {
        let kinks = data.samples().iter().map(|s| loss.kink(s)).collect();
        Self { loss, data, kinks }
    }

    /// `(1/n) sum_i subgrad(x, s_i)`, the average of per-sample minimum-norm
    /// subgradients.
    pub fn mean_subgrad(&self, x: &Vector) -> Vector {
        let mut g = Vector::zeros(x.len());
        for s in self.data.samples() {
            g += self.loss.subgrad(x, s);
        }
        g / self.data.len() as f64
    }
}

impl Objective for EmpiricalObjective<'_> {
    fn value(&self, x: &Vector) -> f64 {
        let n = self.data.len() as f64;
        self.data
            .samples()
            .iter()
            .map(|s| self.loss.value(x, s))
            .sum::<f64>()
            / n
    }

    fn subgrad(&self, x: &Vector) -> Vector {
        let w = 1.0 / self.data.len() as f64;
        let (c, r) = weighted_subdifferential(
            self.loss,
            x,
            self.data
                .samples()
                .iter()
                .zip(&self.kinks)
                .map(|(s, k)| (w, s, k.as_ref())),
        );
        min_norm_in_ball(&c, r)
    }

    fn dim(&self) -> usize {
        self.loss.point_dim()
    }
}

/// Exact expectation `E F(x; s)` under a finitely supported distribution.
#[derive(Clone)]
pub struct FiniteExpectation<L> {
    loss: L,
    atoms: Vec<(f64, Vector)>,
    kinks: Vec<Option<Kink>>,
}

impl<L: LossOracle> FiniteExpectation<L> {
    /// `atoms` are `(probability, sample)` pairs; probabilities should sum to 1.
    pub fn new(loss: L, atoms: Vec<(f64, Vector)>) -> Self {
        let kinks = atoms.iter().map(|(_, s)| loss.kink(s)).collect();
        Self { loss, atoms, kinks }
    }

    pub fn atoms(&self) -> &[(f64, Vector)] {
        &self.atoms
    }
}

impl<L: LossOracle> Objective for FiniteExpectation<L> {
    fn value(&self, x: &Vector) -> f64 {
        self.atoms
            .iter()
            .map(|(p, s)| p * self.loss.value(x, s))
            .sum()
    }

    fn subgrad(&self, x: &Vector) -> Vector {
        let (c, r) = weighted_subdifferential(
            &self.loss,
            x,
            self.atoms
                .iter()
                .zip(&self.kinks)
                .map(|((p, s), k)| (*p, s, k.as_ref())),
        );
        min_norm_in_ball(&c, r)
    }

    fn dim(&self) -> usize {
        self.loss.point_dim()
    }
}
