//! Euclidean-ball constraint sets and their intersections.

use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::types::{check_finite, Vector};

/// Dykstra stops once a full sweep moves the iterate less than this.
pub const DYKSTRA_TOL: f64 = 1e-10;
pub const DYKSTRA_MAX_SWEEPS: usize = 200;

/// A closed ball `{x : |x - center| <= radius}`, optionally intersected with
/// an enclosing parent domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    center: Vector,
    radius: f64,
    parent: Option<Arc<Domain>>,
}

impl Domain {
    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        check_finite(&center, "domain center")?;
        if !(radius.is_finite() && radius >= 0.0) {
            return invalid(format!("radius must be finite and nonnegative, got {radius}"));
        }
        Ok(Self {
            center,
            radius,
            parent: None,
        })
    }

    /// Centered ball in `dim` dimensions.
    pub fn centered(dim: usize, radius: f64) -> Result<Self> {
        Self::ball(Vector::zeros(dim), radius)
    }

    /// `{x in parent : |x - center| <= radius}`.
    pub fn within(parent: &Domain, center: Vector, radius: f64) -> Result<Self> {
        if center.len() != parent.dim() {
            return invalid("child ball dimension differs from parent domain");
        }
        let gap = (&center - parent.project(&center)?).norm();
        if gap > radius * (1.0 + 1e-12) {
            return invalid(format!(
                "child ball lies {gap:e} from the parent domain, beyond its radius {radius:e}"
            ));
        }
        let mut d = Self::ball(center, radius)?;
        d.parent = Some(Arc::new(parent.clone()));
        Ok(d)
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn parent(&self) -> Option<&Domain> {
        self.parent.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Balls of the chain, innermost first.
    pub fn balls(&self) -> Vec<(&Vector, f64)> {
        let mut out = vec![(&self.center, self.radius)];
        let mut cur = self.parent.as_deref();
        while let Some(d) = cur {
            out.push((&d.center, d.radius));
            cur = d.parent.as_deref();
        }
        out
    }

    /// Upper bound on the diameter: twice the smallest radius in the chain.
    pub fn diameter(&self) -> f64 {
        2.0 * self
            .balls()
            .iter()
            .map(|(_, r)| *r)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.balls()
            .iter()
            .all(|(c, r)| (x - *c).norm() <= r + tol)
    }

    /// Euclidean projection onto the domain.
    ///
    /// A single ball is projected radially. For intersections, the projection
    /// onto one ball is returned if it already lies in the others; otherwise
    /// Dykstra's alternating projection runs until a sweep moves the iterate
    /// by less than [`DYKSTRA_TOL`] or [`DYKSTRA_MAX_SWEEPS`] are spent.
    pub fn project(&self, x: &Vector) -> Result<Vector> {
        check_finite(x, "projection input")?;
        if x.len() != self.dim() {
            return invalid(format!(
                "point has dimension {} but domain has dimension {}",
                x.len(),
                self.dim()
            ));
        }
        let balls = self.balls();
        if balls.iter().all(|(c, r)| (x - *c).norm() <= *r) {
            return Ok(x.clone());
        }
        if balls.len() == 1 {
            return Ok(project_ball(x, balls[0].0, balls[0].1));
        }
        for (c, r) in &balls {
            let p = project_ball(x, c, *r);
            let scale = 1e-12 * (1.0 + p.norm());
            if balls.iter().all(|(c2, r2)| (&p - *c2).norm() <= r2 + scale) {
                return Ok(p);
            }
        }
        Ok(dykstra(x, &balls))
    }
}

fn project_ball(x: &Vector, center: &Vector, radius: f64) -> Vector {
    let diff = x - center;
    let dist = diff.norm();
    if dist <= radius {
        x.clone()
    } else {
        center + diff * (radius / dist)
    }
}

fn dykstra(x: &Vector, balls: &[(&Vector, f64)]) -> Vector {
    let mut cur = x.clone();
    let mut increments = vec![Vector::zeros(x.len()); balls.len()];
    for _ in 0..DYKSTRA_MAX_SWEEPS {
        let start = cur.clone();
        for (inc, (c, r)) in increments.iter_mut().zip(balls) {
            let shifted = &cur + &*inc;
            let p = project_ball(&shifted, c, *r);
            *inc = shifted - &p;
            cur = p;
        }
        if (&cur - start).norm() < DYKSTRA_TOL {
            break;
        }
    }
    cur
}
