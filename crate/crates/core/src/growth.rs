//! Probe-based verification of the growth condition and the KL-type
//! inequality it implies.

use rand_distr::{Distribution, StandardNormal};

use crate::domain::Domain;
use crate::loss::Objective;
use crate::rng::RngStream;
use crate::types::{GrowthSpec, Vector};

/// Largest violation found over the probes (nonpositive means the inequality
/// held everywhere it was checked) and where it occurred.
#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub max_violation: f64,
    pub worst: Vector,
    pub probes: usize,
}

/// Largest `(lambda/kappa)|x - x*|^kappa - (f(x) - f*)` over `probes` points.
pub fn verify_growth(
    f: &dyn Objective,
    xstar: &Vector,
    fstar: f64,
    spec: &GrowthSpec,
    probes: usize,
    domain: &Domain,
    rng: &mut RngStream,
) -> ProbeReport {
    let points = probe_points(xstar, domain, probes, true, rng);
    worst_of(points, |x| {
        let r = (x - xstar).norm();
        spec.lambda / spec.kappa * r.powf(spec.kappa) - (f.value(x) - fstar)
    })
}

/// Largest `(f(x) - f*) - (e / lambda^{1/(kappa-1)}) |g(x)|^{kappa/(kappa-1)}`
/// over `probes` interior points, with `g` the minimum-norm subgradient.
pub fn verify_kl(
    f: &dyn Objective,
    xstar: &Vector,
    fstar: f64,
    spec: &GrowthSpec,
    probes: usize,
    domain: &Domain,
    rng: &mut RngStream,
) -> ProbeReport {
    let k = spec.kappa;
    let coef = std::f64::consts::E / spec.lambda.powf(1.0 / (k - 1.0));
    let points = probe_points(xstar, domain, probes, false, rng);
    worst_of(points, |x| {
        let g = f.subgrad(x).norm();
        (f.value(x) - fstar) - coef * g.powf(k / (k - 1.0))
    })
}

fn worst_of(points: Vec<Vector>, violation: impl Fn(&Vector) -> f64) -> ProbeReport {
    let probes = points.len();
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst = points[0].clone();
    for x in points {
        let v = violation(&x);
        if v > max_violation {
            max_violation = v;
            worst = x;
        }
    }
    ProbeReport {
        max_violation,
        worst,
        probes,
    }
}

fn unit_direction(dim: usize, rng: &mut RngStream) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Mix of uniform points, boundary points (when `boundary`) and points
/// log-uniformly close to `xstar`, all inside `domain`. Always includes
/// `xstar` itself.
pub(crate) fn probe_points(
    xstar: &Vector,
    domain: &Domain,
    probes: usize,
    boundary: bool,
    rng: &mut RngStream,
) -> Vec<Vector> {
    let dim = xstar.len();
    let (center, radius) = (domain.center().clone(), domain.radius());
    let mut out = Vec::with_capacity(probes.max(1));
    out.push(xstar.clone());
    let mut i = 1;
    while out.len() < probes {
        let kind = i % 3;
        i += 1;
        let u = unit_direction(dim, rng);
        let x = match kind {
            0 => {
                let r = radius * rng.uniform().powf(1.0 / dim as f64);
                &center + u * r
            }
            1 if boundary => &center + u * radius,
            1 => {
                let r = radius * (1.0 - 1e-6) * rng.uniform();
                &center + u * r
            }
            _ => {
                let r = radius * 10f64.powf(-6.0 * rng.uniform());
                xstar + u * r
            }
        };
        if let Ok(p) = domain.project(&x) {
            out.push(p);
        }
    }
    out
}
