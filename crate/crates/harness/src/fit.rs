//! Log-log rate fitting over one sweep axis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::stats::{median, ols};
use crate::sweep::TrialRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    N,
    Epsilon,
    D,
}

impl std::str::FromStr for Axis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(Self::N),
            "epsilon" | "eps" => Ok(Self::Epsilon),
            "d" => Ok(Self::D),
            _ => Err(HarnessError::Invalid(format!("unknown axis {s:?}; use n, epsilon or d"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
    /// `(axis value, median excess_pop)` per cell, sorted by axis value.
    pub points: Vec<(f64, f64)>,
}

fn axis_value(r: &TrialRecord, axis: Axis) -> f64 {
    match axis {
        Axis::N => r.n as f64,
        Axis::Epsilon => r.epsilon,
        Axis::D => r.d as f64,
    }
}

/// The grid coordinates other than `axis`.
fn others(r: &TrialRecord, axis: Axis) -> [u64; 4] {
    let mut v = [
        r.n as u64,
        r.d as u64,
        r.epsilon.to_bits(),
        r.delta.to_bits(),
    ];
    let skip = match axis {
        Axis::N => 0,
        Axis::D => 1,
        Axis::Epsilon => 2,
    };
    v[skip] = 0;
    v
}

/// OLS slope of `ln(median excess_pop)` against `ln(axis)`. Rows with an
/// error are skipped.
pub fn fit_rate(records: &[TrialRecord], axis: Axis) -> Result<RateFit> {
    let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    let mut fixed: Option<([u64; 4], Option<u64>)> = None;
    for r in records {
        let key = (others(r, axis), r.kappa_lower.map(f64::to_bits));
        match &fixed {
            None => fixed = Some(key),
            Some(f) if *f != key => {
                return Err(HarnessError::Invalid(format!(
                    "records vary along more than the {axis:?} axis"
                )))
            }
            _ => {}
        }
        let slot = groups.entry(axis_value(r, axis).to_bits()).or_default();
        if let Some(v) = r.excess_pop {
            slot.push(v);
        }
    }
    if groups.len() < 3 {
        return Err(HarnessError::Invalid(format!(
            "need at least 3 cells along the axis, got {}",
            groups.len()
        )));
    }
    let mut points = Vec::with_capacity(groups.len());
    for (bits, vals) in groups {
        let x = f64::from_bits(bits);
        let m = median(&vals)
            .ok_or_else(|| HarnessError::Invalid(format!("no successful trials at {x}")))?;
        if !(m > 0.0) {
            return Err(HarnessError::Invalid(format!("nonpositive median {m} at {x}")));
        }
        points.push((x, m));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let line = ols(&xs, &ys).ok_or_else(|| HarnessError::Invalid("degenerate axis".into()))?;
    Ok(RateFit {
        slope: line.slope,
        stderr: line.stderr,
        points,
    })
}
