//! Trial execution, CSV rows and per-cell summaries.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dpsco::epoch::{self, EpochConfig};
use dpsco::instances::ProblemInstance;
use dpsco::localization::{self, default_eta_approx, default_eta_pure, LocalizationConfig, NoiseOptions};
use dpsco::loss::{EmpiricalObjective, Objective};
use dpsco::rng::derive_seed;
use dpsco::{inv_sensitivity, PrivacyParams, RngStream, Vector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, Cell, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::stats::{median, quantile};

/// Column order of the trial CSV. Frozen.
pub const CSV_COLUMNS: [&str; 13] = [
    "config_hash",
    "n",
    "d",
    "epsilon",
    "delta",
    "kappa",
    "kappa_lower",
    "seed",
    "excess_emp",
    "excess_pop",
    "epoch_i0",
    "wall_ms",
    "error",
];

/// Probes used to certify an instance before it is admitted to a sweep.
pub const ADMISSION_PROBES: usize = 10_000;
pub const ADMISSION_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config_hash: String,
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub kappa: Option<f64>,
    pub kappa_lower: Option<f64>,
    pub seed: u64,
    pub excess_emp: Option<f64>,
    pub excess_pop: Option<f64>,
    pub epoch_i0: Option<usize>,
    pub wall_ms: Option<f64>,
    pub error: Option<String>,
}

/// RNG of one trial: seeded by `derive_seed(master_seed, seed)` on stream
/// `cell_index`. Data are drawn first, then the algorithm consumes the rest.
pub fn trial_rng(master_seed: u64, cell_index: usize, seed: u64) -> RngStream {
    RngStream::new(derive_seed(master_seed, seed), cell_index as u64)
}

struct Outcome {
    x: Vector,
    epoch_i0: Option<usize>,
}

fn execute(
    cfg: &ExperimentConfig,
    inst: &ProblemInstance,
    cell: &Cell,
    data: &dpsco::Dataset,
    rng: &mut RngStream,
) -> Result<Outcome> {
    let opts = &cfg.options;
    let privacy = PrivacyParams::new(cell.epsilon, cell.delta)?;
    let noise = NoiseOptions {
        calibration: opts.gaussian_calibration,
        multiplier: opts.noise_multiplier,
        max_solver_iters: opts.max_solver_iters,
    };
    let domain = &inst.domain;
    let l = inst.lipschitz();
    let x0 = match &opts.x0 {
        Some(v) => Vector::from_vec(v.clone()),
        None => domain.center().clone(),
    };
    let kappa_lower = cell
        .kappa_lower
        .or(inst.growth.map(|g| g.kappa_lower));
    let (x, epoch_i0) = match cfg.algorithm {
        Algorithm::Localization => {
            let eta = match opts.eta {
                Some(e) => e,
                None if privacy.is_pure() => {
                    default_eta_pure(domain.diameter(), l, cell.n, cfg.beta, cell.epsilon, cell.d)?
                }
                None => default_eta_approx(
                    domain.diameter(),
                    l,
                    cell.n,
                    cfg.beta,
                    cell.epsilon,
                    cell.delta,
                    cell.d,
                )?,
            };
            let lc = LocalizationConfig::new(cell.n, eta, cfg.beta, privacy)?.with_noise(noise);
            (localization::run(inst.loss.as_ref(), data, domain, &x0, &lc, rng)?, None)
        }
        Algorithm::EpochGrowth => {
            let kl = kappa_lower.ok_or_else(|| HarnessError::Config("kappa_lower is required".into()))?;
            let ec = EpochConfig::new(cell.n, cell.d, l, domain, kl, cfg.beta, privacy)?.with_noise(noise);
            let run = epoch::run_traced(inst.loss.as_ref(), data, domain, &x0, &ec, rng)?;
            let i0 = run.last_containing(domain, &inst.xstar).map(|(i, _)| i);
            (run.x, i0)
        }
        Algorithm::InvSensitivity => {
            let rho = match opts.rho {
                Some(r) => r,
                None => {
                    let g = inst
                        .growth
                        .ok_or_else(|| HarnessError::Config("options.rho is required".into()))?;
                    let g = match cell.kappa_lower {
                        Some(kl) => g.with_kappa_lower(kl)?,
                        None => g,
                    };
                    inv_sensitivity::rho_for_growth(l, &g, cell.d, cell.n, cell.epsilon)
                }
            };
            let h = opts.grid_spacing.unwrap_or(rho / 4.0);
            let x = inv_sensitivity::run(inst.loss.as_ref(), data, domain, rho, cell.epsilon, h, rng)?;
            (x, None)
        }
        Algorithm::ErmOracle => (inst.empirical_optimum(data)?.0, None),
    };
    Ok(Outcome { x, epoch_i0 })
}

/// Runs one trial. Module errors end up in the `error` column.
pub fn run_trial(
    cfg: &ExperimentConfig,
    hash: &str,
    inst: &std::result::Result<ProblemInstance, String>,
    cell: &Cell,
    cell_index: usize,
    seed: u64,
) -> TrialRecord {
    let start = Instant::now();
    let growth = inst.as_ref().ok().and_then(|i| i.growth);
    let mut rec = TrialRecord {
        config_hash: hash.to_string(),
        n: cell.n,
        d: cell.d,
        epsilon: cell.epsilon,
        delta: cell.delta,
        kappa: growth.map(|g| g.kappa),
        kappa_lower: cell.kappa_lower.or(growth.map(|g| g.kappa_lower)),
        seed,
        excess_emp: None,
        excess_pop: None,
        epoch_i0: None,
        wall_ms: None,
        error: None,
    };
    let result = inst.as_ref().map_err(|e| e.clone()).and_then(|inst| {
        let mut rng = trial_rng(cfg.master_seed, cell_index, seed);
        let data = inst.draw(cell.n, &mut rng).map_err(|e| e.to_string())?;
        let out = execute(cfg, inst, cell, &data, &mut rng).map_err(|e| e.to_string())?;
        let (_, fmin) = inst.empirical_optimum(&data).map_err(|e| e.to_string())?;
        let emp = EmpiricalObjective::new(inst.loss.as_ref(), &data);
        Ok((emp.value(&out.x) - fmin, inst.excess_population(&out.x), out.epoch_i0))
    });
    match result {
        Ok((emp, pop, i0)) => {
            rec.excess_emp = Some(emp);
            rec.excess_pop = Some(pop);
            rec.epoch_i0 = i0;
        }
        Err(e) => rec.error = Some(e),
    }
    if cfg.record_timing {
        rec.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    rec
}

/// Builds and certifies the instance of every dimension in the grid.
fn admit(cfg: &ExperimentConfig) -> BTreeMap<usize, std::result::Result<ProblemInstance, String>> {
    let mut out = BTreeMap::new();
    for cell in cfg.cells() {
        out.entry(cell.d).or_insert_with(|| {
            let inst = cfg.instance_for(cell.d).map_err(|e| e.to_string())?;
            let mut rng = RngStream::new(derive_seed(cfg.master_seed, u64::MAX), cell.d as u64);
            if let Some((g, k)) = inst.certify(ADMISSION_PROBES, &mut rng) {
                let worst = g.max_violation.max(k.max_violation);
                if worst > ADMISSION_TOL {
                    return Err(format!("instance failed certification (violation {worst:.3e})"));
                }
            }
            Ok(inst)
        });
    }
    out
}

/// Runs every cell x seed combination. Rows come back sorted by cell, then
/// seed, whatever the thread count.
pub fn run_sweep(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let hash = cfg.hash();
    let instances = admit(cfg);
    let tasks: Vec<(usize, Cell, u64)> = cfg
        .cells()
        .into_iter()
        .enumerate()
        .flat_map(|(ci, c)| (0..cfg.seeds as u64).map(move |s| (ci, c, s)))
        .collect();
    let work = || {
        tasks
            .par_iter()
            .map(|(ci, cell, seed)| run_trial(cfg, &hash, &instances[&cell.d], cell, *ci, *seed))
            .collect::<Vec<_>>()
    };
    match jobs {
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| HarnessError::Invalid(e.to_string()))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub kappa_lower: Option<f64>,
    pub trials: usize,
    pub errors: usize,
    pub median_excess_pop: Option<f64>,
    pub quantile_excess_pop: Option<f64>,
    pub median_excess_emp: Option<f64>,
    pub quantile_excess_emp: Option<f64>,
    pub median_epoch_i0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub name: String,
    pub algorithm: String,
    pub instance: String,
    pub master_seed: u64,
    pub seeds: usize,
    pub beta: f64,
    /// `1 - beta`; the level of the `quantile_*` fields.
    pub quantile_level: f64,
    pub cells: Vec<CellSummary>,
}

type CellKey = (usize, usize, u64, u64, Option<u64>);

fn cell_key(r: &TrialRecord) -> CellKey {
    (
        r.n,
        r.d,
        r.epsilon.to_bits(),
        r.delta.to_bits(),
        r.kappa_lower.map(f64::to_bits),
    )
}

/// Per-cell medians and `level`-quantiles, cells in order of first appearance.
pub fn summarize_cells(records: &[TrialRecord], level: f64) -> Vec<CellSummary> {
    let mut order: Vec<CellKey> = Vec::new();
    let mut groups: BTreeMap<CellKey, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        let k = cell_key(r);
        if !groups.contains_key(&k) {
            order.push(k);
        }
        groups.entry(k).or_default().push(r);
    }
    order
        .into_iter()
        .map(|k| {
            let rows = &groups[&k];
            let pop: Vec<f64> = rows.iter().filter_map(|r| r.excess_pop).collect();
            let emp: Vec<f64> = rows.iter().filter_map(|r| r.excess_emp).collect();
            let i0: Vec<f64> = rows.iter().filter_map(|r| r.epoch_i0.map(|i| i as f64)).collect();
            let first = rows[0];
            CellSummary {
                n: first.n,
                d: first.d,
                epsilon: first.epsilon,
                delta: first.delta,
                kappa_lower: first.kappa_lower,
                trials: rows.len(),
                errors: rows.iter().filter(|r| r.error.is_some()).count(),
                median_excess_pop: median(&pop),
                quantile_excess_pop: quantile(&pop, level),
                median_excess_emp: median(&emp),
                quantile_excess_emp: quantile(&emp, level),
                median_epoch_i0: median(&i0),
            }
        })
        .collect()
}

pub fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Result<Summary> {
    let instance = cfg.instance.build()?.description;
    let level = 1.0 - cfg.beta;
    Ok(Summary {
        config_hash: cfg.hash(),
        name: cfg.name.clone(),
        algorithm: cfg.algorithm.name().to_string(),
        instance,
        master_seed: cfg.master_seed,
        seeds: cfg.seeds,
        beta: cfg.beta,
        quantile_level: level,
        cells: summarize_cells(records, level),
    })
}

pub fn write_csv(path: &Path, records: &[TrialRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(HarnessError::Invalid(format!(
            "unexpected CSV header {header:?}; expected {CSV_COLUMNS:?}"
        )));
    }
    Ok(rd.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// `<csv stem>.json` next to the CSV.
pub fn summary_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Runs the sweep and writes the CSV and its JSON summary.
pub fn run_to_files(cfg: &ExperimentConfig, csv: &Path, jobs: Option<usize>) -> Result<Summary> {
    let records = run_sweep(cfg, jobs)?;
    write_csv(csv, &records)?;
    let summary = summarize(cfg, &records)?;
    fs::write(summary_path(csv), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}
