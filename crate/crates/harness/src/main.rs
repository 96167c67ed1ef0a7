use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use dpsco::instances::InstanceSpec;
use dpsco::RngStream;
use dpsco_harness::sweep::{read_csv, run_to_files, summary_path, ADMISSION_PROBES, ADMISSION_TOL};
use dpsco_harness::{fit_rate, privacy_audit, AuditConfig, Axis, ExperimentConfig};

#[derive(Parser)]
#[command(name = "dpsco", version, about = "Private convex optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the master seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output path (CSV for `run`, JSON for `fit` and `audit`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write the trial CSV plus a JSON summary.
    Run { config: PathBuf },
    /// Fit the log-log slope of median excess risk along one axis.
    Fit {
        csv: PathBuf,
        #[arg(long, default_value = "n")]
        axis: String,
    },
    /// Run the neighbouring-dataset falsifier on the 1-D pipelines.
    Audit { config: PathBuf },
    /// Certify the growth and KL inequalities of a default instance.
    VerifyInstance {
        id: String,
        #[arg(long, default_value_t = ADMISSION_PROBES)]
        probes: usize,
    },
}

fn set_jobs(jobs: Option<usize>) -> Result<()> {
    if let Some(j) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn write_or_print(out: Option<&PathBuf>, json: String) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    set_jobs(cli.jobs)?;
    match &cli.command {
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::load(config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = cli.seed {
                cfg.master_seed = s;
            }
            let Some(csv) = cli.out.clone().or(cfg.output.clone()) else {
                bail!("no output path: set `output` in the config or pass --out");
            };
            let summary = run_to_files(&cfg, &csv, None)?;
            let trials: usize = summary.cells.iter().map(|c| c.trials).sum();
            let errors: usize = summary.cells.iter().map(|c| c.errors).sum();
            eprintln!(
                "{} trials ({} errors) -> {} and {}",
                trials,
                errors,
                csv.display(),
                summary_path(&csv).display()
            );
        }
        Command::Fit { csv, axis } => {
            let axis: Axis = axis.parse()?;
            let records = read_csv(csv)?;
            let fit = fit_rate(&records, axis)?;
            eprintln!("slope {:.4} +/- {:.4}", fit.slope, fit.stderr);
            write_or_print(cli.out.as_ref(), serde_json::to_string_pretty(&fit)?)?;
        }
        Command::Audit { config } => {
            let mut cfg =
                AuditConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = cli.seed {
                cfg.master_seed = s;
            }
            let rows = privacy_audit(&cfg)?;
            let mut failed = false;
            for r in &rows {
                match (&r.report, &r.notice) {
                    (Some(rep), _) => {
                        failed |= !rep.pass;
                        eprintln!(
                            "{:<16} eps={:<5} max_log_ratio={:.4} slack={:.4} bins={} {}{}",
                            r.pipeline.name(),
                            r.epsilon,
                            rep.max_log_ratio,
                            rep.slack,
                            rep.bins_used,
                            if rep.pass { "pass" } else { "FAIL" },
                            if rep.inconclusive { " (inconclusive)" } else { "" }
                        );
                    }
                    (None, notice) => eprintln!(
                        "{:<16} eps={:<5} {}",
                        r.pipeline.name(),
                        r.epsilon,
                        notice.as_deref().unwrap_or("skipped")
                    ),
                }
            }
            write_or_print(cli.out.as_ref(), serde_json::to_string_pretty(&rows)?)?;
            if failed {
                return Ok(ExitCode::from(1));
            }
        }
        Command::VerifyInstance { id, probes } => {
            let Some(spec) = InstanceSpec::default_for(id) else {
                bail!("unknown instance {id:?}; known: {}", InstanceSpec::IDS.join(", "));
            };
            let inst = spec.build()?;
            println!("{}", inst.description);
            println!("x* = {:?}, f* = {}", inst.xstar.as_slice(), inst.fstar);
            let mut rng = RngStream::new(cli.seed.unwrap_or(0), 0);
            match inst.certify(*probes, &mut rng) {
                None => println!("no growth certificate declared"),
                Some((g, k)) => {
                    println!("growth: max violation {:.3e} over {} probes", g.max_violation, g.probes);
                    println!("kl:     max violation {:.3e} over {} probes", k.max_violation, k.probes);
                    if g.max_violation > ADMISSION_TOL || k.max_violation > ADMISSION_TOL {
                        return Ok(ExitCode::from(1));
                    }
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
