//! Command-line front end: tables and simulations for the two-stage design,
//! emitted as JSON or CSV.
//!
//! Exit codes: 0 success, 2 unusable arguments (including domain violations
//! caught up front), 1 numeric or domain failures reported by the library.

// Oracle-frozen test targets keep their full computed precision.
#![allow(clippy::excessive_precision)]

mod output;

use clap::{Parser, Subcommand};
use output::{Format, OutputRecord, Value};
use seqstop_core::analysis;
use seqstop_core::error::Error;
use seqstop_core::estimators::{conditional_mle, marginal_mle};
use seqstop_core::model::{joint_density, Stage, StoppingRule, TrialConfig, TrialOutcome};
use seqstop_core::montecarlo::{run_mc, McSpec};
use std::fmt;
use std::io::Write as _;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "seqstop", version, about = "Two-stage group-sequential trial analyses")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Write the output to this file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// RNG seed for `simulate`; deterministic commands ignore it.
    #[arg(long, global = true, env = "SEQSTOP_SEED", default_value_t = 0)]
    seed: u64,

    /// Worker threads for the Monte Carlo commands; 0 means all cores.
    /// Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replicate the design under the indicator rule and summarize the
    /// estimators.
    Simulate {
        /// Stage-One sample size.
        #[arg(long)]
        n: u64,
        /// True mean.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        mu: f64,
        /// Observation standard deviation.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Number of replications.
        #[arg(long)]
        reps: u64,
        /// Truncation thresholds T for E[min(|conditional|, T)],
        /// comma-separated and strictly increasing.
        #[arg(long, value_delimiter = ',')]
        thresholds: Vec<f64>,
    },
    /// Closed-form marginal-MLE MAE at mu = 0, one row per n.
    Mae {
        /// Stage-One sample sizes, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<u64>,
    },
    /// Truncated conditional-MAE divergence table over levels N.
    Divergence {
        /// Stage-One sample size.
        #[arg(long, default_value_t = 1)]
        n: u64,
        /// Truncation levels, comma-separated and strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<f64>,
        /// Also report least-squares slopes of both columns against log N.
        #[arg(long)]
        fit: bool,
    },
    /// Marginal and conditional estimates for one realized outcome.
    Estimate {
        /// Stage the trial stopped at: 1 or 2.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        /// Stage-One sample size.
        #[arg(long)]
        n: u64,
        /// Final sum of observations K_N.
        #[arg(long, allow_negative_numbers = true)]
        ksum: f64,
        /// Interim sum K_n for stage-Two outcomes; must be negative under
        /// the indicator rule.
        #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
        kinterim: f64,
    },
    /// Joint density of (stage, K_N) tabulated on a k-grid.
    Density {
        /// Stage-One sample size.
        #[arg(long)]
        n: u64,
        /// True mean.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        mu: f64,
        /// Left end of the k-grid.
        #[arg(long, allow_negative_numbers = true)]
        kmin: f64,
        /// Right end of the k-grid.
        #[arg(long, allow_negative_numbers = true)]
        kmax: f64,
        /// Number of grid points.
        #[arg(long, default_value_t = 201)]
        points: u32,
    },
}

enum Failure {
    Core(Error),
    Usage(String),
    Io(std::io::Error),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(e) => e.fmt(f),
            Failure::Usage(s) => f.write_str(s),
            Failure::Io(e) => e.fmt(f),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    /// Bad arguments (caught by validation) are usage errors; everything
    /// the library rejects at runtime is a numeric/domain failure.
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_)
            | Failure::Core(Error::Invalid { .. })
            | Failure::Core(Error::NonFinite { .. }) => 2,
            _ => 1,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => {}
        Err(failure) => {
            eprintln!("error: {failure}");
            std::process::exit(failure.exit_code());
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    if cli.workers > 0 {
        // Ignore the error from a second initialization (tests share the
        // process); the pool size only affects speed, never results.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global();
    }
    let record = build_record(&cli)?;
    let text = record.render(cli.format);
    match &cli.out {
        Some(path) => std::fs::write(path, text).map_err(Failure::Io)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(Failure::Io)?;
            stdout.flush().map_err(Failure::Io)?;
        }
    }
    Ok(())
}

fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn columns(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn build_record(cli: &Cli) -> Result<OutputRecord, Failure> {
    match &cli.command {
        Command::Simulate {
            n,
            mu,
            sigma,
            reps,
            thresholds,
        } => {
            let config = TrialConfig::new(*n, *mu, *sigma, StoppingRule::Indicator)?;
            let spec = McSpec::new(config, *reps, cli.seed, thresholds.clone())?;
            let summary = run_mc(&spec);
            let mut cols = columns(&[
                "reps",
                "stage_one_freq",
                "degenerate_count",
                "marginal_mae",
                "marginal_mae_se",
            ]);
            let mut row = vec![
                Value::U64(summary.reps),
                Value::F64(summary.stage_one_freq),
                Value::U64(summary.degenerate_count),
                Value::F64(summary.marginal_mae.value),
                Value::F64(summary.marginal_mae.se),
            ];
            for (i, (threshold, mae)) in summary.conditional_truncated_mae.iter().enumerate() {
                cols.push(format!("threshold_{}", i + 1));
                cols.push(format!("conditional_mae_{}", i + 1));
                cols.push(format!("conditional_mae_se_{}", i + 1));
                row.push(Value::F64(*threshold));
                row.push(Value::F64(mae.value));
                row.push(Value::F64(mae.se));
            }
            Ok(OutputRecord {
                command: "simulate",
                parameters: vec![
                    ("n", Value::U64(*n)),
                    ("mu", Value::F64(*mu)),
                    ("sigma", Value::F64(*sigma)),
                    ("reps", Value::U64(*reps)),
                    ("seed", Value::U64(cli.seed)),
                    ("thresholds", Value::Text(join(thresholds))),
                ],
                columns: cols,
                rows: vec![row],
            })
        }
        Command::Mae { n } => {
            let mut rows = Vec::with_capacity(n.len());
            for &size in n {
                let report = analysis::marginal_mae(size)?;
                rows.push(vec![
                    Value::U64(size),
                    Value::F64(report.mae),
                    Value::F64(report.decomposition.0),
                    Value::F64(report.decomposition.1),
                ]);
            }
            Ok(OutputRecord {
                command: "mae",
                parameters: vec![("n", Value::Text(join(n)))],
                columns: columns(&["n", "mae", "stage_one", "stage_two"]),
                rows,
            })
        }
        Command::Divergence { n, levels, fit } => {
            let curve = analysis::divergence_curve(*n, levels)?;
            let mut parameters = vec![
                ("n", Value::U64(*n)),
                ("levels", Value::Text(join(levels))),
            ];
            if *fit {
                let bounds: Vec<f64> = curve.iter().map(|r| r.bound).collect();
                let quads: Vec<f64> = curve.iter().map(|r| r.quadrature).collect();
                let slope_b = analysis::fit_log_slope(levels, &bounds)?;
                let slope_q = analysis::fit_log_slope(levels, &quads)?;
                parameters.push(("fit_slope_bound", Value::F64(slope_b)));
                parameters.push(("fit_slope_quadrature", Value::F64(slope_q)));
            }
            let rows = curve
                .iter()
                .map(|r| {
                    vec![
                        Value::F64(r.level),
                        Value::F64(r.bound),
                        Value::F64(r.quadrature),
                    ]
                })
                .collect();
            Ok(OutputRecord {
                command: "divergence",
                parameters,
                columns: columns(&["level", "bound", "quadrature"]),
                rows,
            })
        }
        Command::Estimate {
            stage,
            n,
            ksum,
            kinterim,
        } => {
            let mut parameters = vec![
                ("stage", Value::U64(u64::from(*stage))),
                ("n", Value::U64(*n)),
                ("ksum", Value::F64(*ksum)),
            ];
            let outcome = if *stage == 1 {
                TrialOutcome::stage_one(*n, *ksum)?
            } else {
                if *kinterim >= 0.0 {
                    return Err(Failure::Usage(format!(
                        "kinterim = {kinterim} cannot reach stage Two under the indicator rule"
                    )));
                }
                parameters.push(("kinterim", Value::F64(*kinterim)));
                TrialOutcome::stage_two(*n, *kinterim, *ksum)?
            };
            let marginal = marginal_mle(&outcome);
            let conditional = conditional_mle(&outcome)?;
            Ok(OutputRecord {
                command: "estimate",
                parameters,
                columns: columns(&["marginal", "conditional", "iterations", "residual"]),
                rows: vec![vec![
                    Value::F64(marginal.value),
                    Value::F64(conditional.value),
                    Value::U64(u64::from(conditional.iterations)),
                    Value::F64(conditional.residual),
                ]],
            })
        }
        Command::Density {
            n,
            mu,
            kmin,
            kmax,
            points,
        } => {
            let grid_ok = kmin.is_finite() && kmax.is_finite() && kmax > kmin;
            if !grid_ok {
                return Err(Failure::Usage(format!(
                    "kmax = {kmax} must exceed kmin = {kmin}, both finite"
                )));
            }
            if *points < 2 {
                return Err(Failure::Usage("points must be at least 2".into()));
            }
            let mut rows = Vec::with_capacity(*points as usize);
            for i in 0..*points {
                let w = f64::from(i) / f64::from(points - 1);
                let k = kmin + (kmax - kmin) * w;
                let f1 = joint_density(*n, Stage::One, k, *mu)?;
                let f2 = joint_density(*n, Stage::Two, k, *mu)?;
                rows.push(vec![Value::F64(k), Value::F64(f1), Value::F64(f2)]);
            }
            Ok(OutputRecord {
                command: "density",
                parameters: vec![
                    ("n", Value::U64(*n)),
                    ("mu", Value::F64(*mu)),
                    ("kmin", Value::F64(*kmin)),
                    ("kmax", Value::F64(*kmax)),
                    ("points", Value::U64(u64::from(*points))),
                ],
                columns: columns(&["k", "f_stage_one", "f_stage_two"]),
                rows,
            })
        }
    }
}
