//! Command-line front end: simulate, mean-field-sweep, verify-bounds,
//! metrics, quad-check.
//!
//! Exit codes: 0 ok, 2 config error, 3 numerical failure (step underflow),
//! 4 verification failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use reglandau_core::config::RunConfig;
use reglandau_core::error::Error;
use reglandau_core::harness;
use reglandau_core::transport::Metric;

#[derive(Parser)]
#[command(name = "reglandau", version, about = "Deterministic particle solver for the regularized Landau equation")]
struct Cli {
    /// Worker threads for the global pool (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override the output directory from the config
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the seed from the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation: diagnostics CSV plus trajectory snapshots
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Run the quadrature doubling self-check before integrating
        #[arg(long)]
        quad_check: bool,
        /// Tolerance of the pre-run quadrature check
        #[arg(long, default_value_t = 1e-3)]
        quad_tol: f64,
    },
    /// Mean-field self-convergence protocol over a list of particle counts
    MeanFieldSweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated ascending member sizes
        #[arg(long, value_delimiter = ',')]
        n_list: Vec<usize>,
        #[arg(long)]
        n_ref: usize,
    },
    /// Randomized inequality-verification suites
    VerifyBounds {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Transport metric between two snapshot files
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// w2 | winf | sliced
        #[arg(long, default_value = "w2")]
        metric: String,
    },
    /// Quadrature doubling self-check on the configured ensemble
    QuadCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::StepUnderflow { .. } => 3,
        Error::QuadratureUnderResolved { .. } => 4,
        _ => 2,
    }
}

fn load_config(path: &Path, cli_out: &Option<PathBuf>, cli_seed: &Option<u64>) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(out) = cli_out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli_seed {
        cfg.seed = *seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8, Error> {
    if let Some(workers) = cli.workers {
        // ignore failure when a pool already exists (tests, repeated calls)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    match cli.command {
        Command::Simulate { config, quad_check, quad_tol } => {
            let cfg = load_config(&config, &cli.out, &cli.seed)?;
            if quad_check {
                let rep = harness::cmd_quad_check(&cfg, quad_tol)?;
                println!("{}", serde_json::to_string_pretty(&rep.to_json())?);
                if !rep.within_tol {
                    return Err(Error::QuadratureUnderResolved {
                        delta: rep.deltas[0],
                        tol: quad_tol,
                    });
                }
            }
            let out = harness::cmd_simulate(&cfg)?;
            println!(
                "wrote {} diagnostic rows to {} and {} snapshots (final t = {})",
                out.records,
                out.csv_path.display(),
                out.snapshot_paths.len(),
                out.final_time
            );
            Ok(0)
        }
        Command::MeanFieldSweep { config, n_list, n_ref } => {
            let cfg = load_config(&config, &cli.out, &cli.seed)?;
            let rep = harness::cmd_mean_field_sweep(&cfg, &n_list, n_ref)?;
            let json = rep.to_json();
            let path = harness::write_report(&cfg.out_dir, "mean_field_sweep.json", &json)?;
            println!("{}", serde_json::to_string_pretty(&json)?);
            eprintln!("report written to {}", path.display());
            Ok(0)
        }
        Command::VerifyBounds { config, samples } => {
            let cfg = match config {
                Some(path) => load_config(&path, &cli.out, &cli.seed)?,
                None => {
                    let mut c = harness::verify_default_config();
                    if let Some(out) = &cli.out {
                        c.out_dir = out.clone();
                    }
                    if let Some(seed) = &cli.seed {
                        c.seed = *seed;
                    }
                    c
                }
            };
            let rep = harness::cmd_verify_bounds(&cfg, samples)?;
            let json = rep.to_json();
            let path = harness::write_report(&cfg.out_dir, "verify_bounds.json", &json)?;
            println!("{}", serde_json::to_string_pretty(&json)?);
            eprintln!("report written to {}", path.display());
            if rep.all_pass {
                Ok(0)
            } else {
                Ok(4)
            }
        }
        Command::Metrics { a, b, metric } => {
            let m = match metric.as_str() {
                "w2" => Metric::W2,
                "winf" => Metric::WInf,
                "sliced" | "sliced_w2" => Metric::SlicedW2,
                other => {
                    return Err(Error::Config(format!(
                        "unknown metric `{other}`, expected w2|winf|sliced"
                    )))
                }
            };
            let plan = harness::cmd_metrics(&a, &b, m)?;
            if plan.mode == reglandau_core::transport::Mode::Sliced && m != Metric::SlicedW2 {
                eprintln!("warning: exact mode unavailable (size/weights), reporting sliced estimate");
            }
            println!("{}", serde_json::to_string_pretty(&plan.to_json())?);
            Ok(0)
        }
        Command::QuadCheck { config, tol } => {
            let cfg = load_config(&config, &cli.out, &cli.seed)?;
            let rep = harness::cmd_quad_check(&cfg, tol)?;
            println!("{}", serde_json::to_string_pretty(&rep.to_json())?);
            if rep.within_tol && rep.converging {
                Ok(0)
            } else {
                Ok(4)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
