//! `rdens` command-line tool.
//!
//! Exit codes: 0 success, 2 condition-check failure, 3 runtime failure.

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use serde_json::json;

use rdens::artifacts::{
    read_flow_csv, read_path_csv, read_rough_path_csv, read_samples_csv, write_flow_csv, write_path_csv,
    write_rough_path_csv,
};
use rdens::config::ExperimentConfig;
use rdens::experiment::{check_conditions, run_experiment};
use rdens::gaussian::{cameron_martin_basis, GaussianSampler};
use rdens::kde::kde_auto;
use rdens::lift::lift_piecewise_linear;
use rdens::malliavin::{malliavin_matrix_2d, malliavin_matrix_parseval, relative_frobenius, spectrum_with_tau};
use rdens::rde::solve_flow_jacobian;
use rdens::Error;

/// Environment variable overriding the output directory of `run`.
const OUT_DIR_ENV: &str = "RDENS_OUT_DIR";

#[derive(Parser)]
#[command(name = "rdens", version, about = "Densities of RDEs driven by Gaussian rough paths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full Monte Carlo experiment and write the CSV and JSON artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides RDENS_OUT_DIR and outputs.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check ellipticity, driver non-degeneracy and covariance regularity.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Draw one driver path.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lift a path CSV to a step-2 rough path.
    Lift {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the configured RDE (with its Jacobian) along a rough path CSV.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Malliavin matrix and spectrum of a flow CSV at time t.
    Malliavin {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        t: f64,
    },
    /// Kernel density estimate of the samples at time t of a run CSV.
    Density {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn open(path: &Path) -> rdens::Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn sink(out: &Option<PathBuf>) -> rdens::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn output_dir(cli: Option<PathBuf>, config: &ExperimentConfig) -> PathBuf {
    cli.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| config.outputs.dir.clone())
}

/// Returns the process exit code for a completed command.
fn execute(command: Command) -> rdens::Result<u8> {
    match command {
        Command::Run { config, out, threads } => {
            let config = ExperimentConfig::load(&config)?;
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(n) = threads {
                pool = pool.num_threads(n);
            }
            let pool = pool.build().map_err(|e| Error::Config(e.to_string()))?;
            let run = pool.install(|| run_experiment(&config))?;
            let (csv, json) = run.write_artifacts(&output_dir(out, &config))?;
            eprintln!(
                "{} of {} samples completed; wrote {} and {}",
                run.report.completed,
                run.report.requested,
                csv.display(),
                json.display()
            );
            for t in &run.report.times {
                eprintln!("t = {}: fraction degenerate {}", t.t, t.fraction_degenerate);
            }
            Ok(0)
        }
        Command::Check { config } => {
            let config = ExperimentConfig::load(&config)?;
            let report = check_conditions(&config)?;
            print_json(&report);
            Ok(if report.passed() { 0 } else { 2 })
        }
        Command::Sample { config, index, out } => {
            let config = ExperimentConfig::load(&config)?;
            let sampler = GaussianSampler::new(&config.build_model()?, &config.grid()?)?;
            write_path_csv(&sampler.sample(config.seed, index), sink(&out)?)?;
            Ok(0)
        }
        Command::Lift { input, out } => {
            let path = read_path_csv(open(&input)?)?;
            write_rough_path_csv(&lift_piecewise_linear(&path)?, sink(&out)?)?;
            Ok(0)
        }
        Command::Solve { config, input, out } => {
            let config = ExperimentConfig::load(&config)?;
            let x = read_rough_path_csv(open(&input)?)?;
            let flow = solve_flow_jacobian(&x, &config.build_fields()?, &config.y0())?;
            write_flow_csv(&flow, sink(&out)?)?;
            Ok(0)
        }
        Command::Malliavin { config, input, t } => {
            let config = ExperimentConfig::load(&config)?;
            let flow = read_flow_csv(open(&input)?)?;
            let model = config.build_model()?;
            let vf = config.build_fields()?;
            let sigma = malliavin_matrix_2d(&flow, &vf, &model, t)?;
            let spectrum = spectrum_with_tau(&sigma, config.thresholds.tau);
            let parseval = cameron_martin_basis(&model, &flow.grid)
                .and_then(|b| malliavin_matrix_parseval(&flow, &vf, &b, t))
                .map(|p| relative_frobenius(&sigma.sigma, &p.sigma))
                .ok();
            let rows: Vec<Vec<f64>> = sigma.sigma.row_iter().map(|r| r.iter().copied().collect()).collect();
            print_json(&json!({
                "t": t,
                "sigma": rows,
                "asymmetry": sigma.asymmetry,
                "reference_scale": sigma.reference_scale,
                "spectrum": spectrum,
                "parseval_relative_frobenius": parseval,
            }));
            Ok(0)
        }
        Command::Density { input, t, out } => {
            let rows = read_samples_csv(open(&input)?)?;
            let points: Vec<DVector<f64>> = rows.iter().filter(|r| r.t == t).map(|r| r.y.clone()).collect();
            if points.is_empty() {
                return Err(Error::Density(format!("no samples at t = {t}")));
            }
            let est = kde_auto(&points)?;
            let mut w = csv::Writer::from_writer(sink(&out)?);
            if est.dim() == 1 {
                w.write_record(["y1", "density"])?;
                for (q, f) in est.axes[0].iter().zip(&est.density) {
                    w.write_record([q.to_string(), f.to_string()])?;
                }
            } else {
                w.write_record(["y1", "y2", "density"])?;
                let m0 = est.axes[0].len();
                for (idx, f) in est.density.iter().enumerate() {
                    let (a, b) = (est.axes[0][idx % m0], est.axes[1][idx / m0]);
                    w.write_record([a.to_string(), b.to_string(), f.to_string()])?;
                }
            }
            w.flush()?;
            eprintln!("{} samples, bandwidth {:?}, mass {}", points.len(), est.bandwidth, est.mass);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Condition(_)) { 2 } else { 3 })
        }
    }
}
