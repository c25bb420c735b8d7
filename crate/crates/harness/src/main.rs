use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use miosindy::differentiation::Differentiator;
use miosindy::library::polynomial_library;
use miosindy::selection::{build_fit_data, log_grid, select_model, Algorithm, DataSpec, SelectionConfig, DEFAULT_ALPHAS};
use miosindy::systems::{add_noise, rk4_integrate, sample_initial_condition, OdeSystem, Trajectory};
use miosindy::RngStream;
use miosindy_harness::{report_dir, HarnessError, Overrides, Result, RunOptions};

#[derive(Parser)]
#[command(name = "miosindy", version, about = "Exact sparse system identification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoName {
    Miosr,
    Stlsq,
    Ssr,
    #[value(name = "e-stlsq")]
    EStlsq,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a benchmark system from a random initial condition and write CSV.
    Simulate {
        system: String,
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0.002)]
        dt: f64,
        /// Noise level in percent of the trajectory RMS.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a sparse model to a trajectory CSV (time column first).
    Fit {
        data: PathBuf,
        /// System whose variable layout the data follows.
        #[arg(long)]
        system: String,
        #[arg(long, default_value_t = 2)]
        degree: usize,
        #[arg(long, value_enum, default_value = "miosr")]
        algorithm: AlgoName,
        /// Sparsity levels (MIOSR).
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        ks: Vec<usize>,
        /// Ridge weights; defaults to the standard grid.
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        /// Thresholds (STLSQ / E-STLSQ); defaults to 10^[-1, 5] in 50 steps.
        #[arg(long, value_delimiter = ',')]
        thresholds: Vec<f64>,
        /// Moving-average window of the derivative estimate (1 = plain differences).
        #[arg(long, default_value_t = 9)]
        window: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an experiment described by a TOML config.
    Experiment {
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        time_limit: Option<f64>,
        /// Keep records already written by an identical config.
        #[arg(long)]
        resume: bool,
    },
    /// Re-aggregate the records of an output directory.
    Report { dir: PathBuf },
}

fn simulate(system: &str, seconds: f64, dt: f64, noise: f64, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let sys = OdeSystem::by_name(system).map_err(|e| HarnessError::Config(e.to_string()))?;
    let rng = RngStream::new(seed);
    let x0 = sample_initial_condition(&sys, &mut rng.substream(0))?;
    let traj = add_noise(&rk4_integrate(&sys, &x0, seconds, dt)?, noise, &mut rng.substream(1));
    match out {
        Some(path) => traj.write_csv(std::fs::File::create(path)?)?,
        None => traj.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn fit(
    data: PathBuf,
    system: &str,
    degree: usize,
    algorithm: AlgoName,
    ks: Vec<usize>,
    alphas: Vec<f64>,
    thresholds: Vec<f64>,
    window: usize,
    seed: u64,
) -> Result<()> {
    let sys = OdeSystem::by_name(system).map_err(|e| HarnessError::Config(e.to_string()))?;
    let traj = Trajectory::read_csv(std::fs::File::open(&data)?)?;
    if traj.dim() != sys.dim() {
        return Err(HarnessError::Config(format!("{system} has {} states, data has {}", sys.dim(), traj.dim())));
    }
    let alphas = if alphas.is_empty() { DEFAULT_ALPHAS.to_vec() } else { alphas };
    let thresholds = if thresholds.is_empty() { log_grid(10.0, -1.0, 5.0, 50) } else { thresholds };
    let algo = match algorithm {
        AlgoName::Miosr => Algorithm::Miosr { ks, alphas },
        AlgoName::Stlsq => Algorithm::Stlsq { thresholds, alphas },
        AlgoName::Ssr => Algorithm::Ssr { alphas },
        AlgoName::EStlsq => Algorithm::EStlsq { thresholds, alphas, n_models: 50 },
    };
    let differentiator = if window <= 1 { Differentiator::Centered } else { Differentiator::Smoothed { window } };
    let spec = DataSpec { degree, include_bias: true, differentiator, weak: None, split_fraction: 2.0 / 3.0 };
    let fit_data = build_fit_data(&traj, &sys, &spec, 0.0)?;
    let sel = select_model(&fit_data, &algo, &SelectionConfig { seed, ..SelectionConfig::default() })?;
    let labels = polynomial_library(&traj.select_columns(sys.library_vars()), degree, true).labels();
    for (j, &var) in sys.target_vars().iter().enumerate() {
        let terms: Vec<String> = sel
            .coefficients
            .column(j)
            .iter()
            .zip(&labels)
            .filter(|(c, _)| **c != 0.0)
            .map(|(c, l)| format!("{c:+.6} {l}"))
            .collect();
        let rhs = if terms.is_empty() { "0".to_string() } else { terms.join(" ") };
        println!("dx{var}/dt = {rhs}    [{:?}, AICc {:.3}]", sel.chosen[j], sel.aicc[j]);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate { system, seconds, dt, noise, seed, out } => simulate(&system, seconds, dt, noise, seed, out),
        Command::Fit { data, system, degree, algorithm, ks, alphas, thresholds, window, seed } => {
            fit(data, &system, degree, algorithm, ks, alphas, thresholds, window, seed)
        }
        Command::Experiment { config, trials, seed, output_dir, workers, time_limit, resume } => {
            let overrides = Overrides { trials, seed, output_dir, workers, time_limit };
            match miosindy_harness::runner::run_config_file(&config, &overrides, &RunOptions { resume, dry: false }) {
                Ok(run) => {
                    let failed = run.failures();
                    log::info!("{} records, {failed} with failures", run.records.len());
                    if failed > 0 {
                        return ExitCode::from(3);
                    }
                    Ok(())
                }
                Err(e) => Err(e),
            }
        }
        Command::Report { dir } => report_dir(&dir).map(|rows| log::info!("{} summary rows", rows.len())),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HarnessError::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
