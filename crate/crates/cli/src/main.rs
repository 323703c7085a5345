use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod manifest;

use commands::Run;
use manifest::RunManifest;

/// Shift-rule derivative experiments. Every run writes CSV/JSON data and a manifest.json.
#[derive(Parser, Debug)]
#[command(name = "agpsr", version, about)]
struct Cli {
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed where the command has one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Derivative of f(x) over a grid of x for several shift rules.
    Scan {
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        shots: Option<u64>,
    },
    /// Q_K(Δ) for one pseudo-gap/shift configuration.
    ErrorCurve {
        #[arg(long = "k")]
        k: Option<usize>,
        /// Switches to pseudo-gaps a, 2a, ..., Ka.
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        delta_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Gap counts and minimal K per qubit number.
    Scaling {
        #[arg(long)]
        n_min: Option<usize>,
        #[arg(long)]
        n_max: Option<usize>,
        /// Target mean relative error.
        #[arg(long)]
        target: Option<f64>,
    },
    /// Pseudo-gap selection and variance-optimal shifts.
    VarianceOpt {
        #[arg(long = "k")]
        k: Option<usize>,
        #[arg(long)]
        step: Option<f64>,
        /// Also compare initial and optimized shifts under sampled shot noise.
        #[arg(long)]
        monte_carlo: bool,
    },
    /// Seeded VQE runs with per-iteration traces.
    Vqe {
        #[arg(long)]
        n_qubits: Option<usize>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Unique spectral gaps of a generator.
    Gaps {
        #[arg(long)]
        bins: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Scan { .. } => "scan",
            Command::ErrorCurve { .. } => "error-curve",
            Command::Scaling { .. } => "scaling",
            Command::VarianceOpt { .. } => "variance-opt",
            Command::Vqe { .. } => "vqe",
            Command::Gaps { .. } => "gaps",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let start = Instant::now();

    let pool = match cli.threads {
        Some(0) => Err("--threads must be at least 1".to_string()),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string()),
        None => Ok(()),
    };
    let mut run = Run {
        config_path: cli.config.as_deref(),
        seed: cli.seed,
        out_dir: &cli.out_dir,
        manifest: RunManifest::new(cli.command.name()),
    };
    run.manifest.seed = cli.seed;

    let result = pool.map_err(anyhow::Error::msg).and_then(|()| {
        std::fs::create_dir_all(&cli.out_dir)?;
        match cli.command {
            Command::Scan { points, shots } => commands::scan(&mut run, points, shots),
            Command::ErrorCurve { k, step, delta_max, points } => commands::error_curve(&mut run, k, step, delta_max, points),
            Command::Scaling { n_min, n_max, target } => commands::scaling(&mut run, n_min, n_max, target),
            Command::VarianceOpt { k, step, monte_carlo } => commands::variance_opt(&mut run, k, step, monte_carlo),
            Command::Vqe { n_qubits, runs, iterations } => commands::vqe(&mut run, n_qubits, runs, iterations),
            Command::Gaps { bins } => commands::gaps(&mut run, bins),
        }
    });

    let mut manifest = run.manifest;
    manifest.threads = rayon::current_num_threads();
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    if let Err(e) = &result {
        manifest.error = Some(format!("{e:#}"));
    }
    if let Err(e) = manifest.write(&cli.out_dir) {
        eprintln!("error: could not write manifest: {e}");
        return ExitCode::FAILURE;
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
