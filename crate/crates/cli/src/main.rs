use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use gradnoise::harness::experiments::{programmer_data, run_mnist_experiment, run_programmer_grid, NoiseArms, ProgrammerArm};
use gradnoise::harness::run::{prepare_mnist_train, train_mnist};
use gradnoise::harness::{emit_report, run_gradient_checks, schedule_dump, GridReport, GridSpec, Task, TrainConfig, DEFAULT_PROGRAMMER_GRID};
use gradnoise::optim::DEFAULT_GAMMA;
use gradnoise::programmer::train_programmer;
use gradnoise::tasks::mnist::load_mnist_dir;

#[derive(Parser)]
#[command(name = "gradnoise", version, about = "Training with annealed gradient noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deep-MLP MNIST experiment 1-6, with and without gradient noise.
    Mnist {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=6))]
        experiment: u32,
        /// on, off or both
        #[arg(long, default_value = "both")]
        noise: NoiseArms,
        /// Seeds 0..n per (arm, learning rate).
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Training subset size; 0 uses the full training set.
        #[arg(long, default_value_t = 10_000)]
        subset: usize,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 100)]
        batch: usize,
        /// Directory with the four IDX files (default: $MNIST_DIR or data/mnist).
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Restart grid for the table program-induction task.
    Programmer {
        /// Grid file of `key = v1, v2, ...` lines (default: built-in 36-point grid).
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Comma-separated arms: noise, no_noise, dropout.
        #[arg(long, default_value = "noise,no_noise", value_delimiter = ',')]
        arms: Vec<ProgrammerArm>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Single run from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate sigma_t of the annealed schedule as CSV.
    Schedule {
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value_t = DEFAULT_GAMMA)]
        gamma: f64,
        #[arg(long)]
        tmax: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference gradient check on random small models.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        mlps: usize,
        #[arg(long, default_value_t = 20)]
        selectors: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
}

fn mnist_dir(arg: Option<PathBuf>) -> PathBuf {
    arg.or_else(|| std::env::var_os("MNIST_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/mnist"))
}

fn write_report(report: &GridReport, out: &Path) -> Result<()> {
    let files = emit_report(report, out)?;
    let summary = fs::read_to_string(&files.summary)?;
    emit(&format!("{summary}\nwrote {}\n", out.display()))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mnist {
            experiment,
            noise,
            seeds,
            subset,
            epochs,
            batch,
            data_dir,
            out,
            workers,
        } => {
            let dir = mnist_dir(data_dir);
            let (train, test) = load_mnist_dir(&dir).with_context(|| format!("loading MNIST from {}", dir.display()))?;
            let base = TrainConfig {
                epochs,
                batch_size: batch,
                train_subset: (subset > 0).then_some(subset),
                ..TrainConfig::mnist()
            };
            let seeds: Vec<u64> = (0..seeds).collect();
            let report = run_mnist_experiment(experiment, noise, &seeds, &base, &train, &test, workers)?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("runs/mnist-e{experiment}")));
            write_report(&report, &out)
        }
        Command::Programmer {
            grid,
            seeds,
            arms,
            out,
            workers,
        } => {
            let text = match &grid {
                Some(path) => fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
                None => DEFAULT_PROGRAMMER_GRID.to_string(),
            };
            let spec = GridSpec::parse(&text)?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let report = run_programmer_grid(&spec, &TrainConfig::programmer(), &seeds, &arms, workers)?;
            write_report(&report, &out.unwrap_or_else(|| PathBuf::from("runs/programmer")))
        }
        Command::Run { config, data_dir, out } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg = TrainConfig::from_kv(&text)?;
            let mut result = match cfg.task {
                Task::Mnist => {
                    let dir = mnist_dir(data_dir);
                    let (full, test) = load_mnist_dir(&dir).with_context(|| format!("loading MNIST from {}", dir.display()))?;
                    train_mnist(&cfg, &prepare_mnist_train(&cfg, &full)?, &test)?
                }
                Task::Programmer => {
                    let (train, test) = programmer_data(&cfg)?;
                    train_programmer(&cfg, &train, &test)?
                }
            };
            result.run_id = "run".into();
            result.arm = "run".into();
            let report = GridReport::new(format!("Single {} run", cfg.task), vec![result], vec!["run".into()]);
            write_report(&report, &out.unwrap_or_else(|| PathBuf::from("runs/single")))
        }
        Command::Schedule { eta, gamma, tmax, out } => {
            let csv = schedule_dump(eta, gamma, tmax)?;
            match out {
                Some(path) => fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?,
                None => emit(&csv)?,
            }
            Ok(())
        }
        Command::Gradcheck {
            mlps,
            selectors,
            seed,
            tolerance,
        } => {
            let s = run_gradient_checks(seed, mlps, selectors)?;
            println!(
                "mlp: {} models, {} parameters checked, {} skipped at ReLU kinks, max relative error {:.3e} (no floor {:.3e})",
                s.mlps, s.mlp_checked, s.mlp_skipped_at_kinks, s.mlp_max_error, s.mlp_max_raw_error
            );
            println!(
                "selector: {} models, {} parameters checked, max relative error {:.3e} (no floor {:.3e})",
                s.selectors, s.selector_checked, s.selector_max_error, s.selector_max_raw_error
            );
            println!("max absolute difference {:.3e}", s.max_abs_error);
            if s.max_error() >= tolerance {
                bail!("max relative error {:.3e} exceeds {tolerance:e}", s.max_error());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
