//! The MNIST depth experiments and the program-induction restart grid.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::config::{Task, TrainConfig};
use crate::harness::grid::{run_grid, GridReport, GridSpec, RunSpec};
use crate::harness::run::{prepare_mnist_train, train_mnist, STREAM_DATA};
use crate::init::InitScheme;
use crate::optim::{ClipConfig, NoiseSchedule, DEFAULT_GAMMA};
use crate::programmer::train_programmer;
use crate::rng::Rng;
use crate::tasks::mnist::Dataset;
use crate::tasks::table::{generate_table_task, TableDataset};

pub const ARM_NO_NOISE: &str = "no_noise";
pub const ARM_NOISE: &str = "noise";
pub const ARM_DROPOUT: &str = "dropout";

/// Annealed variance scale for the MNIST noise arm.
pub const MNIST_ETA: f64 = 0.01;
/// Annealed variance scale for the program-induction noise arm.
pub const PROGRAMMER_ETA: f64 = 1.0;
pub const MNIST_LEARNING_RATES: [f64; 2] = [0.1, 0.01];
pub const DROPOUT_ARM_RATE: f64 = 0.5;

/// Which arms to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseArms {
    Off,
    On,
    Both,
}

impl NoiseArms {
    pub fn includes_off(self) -> bool {
        matches!(self, NoiseArms::Off | NoiseArms::Both)
    }

    pub fn includes_on(self) -> bool {
        matches!(self, NoiseArms::On | NoiseArms::Both)
    }
}

impl FromStr for NoiseArms {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(NoiseArms::Off),
            "on" => Ok(NoiseArms::On),
            "both" => Ok(NoiseArms::Both),
            other => Err(Error::Argument(format!("noise must be on, off or both, got {other:?}"))),
        }
    }
}

impl fmt::Display for NoiseArms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseArms::Off => "off",
            NoiseArms::On => "on",
            NoiseArms::Both => "both",
        })
    }
}

/// Init scheme, clip threshold and title of MNIST experiments 1 to 6.
pub fn mnist_experiment(id: u32) -> Result<(InitScheme, ClipConfig, &'static str)> {
    let simple = InitScheme::default();
    let clip10 = ClipConfig::at(10.0)?;
    Ok(match id {
        1 => (simple, ClipConfig::none(), "Experiment 1: Simple Init, No Gradient Clipping"),
        2 => (simple, ClipConfig::at(100.0)?, "Experiment 2: Simple Init, Gradient Clipping Threshold = 100"),
        3 => (simple, clip10, "Experiment 3: Simple Init, Gradient Clipping Threshold = 10"),
        4 => (InitScheme::Sussillo, clip10, "Experiment 4: Good Init (Sussillo & Abbott), Gradient Clipping Threshold = 10"),
        5 => (InitScheme::He, clip10, "Experiment 5: Good Init (He et al.), Gradient Clipping Threshold = 10"),
        6 => (InitScheme::Zero, clip10, "Experiment 6: Bad Init (Zero Init), Gradient Clipping Threshold = 10"),
        other => return Err(Error::Argument(format!("unknown experiment id {other} (expected 1..6)"))),
    })
}

/// Run specs for one MNIST experiment. `base` supplies the architecture,
/// budget and data settings; init, clip, learning rate, noise, dropout and
/// seed are set here. Seeds are shared across arms.
pub fn mnist_experiment_specs(id: u32, arms: NoiseArms, seeds: &[u64], base: &TrainConfig) -> Result<(Vec<RunSpec>, Vec<String>, &'static str)> {
    let (init, clip, title) = mnist_experiment(id)?;
    let mut arm_list: Vec<(&str, NoiseSchedule, f64)> = Vec::new();
    if arms.includes_off() {
        arm_list.push((ARM_NO_NOISE, NoiseSchedule::Off, 0.0));
    }
    if arms.includes_on() {
        arm_list.push((ARM_NOISE, NoiseSchedule::annealed(MNIST_ETA, DEFAULT_GAMMA)?, 0.0));
    }
    if id == 1 && arms.includes_off() {
        arm_list.push((ARM_DROPOUT, NoiseSchedule::Off, DROPOUT_ARM_RATE));
    }
    let mut specs = Vec::new();
    for &(arm, noise, dropout) in &arm_list {
        for &lr in &MNIST_LEARNING_RATES {
            for &seed in seeds {
                let config = TrainConfig {
                    task: Task::Mnist,
                    init,
                    clip,
                    noise,
                    dropout_rate: dropout,
                    learning_rate: lr,
                    seed,
                    ..base.clone()
                };
                config.validate()?;
                specs.push(RunSpec {
                    run_id: format!("e{id}-{arm}-lr{lr}-s{seed:04}"),
                    arm: arm.to_string(),
                    config,
                });
            }
        }
    }
    let names = arm_list.iter().map(|a| a.0.to_string()).collect();
    Ok((specs, names, title))
}

/// Runs MNIST experiment `id` on `full_train` (subset per `base`) and `test`.
pub fn run_mnist_experiment(
    id: u32,
    arms: NoiseArms,
    seeds: &[u64],
    base: &TrainConfig,
    full_train: &Dataset,
    test: &Dataset,
    workers: usize,
) -> Result<GridReport> {
    if seeds.is_empty() {
        return Err(Error::Argument("at least one seed is required".into()));
    }
    let (specs, names, title) = mnist_experiment_specs(id, arms, seeds, base)?;
    let train = prepare_mnist_train(base, full_train)?;
    let runs = run_grid(specs, workers, |c| train_mnist(c, &train, test))?;
    Ok(GridReport::new(title, runs, names))
}

/// Arms of the program-induction grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProgrammerArm {
    NoNoise,
    Noise { eta: f64 },
    Dropout { rate: f64 },
}

impl ProgrammerArm {
    pub fn name(&self) -> &'static str {
        match self {
            ProgrammerArm::NoNoise => ARM_NO_NOISE,
            ProgrammerArm::Noise { .. } => ARM_NOISE,
            ProgrammerArm::Dropout { .. } => ARM_DROPOUT,
        }
    }

    fn configure(&self, config: &mut TrainConfig) -> Result<()> {
        match *self {
            ProgrammerArm::NoNoise => config.noise = NoiseSchedule::Off,
            ProgrammerArm::Noise { eta } => config.noise = NoiseSchedule::annealed(eta, DEFAULT_GAMMA)?,
            ProgrammerArm::Dropout { rate } => {
                config.noise = NoiseSchedule::Off;
                config.dropout_rate = rate;
            }
        }
        Ok(())
    }
}

impl FromStr for ProgrammerArm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "noise" | "on" => Ok(ProgrammerArm::Noise { eta: PROGRAMMER_ETA }),
            "no_noise" | "off" => Ok(ProgrammerArm::NoNoise),
            "dropout" => Ok(ProgrammerArm::Dropout { rate: DROPOUT_ARM_RATE }),
            other => Err(Error::Argument(format!("unknown arm {other:?}"))),
        }
    }
}

/// Train and test questions for a programmer config. Both depend only on
/// `data_seed` and the task settings, so every run of a grid sees the same data.
pub fn programmer_data(config: &TrainConfig) -> Result<(TableDataset, TableDataset)> {
    let mut rng = Rng::stream(config.data_seed, STREAM_DATA);
    let depths = config.min_depth..=config.max_depth;
    let train = generate_table_task(&mut rng, config.train_examples, config.column_len, depths.clone())?;
    let test = generate_table_task(&mut rng, config.test_examples, config.column_len, depths)?;
    Ok((train, test))
}

/// Run specs for `grid x seeds x arms` on top of `base`.
pub fn programmer_grid_specs(grid: &GridSpec, base: &TrainConfig, seeds: &[u64], arms: &[ProgrammerArm]) -> Result<Vec<RunSpec>> {
    let configs = grid.configs(base)?;
    let mut specs = Vec::new();
    for arm in arms {
        for (c, config) in configs.iter().enumerate() {
            for &seed in seeds {
                let mut config = TrainConfig { seed, ..config.clone() };
                arm.configure(&mut config)?;
                config.validate()?;
                specs.push(RunSpec {
                    run_id: format!("p-{}-c{c:03}-s{seed:04}", arm.name()),
                    arm: arm.name().to_string(),
                    config,
                });
            }
        }
    }
    Ok(specs)
}

pub fn run_programmer_grid(
    grid: &GridSpec,
    base: &TrainConfig,
    seeds: &[u64],
    arms: &[ProgrammerArm],
    workers: usize,
) -> Result<GridReport> {
    if seeds.is_empty() || arms.is_empty() {
        return Err(Error::Argument("at least one seed and one arm are required".into()));
    }
    let specs = programmer_grid_specs(grid, base, seeds, arms)?;
    // Generate each distinct dataset once.
    let mut datasets: Vec<(TrainConfig, (TableDataset, TableDataset))> = Vec::new();
    for spec in &specs {
        if !datasets.iter().any(|(c, _)| same_data(c, &spec.config)) {
            datasets.push((spec.config.clone(), programmer_data(&spec.config)?));
        }
    }
    let runs = run_grid(specs, workers, |c| {
        let (_, (train, test)) = datasets
            .iter()
            .find(|(d, _)| same_data(d, c))
            .ok_or_else(|| Error::Consistency("missing dataset".into()))?;
        train_programmer(c, train, test)
    })?;
    let names = arms.iter().map(|a| a.name().to_string()).collect();
    Ok(GridReport::new("Program induction: runs reaching 100% test accuracy", runs, names))
}

fn same_data(a: &TrainConfig, b: &TrainConfig) -> bool {
    (a.data_seed, a.train_examples, a.test_examples, a.column_len, a.min_depth, a.max_depth)
        == (b.data_seed, b.train_examples, b.test_examples, b.column_len, b.min_depth, b.max_depth)
}

/// The 36-point grid used for restart counting: learning rate x hidden size
/// x clip threshold.
pub const DEFAULT_PROGRAMMER_GRID: &str = "\
learning_rate = 0.001, 0.003, 0.01, 0.03
hidden_units = 16, 32, 64
clip = 1, 10, none
";
