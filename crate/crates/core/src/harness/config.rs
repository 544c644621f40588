//! Run configuration and its flat `key = value` text form.
//!
//! ```text
//! # comments start with '#'
//! task = mnist
//! learning_rate = 0.1
//! clip = 10          # or "none"
//! noise = annealed   # off | annealed | fixed
//! eta = 0.01
//! ```
//!
//! Unknown keys are rejected. Keys absent from a file keep their defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::InitScheme;
use crate::optim::{ClipConfig, NoiseSchedule, OptimizerKind, PipelineOrder, StepPipeline, DEFAULT_GAMMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Mnist,
    Programmer,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Mnist => "mnist",
            Task::Programmer => "programmer",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mnist" => Ok(Task::Mnist),
            "programmer" => Ok(Task::Programmer),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

/// Everything that determines one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub hidden_units: usize,
    /// Hidden layers of the MLP (MNIST task).
    pub hidden_layers: usize,
    /// Selection steps `T` (programmer task).
    pub steps: usize,
    pub init: InitScheme,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip: ClipConfig,
    pub noise: NoiseSchedule,
    pub order: PipelineOrder,
    pub dropout_rate: f64,
    pub seed: u64,
    /// Seed for data subsetting and question generation, shared across runs.
    pub data_seed: u64,
    pub train_subset: Option<usize>,
    pub train_examples: usize,
    pub test_examples: usize,
    pub column_len: usize,
    pub min_depth: usize,
    pub max_depth: usize,
    /// Keep every step's diagnostics in the result.
    pub record_steps: bool,
}

impl TrainConfig {
    /// 20 x 50 ReLU MLP, Simple Init, SGD at 0.1, 20 epochs of batch 100 on a
    /// 10k training subset.
    pub fn mnist() -> Self {
        Self {
            task: Task::Mnist,
            hidden_units: 50,
            hidden_layers: 20,
            steps: 0,
            init: InitScheme::default(),
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.1,
            epochs: 20,
            batch_size: 100,
            clip: ClipConfig::none(),
            noise: NoiseSchedule::Off,
            order: PipelineOrder::ClipThenNoise,
            dropout_rate: 0.0,
            seed: 0,
            data_seed: 0,
            train_subset: Some(10_000),
            train_examples: 0,
            test_examples: 0,
            column_len: 0,
            min_depth: 0,
            max_depth: 0,
            record_steps: false,
        }
    }

    /// Selector with H = 32 and T = 4 trained by Adam on depth 1-2 questions
    /// over 10-row columns.
    pub fn programmer() -> Self {
        Self {
            task: Task::Programmer,
            hidden_units: crate::programmer::DEFAULT_HIDDEN,
            hidden_layers: 1,
            steps: crate::programmer::DEFAULT_STEPS,
            init: InitScheme::default(),
            optimizer: OptimizerKind::adam(),
            learning_rate: 0.01,
            epochs: 20,
            batch_size: 20,
            clip: ClipConfig::none(),
            noise: NoiseSchedule::Off,
            order: PipelineOrder::ClipThenNoise,
            dropout_rate: 0.0,
            seed: 0,
            data_seed: 0,
            train_subset: None,
            train_examples: 1000,
            test_examples: 1000,
            column_len: crate::tasks::table::DEFAULT_COLUMN_LEN,
            min_depth: 1,
            max_depth: 2,
            record_steps: false,
        }
    }

    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Mnist => Self::mnist(),
            Task::Programmer => Self::programmer(),
        }
    }

    pub fn pipeline(&self) -> StepPipeline {
        StepPipeline {
            clip: self.clip,
            noise: self.noise,
            order: self.order,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("invalid learning rate {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout_rate));
        }
        if self.hidden_units == 0 {
            return bad("hidden_units must be positive".into());
        }
        if let Some(t) = self.clip.threshold {
            ClipConfig::at(t)?;
        }
        match self.noise {
            NoiseSchedule::Annealed { eta, gamma } => {
                NoiseSchedule::annealed(eta, gamma)?;
            }
            NoiseSchedule::Fixed { stddev } => {
                NoiseSchedule::fixed(stddev)?;
            }
            NoiseSchedule::Off => {}
        }
        if self.task == Task::Programmer {
            if self.steps == 0 {
                return bad("steps must be positive".into());
            }
            if self.train_examples == 0 || self.test_examples == 0 {
                return bad("train_examples and test_examples must be positive".into());
            }
            if self.min_depth < 1 || self.max_depth > 3 || self.min_depth > self.max_depth {
                return bad(format!(
                    "depth range {}..={} must lie within 1..=3",
                    self.min_depth, self.max_depth
                ));
            }
        }
        Ok(())
    }

    /// Ordered `(key, value)` pairs; parsing them back gives the same config.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let (noise, eta, gamma, noise_stddev) = match self.noise {
            NoiseSchedule::Off => ("off", None, None, None),
            NoiseSchedule::Annealed { eta, gamma } => ("annealed", Some(eta), Some(gamma), None),
            NoiseSchedule::Fixed { stddev } => ("fixed", None, None, Some(stddev)),
        };
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
        let init_stddev = match self.init {
            InitScheme::Simple { stddev } => Some(stddev),
            _ => None,
        };
        let mut pairs = vec![
            ("task", self.task.to_string()),
            ("hidden_units", self.hidden_units.to_string()),
            ("hidden_layers", self.hidden_layers.to_string()),
            ("steps", self.steps.to_string()),
            ("init", self.init.name().to_string()),
        ];
        if let Some(sd) = init_stddev {
            pairs.push(("init_stddev", sd.to_string()));
        }
        pairs.extend([
            ("optimizer", self.optimizer.name().to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("clip", opt(self.clip.threshold)),
            ("noise", noise.to_string()),
        ]);
        if let (Some(eta), Some(gamma)) = (eta, gamma) {
            pairs.push(("eta", eta.to_string()));
            pairs.push(("gamma", gamma.to_string()));
        }
        if let Some(sd) = noise_stddev {
            pairs.push(("noise_stddev", sd.to_string()));
        }
        pairs.extend([
            ("order", self.order.to_string()),
            ("dropout", self.dropout_rate.to_string()),
            ("seed", self.seed.to_string()),
            ("data_seed", self.data_seed.to_string()),
            ("train_subset", self.train_subset.map_or("none".into(), |n| n.to_string())),
            ("train_examples", self.train_examples.to_string()),
            ("test_examples", self.test_examples.to_string()),
            ("column_len", self.column_len.to_string()),
            ("min_depth", self.min_depth.to_string()),
            ("max_depth", self.max_depth.to_string()),
            ("record_steps", self.record_steps.to_string()),
        ]);
        pairs
    }

    pub fn to_kv(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Applies `key = value` overrides on top of `self`.
    pub fn apply(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        // Noise parameters are resolved together after the loop.
        let mut noise_mode: Option<String> = None;
        let (mut eta, mut gamma, mut noise_sd) = match self.noise {
            NoiseSchedule::Annealed { eta, gamma } => (Some(eta), Some(gamma), None),
            NoiseSchedule::Fixed { stddev } => (None, None, Some(stddev)),
            NoiseSchedule::Off => (None, None, None),
        };
        let mut init_stddev = None;
        for (key, value) in pairs {
            let v = value.trim();
            match key.as_str() {
                "task" => self.task = v.parse()?,
                "hidden_units" | "hidden" => self.hidden_units = parse(key, v)?,
                "hidden_layers" => self.hidden_layers = parse(key, v)?,
                "steps" => self.steps = parse(key, v)?,
                "init" => self.init = v.parse()?,
                "init_stddev" => init_stddev = Some(parse::<f64>(key, v)?),
                "optimizer" => self.optimizer = v.parse()?,
                "learning_rate" | "lr" => self.learning_rate = parse(key, v)?,
                "epochs" => self.epochs = parse(key, v)?,
                "batch_size" => self.batch_size = parse(key, v)?,
                "clip" => {
                    self.clip = match parse_optional::<f64>(key, v)? {
                        Some(t) => ClipConfig::at(t)?,
                        None => ClipConfig::none(),
                    }
                }
                "noise" => noise_mode = Some(v.to_string()),
                "eta" => eta = Some(parse(key, v)?),
                "gamma" => gamma = Some(parse(key, v)?),
                "noise_stddev" => noise_sd = Some(parse(key, v)?),
                "order" => self.order = v.parse()?,
                "dropout" => self.dropout_rate = parse(key, v)?,
                "seed" => self.seed = parse(key, v)?,
                "data_seed" => self.data_seed = parse(key, v)?,
                "train_subset" => self.train_subset = parse_optional(key, v)?,
                "train_examples" => self.train_examples = parse(key, v)?,
                "test_examples" => self.test_examples = parse(key, v)?,
                "column_len" => self.column_len = parse(key, v)?,
                "min_depth" => self.min_depth = parse(key, v)?,
                "max_depth" => self.max_depth = parse(key, v)?,
                "record_steps" => self.record_steps = parse(key, v)?,
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        if let (Some(sd), InitScheme::Simple { .. }) = (init_stddev, self.init) {
            self.init = InitScheme::Simple { stddev: sd };
        }
        let mode = noise_mode.unwrap_or_else(|| {
            match self.noise {
                NoiseSchedule::Off => "off",
                NoiseSchedule::Annealed { .. } => "annealed",
                NoiseSchedule::Fixed { .. } => "fixed",
            }
            .to_string()
        });
        self.noise = match mode.as_str() {
            "off" => NoiseSchedule::Off,
            "annealed" => NoiseSchedule::annealed(
                eta.ok_or_else(|| Error::Config("annealed noise needs eta".into()))?,
                gamma.unwrap_or(DEFAULT_GAMMA),
            )?,
            "fixed" => NoiseSchedule::fixed(
                noise_sd.ok_or_else(|| Error::Config("fixed noise needs noise_stddev".into()))?,
            )?,
            other => return Err(Error::Config(format!("unknown noise mode {other:?}"))),
        };
        Ok(())
    }

    /// Parses a config file; `task` picks the defaults the other keys override.
    pub fn from_kv(text: &str) -> Result<Self> {
        let pairs = parse_kv(text)?;
        let task = match pairs.get("task") {
            Some(t) => t.parse()?,
            None => Task::Mnist,
        };
        let mut cfg = Self::default_for(task);
        cfg.apply(&pairs)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
}

fn parse_optional<T: FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v.eq_ignore_ascii_case("none") || v.eq_ignore_ascii_case("off") {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

/// `key = value` lines into a map. Blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let key = k.trim().to_string();
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {key:?}", n + 1)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::mnist().validate().unwrap();
        TrainConfig::programmer().validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = TrainConfig::mnist();
        cfg.clip = ClipConfig::at(10.0).unwrap();
        cfg.noise = NoiseSchedule::annealed(0.01, 0.55).unwrap();
        cfg.init = InitScheme::Zero;
        cfg.seed = 42;
        assert_eq!(TrainConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);

        let mut p = TrainConfig::programmer();
        p.noise = NoiseSchedule::fixed(0.001).unwrap();
        p.order = PipelineOrder::NoiseThenClip;
        p.dropout_rate = 0.3;
        p.init = InitScheme::Simple { stddev: 0.25 };
        assert_eq!(TrainConfig::from_kv(&p.to_kv()).unwrap(), p);
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = TrainConfig::from_kv(
            "# zero init rescue\ntask = mnist\ninit = zero\nclip = 10\nnoise = annealed # eta below\neta = 0.01\n",
        )
        .unwrap();
        assert_eq!(cfg.init, InitScheme::Zero);
        assert_eq!(cfg.clip.threshold, Some(10.0));
        assert_eq!(cfg.noise, NoiseSchedule::Annealed { eta: 0.01, gamma: 0.55 });
        assert_eq!(cfg.hidden_layers, 20);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(TrainConfig::from_kv("colour = blue").is_err());
        assert!(TrainConfig::from_kv("epochs = many").is_err());
        assert!(TrainConfig::from_kv("noise = annealed").is_err());
        assert!(TrainConfig::from_kv("clip = -1").is_err());
        assert!(TrainConfig::from_kv("seed = 1\nseed = 2").is_err());
        assert!(TrainConfig::from_kv("just words").is_err());
        assert!(TrainConfig::from_kv("task = programmer\nmax_depth = 4").is_err());
    }
}
