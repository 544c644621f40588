//! Multi-run grids and their per-arm aggregates.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{parse_kv, TrainConfig};

/// One scheduled run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub run_id: String,
    pub arm: String,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub runs: usize,
    /// Max over runs of each run's best test accuracy.
    pub best: f64,
    /// Mean over runs of each run's best test accuracy.
    pub mean: f64,
    pub successes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub title: String,
    pub runs: Vec<crate::harness::run::RunResult>,
    /// Arm labels in presentation order.
    pub arms: Vec<String>,
}

impl GridReport {
    pub fn new(title: impl Into<String>, mut runs: Vec<crate::harness::run::RunResult>, arms: Vec<String>) -> Self {
        runs.sort_by(|a, b| a.run_id.cmp(&b.run_id));
        Self {
            title: title.into(),
            runs,
            arms,
        }
    }

    /// Aggregates recomputed from the stored runs.
    pub fn summaries(&self) -> Vec<ArmSummary> {
        self.arms
            .iter()
            .map(|arm| {
                let runs: Vec<_> = self.runs.iter().filter(|r| &r.arm == arm).collect();
                let n = runs.len();
                let best = runs.iter().map(|r| r.best_test_acc).fold(0.0, f64::max);
                let mean = if n == 0 {
                    0.0
                } else {
                    runs.iter().map(|r| r.best_test_acc).sum::<f64>() / n as f64
                };
                ArmSummary {
                    arm: arm.clone(),
                    runs: n,
                    best,
                    mean,
                    successes: runs.iter().filter(|r| r.success == Some(true)).count(),
                }
            })
            .collect()
    }

    pub fn summary(&self, arm: &str) -> Option<ArmSummary> {
        self.summaries().into_iter().find(|s| s.arm == arm)
    }

    pub fn arm_runs<'a>(&'a self, arm: &'a str) -> impl Iterator<Item = &'a crate::harness::run::RunResult> + 'a {
        self.runs.iter().filter(move |r| r.arm == arm)
    }

    /// Same report with wall-clock times zeroed.
    pub fn without_timing(&self) -> GridReport {
        GridReport {
            title: self.title.clone(),
            runs: self.runs.iter().map(|r| r.without_timing()).collect(),
            arms: self.arms.clone(),
        }
    }
}

/// Executes `specs` with at most `workers` concurrent runs.
///
/// Each run owns its model and random streams, so the result does not depend
/// on `workers`; `workers = 1` runs serially on the calling thread.
pub fn run_grid<F>(specs: Vec<RunSpec>, workers: usize, run: F) -> Result<Vec<crate::harness::run::RunResult>>
where
    F: Fn(&TrainConfig) -> Result<crate::harness::run::RunResult> + Sync,
{
    let one = |spec: &RunSpec| -> Result<_> {
        let mut r = run(&spec.config)?;
        r.run_id = spec.run_id.clone();
        r.arm = spec.arm.clone();
        Ok(r)
    };
    let mut results: Vec<_> = if workers <= 1 {
        specs.iter().map(one).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
        pool.install(|| specs.par_iter().map(one).collect::<Result<Vec<_>>>())?
    };
    results.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    Ok(results)
}

/// A grid file: `key = v1, v2, ...` per line. Keys with several values are
/// crossed; single values apply to every point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<(String, Vec<String>)>,
}

impl GridSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let axes = parse_kv(text)?
            .into_iter()
            .map(|(k, v)| {
                let values: Vec<String> = v
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                if values.is_empty() {
                    Err(Error::Config(format!("grid key {k:?} has no values")))
                } else {
                    Ok((k, values))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { axes })
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every grid point as a key/value override map, in lexicographic order of
    /// the axes (last key varies fastest).
    pub fn points(&self) -> Vec<BTreeMap<String, String>> {
        let mut points = vec![BTreeMap::new()];
        for (key, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(key.clone(), v.clone());
                        q
                    })
                })
                .collect();
        }
        points
    }

    /// Configs for every point on top of `base`, validated.
    pub fn configs(&self, base: &TrainConfig) -> Result<Vec<TrainConfig>> {
        self.points()
            .iter()
            .map(|p| {
                let mut cfg = base.clone();
                cfg.apply(p)?;
                cfg.validate()?;
                Ok(cfg)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::{RunResult, StepSummary};

    fn fake(arm: &str, id: &str, best: f64, success: Option<bool>) -> RunResult {
        let mut r = RunResult::from_epochs(TrainConfig::mnist(), vec![], StepSummary::default(), vec![], false);
        r.arm = arm.into();
        r.run_id = id.into();
        r.best_test_acc = best;
        r.success = success;
        r
    }

    #[test]
    fn summaries_recompute_from_runs() {
        let report = GridReport::new(
            "t",
            vec![
                fake("noise", "b", 0.9, Some(true)),
                fake("noise", "a", 0.5, Some(false)),
                fake("no_noise", "c", 0.7, Some(true)),
            ],
            vec!["no_noise".into(), "noise".into()],
        );
        assert_eq!(report.runs[0].run_id, "a");
        let s = report.summary("noise").unwrap();
        assert_eq!((s.runs, s.best, s.successes), (2, 0.9, 1));
        assert!((s.mean - 0.7).abs() < 1e-15);
        for s in report.summaries() {
            assert!(s.successes <= s.runs);
        }
    }

    #[test]
    fn grid_points_cross_multi_valued_keys() {
        let g = GridSpec::parse("lr = 0.1, 0.01\nhidden = 16, 32, 64\nepochs = 5\n").unwrap();
        assert_eq!(g.len(), 6);
        let pts = g.points();
        assert_eq!(pts.len(), 6);
        assert!(pts.iter().all(|p| p["epochs"] == "5"));
        let cfgs = g.configs(&TrainConfig::programmer()).unwrap();
        assert_eq!(cfgs[0].hidden_units, 16);
        assert_eq!(cfgs[0].learning_rate, 0.1);
        assert!(GridSpec::parse("lr = ,").is_err());
        assert!(GridSpec::parse("bogus = 1").unwrap().configs(&TrainConfig::mnist()).is_err());
    }

    #[test]
    fn grid_runner_sorts_and_labels() {
        let specs: Vec<RunSpec> = (0..6)
            .rev()
            .map(|i| RunSpec {
                run_id: format!("r{i}"),
                arm: if i % 2 == 0 { "a".into() } else { "b".into() },
                config: TrainConfig {
                    seed: i,
                    ..TrainConfig::mnist()
                },
            })
            .collect();
        let run = |c: &TrainConfig| -> Result<RunResult> {
            let mut r = RunResult::from_epochs(c.clone(), vec![], StepSummary::default(), vec![], false);
            r.best_test_acc = c.seed as f64;
            Ok(r)
        };
        let serial = run_grid(specs.clone(), 1, run).unwrap();
        let parallel = run_grid(specs, 3, run).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(serial[0].run_id, "r0");
        assert_eq!(serial[1].arm, "b");
    }
}
