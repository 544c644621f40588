use std::fs;

use gradnoise::harness::experiments::{run_programmer_grid, ProgrammerArm};
use gradnoise::harness::run::train_mnist;
use gradnoise::harness::{emit_report, GridReport, GridSpec, RunResult, TrainConfig};
use gradnoise::tasks::mnist::{Dataset, Split};
use gradnoise::{ClipConfig, NoiseSchedule, Rng, Tensor};

/// Two Gaussian blobs per class in 8 dimensions, 3 classes.
fn blobs(n: usize, seed: u64, split: Split) -> Dataset {
    let mut rng = Rng::new(seed);
    let mut data = Vec::with_capacity(n * 8);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 3;
        for d in 0..8 {
            let centre = if d % 3 == class { 1.0 } else { 0.0 };
            data.push(centre + 0.2 * rng.standard_normal());
        }
        labels.push(class);
    }
    Dataset::new(Tensor::new(vec![n, 8], data).unwrap(), labels, split).unwrap()
}

fn small_mlp() -> TrainConfig {
    TrainConfig {
        hidden_units: 16,
        hidden_layers: 2,
        epochs: 5,
        batch_size: 10,
        learning_rate: 0.1,
        train_subset: None,
        clip: ClipConfig::at(10.0).unwrap(),
        noise: NoiseSchedule::annealed(0.01, 0.55).unwrap(),
        record_steps: true,
        ..TrainConfig::mnist()
    }
}

#[test]
fn mlp_run_learns_and_reports() {
    let (train, test) = (blobs(300, 1, Split::Train), blobs(90, 2, Split::Test));
    let mut run = train_mnist(&small_mlp(), &train, &test).unwrap();
    assert!(run.best_test_acc > 0.9, "{}", run.best_test_acc);
    assert_eq!(run.epochs.len(), 5);
    assert_eq!(run.step_log.len(), 5 * 30);
    assert!(run.step_log.iter().all(|d| d.post_norm <= 10.0 + 1e-12));
    run.run_id = "blobs".into();
    run.arm = "noise".into();

    let dir = tempfile::tempdir().unwrap();
    let report = GridReport::new("blobs", vec![run.clone()], vec!["noise".into()]);
    let files = emit_report(&report, dir.path()).unwrap();
    let text = fs::read_to_string(&files.results).unwrap();
    let back: RunResult = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(back, run);
    let steps = fs::read_to_string(files.steps_csv.unwrap()).unwrap();
    assert_eq!(steps.lines().count(), 1 + 5 * 30);
}

#[test]
fn noise_only_changes_updates() {
    let (train, test) = (blobs(60, 3, Split::Train), blobs(30, 4, Split::Test));
    let quiet = TrainConfig {
        noise: NoiseSchedule::Off,
        ..small_mlp()
    };
    let a = train_mnist(&quiet, &train, &test).unwrap();
    let b = train_mnist(&small_mlp(), &train, &test).unwrap();
    assert!(a.step_log.iter().all(|d| d.sigma == 0.0));
    assert!(b.step_log.iter().all(|d| d.sigma > 0.0));
    // First step sees the same gradient: identical init, data order and dropout.
    assert_eq!(a.step_log[0].pre_norm, b.step_log[0].pre_norm);
    assert_ne!(a.epochs, b.epochs);
}

#[test]
fn programmer_grid_counts_successes_per_arm() {
    let grid = GridSpec::parse("hidden_units = 8, 16\ntrain_examples = 50\ntest_examples = 40\nepochs = 2\n").unwrap();
    let arms = [ProgrammerArm::Noise { eta: 1.0 }, ProgrammerArm::NoNoise];
    let report = run_programmer_grid(&grid, &TrainConfig::programmer(), &[0, 1], &arms, 2).unwrap();
    assert_eq!(report.runs.len(), 2 * 2 * 2);
    for summary in report.summaries() {
        let runs: Vec<_> = report.arm_runs(&summary.arm).collect();
        assert_eq!(summary.runs, 4);
        assert_eq!(summary.successes, runs.iter().filter(|r| r.success == Some(true)).count());
        let best = runs.iter().map(|r| r.best_test_acc).fold(0.0, f64::max);
        assert_eq!(summary.best, best);
    }
}
