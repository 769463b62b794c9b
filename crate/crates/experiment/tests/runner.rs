use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sgl_experiment::config::{ExperimentConfig, Kind};
use sgl_experiment::manifest::{RunManifest, MANIFEST_FILE, SNAPSHOT_FILE};
use sgl_experiment::run::{self, *};
use sgl_experiment::{records, table, RunError};

fn subset_grid(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig { kind: Some(Kind::Grid), out: Some(out.to_path_buf()), seed: 3, ..Default::default() };
    c.grid.omega_values = vec![1.0, 2.0];
    c.grid.y_values = vec![0.2, 0.3];
    c.grid.amplitude_deg_values = vec![60.0, 120.0];
    c.grid.lambda_deg_values = vec![50.0, 90.0];
    c
}

fn tiny_training(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig { kind: Some(Kind::PpoTrain), out: Some(out.to_path_buf()), seed: 5, ..Default::default() };
    let t = &mut c.train;
    t.total_steps = 400;
    t.steps_per_update = 100;
    t.minibatch_size = 50;
    t.epochs_per_update = 2;
    t.hidden = vec![8, 8];
    t.episode_length = 25;
    t.initial_episodes = 2;
    t.checkpoint_every = 2;
    c
}

#[test]
fn subset_grid_is_fast_complete_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let a = run::run(&subset_grid(&dir.path().join("a"))).unwrap();
    assert!(start.elapsed().as_secs_f64() < 30.0, "16-point grid took {:?}", start.elapsed());
    let b = run::run(&subset_grid(&dir.path().join("b"))).unwrap();
    assert_eq!(a.checksums(), b.checksums());
    let paths: Vec<&str> = a.artifacts.iter().map(|x| x.path.as_str()).collect();
    assert_eq!(paths, [FRONTIER_CSV, GRID_CSV, SNAPSHOT_FILE]);
    a.verify(&dir.path().join("a")).unwrap();
    assert_eq!(RunManifest::load(&dir.path().join("a")).unwrap(), a);

    let t = table::read(&dir.path().join("a").join(GRID_CSV), table::GRID, None).unwrap();
    let recs = records::parse_grid(&t).unwrap();
    assert_eq!(recs.len(), 16);
    assert!(recs.iter().enumerate().all(|(i, r)| r.index == i && r.result.is_some()));
    assert_eq!(a.failures.diverged + a.failures.other, 0);
}

#[test]
fn snapshotted_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = run::run(&subset_grid(&dir.path().join("a"))).unwrap();
    let mut replay = ExperimentConfig::from_toml_str(&first.config).unwrap();
    replay.out = Some(dir.path().join("b"));
    replay.workers = 2;
    let second = run::run(&replay).unwrap();
    assert_eq!(first.checksums(), second.checksums());
}

#[test]
fn occupied_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("notes.txt"), "mine").unwrap();
    let err = run::run(&subset_grid(dir.path())).unwrap_err();
    assert!(matches!(err, RunError::Usage(_)), "{err}");
    assert_eq!(fs::read_to_string(dir.path().join("notes.txt")).unwrap(), "mine");

    // --resume on a directory that never held a run is refused too
    let mut c = subset_grid(dir.path());
    c.resume = true;
    assert!(matches!(run::run(&c), Err(RunError::Usage(_))));
}

#[test]
fn incompatible_resume_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    run::run(&subset_grid(dir.path())).unwrap();
    let mut other = subset_grid(dir.path());
    other.seed = 99;
    other.resume = true;
    let err = run::run(&other).unwrap_err();
    assert!(matches!(err, RunError::Usage(_)) && err.to_string().contains("different experiment"), "{err}");
    assert!(dir.path().join(MANIFEST_FILE).exists());
}

#[test]
fn interrupted_grid_resumes_to_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let full = run::run(&subset_grid(&dir.path().join("full"))).unwrap();

    let part = dir.path().join("part");
    run::run(&subset_grid(&part)).unwrap();
    // simulate a run killed mid-row after five points
    let text = fs::read_to_string(part.join(GRID_CSV)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let cut = format!("{}\n{}", lines[..7].join("\n"), &lines[7][..10]);
    fs::write(part.join(GRID_CSV), cut).unwrap();
    fs::remove_file(part.join(FRONTIER_CSV)).unwrap();
    fs::remove_file(part.join(MANIFEST_FILE)).unwrap();

    let mut c = subset_grid(&part);
    c.resume = true;
    let resumed = run::run(&c).unwrap();
    assert_eq!(resumed.checksums(), full.checksums());
}

#[test]
fn bayes_writes_one_history_per_omega() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig { kind: Some(Kind::Bayes), out: Some(dir.path().to_path_buf()), ..Default::default() };
    c.bayes.omega_values = vec![0.5, 1.5];
    c.bayes.n_explore = 3;
    c.bayes.n_exploit = 2;
    c.bayes.candidates = 64;
    c.bayes.refine = 1;
    let m = run::run(&c).unwrap();
    let paths: Vec<&str> = m.artifacts.iter().map(|a| a.path.as_str()).collect();
    assert_eq!(paths, ["bayes/omega_01.csv", "bayes/omega_02.csv", BAYES_BEST_CSV, SNAPSHOT_FILE]);
    let history = run::read_bayes_dir(&dir.path().join(BAYES_DIR), 8).unwrap();
    assert_eq!(history.len(), 10);
    assert!(history[..5].iter().all(|r| r.params.omega == 0.5));
    let best = table::read(&dir.path().join(BAYES_BEST_CSV), table::BAYES_BEST, None).unwrap();
    assert_eq!(best.rows.len(), 2);

    // the default protocol names twelve trials
    let names: Vec<String> = (0..ExperimentConfig::default().bayes.omega_values.len()).map(bayes_history_name).collect();
    assert_eq!(names.len(), 12);
    assert_eq!(names[11], "omega_12.csv");
}

fn eval_config(out: &Path, checkpoint: PathBuf) -> ExperimentConfig {
    ExperimentConfig { kind: Some(Kind::PpoEval), out: Some(out.to_path_buf()), checkpoint: Some(checkpoint), ..Default::default() }
}

#[test]
fn train_evaluate_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let train_dir = dir.path().join("train");
    let m = run::run(&tiny_training(&train_dir)).unwrap();
    let paths: Vec<&str> = m.artifacts.iter().map(|a| a.path.as_str()).collect();
    assert_eq!(
        paths,
        ["checkpoints/update_00002.sgl1", "checkpoints/update_00004.sgl1", POLICY_FILE, SNAPSHOT_FILE, TRAIN_LOG_CSV]
    );
    let log = table::read(&train_dir.join(TRAIN_LOG_CSV), table::TRAIN_LOG, None).unwrap();
    assert_eq!(log.rows.len(), 16);
    // the last checkpoint is the final policy
    assert_eq!(
        fs::read(train_dir.join(CHECKPOINT_DIR).join(checkpoint_name(4))).unwrap(),
        fs::read(train_dir.join(POLICY_FILE)).unwrap()
    );

    let policy = train_dir.join(POLICY_FILE);
    let e1 = run::run(&eval_config(&dir.path().join("eval1"), policy.clone())).unwrap();
    let e2 = run::run(&eval_config(&dir.path().join("eval2"), policy)).unwrap();
    assert_eq!(e1.checksums(), e2.checksums());
    assert!(e1.notes.iter().any(|n| n.contains("lower endpoint 0.025 is excluded")));
    let t = table::read(&dir.path().join("eval1").join(EVAL_CSV), table::EVAL, None).unwrap();
    let evals = records::parse_eval(&t).unwrap();
    assert_eq!(evals.len(), 45);
    assert_eq!(evals[0].target, 0.03);
    assert_eq!(evals[44].target, 0.25);

    run::run(&subset_grid(&dir.path().join("grid"))).unwrap();
    let mut c = ExperimentConfig { kind: Some(Kind::Compare), out: Some(dir.path().join("cmp")), ..Default::default() };
    c.compare.grid_csv = Some(dir.path().join("grid").join(GRID_CSV));
    c.compare.ppo_eval_csv = Some(dir.path().join("eval1").join(EVAL_CSV));
    let m = run::run(&c).unwrap();
    let cmp = dir.path().join("cmp");
    let report = table::read(&cmp.join(COMPARISON_CSV), table::COMPARE, None).unwrap();
    assert_eq!(report.rows.len(), 45);
    let summary = fs::read_to_string(cmp.join(SUMMARY_TXT)).unwrap();
    assert_eq!(summary.lines().filter(|l| l.starts_with("target ")).count(), 45);
    assert!(summary.contains("reference target (not a gate): 35-65%"));
    assert!(cmp.join(SCATTER_SVG).exists() && cmp.join(SCATTER_CSV).exists());
    assert!(m.artifacts.iter().any(|a| a.path == SUMMARY_TXT));
    m.verify(&cmp).unwrap();
}

#[test]
fn missing_checkpoint_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = run::run(&eval_config(&dir.path().join("e"), dir.path().join("nope.sgl1"))).unwrap_err();
    assert!(matches!(err, RunError::Usage(_)), "{err}");
    let mut c = eval_config(&dir.path().join("e"), PathBuf::new());
    c.checkpoint = None;
    assert!(run::run(&c).unwrap_err().to_string().contains("checkpoint"));
}

#[test]
fn invalid_config_names_the_field() {
    let err = ExperimentConfig::from_toml_str("seed = 1\n[train]\nlearning_rat = 0.1\n").unwrap_err();
    assert!(matches!(err, RunError::Usage(_)) && err.to_string().contains("learning_rat"), "{err}");
    let mut c = tiny_training(Path::new("unused"));
    c.train.minibatch_size = 33;
    let err = run::run(&c).unwrap_err();
    assert!(err.to_string().contains("train.minibatch_size"), "{err}");
    assert!(!Path::new("unused").exists());
}
