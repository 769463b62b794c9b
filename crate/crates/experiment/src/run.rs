//! Pipelines behind each experiment kind.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sgl_core::dynamics::RobotModel;
use sgl_core::metrics::EvalResult;
use sgl_core::rl::{evaluate_target, evaluation_targets, train, EpisodeRecord, Policy};
use sgl_core::search::{bayes_optimize, efficiency_frontier, grid_search_resumable, GridOutcome};

use crate::charts::{self, Controller, ScatterPoint, ScatterSeries};
use crate::compare::{self, OperatingPoint};
use crate::config::{ExperimentConfig, Kind};
use crate::error::{RunError, RunResult};
use crate::fsio::{self, write_atomic};
use crate::manifest::{self, RunManifest, MANIFEST_FILE, SNAPSHOT_FILE};
use crate::records::{self, BayesRecord, EvalRecord, FailureCounts, GaitRecord, Status};
use crate::table::{self, TableWriter};

pub const GRID_CSV: &str = "grid.csv";
pub const FRONTIER_CSV: &str = "frontier.csv";
pub const BAYES_DIR: &str = "bayes";
pub const BAYES_BEST_CSV: &str = "bayes_best.csv";
pub const TRAIN_LOG_CSV: &str = "train_log.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const POLICY_FILE: &str = "policy.sgl1";
pub const EVAL_CSV: &str = "ppo_eval.csv";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const SCATTER_CSV: &str = "scatter.csv";
pub const SCATTER_SVG: &str = "scatter.svg";
pub const PROFILE_CSV: &str = "power_profile.csv";
pub const PROFILE_SVG: &str = "power_profile.svg";

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// History table of the BO trial for the `i`-th ω (0-based).
pub fn bayes_history_name(i: usize) -> String {
    format!("omega_{:02}.csv", i + 1)
}

pub fn checkpoint_name(update: usize) -> String {
    format!("update_{update:05}.sgl1")
}

/// Runs the selected pipeline into `config.out` and writes the manifest.
pub fn run(config: &ExperimentConfig) -> RunResult<RunManifest> {
    config.validate()?;
    let kind = config.kind()?;
    let out = config.out.clone().expect("validated");
    let started = now();
    prepare_out_dir(&out, config)?;

    let mut notes = Vec::new();
    let failures = match kind {
        Kind::Grid => run_grid(config, &out, &mut notes)?,
        Kind::Bayes => run_bayes(config, &out, &mut notes)?,
        Kind::PpoTrain => run_train(config, &out, &mut notes)?,
        Kind::PpoEval => run_eval(config, &out, &mut notes)?,
        Kind::Compare => run_compare(config, &out, &mut notes)?,
    };

    let manifest = RunManifest {
        kind,
        config: config.snapshot(),
        code_version: CODE_VERSION.to_string(),
        seed: config.seed,
        workers: config.workers,
        started,
        finished: now(),
        artifacts: manifest::collect_artifacts(&out)?,
        failures,
        notes,
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| RunError::runtime(e.to_string()))?;
    write_atomic(&out.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Creates a fresh output directory, or reopens one for `--resume` after
/// checking it holds the same experiment.
fn prepare_out_dir(out: &Path, config: &ExperimentConfig) -> RunResult<()> {
    let snapshot = config.snapshot();
    if !out.exists() || fsio::is_empty_dir(out)? {
        fs::create_dir_all(out)?;
        return write_atomic(&out.join(SNAPSHOT_FILE), snapshot.as_bytes());
    }
    if !out.is_dir() {
        return Err(RunError::usage(format!("output path {} is not a directory", out.display())));
    }
    if !config.resume {
        return Err(RunError::usage(format!(
            "output directory {} is not empty; pass --resume to continue it or choose another --out",
            out.display()
        )));
    }
    let existing = fs::read_to_string(out.join(SNAPSHOT_FILE)).map_err(|_| {
        RunError::usage(format!("refusing to resume {}: it holds no {SNAPSHOT_FILE}", out.display()))
    })?;
    if existing != snapshot {
        return Err(RunError::usage(format!(
            "refusing to resume {}: its {SNAPSHOT_FILE} describes a different experiment",
            out.display()
        )));
    }
    let manifest = out.join(MANIFEST_FILE);
    if manifest.exists() {
        fs::remove_file(manifest)?;
    }
    Ok(())
}

fn pool(workers: usize) -> RunResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().map_err(|e| RunError::runtime(e.to_string()))
}

fn write_table(path: &Path, schema: table::Schema, header: &[String], rows: &[Vec<String>]) -> RunResult<()> {
    write_atomic(path, &table::to_bytes(schema, header, rows)?)
}

fn recorded_failure(rec: &GaitRecord) -> sgl_core::Error {
    match rec.status {
        Status::Diverged => sgl_core::Error::GaitDiverged { params: rec.params, sim_time: f64::NAN },
        _ => sgl_core::Error::Io(format!("evaluation {} failed in an earlier session", rec.index)),
    }
}

/// Rows already in a partially written grid table. Anything after the last
/// complete line is cut off.
fn resume_grid_table(path: &Path, header: &[String]) -> RunResult<BTreeMap<usize, GridOutcome>> {
    let text = fs::read_to_string(path)?;
    let keep = text.rfind('\n').map_or(0, |i| i + 1);
    if keep < text.len() {
        let f = fs::OpenOptions::new().write(true).open(path)?;
        f.set_len(keep as u64)?;
    }
    let t = table::parse(&text[..keep], table::GRID, Some(header))?;
    let mut done = BTreeMap::new();
    for (expected, rec) in records::parse_grid(&t)?.into_iter().enumerate() {
        if rec.index != expected {
            return Err(RunError::runtime(format!("{}: rows are not in grid order", path.display())));
        }
        let result = match (&rec.status, &rec.result) {
            (Status::Ok, Some(r)) => Ok(r.clone()),
            _ => Err(recorded_failure(&rec)),
        };
        done.insert(rec.index, GridOutcome { index: rec.index, params: rec.params, result });
    }
    Ok(done)
}

fn run_grid(config: &ExperimentConfig, out: &Path, notes: &mut Vec<String>) -> RunResult<FailureCounts> {
    let spec = config.grid.spec();
    let nj = config.robot.num_joints();
    let header = records::grid_header(nj);
    let path = out.join(GRID_CSV);
    let (completed, mut writer) = if path.exists() {
        let done = resume_grid_table(&path, &header)?;
        (done, TableWriter::append(&path)?)
    } else {
        (BTreeMap::new(), TableWriter::create(&path, table::GRID, &header)?)
    };
    if !completed.is_empty() {
        log::info!("resuming grid with {} of {} points done", completed.len(), spec.len());
    }

    let outcomes = grid_search_resumable(&spec, &config.robot, config.workers, &completed, |o| {
        let rec = GaitRecord { index: o.index, params: o.params, status: Status::of(&o.result), result: o.result.as_ref().ok().cloned() };
        if o.index % 500 == 0 {
            log::info!("grid point {}/{}", o.index + 1, spec.len());
        }
        writer.write_row(&records::grid_row(&rec, nj)).map_err(|e| sgl_core::Error::Io(e.to_string()))
    })?;

    let mut failures = FailureCounts::default();
    let mut points = Vec::new();
    for o in &outcomes {
        failures.add(Status::of(&o.result));
        if let Ok(EvalResult { mean_velocity, mean_power, appv: Some(_), .. }) = &o.result {
            points.push((*mean_velocity, *mean_power));
        }
    }
    let frontier = efficiency_frontier(&points, config.grid.frontier_bin);
    let rows: Vec<Vec<String>> = frontier.iter().map(|(v, p)| vec![v.to_string(), p.to_string()]).collect();
    write_table(&out.join(FRONTIER_CSV), table::FRONTIER, &["velocity".into(), "power".into()], &rows)?;
    notes.push(format!(
        "{} grid points, each scored over the last 800 of 1000 control steps; frontier bin {} m/s",
        outcomes.len(),
        config.grid.frontier_bin
    ));
    Ok(failures)
}

fn run_bayes(config: &ExperimentConfig, out: &Path, notes: &mut Vec<String>) -> RunResult<FailureCounts> {
    let b = &config.bayes;
    let nj = config.robot.num_joints();
    let dir = out.join(BAYES_DIR);
    fs::create_dir_all(&dir)?;
    let model = RobotModel::build(config.robot.clone())?;
    let bounds = b.bounds();
    let bo = b.bo_config();
    let header = records::bayes_header(nj);

    let pending: Vec<usize> = (0..b.omega_values.len()).filter(|&i| !dir.join(bayes_history_name(i)).exists()).collect();
    let pool = pool(config.workers)?;
    for chunk in pending.chunks(config.workers) {
        let results: Vec<_> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&i| (i, bayes_optimize(b.omega_values[i], &bounds, &bo, &model, config.seed.wrapping_add(i as u64))))
                .collect()
        });
        for (i, result) in results {
            let trial = result?;
            log::info!("bayes trial ω = {}: best APPV {}", trial.omega, trial.best_objective);
            let rows: Vec<Vec<String>> = trial
                .history
                .iter()
                .enumerate()
                .map(|(k, e)| {
                    let status = if e.result.is_some() { Status::Ok } else { Status::Diverged };
                    let rec = BayesRecord {
                        iteration: k,
                        params: e.params,
                        objective: e.objective,
                        penalized: e.penalized,
                        status,
                        result: e.result.clone(),
                    };
                    records::bayes_row(&rec, nj)
                })
                .collect();
            write_table(&dir.join(bayes_history_name(i)), table::BAYES, &header, &rows)?;
        }
    }

    let mut failures = FailureCounts::default();
    let mut best_rows = Vec::new();
    for (i, &omega) in b.omega_values.iter().enumerate() {
        let t = table::read(&dir.join(bayes_history_name(i)), table::BAYES, Some(&header))?;
        let history = records::parse_bayes(&t)?;
        history.iter().for_each(|r| failures.add(r.status));
        let best = history
            .iter()
            .filter(|r| !r.penalized)
            .min_by(|x, y| x.objective.total_cmp(&y.objective));
        let mut row = vec![omega.to_string()];
        match best.and_then(|r| r.result.as_ref().map(|res| (r, res))) {
            Some((r, res)) => row.extend([
                r.params.y.to_string(),
                r.params.amplitude_deg.to_string(),
                r.params.lambda_deg.to_string(),
                r.objective.to_string(),
                res.mean_velocity.to_string(),
                res.mean_power.to_string(),
            ]),
            None => row.extend(std::iter::repeat(String::new()).take(6)),
        }
        best_rows.push(row);
    }
    let best_header: Vec<String> =
        ["omega", "y", "amplitude_deg", "lambda_deg", "appv", "velocity", "power"].map(String::from).to_vec();
    write_table(&out.join(BAYES_BEST_CSV), table::BAYES_BEST, &best_header, &best_rows)?;
    notes.push(format!(
        "{} trials of {} + {} evaluations; trial i uses seed {} + i",
        b.omega_values.len(),
        b.n_explore,
        b.n_exploit,
        config.seed
    ));
    Ok(failures)
}

fn run_train(config: &ExperimentConfig, out: &Path, notes: &mut Vec<String>) -> RunResult<FailureCounts> {
    let ckdir = out.join(CHECKPOINT_DIR);
    if ckdir.exists() {
        fs::remove_dir_all(&ckdir)?;
    }
    fs::create_dir_all(&ckdir)?;
    let header: Vec<String> = EpisodeRecord::CSV_HEADER.split(',').map(String::from).collect();
    let mut log_writer = TableWriter::create(&out.join(TRAIN_LOG_CSV), table::TRAIN_LOG, &header)?;
    let mut written = 0;
    let mut checkpoints = 0;
    let outcome = train(&config.robot, &config.train, config.seed, |p| {
        let io = |e: RunError| sgl_core::Error::Io(e.to_string());
        for ep in &p.episodes[written..] {
            log_writer.write_row(&ep.to_csv_row().split(',').map(String::from).collect::<Vec<_>>()).map_err(io)?;
        }
        written = p.episodes.len();
        if p.checkpoint_due {
            write_atomic(&ckdir.join(checkpoint_name(p.update)), &p.policy.to_bytes()).map_err(io)?;
            checkpoints += 1;
        }
        if p.update % 10 == 0 || p.update == p.num_updates {
            log::info!("update {}/{} ({} steps)", p.update, p.num_updates, p.steps_done);
        }
        Ok(())
    })?;
    write_atomic(&out.join(POLICY_FILE), &outcome.policy.to_bytes())?;
    notes.push(format!(
        "{} updates of {} steps, {} episodes, {checkpoints} intermediate checkpoints; a resumed run retrains from the first update",
        config.train.num_updates(),
        config.train.steps_per_update,
        outcome.log.len()
    ));
    Ok(FailureCounts::default())
}

fn run_eval(config: &ExperimentConfig, out: &Path, notes: &mut Vec<String>) -> RunResult<FailureCounts> {
    let ck = config.checkpoint.as_ref().expect("validated");
    if !ck.is_file() {
        return Err(RunError::usage(format!("checkpoint {} does not exist", ck.display())));
    }
    let policy = Policy::load(ck)?;
    let model = RobotModel::build(config.robot.clone())?;
    let targets = evaluation_targets();
    let results: Vec<sgl_core::Result<EvalResult>> =
        pool(config.workers)?.install(|| targets.par_iter().map(|&t| evaluate_target(&policy, &model, t)).collect());
    let nj = config.robot.num_joints();
    let mut failures = FailureCounts::default();
    let rows: Vec<Vec<String>> = targets
        .iter()
        .zip(&results)
        .map(|(&target, r)| {
            let status = Status::of(r);
            failures.add(status);
            records::eval_row(&EvalRecord { target, status, result: r.as_ref().ok().cloned() }, nj)
        })
        .collect();
    write_table(&out.join(EVAL_CSV), table::EVAL, &records::eval_header(nj), &rows)?;
    notes.push(format!(
        "{} target velocities from {} to {} m/s in 0.005 steps; the inclusive range holds 46 points, the lower endpoint 0.025 is excluded",
        targets.len(),
        targets[0],
        targets[targets.len() - 1]
    ));
    notes.push(format!("checkpoint {} sha256 {}", ck.display(), fsio::sha256_file(ck)?));
    Ok(failures)
}

fn input(path: &Option<PathBuf>, field: &str) -> RunResult<PathBuf> {
    let p = path.clone().ok_or_else(|| RunError::usage(format!("missing `{field}`")))?;
    if !p.exists() {
        return Err(RunError::usage(format!("`{field}` {} does not exist", p.display())));
    }
    Ok(p)
}

/// All evaluations of every BO history table in `dir`, in file-name order.
pub fn read_bayes_dir(dir: &Path, num_joints: usize) -> RunResult<Vec<BayesRecord>> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    names.retain(|p| p.extension().is_some_and(|x| x == "csv"));
    names.sort();
    let header = records::bayes_header(num_joints);
    let mut all = Vec::new();
    for p in names {
        all.extend(records::parse_bayes(&table::read(&p, table::BAYES, Some(&header))?)?);
    }
    Ok(all)
}

fn scatter_point(r: &EvalResult) -> ScatterPoint {
    ScatterPoint { velocity: r.mean_velocity, power: r.mean_power, appv: r.appv }
}

/// Lowest-APPV result within `window` of `velocity`.
fn best_result<'a>(results: &[&'a EvalResult], velocity: f64, window: f64) -> Option<&'a EvalResult> {
    let points: Vec<OperatingPoint> = results.iter().filter_map(|r| OperatingPoint::from_result(r)).collect();
    let best = compare::best_within(&points, velocity, window)?;
    results.iter().copied().find(|r| OperatingPoint::from_result(r) == Some(best))
}

fn run_compare(config: &ExperimentConfig, out: &Path, notes: &mut Vec<String>) -> RunResult<FailureCounts> {
    let c = &config.compare;
    let nj = config.robot.num_joints();
    let grid_path = input(&c.grid_csv, "compare.grid_csv")?;
    let eval_path = input(&c.ppo_eval_csv, "compare.ppo_eval_csv")?;
    let grid = records::parse_grid(&table::read(&grid_path, table::GRID, Some(&records::grid_header(nj)))?)?;
    let evals = records::parse_eval(&table::read(&eval_path, table::EVAL, Some(&records::eval_header(nj)))?)?;
    let bayes = match &c.bayes_dir {
        Some(_) => read_bayes_dir(&input(&c.bayes_dir, "compare.bayes_dir")?, nj)?,
        None => Vec::new(),
    };

    let grid_results: Vec<&EvalResult> = grid.iter().filter_map(|r| r.result.as_ref()).collect();
    let bayes_results: Vec<&EvalResult> = bayes.iter().filter(|r| !r.penalized).filter_map(|r| r.result.as_ref()).collect();
    let to_points = |rs: &[&EvalResult]| rs.iter().filter_map(|r| OperatingPoint::from_result(r)).collect::<Vec<_>>();
    let grid_points = to_points(&grid_results);
    let bayes_points = to_points(&bayes_results);
    let ppo: Vec<(f64, Option<OperatingPoint>)> =
        evals.iter().map(|e| (e.target, e.result.as_ref().and_then(OperatingPoint::from_result))).collect();

    let rows = compare::compare(&ppo, &grid_points, &bayes_points, c.window);
    write_table(&out.join(COMPARISON_CSV), table::COMPARE, &compare::report_header(), &compare::report_rows(&rows))?;

    let frontier =
        efficiency_frontier(&grid_points.iter().map(|p| (p.velocity, p.power)).collect::<Vec<_>>(), config.grid.frontier_bin);
    let frontier_r = compare::correlation(&frontier);
    let ppo_r = compare::correlation(&ppo.iter().filter_map(|(_, p)| p.map(|p| (p.velocity, p.power))).collect::<Vec<_>>());
    let text = compare::summary(&rows, c.window, c.reference_velocity, frontier_r, ppo_r);
    write_atomic(&out.join(SUMMARY_TXT), text.as_bytes())?;

    let ppo_results: Vec<&EvalResult> = evals.iter().filter_map(|e| e.result.as_ref()).collect();
    let series = [
        (Controller::Grid, &grid_results),
        (Controller::Bayes, &bayes_results),
        (Controller::Ppo, &ppo_results),
    ]
    .into_iter()
    .map(|(controller, rs)| ScatterSeries {
        controller,
        points: rs.iter().filter(|r| r.appv.is_some()).map(|r| scatter_point(r)).collect(),
    })
    .collect::<Vec<_>>();
    let scatter = charts::emit_scatter(&series)?;
    write_atomic(&out.join(SCATTER_CSV), &scatter.csv)?;
    write_atomic(&out.join(SCATTER_SVG), scatter.svg.as_bytes())?;

    let v = c.profile_velocity;
    let ppo_at = evals
        .iter()
        .filter(|e| e.result.is_some())
        .min_by(|a, b| (a.target - v).abs().total_cmp(&(b.target - v).abs()))
        .and_then(|e| e.result.as_ref());
    let mut bars = Vec::new();
    for (controller, found) in [
        (Controller::Grid, best_result(&grid_results, v, c.window)),
        (Controller::Bayes, best_result(&bayes_results, v, c.window)),
        (Controller::Ppo, ppo_at),
    ] {
        match found {
            Some(r) => bars.push((controller, r.per_joint_power.clone())),
            None => notes.push(format!("power profile: no {} point near {v} m/s", controller.name())),
        }
    }
    if !bars.is_empty() {
        let profile = charts::emit_power_profile(&bars, &format!("{v} m/s"))?;
        write_atomic(&out.join(PROFILE_CSV), &profile.csv)?;
        write_atomic(&out.join(PROFILE_SVG), profile.svg.as_bytes())?;
    }

    let (won, comparable) = compare::wins(&rows);
    notes.push(format!("policy at or below the best grid APPV in {won} of {comparable} comparable windows (±{} m/s)", c.window));
    for (name, p) in [("grid", &grid_path), ("ppo_eval", &eval_path)] {
        notes.push(format!("input {name} {} sha256 {}", p.display(), fsio::sha256_file(p)?));
    }
    Ok(FailureCounts::default())
}
