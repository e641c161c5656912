//! Experiment execution: fans (algorithm, seed) jobs out over a bounded
//! worker pool and writes every artifact under the configured output
//! directory.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use super::{
    checkpoints, write_aggregate_csv, write_run_csv, CheckpointRow, ExperimentConfig, Mode,
    RunReport,
};
use crate::click::{em_fit_ubm, read_sessions_tsv};
use crate::env::{
    build_attractiveness_matrix, make_context, truncated_svd, write_factorization, write_matrix,
    GroundTruthWorld,
};
use crate::error::{Error, Result};
use crate::model::PositionWeights;
use crate::policy::{Algorithm, Policy};
use crate::replay::{replay_evaluate, write_trace_csv, ReplayDataset};
use crate::rng;

/// Runs the experiment a config describes and returns one report per
/// (algorithm, seed) pair, ordered by the config's algorithm list and then
/// its seed list.
///
/// Every output lands under `config.out`: an echo of the config, one CSV
/// and one policy snapshot per run, and a cross-seed `aggregate.csv`.
/// Results are byte-identical across reruns and thread counts because each
/// run draws from its own seed-derived stream. The fit-weights and
/// svd-features modes produce files only and return no reports.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunReport>> {
    config.validate()?;
    fs::create_dir_all(&config.out)?;
    let echo = toml::to_string_pretty(config).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(config.out.join("config.toml"), echo)?;

    let reports = match config.mode {
        Mode::Synthetic => run_synthetic(config)?,
        Mode::Replay => run_replay(config)?,
        Mode::FitWeights => run_fit_weights(config)?,
        Mode::SvdFeatures => run_svd_features(config)?,
    };
    if !reports.is_empty() {
        let file = fs::File::create(config.out.join("aggregate.csv"))?;
        write_aggregate_csv(&reports, BufWriter::new(file))?;
    }
    Ok(reports)
}

fn worker_count(configured: usize, jobs: usize) -> usize {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let wanted = if configured == 0 { cores } else { configured };
    wanted.min(jobs).max(1)
}

/// Runs `work` over every job on a shared-counter worker pool and returns
/// the results in job order. Ordering is deterministic regardless of which
/// worker picks up which job.
fn run_jobs<F>(jobs: &[Job], threads: usize, work: F) -> Result<Vec<RunReport>>
where
    F: Fn(&Job) -> Result<RunReport> + Sync,
{
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    let mut slots: Vec<Option<Result<RunReport>>> = jobs.iter().map(|_| None).collect();
    std::thread::scope(|scope| {
        for _ in 0..worker_count(threads, jobs.len()) {
            let tx = tx.clone();
            let next = &next;
            let work = &work;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                if tx.send((i, work(job))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, result) in rx {
            slots[i] = Some(result);
        }
    });

    let mut reports = Vec::with_capacity(jobs.len());
    let mut failures = Vec::new();
    for (job, slot) in jobs.iter().zip(slots) {
        match slot.expect("every job reports exactly once") {
            Ok(report) => reports.push(report),
            Err(e) => failures.push(format!("{} seed {}: {e}", job.algorithm, job.seed)),
        }
    }
    if failures.is_empty() {
        Ok(reports)
    } else {
        Err(Error::invalid(failures.join("; ")))
    }
}

struct Job {
    algorithm: Algorithm,
    seed: u64,
    /// Index into the per-seed shared state (worlds in synthetic mode).
    seed_index: usize,
}

fn job_grid(config: &ExperimentConfig) -> Vec<Job> {
    let mut jobs = Vec::with_capacity(config.algorithms.len() * config.seeds.len());
    for &algorithm in &config.algorithms {
        for (seed_index, &seed) in config.seeds.iter().enumerate() {
            jobs.push(Job { algorithm, seed, seed_index });
        }
    }
    jobs
}

fn run_dirs(out: &Path) -> Result<(PathBuf, PathBuf)> {
    let runs = out.join("runs");
    let snapshots = out.join("snapshots");
    fs::create_dir_all(&runs)?;
    fs::create_dir_all(&snapshots)?;
    Ok((runs, snapshots))
}

fn run_synthetic(config: &ExperimentConfig) -> Result<Vec<RunReport>> {
    let (runs_dir, snaps_dir) = run_dirs(&config.out)?;
    let weights = config.resolve_weights()?;

    // One world per seed, shared by every algorithm at that seed so
    // cross-algorithm comparisons are paired. Generated up front (and
    // snapshotted once) rather than inside the racing jobs.
    let mut worlds = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let world =
            GroundTruthWorld::generate(config.d, config.m, weights.clone(), config.t, seed)?;
        fs::write(
            snaps_dir.join(format!("world-seed{seed}.json")),
            world.to_snapshot_json()?,
        )?;
        worlds.push(world);
    }

    let grid = checkpoints(config.t, &config.extra_checkpoints);
    let jobs = job_grid(config);
    run_jobs(&jobs, config.threads, |job| {
        synthetic_run(config, &weights, &worlds[job.seed_index], job, &grid, &runs_dir, &snaps_dir)
    })
}

fn synthetic_run(
    config: &ExperimentConfig,
    weights: &PositionWeights,
    world: &GroundTruthWorld,
    job: &Job,
    grid: &[u64],
    runs_dir: &Path,
    snaps_dir: &Path,
) -> Result<RunReport> {
    let start = Instant::now();
    let mut policy = Policy::new(job.algorithm, config.d, weights.clone(), config.t)?;
    let mut rng = rng::substream(job.seed, job.algorithm.tag(), 0);
    let mut ctr = crate::replay::CtrAccumulator::new();
    let mut cum_regret = 0.0;
    let mut rows = Vec::with_capacity(grid.len());
    let mut next_cp = 0;
    for round in 1..=config.t {
        let outcome = crate::env::run_round(world, &mut policy, config.k, &mut rng)?;
        let clicks: Vec<f64> =
            outcome.clicks.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
        ctr.observe(&clicks, outcome.clicks.iter().any(|&c| c));
        cum_regret += outcome.regret;
        if next_cp < grid.len() && round == grid[next_cp] {
            let bound = policy.alpha_params().regret_bound(round)?;
            rows.push(CheckpointRow {
                t: round,
                ctr_sum: ctr.ctr_sum(),
                ctr_set: ctr.ctr_set(),
                regret: cum_regret,
                bound: bound.leading,
                bound_plus_one: bound.plus_one,
            });
            next_cp += 1;
        }
    }
    finish_run(job, rows, &policy, start, runs_dir, snaps_dir)
}

fn run_replay(config: &ExperimentConfig) -> Result<Vec<RunReport>> {
    let (runs_dir, snaps_dir) = run_dirs(&config.out)?;
    let weights = config.resolve_weights()?;
    let log = config.log.as_ref().expect("validated: replay mode has a log");
    let mut sessions = read_sessions_tsv(BufReader::new(fs::File::open(log)?))?;

    // Contextual policies need feature vectors, which raw logs don't
    // carry. Derive them from the log itself: factorize its estimated
    // attractiveness matrix and concatenate the user row with the item
    // row, giving each displayed arm a d-dimensional context.
    if config.algorithms.iter().any(|a| a.is_contextual()) {
        let matrix = build_attractiveness_matrix(&sessions, &weights)?;
        let fact = truncated_svd(matrix.matrix(), config.d / 2, 10, 2, config.seeds[0])?;
        write_factorization(config.out.join("features.bin"), &fact)?;
        sessions = sessions
            .into_iter()
            .map(|s| {
                let user = matrix
                    .user_index(s.user())
                    .expect("user indexed from this same log");
                let contexts = s
                    .displayed()
                    .iter()
                    .map(|&arm| {
                        let item = matrix
                            .arm_index(arm)
                            .expect("arm indexed from this same log");
                        make_context(user, item, &fact)
                    })
                    .collect::<Result<Vec<_>>>()?;
                s.with_contexts(contexts)
            })
            .collect::<Result<Vec<_>>>()?;
    }
    let dataset = ReplayDataset::from_sessions(&sessions)?;

    let grid = checkpoints(config.t, &config.extra_checkpoints);
    let jobs = job_grid(config);
    run_jobs(&jobs, config.threads, |job| {
        replay_run(config, &weights, &dataset, job, &grid, &runs_dir, &snaps_dir)
    })
}

fn replay_run(
    config: &ExperimentConfig,
    weights: &PositionWeights,
    dataset: &ReplayDataset,
    job: &Job,
    grid: &[u64],
    runs_dir: &Path,
    snaps_dir: &Path,
) -> Result<RunReport> {
    let start = Instant::now();
    let mut policy = Policy::new(job.algorithm, config.d, weights.clone(), config.t)?;
    let seed = rng::derive_seed(job.seed, job.algorithm.tag(), 0);
    let outcome = replay_evaluate(&mut policy, dataset, weights, config.k, config.t, seed)?;

    let trace_path = runs_dir.join(format!("{}-seed{}-trace.csv", job.algorithm, job.seed));
    write_trace_csv(&outcome.trace, BufWriter::new(fs::File::create(trace_path)?))?;

    // Offline evaluation has no ground truth to measure regret against, so
    // the regret and bound columns stay zero; the CTRs are cumulative over
    // the evaluated rounds up to each checkpoint.
    let rows = grid
        .iter()
        .map(|&cp| {
            let last = outcome.trace.iter().rev().find(|r| r.round <= cp);
            let (ctr_sum, ctr_set) = last.map_or((0.0, 0.0), |r| (r.cum_ctr_sum, r.cum_ctr_set));
            CheckpointRow { t: cp, ctr_sum, ctr_set, regret: 0.0, bound: 0.0, bound_plus_one: 0.0 }
        })
        .collect();
    finish_run(job, rows, &policy, start, runs_dir, snaps_dir)
}

fn finish_run(
    job: &Job,
    rows: Vec<CheckpointRow>,
    policy: &Policy,
    start: Instant,
    runs_dir: &Path,
    snaps_dir: &Path,
) -> Result<RunReport> {
    let csv_path = runs_dir.join(format!("{}-seed{}.csv", job.algorithm, job.seed));
    write_run_csv(&rows, BufWriter::new(fs::File::create(csv_path)?))?;
    let snapshot_path = snaps_dir.join(format!("{}-seed{}.json", job.algorithm, job.seed));
    fs::write(&snapshot_path, policy.to_snapshot_json()?)?;
    Ok(RunReport {
        algorithm: job.algorithm,
        seed: job.seed,
        rows,
        wall_clock: start.elapsed(),
        snapshot_path,
    })
}

fn run_fit_weights(config: &ExperimentConfig) -> Result<Vec<RunReport>> {
    let log = config.log.as_ref().expect("validated: fit-weights mode has a log");
    let sessions = read_sessions_tsv(BufReader::new(fs::File::open(log)?))?;
    let fit = em_fit_ubm(&sessions, config.k)?;

    fs::write(
        config.out.join("weights.json"),
        serde_json::to_string_pretty(&fit.weights)?,
    )?;

    let mut attr = BufWriter::new(fs::File::create(config.out.join("attractiveness.csv"))?);
    writeln!(attr, "arm,attractiveness")?;
    for (arm, gamma) in fit.attractiveness.iter() {
        writeln!(attr, "{arm},{gamma:.16e}")?;
    }

    let mut trace = BufWriter::new(fs::File::create(config.out.join("em-trace.csv"))?);
    writeln!(trace, "iteration,log_likelihood")?;
    for (i, ll) in fit.ll_trace.iter().enumerate() {
        writeln!(trace, "{i},{ll:.16e}")?;
    }

    if !fit.monotonicity_warnings.is_empty() {
        fs::write(
            config.out.join("warnings.txt"),
            fit.monotonicity_warnings.join("\n") + "\n",
        )?;
    }
    Ok(Vec::new())
}

fn run_svd_features(config: &ExperimentConfig) -> Result<Vec<RunReport>> {
    let weights = config.resolve_weights()?;
    let log = config.log.as_ref().expect("validated: svd-features mode has a log");
    let sessions = read_sessions_tsv(BufReader::new(fs::File::open(log)?))?;
    let matrix = build_attractiveness_matrix(&sessions, &weights)?;
    write_matrix(config.out.join("matrix.bin"), matrix.matrix())?;
    let fact = truncated_svd(matrix.matrix(), config.d / 2, 10, 2, config.seeds[0])?;
    write_factorization(config.out.join("features.bin"), &fact)?;
    Ok(Vec::new())
}
