//! Experiment orchestration: declarative configs, seeded multi-run
//! execution, metric aggregation, and CSV emission.
//!
//! A single TOML file describes an experiment — what to run (`mode`),
//! which algorithms, the problem shape (`k`, `m`, `d`, `t`), where the
//! examination weights come from, and the seeds. [`run_experiment`]
//! executes every (algorithm, seed) pair on a bounded worker pool and
//! writes one CSV per run plus a cross-seed aggregate; outputs are
//! bit-identical across reruns and across serial/parallel execution
//! because every random stream is derived from the configured seeds.
//!
//! Checkpoints follow a logarithmic cadence (t = 100·2^i) plus any
//! explicitly requested rounds and the final round, so regret curves stay
//! readable on log axes without storing every round.

mod runner;

pub use runner::run_experiment;

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PositionWeights;
use crate::policy::Algorithm;

/// What an experiment produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Play bandit rounds against a generated ground-truth world.
    Synthetic,
    /// Evaluate policies offline against a logged session file.
    Replay,
    /// Fit examination weights and attractiveness from a logged session file.
    FitWeights,
    /// Factorize the log's attractiveness matrix into feature vectors.
    SvdFeatures,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self {
            Mode::Synthetic => "synthetic",
            Mode::Replay => "replay",
            Mode::FitWeights => "fit-weights",
            Mode::SvdFeatures => "svd-features",
        };
        f.write_str(tag)
    }
}

/// Where the examination-weight table comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightSource {
    /// `w[k][k'] = decay^(k−k')` for a decay in (0, 1].
    Geometric { decay: f64 },
    /// A JSON file holding the list length and the lower-triangular table.
    File { path: PathBuf },
    /// Fit by expectation–maximization from a logged session file.
    Em { log: PathBuf },
}

impl Default for WeightSource {
    fn default() -> Self {
        WeightSource::Geometric { decay: 0.9 }
    }
}

/// Slack applied by reporting checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative slack allowed when checking measured regret against the
    /// theoretical bound: a checkpoint passes when
    /// `regret ≤ bound · (1 + bound_slack)`.
    pub bound_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { bound_slack: 0.0 }
    }
}

/// Declarative experiment description, readable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Policies to run; every algorithm runs once per seed.
    pub algorithms: Vec<Algorithm>,
    /// List length (positions per round).
    pub k: usize,
    /// Arm-pool size for synthetic worlds.
    pub m: usize,
    /// Feature dimension. Replay and factorization modes use `d/2` as the
    /// rank of the user/item factors, so it must be even there.
    pub d: usize,
    /// Rounds per run.
    pub t: u64,
    /// One independent run per seed; worlds are shared across algorithms
    /// at the same seed so comparisons are paired.
    pub seeds: Vec<u64>,
    /// Worker threads; 0 means one per available core.
    pub threads: usize,
    /// Output directory (created if missing).
    pub out: PathBuf,
    /// Rounds to report in addition to the logarithmic cadence.
    pub extra_checkpoints: Vec<u64>,
    /// Logged sessions (TSV) for the replay, fit-weights, and svd-features
    /// modes.
    pub log: Option<PathBuf>,
    pub weights: WeightSource,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Synthetic,
            algorithms: vec![Algorithm::UbmLinUcb, Algorithm::C2Ucb],
            k: 3,
            m: 20,
            d: 5,
            t: 10_000,
            seeds: (1..=10).collect(),
            threads: 0,
            out: PathBuf::from("experiment-out"),
            extra_checkpoints: Vec::new(),
            log: None,
            weights: WeightSource::default(),
            tolerances: Tolerances::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a TOML config.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads and parses a TOML config file.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// The default configuration as a TOML document.
    pub fn dump_defaults() -> String {
        toml::to_string_pretty(&Self::default()).expect("defaults serialize")
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.algorithms.is_empty() {
            problems.push("algorithms: at least one algorithm is required".into());
        }
        let mut seen = BTreeSet::new();
        for a in &self.algorithms {
            if !seen.insert(a.tag()) {
                problems.push(format!("algorithms: {a} is listed more than once"));
            }
        }
        if self.k == 0 {
            problems.push("k: the list length must be at least 1".into());
        }
        if self.t == 0 {
            problems.push("t: the horizon must be at least 1".into());
        }
        if self.d == 0 {
            problems.push("d: the feature dimension must be at least 1".into());
        }
        if self.seeds.is_empty() {
            problems.push("seeds: at least one seed is required".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            problems.push("seeds: duplicate seeds would repeat identical runs".into());
        }
        for &c in &self.extra_checkpoints {
            if c == 0 || c > self.t {
                problems.push(format!(
                    "extra_checkpoints: {c} is outside the horizon 1..={}",
                    self.t
                ));
            }
        }
        if !(self.tolerances.bound_slack.is_finite() && self.tolerances.bound_slack >= 0.0) {
            problems.push(format!(
                "tolerances: bound_slack {} must be non-negative and finite",
                self.tolerances.bound_slack
            ));
        }
        match &self.weights {
            WeightSource::Geometric { decay } => {
                if !(*decay > 0.0 && *decay <= 1.0) {
                    problems.push(format!("weights: decay {decay} must lie in (0, 1]"));
                }
            }
            WeightSource::File { path } => {
                if !path.is_file() {
                    problems.push(format!("weights: file {} does not exist", path.display()));
                }
            }
            WeightSource::Em { log } => {
                if !log.is_file() {
                    problems.push(format!("weights: log {} does not exist", log.display()));
                }
            }
        }
        match self.mode {
            Mode::Synthetic => {
                if self.m < self.k {
                    problems.push(format!(
                        "m: the pool size {} must be at least the list length {}",
                        self.m, self.k
                    ));
                }
            }
            Mode::Replay | Mode::FitWeights | Mode::SvdFeatures => {
                match &self.log {
                    None => problems.push(format!(
                        "log: {} mode needs a logged session file",
                        self.mode
                    )),
                    Some(p) if !p.is_file() => {
                        problems.push(format!("log: {} does not exist", p.display()));
                    }
                    Some(_) => {}
                }
                let needs_even_d = self.mode == Mode::SvdFeatures
                    || (self.mode == Mode::Replay
                        && self.algorithms.iter().any(|a| a.is_contextual()));
                if needs_even_d && !self.d.is_multiple_of(2) {
                    problems.push(format!(
                        "d: {} must be even in {} mode (features concatenate two rank-d/2 rows)",
                        self.d, self.mode
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Materializes the examination weights this config asks for.
    pub fn resolve_weights(&self) -> Result<PositionWeights> {
        match &self.weights {
            WeightSource::Geometric { decay } => PositionWeights::geometric(self.k, *decay),
            WeightSource::File { path } => {
                let w: PositionWeights = serde_json::from_str(&fs::read_to_string(path)?)?;
                if w.k() != self.k {
                    return Err(Error::invalid(format!(
                        "weight file {} covers {} positions but the config uses k = {}",
                        path.display(),
                        w.k(),
                        self.k
                    )));
                }
                Ok(w)
            }
            WeightSource::Em { log } => {
                let file = fs::File::open(log)?;
                let sessions = crate::click::read_sessions_tsv(std::io::BufReader::new(file))?;
                Ok(crate::click::em_fit_ubm(&sessions, self.k)?.weights)
            }
        }
    }
}

/// The reporting rounds: 100·2^i below the horizon, plus requested extras,
/// plus the horizon itself. Strictly increasing.
pub fn checkpoints(t: u64, extra: &[u64]) -> Vec<u64> {
    let mut set: BTreeSet<u64> = extra.iter().copied().filter(|&c| c >= 1 && c <= t).collect();
    let mut c = 100u64;
    while c < t {
        set.insert(c);
        match c.checked_mul(2) {
            Some(next) => c = next,
            None => break,
        }
    }
    set.insert(t);
    set.into_iter().collect()
}

/// Cumulative metrics at one reporting round.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRow {
    pub t: u64,
    pub ctr_sum: f64,
    pub ctr_set: f64,
    /// Cumulative position-weighted regret; 0 in replay mode, where the
    /// environment's ground truth is unknown.
    pub regret: f64,
    /// Leading theoretical regret-bound term at `t`; 0 in replay mode.
    pub bound: f64,
    /// The same bound including its additive constant.
    pub bound_plus_one: f64,
}

/// Everything one (algorithm, seed) run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub rows: Vec<CheckpointRow>,
    pub wall_clock: Duration,
    pub snapshot_path: PathBuf,
}

const RUN_CSV_HEADER: &str = "t,ctr_sum,ctr_set,regret,bound,bound_plus_one";

/// Writes one run's checkpoint rows as CSV (17-significant-digit floats).
pub fn write_run_csv<W: Write>(rows: &[CheckpointRow], mut out: W) -> Result<()> {
    writeln!(out, "{RUN_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.ctr_sum, r.ctr_set, r.regret, r.bound, r.bound_plus_one
        )?;
    }
    Ok(())
}

/// Reads rows written by [`write_run_csv`].
pub fn read_run_csv<R: BufRead>(input: R) -> Result<Vec<CheckpointRow>> {
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != RUN_CSV_HEADER {
                return Err(Error::Parse(format!("unexpected run CSV header: {line}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Parse(format!(
                "run CSV line {} has {} fields, expected 6",
                i + 1,
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse(format!("bad float {s:?} on line {}", i + 1)))
        };
        rows.push(CheckpointRow {
            t: fields[0]
                .parse()
                .map_err(|_| Error::Parse(format!("bad round {:?} on line {}", fields[0], i + 1)))?,
            ctr_sum: num(fields[1])?,
            ctr_set: num(fields[2])?,
            regret: num(fields[3])?,
            bound: num(fields[4])?,
            bound_plus_one: num(fields[5])?,
        });
    }
    Ok(rows)
}

/// Mean and standard error of a sample; a single observation has SE 0.
fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-algorithm cross-seed summary at every common checkpoint.
pub fn write_aggregate_csv<W: Write>(reports: &[RunReport], mut out: W) -> Result<()> {
    writeln!(
        out,
        "algorithm,t,ctr_sum_mean,ctr_sum_se,ctr_set_mean,ctr_set_se,regret_mean,regret_se,bound_mean"
    )?;
    let mut algorithms = Vec::new();
    for r in reports {
        if !algorithms.contains(&r.algorithm) {
            algorithms.push(r.algorithm);
        }
    }
    for algo in algorithms {
        let runs: Vec<&RunReport> = reports.iter().filter(|r| r.algorithm == algo).collect();
        let n_rows = runs[0].rows.len();
        for i in 0..n_rows {
            let t = runs[0].rows[i].t;
            let col = |f: fn(&CheckpointRow) -> f64| -> Vec<f64> {
                runs.iter().map(|r| f(&r.rows[i])).collect()
            };
            let (sum_m, sum_se) = mean_se(&col(|r| r.ctr_sum));
            let (set_m, set_se) = mean_se(&col(|r| r.ctr_set));
            let (reg_m, reg_se) = mean_se(&col(|r| r.regret));
            let (bound_m, _) = mean_se(&col(|r| r.bound));
            writeln!(
                out,
                "{algo},{t},{sum_m:.16e},{sum_se:.16e},{set_m:.16e},{set_se:.16e},{reg_m:.16e},{reg_se:.16e},{bound_m:.16e}"
            )?;
        }
    }
    Ok(())
}

/// One algorithm's final CTRs with its lift over the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub algorithm: Algorithm,
    pub ctr_sum: f64,
    pub ctr_sum_lift_pct: f64,
    pub ctr_set: f64,
    pub ctr_set_lift_pct: f64,
}

/// Final-checkpoint CTR comparison across algorithms.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareTable {
    pub baseline: Algorithm,
    pub rows: Vec<CompareRow>,
}

fn lift_pct(value: f64, base: f64) -> f64 {
    if base == 0.0 {
        if value == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (value / base - 1.0) * 100.0
    }
}

/// Builds the lift table from finished runs: per algorithm, the cross-seed
/// mean of the final checkpoint's CTRs and the percentage lift over
/// `baseline`. All runs must share the same checkpoint grid.
pub fn compare_table(reports: &[RunReport], baseline: Algorithm) -> Result<CompareTable> {
    if reports.is_empty() {
        return Err(Error::invalid("no runs to compare"));
    }
    let grid: Vec<u64> = reports[0].rows.iter().map(|r| r.t).collect();
    for r in reports {
        let other: Vec<u64> = r.rows.iter().map(|row| row.t).collect();
        if other != grid {
            return Err(Error::invalid(format!(
                "checkpoint grids differ: {} seed {} reports {:?}, expected {:?}",
                r.algorithm, r.seed, other, grid
            )));
        }
    }
    let mut algorithms = Vec::new();
    for r in reports {
        if !algorithms.contains(&r.algorithm) {
            algorithms.push(r.algorithm);
        }
    }
    if !algorithms.contains(&baseline) {
        return Err(Error::invalid(format!(
            "baseline {baseline} has no runs in this report set"
        )));
    }
    let finals = |algo: Algorithm| -> (f64, f64) {
        let sums: Vec<f64> = reports
            .iter()
            .filter(|r| r.algorithm == algo)
            .map(|r| r.rows.last().expect("validated non-empty").ctr_sum)
            .collect();
        let sets: Vec<f64> = reports
            .iter()
            .filter(|r| r.algorithm == algo)
            .map(|r| r.rows.last().expect("validated non-empty").ctr_set)
            .collect();
        (mean_se(&sums).0, mean_se(&sets).0)
    };
    for r in reports {
        if r.rows.is_empty() {
            return Err(Error::invalid(format!(
                "{} seed {} has no checkpoint rows",
                r.algorithm, r.seed
            )));
        }
    }
    let (base_sum, base_set) = finals(baseline);
    let rows = algorithms
        .into_iter()
        .map(|algo| {
            let (sum, set) = finals(algo);
            CompareRow {
                algorithm: algo,
                ctr_sum: sum,
                ctr_sum_lift_pct: lift_pct(sum, base_sum),
                ctr_set: set,
                ctr_set_lift_pct: lift_pct(set, base_set),
            }
        })
        .collect();
    Ok(CompareTable { baseline, rows })
}

/// Writes a lift table as CSV, columns ordered CTR_sum first, then CTR_set.
pub fn write_compare_csv<W: Write>(table: &CompareTable, mut out: W) -> Result<()> {
    writeln!(out, "algorithm,ctr_sum,ctr_sum_lift_pct,ctr_set,ctr_set_lift_pct")?;
    for r in &table.rows {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.algorithm, r.ctr_sum, r.ctr_sum_lift_pct, r.ctr_set, r.ctr_set_lift_pct
        )?;
    }
    Ok(())
}

/// Checkpoints where measured regret exceeds the theoretical bound (with
/// relative slack `bound_slack`), described one violation per line. Rows
/// whose bound column is zero — offline replay, where no bound is
/// computed — are skipped. An empty result means the bound dominated the
/// regret curve everywhere.
pub fn bound_violations(reports: &[RunReport], bound_slack: f64) -> Vec<String> {
    let mut violations = Vec::new();
    for r in reports {
        for row in &r.rows {
            if row.bound_plus_one > 0.0 && row.regret > row.bound_plus_one * (1.0 + bound_slack) {
                violations.push(format!(
                    "{} seed {} t={}: regret {:.6} exceeds bound {:.6}",
                    r.algorithm, r.seed, row.t, row.regret, row.bound_plus_one
                ));
            }
        }
    }
    violations
}

/// Rebuilds run reports from a finished experiment directory by reading
/// `runs/<algorithm>-seed<seed>.csv`. Wall-clock times are not stored in
/// CSVs, so they come back zero.
pub fn read_reports(dir: impl AsRef<Path>) -> Result<Vec<RunReport>> {
    let runs_dir = dir.as_ref().join("runs");
    let mut named: Vec<(Algorithm, u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(&runs_dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(stem) = name.strip_suffix(".csv") else {
            continue;
        };
        let Some((tag, seed)) = stem.rsplit_once("-seed") else {
            continue;
        };
        let Ok(seed) = seed.parse::<u64>() else {
            continue;
        };
        let Ok(algorithm) = tag.parse::<Algorithm>() else {
            continue;
        };
        named.push((algorithm, seed, path));
    }
    if named.is_empty() {
        return Err(Error::invalid(format!(
            "no run CSVs found under {}",
            runs_dir.display()
        )));
    }
    named.sort_by_key(|(a, seed, _)| (a.tag(), *seed));
    named
        .into_iter()
        .map(|(algorithm, seed, path)| {
            let rows = read_run_csv(std::io::BufReader::new(fs::File::open(&path)?))?;
            let snapshot = path
                .parent()
                .and_then(Path::parent)
                .map(|d| d.join("snapshots").join(format!("{algorithm}-seed{seed}.json")))
                .unwrap_or_default();
            Ok(RunReport {
                algorithm,
                seed,
                rows,
                wall_clock: Duration::ZERO,
                snapshot_path: snapshot,
            })
        })
        .collect()
}
