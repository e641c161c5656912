//! Command-line front end for ranked-list bandit experiments.
//!
//! The heavy lifting lives in the `ubm-bandit` library; this binary wires
//! its pieces to files and flags: TOML experiment configs in, CSVs and
//! JSON snapshots out. Exit status is nonzero iff anything failed.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{CommandFactory, Parser, Subcommand};

use ubm_bandit::click::{em_fit_ubm, read_sessions_tsv, write_sessions_tsv};
use ubm_bandit::env::{
    build_attractiveness_matrix, generate_ubm_sessions, truncated_svd, write_factorization,
};
use ubm_bandit::harness::{
    bound_violations, compare_table, read_reports, run_experiment, write_compare_csv,
    CompareTable, ExperimentConfig, Mode, RunReport, Tolerances, WeightSource,
};
use ubm_bandit::model::PositionWeights;
use ubm_bandit::policy::Algorithm;
use ubm_bandit::{rng, Error, Result};

#[derive(Parser)]
#[command(
    name = "ubm-bandit",
    version,
    about = "Ranked-list bandit experiments under a user browsing click model"
)]
struct Cli {
    /// Replace the config's seed list with this single seed (and seed the
    /// file-producing subcommands, which default to 0).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for experiment runs; 0 means one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory, overriding the config's.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Print the default experiment config as TOML and exit.
    #[arg(long)]
    dump_defaults: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Play algorithms against a generated ground-truth world described by
    /// a TOML config (whose mode is forced to synthetic).
    Simulate {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
    },

    /// Evaluate algorithms offline against a logged session file.
    Replay {
        /// Experiment config (TOML); mode is forced to replay.
        #[arg(long)]
        config: PathBuf,

        /// Logged sessions (TSV), overriding the config's `log`.
        #[arg(long)]
        log: Option<PathBuf>,

        /// Examination-weight file (JSON), overriding the config's weight
        /// source.
        #[arg(long)]
        weights: Option<PathBuf>,
    },

    /// Fit examination weights from a logged session file by
    /// expectation-maximization.
    FitWeights {
        /// Logged sessions (TSV).
        log: PathBuf,

        /// List length (number of positions).
        #[arg(long)]
        k: usize,

        /// Where to write the fitted weights (JSON).
        #[arg(short = 'o', long = "output", default_value = "weights.json")]
        output: PathBuf,
    },

    /// Factorize a log's estimated attractiveness matrix into user/item
    /// feature vectors.
    SvdFeatures {
        /// Logged sessions (TSV).
        log: PathBuf,

        /// Number of singular directions to keep.
        #[arg(long, default_value_t = 10)]
        rank: usize,

        /// Examination-weight file (JSON); defaults to geometric weights
        /// over the log's longest session.
        #[arg(long)]
        weights: Option<PathBuf>,

        /// Decay of the default geometric weights.
        #[arg(long, default_value_t = 0.9)]
        decay: f64,

        /// Where to write the factorization (binary).
        #[arg(short = 'o', long = "output", default_value = "fact.bin")]
        output: PathBuf,
    },

    /// Summarize a finished experiment directory: cross-seed CTRs, lift
    /// over a baseline, and regret-vs-bound violations.
    Report {
        /// Directory a previous simulate/replay run wrote.
        run_dir: PathBuf,

        /// Baseline algorithm for the lift columns.
        #[arg(long, default_value = "c2ucb", value_parser = parse_algorithm)]
        baseline: Algorithm,
    },

    /// Generate a synthetic logged session file under a uniformly random
    /// logging policy (handy input for replay and fit-weights).
    GenLog {
        /// Number of users.
        #[arg(long, default_value_t = 50)]
        users: usize,

        /// Number of distinct items.
        #[arg(long, default_value_t = 100)]
        arms: usize,

        /// Items displayed per session.
        #[arg(long, default_value_t = 5)]
        k: usize,

        /// Sessions logged per user.
        #[arg(long, default_value_t = 200)]
        sessions_per_user: usize,

        /// Decay of the geometric examination weights used to click.
        #[arg(long, default_value_t = 0.9)]
        decay: f64,

        /// Where to write the log (TSV).
        #[arg(short = 'o', long = "output", default_value = "log.tsv")]
        output: PathBuf,
    },
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    Algorithm::from_str(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.dump_defaults {
        print!("{}", ExperimentConfig::dump_defaults());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        let _ = Cli::command().print_help();
        return ExitCode::FAILURE;
    };
    let overrides =
        Overrides { seed: cli.seed, threads: cli.threads, out: cli.out };
    match run(command, overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

struct Overrides {
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            config.seeds = vec![seed];
        }
        if let Some(threads) = self.threads {
            config.threads = threads;
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

fn run(command: Command, overrides: Overrides) -> Result<()> {
    match command {
        Command::Simulate { config } => {
            let mut config = ExperimentConfig::from_path(config)?;
            config.mode = Mode::Synthetic;
            overrides.apply(&mut config);
            let reports = run_experiment(&config)?;
            summarize(&config, &reports)
        }
        Command::Replay { config, log, weights } => {
            let mut config = ExperimentConfig::from_path(config)?;
            config.mode = Mode::Replay;
            if let Some(log) = log {
                config.log = Some(log);
            }
            if let Some(path) = weights {
                config.weights = WeightSource::File { path };
            }
            overrides.apply(&mut config);
            let reports = run_experiment(&config)?;
            summarize(&config, &reports)
        }
        Command::FitWeights { log, k, output } => fit_weights(&log, k, &output),
        Command::SvdFeatures { log, rank, weights, decay, output } => {
            svd_features(&log, rank, weights.as_deref(), decay, &output, overrides.seed())
        }
        Command::Report { run_dir, baseline } => report(&run_dir, baseline),
        Command::GenLog { users, arms, k, sessions_per_user, decay, output } => {
            gen_log(users, arms, k, sessions_per_user, decay, &output, overrides.seed())
        }
    }
}

/// Prints what a finished experiment produced: where it is, per-algorithm
/// final CTRs with lift over the first-listed baseline candidate, and any
/// checkpoints where regret crossed the theoretical bound.
fn summarize(config: &ExperimentConfig, reports: &[RunReport]) -> Result<()> {
    println!("{} run(s) complete; outputs under {}", reports.len(), config.out.display());
    if reports.is_empty() {
        return Ok(());
    }
    let baseline = pick_baseline(reports);
    let table = compare_table(reports, baseline)?;
    print_compare(&table);
    for line in bound_violations(reports, config.tolerances.bound_slack) {
        println!("warning: {line}");
    }
    Ok(())
}

/// The lift baseline: the conventional ranked-list baseline when it ran,
/// otherwise the first algorithm present.
fn pick_baseline(reports: &[RunReport]) -> Algorithm {
    if reports.iter().any(|r| r.algorithm == Algorithm::C2Ucb) {
        Algorithm::C2Ucb
    } else {
        reports[0].algorithm
    }
}

fn print_compare(table: &CompareTable) {
    println!("final CTRs (lift vs {}):", table.baseline);
    println!("  {:<12} {:>12} {:>9} {:>12} {:>9}", "algorithm", "CTR_sum", "lift", "CTR_set", "lift");
    for row in &table.rows {
        println!(
            "  {:<12} {:>12.6} {:>8.2}% {:>12.6} {:>8.2}%",
            row.algorithm.tag(),
            row.ctr_sum,
            row.ctr_sum_lift_pct,
            row.ctr_set,
            row.ctr_set_lift_pct
        );
    }
}

fn read_log(path: &std::path::Path) -> Result<Vec<ubm_bandit::click::SessionRecord>> {
    read_sessions_tsv(BufReader::new(fs::File::open(path)?))
}

fn fit_weights(log: &std::path::Path, k: usize, output: &std::path::Path) -> Result<()> {
    let sessions = read_log(log)?;
    let fit = em_fit_ubm(&sessions, k)?;
    fs::write(output, serde_json::to_string_pretty(&fit.weights)?)?;
    println!(
        "fitted {} positions from {} sessions in {} iterations (log-likelihood {:.6})",
        k,
        sessions.len(),
        fit.iterations,
        fit.log_likelihood
    );
    println!("weights written to {}", output.display());
    for w in &fit.monotonicity_warnings {
        println!("warning: {w}");
    }
    Ok(())
}

fn svd_features(
    log: &std::path::Path,
    rank: usize,
    weights: Option<&std::path::Path>,
    decay: f64,
    output: &std::path::Path,
    seed: u64,
) -> Result<()> {
    let sessions = read_log(log)?;
    let longest = sessions.iter().map(|s| s.len()).max().unwrap_or(0);
    let weights = match weights {
        Some(path) => serde_json::from_str::<PositionWeights>(&fs::read_to_string(path)?)?,
        None => PositionWeights::geometric(longest.max(1), decay)?,
    };
    let matrix = build_attractiveness_matrix(&sessions, &weights)?;
    let fact = truncated_svd(matrix.matrix(), rank, 10, 2, seed)?;
    write_factorization(output, &fact)?;
    let s = fact.singular_values();
    println!(
        "factorized a {}x{} attractiveness matrix at rank {} (top singular value {:.6})",
        matrix.users().len(),
        matrix.arms().len(),
        fact.rank(),
        s[0]
    );
    println!("factors written to {}", output.display());
    Ok(())
}

fn report(run_dir: &std::path::Path, baseline: Algorithm) -> Result<()> {
    let reports = read_reports(run_dir)?;
    println!("{} run(s) found under {}", reports.len(), run_dir.display());
    let baseline = if reports.iter().any(|r| r.algorithm == baseline) {
        baseline
    } else {
        let fallback = reports[0].algorithm;
        println!("note: baseline {baseline} has no runs here; comparing against {fallback}");
        fallback
    };
    let table = compare_table(&reports, baseline)?;
    print_compare(&table);
    let compare_path = run_dir.join("compare.csv");
    write_compare_csv(&table, BufWriter::new(fs::File::create(&compare_path)?))?;
    println!("lift table written to {}", compare_path.display());

    // Reuse the experiment's tolerance settings when its config echo is
    // still in place.
    let slack = ExperimentConfig::from_path(run_dir.join("config.toml"))
        .map(|c| c.tolerances)
        .unwrap_or_else(|_| Tolerances::default())
        .bound_slack;
    let violations = bound_violations(&reports, slack);
    if violations.is_empty() {
        println!("regret stayed within the theoretical bound at every reported checkpoint");
    } else {
        for line in &violations {
            println!("warning: {line}");
        }
    }
    Ok(())
}

fn gen_log(
    users: usize,
    arms: usize,
    k: usize,
    sessions_per_user: usize,
    decay: f64,
    output: &std::path::Path,
    seed: u64,
) -> Result<()> {
    if users == 0 || arms == 0 || sessions_per_user == 0 {
        return Err(Error::invalid("users, arms, and sessions-per-user must all be positive"));
    }
    let weights = PositionWeights::geometric(k, decay)?;
    let mut gamma_rng = rng::substream(seed, "gen-log-gammas", 0);
    let gammas: Vec<Vec<f64>> = (0..users)
        .map(|_| (0..arms).map(|_| rand::Rng::gen_range(&mut gamma_rng, 0.05..0.95)).collect())
        .collect();
    let sessions = generate_ubm_sessions(&gammas, &weights, k, sessions_per_user, seed)?;
    let mut file = BufWriter::new(fs::File::create(output)?);
    write_sessions_tsv(&mut file, &sessions)?;
    println!(
        "wrote {} sessions ({} users x {}, {} items shown per session) to {}",
        sessions.len(),
        users,
        sessions_per_user,
        k,
        output.display()
    );
    Ok(())
}
