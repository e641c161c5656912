//! WebAssembly bindings for the browser demo page.
//!
//! Each exported function takes one JSON string and returns one JSON
//! string, so the page needs no generated TypeScript layer: on success the
//! payload described per function, on failure `{"error": "..."}`. Sizes
//! are capped so every call stays comfortably inside a UI frame budget.

use serde::Deserialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

use ubm_bandit::click::{em_fit_ubm, exact_click_marginals, ClickModel};
use ubm_bandit::env::{generate_ubm_sessions, run_round, GroundTruthWorld};
use ubm_bandit::harness::checkpoints;
use ubm_bandit::model::{expected_set_reward, PositionWeights};
use ubm_bandit::policy::{Algorithm, Policy};
use ubm_bandit::replay::CtrAccumulator;
use ubm_bandit::{rng, Error, Result};

fn respond(result: Result<Value>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn parse<'a, T: Deserialize<'a>>(input: &'a str) -> Result<T> {
    serde_json::from_str(input).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RaceParams {
    d: usize,
    m: usize,
    k: usize,
    t: u64,
    decay: f64,
    seed: u64,
    algorithms: Vec<String>,
}

impl Default for RaceParams {
    fn default() -> Self {
        Self {
            d: 5,
            m: 20,
            k: 3,
            t: 2_000,
            decay: 0.9,
            seed: 1,
            algorithms: vec!["ubm-linucb".into(), "c2ucb".into()],
        }
    }
}

/// Races algorithms on one shared synthetic world and reports cumulative
/// metrics at logarithmic checkpoints.
///
/// Input: `{"d", "m", "k", "t", "decay", "seed", "algorithms"}` (all
/// optional). Output: `{"checkpoints": [t...], "series": [{"algorithm",
/// "ctr_sum": [...], "ctr_set": [...], "regret": [...], "bound": [...]}]}`.
#[wasm_bindgen]
pub fn run_race(params: &str) -> String {
    respond(race(params))
}

fn race(params: &str) -> Result<Value> {
    let p: RaceParams = parse(params)?;
    if p.t == 0 || p.t > 50_000 {
        return Err(Error::invalid("t must lie in 1..=50000"));
    }
    if p.d == 0 || p.d > 50 || p.m > 500 || p.k == 0 || p.k > 20 || p.m < p.k {
        return Err(Error::invalid("need 1 <= d <= 50, k <= m <= 500, k <= 20"));
    }
    let algorithms: Vec<Algorithm> =
        p.algorithms.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    if algorithms.is_empty() {
        return Err(Error::invalid("need at least one algorithm"));
    }

    let weights = PositionWeights::geometric(p.k, p.decay)?;
    let world = GroundTruthWorld::generate(p.d, p.m, weights.clone(), p.t, p.seed)?;
    let grid = checkpoints(p.t, &[]);

    let mut series = Vec::with_capacity(algorithms.len());
    for algo in algorithms {
        let mut policy = Policy::new(algo, p.d, weights.clone(), p.t)?;
        let mut round_rng = rng::substream(p.seed, algo.tag(), 0);
        let mut ctr = CtrAccumulator::new();
        let mut cum_regret = 0.0;
        let (mut ctr_sum, mut ctr_set, mut regret, mut bound) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut next_cp = 0;
        for round in 1..=p.t {
            let outcome = run_round(&world, &mut policy, p.k, &mut round_rng)?;
            let clicks: Vec<f64> =
                outcome.clicks.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
            ctr.observe(&clicks, outcome.clicks.iter().any(|&c| c));
            cum_regret += outcome.regret;
            if next_cp < grid.len() && round == grid[next_cp] {
                ctr_sum.push(ctr.ctr_sum());
                ctr_set.push(ctr.ctr_set());
                regret.push(cum_regret);
                bound.push(policy.alpha_params().regret_bound(round)?.plus_one);
                next_cp += 1;
            }
        }
        series.push(json!({
            "algorithm": algo.tag(),
            "ctr_sum": ctr_sum,
            "ctr_set": ctr_set,
            "regret": regret,
            "bound": bound,
        }));
    }
    Ok(json!({ "checkpoints": grid, "series": series }))
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExamineParams {
    k: usize,
    decay: f64,
    gammas: Vec<f64>,
}

impl Default for ExamineParams {
    fn default() -> Self {
        Self { k: 5, decay: 0.8, gammas: vec![0.7, 0.55, 0.4, 0.3, 0.2] }
    }
}

/// Expands a geometric examination-weight table and evaluates a ranked
/// list against it.
///
/// Input: `{"k", "decay", "gammas"}` where `gammas` holds the displayed
/// items' attractiveness, best first. Output: `{"w": [[...], ...],
/// "phi_prime", "click_marginals": [...], "expected_set_reward"}`.
#[wasm_bindgen]
pub fn examine_weights(params: &str) -> String {
    respond(examine(params))
}

fn examine(params: &str) -> Result<Value> {
    let p: ExamineParams = parse(params)?;
    if p.k == 0 || p.k > 20 {
        return Err(Error::invalid("k must lie in 1..=20"));
    }
    if p.gammas.len() != p.k {
        return Err(Error::invalid(format!(
            "need exactly k = {} attractiveness values, got {}",
            p.k,
            p.gammas.len()
        )));
    }
    let weights = PositionWeights::geometric(p.k, p.decay)?;
    let rows: Vec<Vec<f64>> =
        (1..=p.k).map(|k| weights.row(k).map(<[f64]>::to_vec)).collect::<Result<_>>()?;
    let marginals = exact_click_marginals(&ClickModel::Ubm, &p.gammas, &weights)?;
    let set_reward = expected_set_reward(&p.gammas, &weights)?;
    Ok(json!({
        "w": rows,
        "phi_prime": weights.phi_prime(),
        "click_marginals": marginals,
        "expected_set_reward": set_reward,
    }))
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FitParams {
    users: usize,
    arms: usize,
    k: usize,
    sessions_per_user: usize,
    decay: f64,
    seed: u64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self { users: 6, arms: 12, k: 3, sessions_per_user: 400, decay: 0.7, seed: 4 }
    }
}

/// Generates a browsing-model click log with known geometric weights, fits
/// weights back by expectation-maximization, and reports both sides.
///
/// Weights are identifiable from clicks only up to a scale, so both tables
/// come back normalized by their first slot. Input: `{"users", "arms",
/// "k", "sessions_per_user", "decay", "seed"}`. Output: `{"slots": [[k,
/// k'], ...], "true_ratios": [...], "fitted_ratios": [...], "ll_trace":
/// [...], "iterations", "sessions"}`.
#[wasm_bindgen]
pub fn fit_em(params: &str) -> String {
    respond(fit(params))
}

fn fit(params: &str) -> Result<Value> {
    let p: FitParams = parse(params)?;
    if p.users == 0 || p.arms == 0 || p.sessions_per_user == 0 {
        return Err(Error::invalid("users, arms, and sessions_per_user must be positive"));
    }
    if p.k == 0 || p.k > 10 || p.arms < p.k {
        return Err(Error::invalid("need 1 <= k <= 10 and arms >= k"));
    }
    if p.users * p.sessions_per_user > 100_000 {
        return Err(Error::invalid("users x sessions_per_user must stay at or below 100000"));
    }
    let weights = PositionWeights::geometric(p.k, p.decay)?;
    let mut gamma_rng = rng::substream(p.seed, "demo-gammas", 0);
    let gammas: Vec<Vec<f64>> = (0..p.users)
        .map(|_| {
            (0..p.arms).map(|_| rand_range(&mut gamma_rng, 0.05, 0.95)).collect()
        })
        .collect();
    let sessions = generate_ubm_sessions(&gammas, &weights, p.k, p.sessions_per_user, p.seed)?;
    let fit = em_fit_ubm(&sessions, p.k)?;

    let slots: Vec<[usize; 2]> =
        (1..=p.k).flat_map(|k| (0..k).map(move |kp| [k, kp])).collect();
    let normalized = |table: &PositionWeights| -> Vec<f64> {
        let flat = table.tilde();
        flat.iter().map(|v| v / flat[0]).collect()
    };
    Ok(json!({
        "slots": slots,
        "true_ratios": normalized(&weights),
        "fitted_ratios": normalized(&fit.weights),
        "ll_trace": fit.ll_trace,
        "iterations": fit.iterations,
        "sessions": sessions.len(),
    }))
}

/// `rand::Rng::gen_range` without dragging the trait into every caller.
fn rand_range(rng: &mut impl rand::Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}
