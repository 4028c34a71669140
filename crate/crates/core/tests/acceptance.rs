//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::process::Command;
use std::time::Instant;

use donq::agent::{alpha_weights, learning_rate};
use donq::game::{generate_game, GameGenSpec, RewardLaw, StochasticGame};
use donq::harness::{DSource, DeltaMode, Experiment, ExperimentConfig, HMode, InvariantMonitor};
use donq::matrix_game::{solve_matrix_game, PayoffMatrix};
use donq::opponents::OpponentKind;
use donq::oracle::{average_nash_value, estimate_diameter, shapley_iteration, span, DEFAULT_MAX_ITERS};
use donq::policy::{MarkovPolicy, Player};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances and sizes, pinned.
const C1_MATRICES: usize = 500;
const C1_MAX_DIM: usize = 8;
const C1_VALUE_TOL: f64 = 1e-5;
const C1_SECURITY_TOL: f64 = 1e-8;
const C1_SOLVER_TOL: f64 = 1e-9;
const C1_BUDGET_SECS: f64 = 5.0;
const C1_FP_ROUNDS: usize = 2000;

const C2_HS: [f64; 3] = [2.0, 5.0, 10.0];
const C2_TAU_MAX: usize = 10_000;
const C2_SUM_TOL: f64 = 1e-10;
const C2_BUDGET_SECS: f64 = 10.0;

const C3_GAMES: usize = 100;
const C3_TARGET_ERR: f64 = 1e-6;

const C45_GAMES: u64 = 50;
const C4_GAMMAS: [f64; 3] = [0.9, 0.99, 0.999];
const C4_SLACK: f64 = 1e-6;
const C5_GAMMA: f64 = 0.99;
const C5_SLACK: f64 = 1e-6;
const C45_VALUE_TOL: f64 = 1e-8;

const C6_RUNS: u64 = 200;
const C6_DELTA: f64 = 0.05;
const C6_T: u64 = 5000;
const C6_H: f64 = 10.0;
const C6_SLACK: f64 = 1e-9;
const C6_Q_TOL: f64 = 1e-11;

const C8_HORIZONS: [u64; 3] = [5000, 20_000, 50_000];
const C8_SEEDS: u64 = 20;
const C8_RATIO: f64 = 0.6;

const C9_SEEDS: u64 = 10;
const C9_T: u64 = 20_000;
const C9_MIN_REWARD: f64 = 0.55;

const C10_T: u64 = 3000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rps() -> Vec<Vec<f64>> {
    vec![vec![0.5, 0.0, 1.0], vec![1.0, 0.5, 0.0], vec![0.0, 1.0, 0.5]]
}

fn random_matrix(rng: &mut ChaCha8Rng, max_dim: usize) -> Vec<Vec<f64>> {
    let m = rng.random_range(1..=max_dim);
    let n = rng.random_range(1..=max_dim);
    (0..m).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect()
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Exact matrix-game value by kernel enumeration: some optimal pair is
/// supported on a square non-singular submatrix `K` of the positively
/// shifted matrix, with value `1 / (1ᵀ K⁻¹ 1)`.
fn kernel_value(rows: &[Vec<f64>]) -> f64 {
    let (m, n) = (rows.len(), rows[0].len());
    let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x + 1.0).collect()).collect();
    for k in 1..=m.min(n) {
        let row_sets = subsets(m, k);
        let col_sets = subsets(n, k);
        for rs in &row_sets {
            for cs in &col_sets {
                let kmat = DMatrix::from_fn(k, k, |i, j| shifted[rs[i]][cs[j]]);
                let lu = kmat.clone().lu();
                let ones = DVector::from_element(k, 1.0);
                let Some(w) = lu.solve(&ones) else { continue };
                let Some(u) = kmat.transpose().lu().solve(&ones) else { continue };
                let (sw, su) = (w.sum(), u.sum());
                if !(sw.abs() > 1e-12 && su.abs() > 1e-12) {
                    continue;
                }
                let v = 1.0 / sw;
                let y: Vec<f64> = w.iter().map(|x| x * v).collect();
                let x: Vec<f64> = u.iter().map(|x| x / su).collect();
                if y.iter().chain(&x).any(|p| *p < -1e-12) {
                    continue;
                }
                let secures = (0..n).all(|j| rs.iter().zip(&x).map(|(&i, p)| p * shifted[i][j]).sum::<f64>() >= v - 1e-9);
                let holds = (0..m).all(|i| cs.iter().zip(&y).map(|(&j, q)| q * shifted[i][j]).sum::<f64>() <= v + 1e-9);
                if secures && holds {
                    return v - 1.0;
                }
            }
        }
    }
    panic!("no kernel found");
}

/// Certified bracket `[lower, upper]` on the value from fictitious play.
fn fictitious_play_bracket(rows: &[Vec<f64>], rounds: usize) -> (f64, f64) {
    let (m, n) = (rows.len(), rows[0].len());
    let mut row_counts = vec![0.0; m];
    let mut col_counts = vec![0.0; n];
    let mut row_payoff = vec![0.0; m];
    let mut col_payoff = vec![0.0; n];
    let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut i, mut j) = (0usize, 0usize);
    for t in 1..=rounds {
        row_counts[i] += 1.0;
        col_counts[j] += 1.0;
        for jj in 0..n {
            col_payoff[jj] += rows[i][jj];
        }
        for ii in 0..m {
            row_payoff[ii] += rows[ii][j];
        }
        let t = t as f64;
        let (jb, lo) = col_payoff.iter().enumerate().fold((0, f64::INFINITY), |acc, (k, &x)| if x < acc.1 { (k, x) } else { acc });
        let (ib, hi) = row_payoff.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (k, &x)| if x > acc.1 { (k, x) } else { acc });
        lower = lower.max(lo / t);
        upper = upper.min(hi / t);
        i = ib;
        j = jb;
    }
    (lower, upper)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let matrices: Vec<Vec<Vec<f64>>> = (0..C1_MATRICES).map(|_| random_matrix(&mut rng, C1_MAX_DIM)).collect();
    let started = Instant::now();
    let solutions: Vec<_> = matrices
        .iter()
        .map(|rows| solve_matrix_game(PayoffMatrix::from_rows(rows.clone()).unwrap().view(), C1_SOLVER_TOL).unwrap())
        .collect();
    let solver_secs = started.elapsed().as_secs_f64();

    let (mut worst_value, mut worst_security, mut bracket_misses) = (0.0f64, 0.0f64, 0usize);
    for (rows, sol) in matrices.iter().zip(&solutions) {
        let exact = kernel_value(rows);
        worst_value = worst_value.max((sol.value - exact).abs());
        let n = rows[0].len();
        for j in 0..n {
            let pay: f64 = rows.iter().zip(&sol.max_policy).map(|(r, p)| p * r[j]).sum();
            worst_security = worst_security.max(sol.value - pay);
        }
        let (lo, hi) = fictitious_play_bracket(rows, C1_FP_ROUNDS);
        if !(lo <= sol.value + 1e-12 && sol.value <= hi + 1e-12) {
            bracket_misses += 1;
        }
    }
    let pass = worst_value <= C1_VALUE_TOL
        && worst_security <= C1_SECURITY_TOL
        && bracket_misses == 0
        && solver_secs < C1_BUDGET_SECS;
    outcome(
        pass,
        format!(
            "{C1_MATRICES} matrices: max |value - kernel oracle| = {worst_value:.2e}, worst security shortfall = {worst_security:.2e}, \
             fictitious-play bracket misses = {bracket_misses}, solver time = {solver_secs:.3}s"
        ),
    )
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let mut failures = Vec::new();
    for &h in &C2_HS {
        // weights[i] = α_τ^i for the current τ, updated in place.
        let mut weights: Vec<f64> = vec![1.0];
        let mut column_sums = vec![0.0; C2_TAU_MAX + 1];
        for tau in 1..=C2_TAU_MAX {
            let alpha = learning_rate(h, tau as u64).unwrap();
            for w in weights.iter_mut() {
                *w *= 1.0 - alpha;
            }
            weights.push(alpha);

            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > C2_SUM_TOL {
                failures.push(format!("H={h} tau={tau}: sum {total}"));
            }
            let root = (tau as f64).sqrt();
            let weighted: f64 = weights.iter().enumerate().skip(1).map(|(i, w)| w / (i as f64).sqrt()).sum();
            if !(1.0 / root <= weighted && weighted <= 2.0 / root) {
                failures.push(format!("H={h} tau={tau}: sum alpha/sqrt(i) = {weighted}"));
            }
            let squares: f64 = weights.iter().skip(1).map(|w| w * w).sum();
            if squares > 2.0 * h / tau as f64 {
                failures.push(format!("H={h} tau={tau}: sum of squares {squares}"));
            }
            for (i, w) in weights.iter().enumerate().skip(1) {
                column_sums[i] += w;
            }
            if matches!(tau, 1 | 10 | 100 | 1000) {
                let direct = alpha_weights(h, tau as u64);
                if direct.iter().zip(&weights).any(|(a, b)| (a - b).abs() > 1e-15) {
                    failures.push(format!("H={h} tau={tau}: library weights differ"));
                }
            }
        }
        for (i, s) in column_sums.iter().enumerate().skip(1) {
            if *s > 1.0 + 1.0 / h {
                failures.push(format!("H={h} i={i}: truncated column sum {s}"));
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < C2_BUDGET_SECS;
    let first = failures.first().cloned().unwrap_or_else(|| "none".into());
    outcome(pass, format!("H in {C2_HS:?}, tau <= {C2_TAU_MAX}: {} violations (first: {first}), {secs:.2}s", failures.len()))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..C3_GAMES {
        let rows = random_matrix(&mut rng, 5);
        let game = StochasticGame::repeated_matrix_game(&rows).unwrap();
        let d = estimate_diameter(&game).unwrap().d_hat;
        let sol = average_nash_value(&game, C3_TARGET_ERR, d).unwrap();
        worst = worst.max((sol.j_star - kernel_value(&rows)).abs());
    }
    outcome(worst <= C3_TARGET_ERR, format!("{C3_GAMES} single-state games: max |J* - matrix value| = {worst:.2e}"))
}

fn c45_game(seed: u64) -> StochasticGame {
    generate_game(&GameGenSpec {
        num_states: 2 + (seed % 2) as usize,
        num_max_actions: 2 + (seed % 3 == 0) as usize,
        num_min_actions: 2 + (seed % 5 == 0) as usize,
        mixing_epsilon: 0.3,
        reward_law: RewardLaw::Uniform01,
        seed: 1000 + seed,
    })
    .unwrap()
}

fn criteria_4_5() -> (Outcome, Outcome) {
    let (mut worst4, mut worst5) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for seed in 0..C45_GAMES {
        let game = c45_game(seed);
        let d = estimate_diameter(&game).unwrap().d_hat;
        let values: Vec<(f64, Vec<f64>)> = C4_GAMMAS
            .iter()
            .map(|&g| (g, shapley_iteration(&game, g, C45_VALUE_TOL, DEFAULT_MAX_ITERS).unwrap().v_star))
            .collect();
        for (g1, v1) in &values {
            for (g2, v2) in &values {
                for s in 0..game.num_states() {
                    let gap = ((1.0 - g1) * v1[s] - (1.0 - g2) * v2[s]).abs();
                    worst4 = worst4.max(gap - (2.0 - g1 - g2) * d);
                }
            }
        }
        let v = shapley_iteration(&game, C5_GAMMA, C45_VALUE_TOL, DEFAULT_MAX_ITERS).unwrap().v_star;
        worst5 = worst5.max(span(&v).unwrap() - d);
    }
    (
        outcome(
            worst4 <= C4_SLACK,
            format!("{C45_GAMES} games, gammas {C4_GAMMAS:?}: max(|scaled gap| - (2-g-g')D) = {worst4:.3e}"),
        ),
        outcome(worst5 <= C5_SLACK, format!("{C45_GAMES} games at gamma {C5_GAMMA}: max(sp(V) - D) = {worst5:.3e}")),
    )
}

/// Runs with the invariant monitor attached; returns (run count, failures).
#[derive(Default)]
struct MonitorTally {
    runs: usize,
    failures: Vec<String>,
}

fn criterion_6(tally: &mut MonitorTally) -> Outcome {
    let game = generate_game(&GameGenSpec {
        num_states: 2,
        num_max_actions: 2,
        num_min_actions: 2,
        mixing_epsilon: 0.2,
        reward_law: RewardLaw::Uniform01,
        seed: 6,
    })
    .unwrap();
    let mut config = ExperimentConfig::new(game.clone(), OpponentKind::Uniform);
    config.h_mode = HMode::Explicit(C6_H);
    config.delta_mode = DeltaMode::Explicit(C6_DELTA);
    config.d_source = DSource::Estimator;
    let experiment = Experiment::prepare(config).unwrap();
    let gamma = experiment.agent_config(C6_T).unwrap().gamma();
    let q_star = shapley_iteration(&game, gamma, C6_Q_TOL, DEFAULT_MAX_ITERS).unwrap().q_star;

    let mut violating = 0u64;
    for seed in 0..C6_RUNS {
        let mut monitor = InvariantMonitor::new();
        let mut violated = false;
        let mut monitor_error = None;
        experiment
            .run_episode_observed(C6_T, seed, |agent, report| {
                if agent.q_bar_down().iter().zip(&q_star).any(|(q, qs)| *q < qs - C6_SLACK) {
                    violated = true;
                }
                if monitor_error.is_none() {
                    if let Err(e) = monitor.check(agent, report) {
                        monitor_error = Some(e.to_string());
                    }
                }
                Ok(())
            })
            .unwrap();
        tally.runs += 1;
        if let Some(e) = monitor_error {
            tally.failures.push(format!("criterion 6 seed {seed}: {e}"));
        }
        violating += violated as u64;
    }
    let fraction = violating as f64 / C6_RUNS as f64;
    let threshold = C6_DELTA + 3.0 * (C6_DELTA * (1.0 - C6_DELTA) / C6_RUNS as f64).sqrt();
    outcome(
        fraction <= threshold,
        format!("{violating}/{C6_RUNS} runs ever below Q*_gamma (fraction {fraction:.3}, threshold {threshold:.4})"),
    )
}

fn criterion_8() -> Outcome {
    let spec = GameGenSpec {
        num_states: 3,
        num_max_actions: 2,
        num_min_actions: 2,
        mixing_epsilon: 0.1,
        reward_law: RewardLaw::Uniform01,
        seed: 7,
    };
    let mut config = ExperimentConfig::new(generate_game(&spec).unwrap(), OpponentKind::StationaryNash { gamma: None });
    config.h_mode = HMode::Expected;
    config.delta_mode = DeltaMode::OneOverT;
    config.d_source = DSource::Estimator;
    config.seeds = (0..C8_SEEDS).collect();
    config.horizons = C8_HORIZONS.to_vec();
    let experiment = Experiment::prepare(config).unwrap();
    let summary = experiment.run_sweep().unwrap();
    let per_step: Vec<f64> = summary.means.iter().map(|m| m.mean_regret_per_step).collect();
    let decreasing = per_step.windows(2).all(|w| w[1] < w[0]);
    let ratio = per_step[2] / per_step[0];
    let pass = decreasing && ratio <= C8_RATIO;
    let listing: Vec<String> = summary
        .means
        .iter()
        .map(|m| format!("T={}: {:.5} (se {:.5})", m.horizon, m.mean_regret_per_step, m.std_error / m.horizon as f64))
        .collect();
    outcome(
        pass,
        format!(
            "D_hat = {:.3}, J* = {:.5}, mean Reg(T)/T: {}; strictly decreasing = {decreasing}, ratio = {ratio:.3} (need <= {C8_RATIO})",
            experiment.diameter().d_hat,
            summary.j_star,
            listing.join(", ")
        ),
    )
}

fn criterion_9(tally: &mut MonitorTally) -> Outcome {
    let game = StochasticGame::repeated_matrix_game(&rps()).unwrap();
    let rock = MarkovPolicy::deterministic(Player::Min, 3, &[0]);
    let experiment = Experiment::prepare(ExperimentConfig::new(game, OpponentKind::FixedMarkov(rock))).unwrap();
    let (mut reward_sum, mut regret_sum) = (0.0, 0.0);
    for seed in 0..C9_SEEDS {
        let mut monitor = InvariantMonitor::new();
        let record = experiment.run_episode_observed(C9_T, seed, |agent, report| monitor.check(agent, report));
        tally.runs += 1;
        match record {
            Ok(record) => {
                reward_sum += record.mean_reward();
                regret_sum += record.final_regret();
            }
            Err(e) => {
                tally.failures.push(format!("criterion 9 seed {seed}: {e}"));
                return outcome(false, format!("seed {seed} failed: {e}"));
            }
        }
    }
    let mean_reward = reward_sum / C9_SEEDS as f64;
    let mean_regret = regret_sum / C9_SEEDS as f64;
    outcome(
        mean_reward > C9_MIN_REWARD && mean_regret < 0.0,
        format!("{C9_SEEDS} seeds, T={C9_T}: mean reward {mean_reward:.4}, mean Reg(T) {mean_regret:.1}, J* = {:.6}", experiment.j_star()),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let game = generate_game(&GameGenSpec {
        num_states: 3,
        num_max_actions: 2,
        num_min_actions: 3,
        mixing_epsilon: 0.2,
        reward_law: RewardLaw::Uniform01,
        seed: 10,
    })
    .unwrap();
    donq::io::save_game(&dir.path().join("game.json"), &game).unwrap();
    let configs = [
        r#"{"kind":"uniform"}"#,
        r#"{"kind":"stationary-nash"}"#,
        r#"{"kind":"best-responder","period":500}"#,
        r#"{"kind":"self-play-mirror"}"#,
    ];
    let mut mismatches = Vec::new();
    for (k, opponent) in configs.iter().enumerate() {
        let cfg = dir.path().join(format!("cfg{k}.json"));
        fs::write(
            &cfg,
            format!(r#"{{"game":{{"file":"game.json"}},"agent":{{"horizon_T":{C10_T}}},"opponent":{opponent},"sweep":{{"seeds":[42]}}}}"#),
        )
        .unwrap();
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let out = Command::new(env!("CARGO_BIN_EXE_donq")).arg("run").arg(&cfg).output().unwrap();
            if !out.status.success() {
                mismatches.push(format!("{opponent}: exit {:?}", out.status.code()));
            }
            outputs.push(out.stdout);
        }
        if outputs[0] != outputs[1] || outputs[0].is_empty() {
            mismatches.push(opponent.to_string());
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{} opponent configs run twice via the CLI: {} mismatches {:?}", configs.len(), mismatches.len(), mismatches),
    )
}

fn main() {
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut report = |n: u32, o: Outcome| {
        println!("criterion {n:>2}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    let (c4, c5) = criteria_4_5();
    report(4, c4);
    report(5, c5);
    let mut tally = MonitorTally::default();
    report(6, criterion_6(&mut tally));
    let c9 = criterion_9(&mut tally);
    let c7 = outcome(
        tally.failures.is_empty(),
        format!(
            "in-loop monitor over {} runs (criteria 6 and 9): {} failures {:?}",
            tally.runs,
            tally.failures.len(),
            tally.failures.iter().take(3).collect::<Vec<_>>()
        ),
    );
    report(7, c7);
    report(8, criterion_8());
    report(9, c9);
    report(10, criterion_10());

    let failed: Vec<u32> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: {} of {} criteria failed: {failed:?}", failed.len(), results.len());
        std::process::exit(1);
    }
}
