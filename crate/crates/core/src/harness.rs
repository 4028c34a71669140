//! Runs the learner against an opponent and accounts regret against `J*`.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::agent::{expected_h, high_prob_h, DonqAgent, DonqConfig, UpdateReport};
use crate::error::{Error, Result};
use crate::game::{check_index, StochasticGame};
use crate::opponents::{Opponent, OpponentKind};
use crate::oracle::{average_nash_value, estimate_diameter, AverageRewardSolution, DiameterEstimate};

pub const DEFAULT_TARGET_ERR: f64 = 1e-6;

/// RNG stream ids split from the master seed.
const STREAM_AGENT: u64 = 0;
const STREAM_OPPONENT: u64 = 1;
const STREAM_ENVIRONMENT: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HMode {
    Explicit(f64),
    HighProb,
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaMode {
    Explicit(f64),
    OneOverT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DSource {
    UserSupplied(f64),
    Estimator,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub game: StochasticGame,
    /// Free-form description of where the game came from, echoed in summaries.
    pub game_label: serde_json::Value,
    pub horizon_t: u64,
    /// Horizons for sweeps; empty means just `horizon_t`.
    pub horizons: Vec<u64>,
    pub h_mode: HMode,
    pub delta_mode: DeltaMode,
    pub d_source: DSource,
    pub opponent: OpponentKind,
    pub seeds: Vec<u64>,
    pub target_err: f64,
    pub initial_state: usize,
}

impl ExperimentConfig {
    pub fn new(game: StochasticGame, opponent: OpponentKind) -> Self {
        ExperimentConfig {
            game,
            game_label: serde_json::Value::Null,
            horizon_t: 1000,
            horizons: Vec::new(),
            h_mode: HMode::Expected,
            delta_mode: DeltaMode::OneOverT,
            d_source: DSource::Estimator,
            opponent,
            seeds: vec![0],
            target_err: DEFAULT_TARGET_ERR,
            initial_state: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon_t == 0 || self.horizons.contains(&0) {
            return Err(Error::Config("horizon T must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.target_err > 0.0 && self.target_err.is_finite()) {
            return Err(Error::Config(format!("target_err {} must be positive", self.target_err)));
        }
        check_index("initial state", self.initial_state, self.game.num_states())
    }

    pub fn sweep_horizons(&self) -> Vec<u64> {
        if self.horizons.is_empty() {
            vec![self.horizon_t]
        } else {
            self.horizons.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub horizon_t: u64,
    pub seed: u64,
    pub h: f64,
    pub gamma: f64,
    pub delta: f64,
    pub d_used: f64,
    pub d_source: DSource,
    pub j_star: f64,
    /// Bias bound on the regret measurement: `T·target_err`.
    pub regret_bias_bound: f64,
    pub opponent: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub s: usize,
    pub a: usize,
    pub b: usize,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct RegretRecord {
    pub steps: Vec<StepRecord>,
    pub j_star: f64,
    pub cum_regret: Vec<f64>,
    pub meta: RunMeta,
    /// Final visit counts, summing to `T`.
    pub visit_total: u64,
}

impl RegretRecord {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn final_regret(&self) -> f64 {
        self.cum_regret.last().copied().unwrap_or(0.0)
    }

    pub fn mean_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum::<f64>() / self.steps.len() as f64
    }
}

/// Prefix sums of `j_star − r_t`.
pub fn regret_series(rewards: &[f64], j_star: f64) -> Vec<f64> {
    rewards
        .iter()
        .scan(0.0, |acc, r| {
            *acc += j_star - r;
            Some(*acc)
        })
        .collect()
}

fn stream(seed: u64, role: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(role);
    rng
}

/// An experiment with its per-game oracle quantities computed once.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    diameter: DiameterEstimate,
    oracle: AverageRewardSolution,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let diameter = match config.d_source {
            DSource::UserSupplied(d) => DiameterEstimate::user_supplied(d)?,
            DSource::Estimator => estimate_diameter(&config.game)?,
        };
        let oracle = average_nash_value(&config.game, config.target_err, diameter.d_hat)?;
        Ok(Experiment { config, diameter, oracle })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn diameter(&self) -> &DiameterEstimate {
        &self.diameter
    }

    pub fn oracle(&self) -> &AverageRewardSolution {
        &self.oracle
    }

    pub fn j_star(&self) -> f64 {
        self.oracle.j_star
    }

    /// Diameter bound handed to the learner. A single-state game has
    /// diameter 0; the learner needs a positive bound, and 1 is the smallest
    /// hitting time between distinct states, so estimates are floored there.
    pub fn agent_d_bound(&self) -> f64 {
        match self.config.d_source {
            DSource::UserSupplied(d) => d,
            DSource::Estimator => self.diameter.d_hat.max(1.0),
        }
    }

    /// Learner configuration for horizon `horizon_t`.
    pub fn agent_config(&self, horizon_t: u64) -> Result<DonqConfig> {
        let d = self.agent_d_bound();
        let delta = match self.config.delta_mode {
            DeltaMode::Explicit(x) => x,
            DeltaMode::OneOverT => 1.0 / horizon_t as f64,
        };
        let h = match self.config.h_mode {
            HMode::Explicit(h) => h,
            HMode::HighProb => high_prob_h(d, delta, horizon_t),
            HMode::Expected => expected_h(horizon_t, self.config.game.dims()),
        };
        DonqConfig::new(horizon_t, h, delta, d)
    }

    pub fn run_episode(&self, horizon_t: u64, seed: u64) -> Result<RegretRecord> {
        self.run_episode_observed(horizon_t, seed, |_, _| Ok(()))
    }

    /// Runs `horizon_t` steps; `observer` sees the learner after every update.
    pub fn run_episode_observed<F>(&self, horizon_t: u64, seed: u64, mut observer: F) -> Result<RegretRecord>
    where
        F: FnMut(&DonqAgent, &UpdateReport) -> Result<()>,
    {
        if horizon_t == 0 {
            return Err(Error::InvalidArgument("horizon T must be at least 1".into()));
        }
        let game = &self.config.game;
        let agent_config = self.agent_config(horizon_t)?;
        let mut agent = DonqAgent::new(agent_config, game.dims())?;
        let mut opponent = Opponent::new(&self.config.opponent, game, &agent_config)?;

        let mut agent_rng = stream(seed, STREAM_AGENT);
        let mut opponent_rng = stream(seed, STREAM_OPPONENT);
        let mut env_rng = stream(seed, STREAM_ENVIRONMENT);

        let mut steps = Vec::with_capacity(horizon_t as usize);
        let mut s = self.config.initial_state;
        for _ in 0..horizon_t {
            let a = agent.act(s, &mut agent_rng)?;
            let b = opponent.act(s, &mut opponent_rng)?;
            let reward = game.reward(s, a, b);
            let s_next = game.sample_transition(s, a, b, &mut env_rng)?;
            let report = agent.observe(s, a, b, reward, s_next)?;
            observer(&agent, &report)?;
            opponent.observe(game, s, a, b, reward, s_next, agent.policy())?;
            steps.push(StepRecord { s, a, b, reward });
            s = s_next;
        }

        let j_star = self.oracle.j_star;
        let rewards: Vec<f64> = steps.iter().map(|x| x.reward).collect();
        let cum_regret = regret_series(&rewards, j_star);
        Ok(RegretRecord {
            steps,
            j_star,
            cum_regret,
            visit_total: agent.visits().iter().sum(),
            meta: RunMeta {
                horizon_t,
                seed,
                h: agent_config.h,
                gamma: agent_config.gamma(),
                delta: agent_config.delta,
                d_used: agent_config.d_bound,
                d_source: self.config.d_source,
                j_star,
                regret_bias_bound: horizon_t as f64 * self.config.target_err,
                opponent: self.config.opponent.name(),
            },
        })
    }

    /// Every `(T, seed)` pair as an independent episode, in parallel on the
    /// current rayon pool. Results do not depend on the worker count.
    pub fn run_sweep(&self) -> Result<SweepSummary> {
        let horizons = self.config.sweep_horizons();
        let jobs: Vec<(u64, u64)> = horizons
            .iter()
            .flat_map(|&t| self.config.seeds.iter().map(move |&seed| (t, seed)))
            .collect();
        let started = Instant::now();
        let entries: Vec<SweepEntry> = jobs
            .par_iter()
            .map(|&(horizon, seed)| {
                let record = self.run_episode(horizon, seed).map_err(|e| Error::Episode {
                    horizon: horizon as usize,
                    seed,
                    source: Box::new(e),
                })?;
                Ok(SweepEntry { horizon, seed, final_regret: record.final_regret(), h: record.meta.h })
            })
            .collect::<Result<_>>()?;
        let elapsed = started.elapsed().as_secs_f64();
        let total_steps: u64 = jobs.iter().map(|(t, _)| t).sum();

        let means = horizons
            .iter()
            .map(|&horizon| {
                let finals: Vec<f64> =
                    entries.iter().filter(|e| e.horizon == horizon).map(|e| e.final_regret).collect();
                SweepMean::from_finals(horizon, &finals)
            })
            .collect();
        Ok(SweepSummary {
            game: self.config.game_label.clone(),
            j_star: self.oracle.j_star,
            entries,
            means,
            steps_per_second: if elapsed > 0.0 { total_steps as f64 / elapsed } else { f64::INFINITY },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    #[serde(rename = "T")]
    pub horizon: u64,
    pub seed: u64,
    pub final_regret: f64,
    #[serde(rename = "H")]
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMean {
    #[serde(rename = "T")]
    pub horizon: u64,
    pub seeds: usize,
    pub mean_final_regret: f64,
    pub std_error: f64,
    pub mean_regret_per_step: f64,
}

impl SweepMean {
    pub fn from_finals(horizon: u64, finals: &[f64]) -> Self {
        let n = finals.len();
        let mean = finals.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        SweepMean {
            horizon,
            seeds: n,
            mean_final_regret: mean,
            std_error,
            mean_regret_per_step: mean / horizon as f64,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub game: serde_json::Value,
    pub j_star: f64,
    pub entries: Vec<SweepEntry>,
    pub means: Vec<SweepMean>,
    /// Wall-clock throughput; the only non-reproducible field.
    pub steps_per_second: f64,
}

/// In-loop checks of the learner's structural invariants: every `Q̄↓` entry
/// is non-increasing and in `[0, H]`, `V̄↓` stays in `[0, H]`, and `V̄↓(s)`
/// at the updated state equals the game value of `Q̄↓(s,·,·)` under the
/// stored Nash pair.
#[derive(Debug, Clone, Default)]
pub struct InvariantMonitor {
    previous: Vec<f64>,
    pub checked_steps: u64,
}

impl InvariantMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check(&mut self, agent: &DonqAgent, report: &UpdateReport) -> Result<()> {
        let h = agent.config().h;
        let q = agent.q_bar_down();
        if self.previous.is_empty() {
            self.previous = vec![h; q.len()];
        }
        for (i, (&now, &before)) in q.iter().zip(&self.previous).enumerate() {
            if now > before {
                return Err(Error::InvalidArgument(format!(
                    "step {}: Q-down entry {i} increased from {before} to {now}",
                    report.t
                )));
            }
            if !(0.0..=h).contains(&now) {
                return Err(Error::InvalidArgument(format!("step {}: Q-down entry {i} = {now} outside [0, {h}]", report.t)));
            }
        }
        if let Some(v) = agent.v_bar_down().iter().find(|v| !(0.0..=h).contains(*v)) {
            return Err(Error::InvalidArgument(format!("step {}: V-down {v} outside [0, {h}]", report.t)));
        }
        let (_, a_n, b_n) = agent.dims();
        let s = report.s;
        let mu = agent.policy().row(s);
        let nu = agent.nu_tilde().row(s);
        let mut pair_value = 0.0;
        for a in 0..a_n {
            for b in 0..b_n {
                pair_value += mu[a] * nu[b] * q[agent.cell(s, a, b)];
            }
        }
        if (pair_value - agent.v_bar_down()[s]).abs() > 1e-8 * h.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "step {}: V-down({s}) = {} but the stored Nash pair gives {pair_value}",
                report.t,
                agent.v_bar_down()[s]
            )));
        }
        self.previous.copy_from_slice(q);
        self.checked_steps += 1;
        Ok(())
    }
}
