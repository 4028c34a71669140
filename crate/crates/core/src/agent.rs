//! Decentralized optimistic Nash Q-learning (DONQ).
//!
//! The learner runs optimistic Q-learning in an artificial discounted game
//! with `γ = 1 − 1/H`. It keeps an optimistic estimate `Q̄`, its running
//! minimum `Q̄↓`, and a state-value estimate `V̄↓`. After every step it
//! re-solves the matrix game `Q̄↓(s,·,·)` at the visited state to refresh its
//! own policy.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::check_index;
use crate::matrix_game::{solve_matrix_game, MatrixView};
use crate::policy::{MarkovPolicy, Player};

/// Smallest `H` the presets will return.
pub const MIN_H: f64 = 1.0 + 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DonqConfig {
    pub horizon_t: u64,
    pub h: f64,
    pub delta: f64,
    /// Known upper bound on the diameter.
    pub d_bound: f64,
}

impl DonqConfig {
    pub fn new(horizon_t: u64, h: f64, delta: f64, d_bound: f64) -> Result<Self> {
        let cfg = DonqConfig { horizon_t, h, delta, d_bound };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon_t == 0 {
            return Err(Error::InvalidArgument("horizon T must be at least 1".into()));
        }
        if !(self.h.is_finite() && self.h > 1.0) {
            return Err(Error::InvalidArgument(format!("H = {} must be finite and > 1", self.h)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta = {} not in (0,1)", self.delta)));
        }
        if !(self.d_bound.is_finite() && self.d_bound > 0.0) {
            return Err(Error::InvalidArgument(format!("D = {} must be finite and > 0", self.d_bound)));
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        1.0 - 1.0 / self.h
    }
}

/// `H = sqrt(D / ln(2/δ)^{1/2}) · T^{1/4}`, for the high-probability bound.
pub fn high_prob_h(d_bound: f64, delta: f64, horizon_t: u64) -> f64 {
    let h = (d_bound / (2.0 / delta).ln().sqrt()).sqrt() * (horizon_t as f64).powf(0.25);
    h.max(MIN_H)
}

/// `H = (T / (S·A·B·ln(2T²)))^{1/3}`, for the expected-regret bound.
pub fn expected_h(horizon_t: u64, dims: (usize, usize, usize)) -> f64 {
    let t = horizon_t as f64;
    let sab = (dims.0 * dims.1 * dims.2) as f64;
    let h = (t / (sab * (2.0 * t * t).ln())).cbrt();
    if h.is_finite() {
        h.max(MIN_H)
    } else {
        MIN_H
    }
}

/// `α_τ = (H+1)/(H+τ)`.
pub fn learning_rate(h: f64, tau: u64) -> Result<f64> {
    if tau == 0 {
        return Err(Error::InvalidArgument("learning rate is defined for tau >= 1".into()));
    }
    Ok((h + 1.0) / (h + tau as f64))
}

/// `β_τ = 2·D·sqrt(H·ln(2T/δ)/τ)`.
pub fn bonus(d_bound: f64, h: f64, horizon_t: u64, delta: f64, tau: u64) -> Result<f64> {
    if tau == 0 {
        return Err(Error::InvalidArgument("bonus is defined for tau >= 1".into()));
    }
    Ok(bonus_with_log(d_bound, h, (2.0 * horizon_t as f64 / delta).ln(), tau))
}

#[inline]
fn bonus_with_log(d_bound: f64, h: f64, log_term: f64, tau: u64) -> f64 {
    2.0 * d_bound * (h * log_term / tau as f64).sqrt()
}

/// Weights `α_τ^i` for `i = 0..=τ`: `α_τ^0 = Π_{j≤τ}(1 − α_j)` and
/// `α_τ^i = α_i·Π_{j=i+1..τ}(1 − α_j)`.
pub fn alpha_weights(h: f64, tau: u64) -> Vec<f64> {
    let tau = tau as usize;
    let mut w = vec![0.0; tau + 1];
    w[0] = 1.0;
    for j in 1..=tau {
        let alpha = (h + 1.0) / (h + j as f64);
        for x in w[..j].iter_mut() {
            *x *= 1.0 - alpha;
        }
        w[j] = alpha;
    }
    w
}

/// What one `observe` call did, for logging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpdateReport {
    pub t: u64,
    pub s: usize,
    pub a: usize,
    pub b: usize,
    pub reward: f64,
    pub s_next: usize,
    pub tau: u64,
    pub alpha: f64,
    pub beta: f64,
    pub v_bar_down: f64,
}

#[derive(Debug, Clone)]
pub struct DonqAgent {
    config: DonqConfig,
    num_states: usize,
    num_actions: usize,
    num_opponent_actions: usize,
    gamma: f64,
    log_term: f64,
    solver_tol: f64,
    q_bar: Vec<f64>,
    q_bar_down: Vec<f64>,
    v_bar_down: Vec<f64>,
    visits: Vec<u64>,
    mu: MarkovPolicy,
    nu_tilde: MarkovPolicy,
    t: u64,
}

impl DonqAgent {
    /// Fresh learner for a game with `dims = (S, A, B)`, where `A` counts its
    /// own actions. All estimators start at `H`, the policy is uniform.
    pub fn new(config: DonqConfig, dims: (usize, usize, usize)) -> Result<Self> {
        config.validate()?;
        let (s_n, a_n, b_n) = dims;
        if s_n == 0 || a_n == 0 || b_n == 0 {
            return Err(Error::InvalidArgument("game dimensions must be positive".into()));
        }
        let cells = s_n * a_n * b_n;
        Ok(DonqAgent {
            config,
            num_states: s_n,
            num_actions: a_n,
            num_opponent_actions: b_n,
            gamma: config.gamma(),
            log_term: (2.0 * config.horizon_t as f64 / config.delta).ln(),
            solver_tol: 1e-9 * config.h.max(1.0),
            q_bar: vec![config.h; cells],
            q_bar_down: vec![config.h; cells],
            v_bar_down: vec![config.h; s_n],
            visits: vec![0; cells],
            mu: MarkovPolicy::uniform(Player::Max, s_n, a_n),
            nu_tilde: MarkovPolicy::uniform(Player::Min, s_n, b_n),
            t: 1,
        })
    }

    pub fn config(&self) -> &DonqConfig {
        &self.config
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.num_states, self.num_actions, self.num_opponent_actions)
    }

    #[inline]
    pub fn cell(&self, s: usize, a: usize, b: usize) -> usize {
        (s * self.num_actions + a) * self.num_opponent_actions + b
    }

    pub fn q_bar(&self) -> &[f64] {
        &self.q_bar
    }

    pub fn q_bar_down(&self) -> &[f64] {
        &self.q_bar_down
    }

    pub fn v_bar_down(&self) -> &[f64] {
        &self.v_bar_down
    }

    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    /// The learner's current (declared) policy `μ_t`.
    pub fn policy(&self) -> &MarkovPolicy {
        &self.mu
    }

    /// The min-player half of the last Nash pair computed at each state.
    /// Used only for consistency checks; it is not the opponent's policy.
    pub fn nu_tilde(&self) -> &MarkovPolicy {
        &self.nu_tilde
    }

    /// Current step index `t` (starts at 1).
    pub fn step(&self) -> u64 {
        self.t
    }

    /// Draws `a_t ∼ μ_t(·|s)`.
    pub fn act<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> Result<usize> {
        self.mu.sample(s, rng)
    }

    /// Applies one transition `(s, a, b, reward, s_next)`.
    pub fn observe(&mut self, s: usize, a: usize, b: usize, reward: f64, s_next: usize) -> Result<UpdateReport> {
        check_index("state", s, self.num_states)?;
        check_index("max-action", a, self.num_actions)?;
        check_index("min-action", b, self.num_opponent_actions)?;
        check_index("next state", s_next, self.num_states)?;
        if !(0.0..=1.0).contains(&reward) {
            return Err(Error::InvalidArgument(format!("reward {reward} outside [0,1]")));
        }

        let cell = self.cell(s, a, b);
        let next_value = self.v_bar_down[s_next];

        self.visits[cell] += 1;
        let tau = self.visits[cell];
        let alpha = (self.config.h + 1.0) / (self.config.h + tau as f64);
        let beta = bonus_with_log(self.config.d_bound, self.config.h, self.log_term, tau);

        let target = reward + self.gamma * next_value + beta;
        self.q_bar[cell] = (1.0 - alpha) * self.q_bar[cell] + alpha * target;
        self.q_bar_down[cell] = self.q_bar_down[cell].min(self.q_bar[cell]);

        let stride = self.num_actions * self.num_opponent_actions;
        let block = &self.q_bar_down[s * stride..(s + 1) * stride];
        let sol = solve_matrix_game(MatrixView::new(block, self.num_actions, self.num_opponent_actions)?, self.solver_tol)?;
        self.mu.set_row(s, &sol.max_policy);
        self.nu_tilde.set_row(s, &sol.min_policy);
        self.v_bar_down[s] = sol.value;

        let report = UpdateReport {
            t: self.t,
            s,
            a,
            b,
            reward,
            s_next,
            tau,
            alpha,
            beta,
            v_bar_down: sol.value,
        };
        self.t += 1;
        Ok(report)
    }
}
