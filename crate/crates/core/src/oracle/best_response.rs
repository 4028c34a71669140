use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::StochasticGame;
use crate::policy::{MarkovPolicy, Player};

#[derive(Debug, Clone)]
pub struct BestResponse {
    pub policy: MarkovPolicy,
    /// `V_γ^{(μ,ν)}` under the returned deterministic `ν`.
    pub value: Vec<f64>,
    pub residual: f64,
}

fn mixed_q(game: &StochasticGame, mu: &MarkovPolicy, gamma: f64, s: usize, b: usize, v: &[f64]) -> f64 {
    mu.row(s)
        .iter()
        .enumerate()
        .map(|(a, p)| p * (game.reward(s, a, b) + gamma * game.expect(s, a, b, v)))
        .sum()
}

/// Deterministic min-player best response to `mu` in the γ-discounted game,
/// found by value iteration on the MDP obtained by fixing `mu`. Ties go to
/// the lowest action index.
pub fn discounted_best_response_min(
    game: &StochasticGame,
    mu: &MarkovPolicy,
    gamma: f64,
    tol: f64,
) -> Result<BestResponse> {
    let (s_n, a_n, b_n) = game.dims();
    if mu.owner() != Player::Max || mu.num_states() != s_n || mu.num_actions() != a_n {
        return Err(Error::InvalidPolicy(format!(
            "expected a max-player policy over {s_n} states and {a_n} actions"
        )));
    }
    if !(gamma > 0.0 && gamma < 1.0) || tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("gamma {gamma} / tol {tol} out of range")));
    }
    // Sup-norm change below this bound puts the iterate within tol of V*.
    let stop = tol * (1.0 - gamma) / gamma;
    let max_iters = ((tol.min(1.0) * (1.0 - gamma) / 2.0).ln() / gamma.ln()).ceil() as usize + 100;

    let mut v = vec![0.0; s_n];
    let mut change = f64::INFINITY;
    for _ in 0..max_iters {
        let next: Vec<f64> = (0..s_n)
            .map(|s| (0..b_n).map(|b| mixed_q(game, mu, gamma, s, b, &v)).fold(f64::INFINITY, f64::min))
            .collect();
        change = next.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        v = next;
        if change <= stop {
            break;
        }
    }
    if change > stop {
        return Err(Error::NotConverged { what: "best-response iteration", iterations: max_iters, residual: change });
    }

    let actions: Vec<usize> = (0..s_n)
        .map(|s| {
            let qs: Vec<f64> = (0..b_n).map(|b| mixed_q(game, mu, gamma, s, b, &v)).collect();
            let min = qs.iter().cloned().fold(f64::INFINITY, f64::min);
            let slack = 1e-12 * min.abs().max(1.0);
            qs.iter().position(|&q| q <= min + slack).unwrap_or(0)
        })
        .collect();
    let policy = MarkovPolicy::deterministic(Player::Min, b_n, &actions);
    let value = evaluate_policies(game, mu, &policy, gamma)?;
    let residual = (0..s_n)
        .map(|s| {
            let best = (0..b_n).map(|b| mixed_q(game, mu, gamma, s, b, &value)).fold(f64::INFINITY, f64::min);
            (best - value[s]).abs()
        })
        .fold(0.0, f64::max);
    Ok(BestResponse { policy, value, residual })
}

/// Exact `V_γ^{(μ,ν)}` by solving `(I − γ P^{(μ,ν)}) V = r^{(μ,ν)}`.
pub fn evaluate_policies(
    game: &StochasticGame,
    mu: &MarkovPolicy,
    nu: &MarkovPolicy,
    gamma: f64,
) -> Result<Vec<f64>> {
    let (s_n, a_n, b_n) = game.dims();
    if mu.num_states() != s_n || mu.num_actions() != a_n || nu.num_states() != s_n || nu.num_actions() != b_n {
        return Err(Error::Dimension("policy shapes do not match the game".into()));
    }
    let mut m = DMatrix::<f64>::identity(s_n, s_n);
    let mut rhs = DVector::<f64>::zeros(s_n);
    for s in 0..s_n {
        for (a, pa) in mu.row(s).iter().enumerate() {
            for (b, pb) in nu.row(s).iter().enumerate() {
                let w = pa * pb;
                if w == 0.0 {
                    continue;
                }
                rhs[s] += w * game.reward(s, a, b);
                for (next, p) in game.transition_row(s, a, b).iter().enumerate() {
                    m[(s, next)] -= gamma * w * p;
                }
            }
        }
    }
    let v = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidArgument("singular policy evaluation system".into()))?;
    Ok(v.iter().copied().collect())
}
