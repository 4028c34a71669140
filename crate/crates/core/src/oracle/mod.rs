//! Ground-truth quantities: discounted Nash values by Shapley iteration,
//! the average-reward game value by vanishing discount, spans, diameter
//! bounds and discounted best responses.

mod best_response;
mod diameter;
mod shapley;

pub use best_response::{discounted_best_response_min, evaluate_policies, BestResponse};
pub use diameter::{
    decode_min_policy, estimate_diameter, estimate_diameter_capped, min_hitting_times, DiameterEstimate,
    DiameterMethod, HittingPair, DEFAULT_ENUMERATION_CAP,
};
pub use shapley::{bellman_residual, shapley_iteration, shapley_operator, DiscountedNashSolution};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::StochasticGame;

pub const DEFAULT_MAX_ITERS: usize = 1_000_000;

/// `max − min` of a state function.
pub fn span(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("span of an empty vector".into()));
    }
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    Ok(hi - lo)
}

#[derive(Debug, Clone, Serialize)]
pub struct AverageRewardSolution {
    pub j_star: f64,
    pub gamma_used: f64,
    pub error_bound: f64,
    pub v_star_ref: Vec<f64>,
}

/// Discount that makes the vanishing-discount bias `(1 − γ)·D` equal to
/// half of `target_err`. With `D = 0` the bias vanishes for every discount.
pub fn vanishing_discount(target_err: f64, d_bound: f64) -> f64 {
    if d_bound <= 0.0 {
        return 0.5;
    }
    let gamma = 1.0 - target_err / (2.0 * d_bound);
    if gamma > 0.5 {
        gamma
    } else {
        0.5
    }
}

/// Average-reward Nash value `J*` to within `target_err`, computed as
/// `(1 − γ)·V*_γ(0)`.
///
/// Half of the budget covers `|J* − (1−γ)V*_γ(s)| ≤ (1−γ)·D`; the other half
/// covers the Shapley solve, run to `‖V − V*_γ‖∞ ≤ target_err / (2(1−γ))`.
/// `d_bound` must upper-bound the diameter of a game that is communicating
/// for the max-player.
pub fn average_nash_value(game: &StochasticGame, target_err: f64, d_bound: f64) -> Result<AverageRewardSolution> {
    if !(target_err > 0.0 && target_err.is_finite()) {
        return Err(Error::InvalidArgument(format!("target_err {target_err} must be positive")));
    }
    if !(d_bound >= 0.0 && d_bound.is_finite()) {
        return Err(Error::InvalidArgument(format!("diameter bound {d_bound} must be finite and >= 0")));
    }
    let gamma = vanishing_discount(target_err, d_bound);
    let scale = 1.0 - gamma;
    let sol = shapley_iteration(game, gamma, target_err / (2.0 * scale), DEFAULT_MAX_ITERS)?;
    Ok(AverageRewardSolution {
        j_star: scale * sol.v_star[0],
        gamma_used: gamma,
        error_bound: target_err,
        v_star_ref: sol.v_star,
    })
}
