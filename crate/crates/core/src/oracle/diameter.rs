use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::StochasticGame;

pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

const SSP_MAX_ITERS: usize = 1_000_000;
const SSP_DIVERGENCE: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiameterMethod {
    UserSupplied,
    DeterministicEnumeration,
}

/// Worst case found for one ordered state pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HittingPair {
    pub from: usize,
    pub to: usize,
    /// Index of the worst deterministic min-player policy, read in base `B`
    /// with state 0 as the least significant digit.
    pub worst_nu: u64,
    pub hitting_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiameterEstimate {
    pub d_hat: f64,
    pub method: DiameterMethod,
    pub pairs: Vec<HittingPair>,
}

impl DiameterEstimate {
    pub fn user_supplied(d: f64) -> Result<Self> {
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::InvalidArgument(format!("diameter bound {d} must be finite and >= 0")));
        }
        Ok(DiameterEstimate { d_hat: d, method: DiameterMethod::UserSupplied, pairs: Vec::new() })
    }
}

/// Decodes deterministic min-player policy number `index` into one action per state.
pub fn decode_min_policy(index: u64, num_states: usize, num_actions: usize) -> Vec<usize> {
    let mut rest = index;
    (0..num_states)
        .map(|_| {
            let b = (rest % num_actions as u64) as usize;
            rest /= num_actions as u64;
            b
        })
        .collect()
}

/// `max_{s,s'} max_ν min_μ T_{s→s'}` with `ν` ranging over deterministic
/// stationary min-player policies. For each `(ν, s')` the max-player's
/// hitting-time minimization is a stochastic shortest path problem, solved
/// by value iteration and then polished to the exact optimum by policy
/// iteration.
pub fn estimate_diameter(game: &StochasticGame) -> Result<DiameterEstimate> {
    estimate_diameter_capped(game, DEFAULT_ENUMERATION_CAP)
}

pub fn estimate_diameter_capped(game: &StochasticGame, cap: u64) -> Result<DiameterEstimate> {
    let (s_n, _, b_n) = game.dims();
    let count = (b_n as f64).powi(s_n as i32);
    if count > cap as f64 {
        return Err(Error::EnumerationCap { count, cap });
    }
    let count = count as u64;

    // Per policy: hitting times h[to][from].
    let per_policy: Vec<(u64, Vec<Vec<f64>>)> = (0..count)
        .into_par_iter()
        .map(|index| {
            let nu = decode_min_policy(index, s_n, b_n);
            let times = (0..s_n)
                .map(|target| min_hitting_times(game, &nu, target))
                .collect::<Result<Vec<_>>>()?;
            Ok((index, times))
        })
        .collect::<Result<_>>()?;

    let mut pairs = Vec::with_capacity(s_n * s_n);
    for from in 0..s_n {
        for to in 0..s_n {
            let mut worst = HittingPair { from, to, worst_nu: 0, hitting_time: 0.0 };
            for (index, times) in &per_policy {
                if times[to][from] > worst.hitting_time {
                    worst.worst_nu = *index;
                    worst.hitting_time = times[to][from];
                }
            }
            pairs.push(worst);
        }
    }
    let d_hat = pairs.iter().map(|p| p.hitting_time).fold(0.0, f64::max);
    Ok(DiameterEstimate { d_hat, method: DiameterMethod::DeterministicEnumeration, pairs })
}

/// Minimal expected hitting times of `target` from every state when the
/// min-player plays the deterministic policy `nu`.
pub fn min_hitting_times(game: &StochasticGame, nu: &[usize], target: usize) -> Result<Vec<f64>> {
    let (s_n, a_n, _) = game.dims();
    let mut h = vec![0.0; s_n];
    let mut converged = false;
    let mut change = f64::INFINITY;
    for _ in 0..SSP_MAX_ITERS {
        let next: Vec<f64> = (0..s_n)
            .map(|s| {
                if s == target {
                    0.0
                } else {
                    1.0 + (0..a_n).map(|a| game.expect(s, a, nu[s], &h)).fold(f64::INFINITY, f64::min)
                }
            })
            .collect();
        change = next.iter().zip(&h).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let top = next.iter().cloned().fold(0.0, f64::max);
        h = next;
        if top > SSP_DIVERGENCE {
            break;
        }
        if change <= 1e-12 * top.max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            what: "hitting-time iteration (is the game communicating?)",
            iterations: SSP_MAX_ITERS,
            residual: change,
        });
    }
    Ok(polish(game, nu, target, h))
}

/// Policy iteration started from the greedy policy of `h`. Returns `h`
/// unchanged if a linear solve fails.
fn polish(game: &StochasticGame, nu: &[usize], target: usize, mut h: Vec<f64>) -> Vec<f64> {
    let (s_n, a_n, _) = game.dims();
    let greedy = |h: &[f64], current: Option<&[usize]>| -> Vec<usize> {
        (0..s_n)
            .map(|s| {
                let mut best = current.map_or(0, |c| c[s]);
                let mut best_val = game.expect(s, best, nu[s], h);
                for a in 0..a_n {
                    let v = game.expect(s, a, nu[s], h);
                    if v < best_val - 1e-13 * best_val.abs().max(1.0) {
                        best = a;
                        best_val = v;
                    }
                }
                best
            })
            .collect()
    };
    let mut policy = greedy(&h, None);
    for _ in 0..100 {
        let Some(exact) = evaluate_hitting(game, nu, target, &policy) else {
            return h;
        };
        h = exact;
        let next = greedy(&h, Some(&policy));
        if next == policy {
            break;
        }
        policy = next;
    }
    h
}

/// Solves `(I − P_π) h = 1` on non-target states with `h(target) = 0`.
fn evaluate_hitting(game: &StochasticGame, nu: &[usize], target: usize, mu: &[usize]) -> Option<Vec<f64>> {
    let s_n = game.num_states();
    let mut m = DMatrix::<f64>::identity(s_n, s_n);
    let mut rhs = DVector::<f64>::from_element(s_n, 1.0);
    rhs[target] = 0.0;
    for s in 0..s_n {
        if s == target {
            continue;
        }
        for (next, p) in game.transition_row(s, mu[s], nu[s]).iter().enumerate() {
            if next != target {
                m[(s, next)] -= p;
            }
        }
    }
    let h = m.lu().solve(&rhs)?;
    if h.iter().all(|x| x.is_finite() && *x >= -1e-9) {
        Some(h.iter().map(|x| x.max(0.0)).collect())
    } else {
        None
    }
}
