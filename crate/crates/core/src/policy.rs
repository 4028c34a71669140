use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{check_index, sample_index, PROB_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Player {
    Max,
    Min,
}

/// A stationary Markov policy: one action distribution per state.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovPolicy {
    owner: Player,
    num_actions: usize,
    dist: Vec<f64>,
}

impl MarkovPolicy {
    /// Builds a policy from per-state rows, checking each is a simplex vector.
    pub fn from_rows(owner: Player, rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_actions = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || num_actions == 0 {
            return Err(Error::InvalidPolicy("policy needs at least one state and one action".into()));
        }
        for (s, row) in rows.iter().enumerate() {
            if row.len() != num_actions {
                return Err(Error::InvalidPolicy(format!(
                    "row {s} has {} entries, expected {num_actions}",
                    row.len()
                )));
            }
            check_simplex(row).map_err(|msg| Error::InvalidPolicy(format!("row {s}: {msg}")))?;
        }
        Ok(MarkovPolicy { owner, num_actions, dist: rows.into_iter().flatten().collect() })
    }

    pub fn uniform(owner: Player, num_states: usize, num_actions: usize) -> Self {
        MarkovPolicy {
            owner,
            num_actions,
            dist: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    /// Deterministic policy playing `actions[s]` in state `s`.
    pub fn deterministic(owner: Player, num_actions: usize, actions: &[usize]) -> Self {
        let mut dist = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            dist[s * num_actions + a] = 1.0;
        }
        MarkovPolicy { owner, num_actions, dist }
    }

    pub fn owner(&self) -> Player {
        self.owner
    }

    pub fn num_states(&self) -> usize {
        self.dist.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.dist[s * self.num_actions..(s + 1) * self.num_actions]
    }

    /// Overwrites the distribution at `s`. The caller supplies a simplex vector.
    pub fn set_row(&mut self, s: usize, row: &[f64]) {
        self.dist[s * self.num_actions..(s + 1) * self.num_actions].copy_from_slice(row);
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.dist.chunks(self.num_actions).map(<[f64]>::to_vec).collect()
    }

    /// Draws an action at state `s` using one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> Result<usize> {
        check_index("state", s, self.num_states())?;
        Ok(sample_index(self.row(s), rng))
    }
}

pub(crate) fn check_simplex(row: &[f64]) -> std::result::Result<(), String> {
    if let Some((i, p)) = row.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
        return Err(format!("entry {i} = {p} is not a probability"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL + 64.0 * f64::EPSILON {
        return Err(format!("sums to {sum:.17}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_non_simplex_rows() {
        assert!(MarkovPolicy::from_rows(Player::Min, vec![vec![0.5, 0.6]]).is_err());
        assert!(MarkovPolicy::from_rows(Player::Min, vec![vec![1.5, -0.5]]).is_err());
        assert!(MarkovPolicy::from_rows(Player::Min, vec![vec![1.0], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn point_mass_sampling() {
        let p = MarkovPolicy::deterministic(Player::Max, 3, &[2, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(p.sample(0, &mut rng).unwrap(), 2);
            assert_eq!(p.sample(1, &mut rng).unwrap(), 0);
        }
    }
}
