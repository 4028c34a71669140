//! Tabular two-player zero-sum stochastic games.
//!
//! A game is the tuple (S, A, B, r, P): `S` states, `A` actions for the
//! max-player, `B` actions for the min-player, a reward table `r(s,a,b)` in
//! [0,1] paid to the max-player and a transition kernel `P(·|s,a,b)`.
//! Tables are stored flat in row-major order `[s][a][b]` (and `[s][a][b][s']`
//! for the kernel).

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on probability row sums.
pub const PROB_TOL: f64 = 1e-12;

// Slack for decimal round-off when comparing a row sum against PROB_TOL: a
// row written as 0.999999999999 parses to a sum a few ulps past 1e-12.
const SUM_SLACK: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticGame {
    num_states: usize,
    num_max_actions: usize,
    num_min_actions: usize,
    reward: Vec<f64>,
    transition: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyDimension { name: &'static str },
    TableLength { table: &'static str, expected: usize, found: usize },
    RewardOutOfRange { s: usize, a: usize, b: usize, value: f64 },
    NegativeProbability { s: usize, a: usize, b: usize, next: usize, value: f64 },
    NonFiniteProbability { s: usize, a: usize, b: usize, next: usize },
    RowSum { s: usize, a: usize, b: usize, sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::EmptyDimension { name } => write!(f, "{name} must be at least 1"),
            Violation::TableLength { table, expected, found } => {
                write!(f, "{table} has {found} entries, expected {expected}")
            }
            Violation::RewardOutOfRange { s, a, b, value } => {
                write!(f, "r[{s}][{a}][{b}] = {value} outside [0,1]")
            }
            Violation::NegativeProbability { s, a, b, next, value } => {
                write!(f, "P[{s}][{a}][{b}][{next}] = {value} is negative")
            }
            Violation::NonFiniteProbability { s, a, b, next } => {
                write!(f, "P[{s}][{a}][{b}][{next}] is not finite")
            }
            Violation::RowSum { s, a, b, sum } => {
                write!(f, "P[{s}][{a}][{b}] sums to {sum:.17}, not 1")
            }
        }
    }
}

/// Outcome of [`validate_parts`]; empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {v}")?;
        }
        Ok(())
    }
}

fn row_sum_ok(sum: f64) -> bool {
    (sum - 1.0).abs() <= PROB_TOL + SUM_SLACK
}

/// Checks every game invariant, reporting each violated entry or row.
pub fn validate_parts(
    num_states: usize,
    num_max_actions: usize,
    num_min_actions: usize,
    reward: &[f64],
    transition: &[f64],
) -> ValidationReport {
    let mut violations = Vec::new();
    for (name, n) in [("S", num_states), ("A", num_max_actions), ("B", num_min_actions)] {
        if n == 0 {
            violations.push(Violation::EmptyDimension { name });
        }
    }
    let cells = num_states * num_max_actions * num_min_actions;
    if reward.len() != cells {
        violations.push(Violation::TableLength { table: "r", expected: cells, found: reward.len() });
    }
    if transition.len() != cells * num_states {
        violations.push(Violation::TableLength {
            table: "P",
            expected: cells * num_states,
            found: transition.len(),
        });
    }
    if !violations.is_empty() {
        return ValidationReport { violations };
    }

    for s in 0..num_states {
        for a in 0..num_max_actions {
            for b in 0..num_min_actions {
                let cell = (s * num_max_actions + a) * num_min_actions + b;
                let r = reward[cell];
                if !(0.0..=1.0).contains(&r) {
                    violations.push(Violation::RewardOutOfRange { s, a, b, value: r });
                }
                let row = &transition[cell * num_states..(cell + 1) * num_states];
                let mut finite = true;
                for (next, &p) in row.iter().enumerate() {
                    if !p.is_finite() {
                        finite = false;
                        violations.push(Violation::NonFiniteProbability { s, a, b, next });
                    } else if p < 0.0 {
                        violations.push(Violation::NegativeProbability { s, a, b, next, value: p });
                    }
                }
                let sum: f64 = row.iter().sum();
                if finite && !row_sum_ok(sum) {
                    violations.push(Violation::RowSum { s, a, b, sum });
                }
            }
        }
    }
    ValidationReport { violations }
}

impl StochasticGame {
    /// Builds a game, rejecting any invariant violation.
    pub fn new(
        num_states: usize,
        num_max_actions: usize,
        num_min_actions: usize,
        reward: Vec<f64>,
        transition: Vec<f64>,
    ) -> Result<Self> {
        let report = validate_parts(num_states, num_max_actions, num_min_actions, &reward, &transition);
        if !report.is_valid() {
            return Err(Error::InvalidGame(report));
        }
        Ok(StochasticGame { num_states, num_max_actions, num_min_actions, reward, transition })
    }

    /// Like [`StochasticGame::new`], but first divides every transition row
    /// whose sum is within tolerance of 1 by that sum. Rows that already sum
    /// to 1 up to rounding are left untouched so canonical files round-trip.
    pub fn new_renormalized(
        num_states: usize,
        num_max_actions: usize,
        num_min_actions: usize,
        reward: Vec<f64>,
        mut transition: Vec<f64>,
    ) -> Result<Self> {
        if num_states > 0 && transition.len().is_multiple_of(num_states) {
            for row in transition.chunks_mut(num_states) {
                let sum: f64 = row.iter().sum();
                let dev = (sum - 1.0).abs();
                if sum.is_finite() && dev > SUM_SLACK && row_sum_ok(sum) {
                    row.iter_mut().for_each(|p| *p /= sum);
                }
            }
        }
        Self::new(num_states, num_max_actions, num_min_actions, reward, transition)
    }

    /// A single-state game that repeats the matrix game `payoff` forever.
    pub fn repeated_matrix_game(payoff: &[Vec<f64>]) -> Result<Self> {
        let rows = payoff.len();
        let cols = payoff.first().map_or(0, Vec::len);
        if payoff.iter().any(|row| row.len() != cols) {
            return Err(Error::Dimension("ragged payoff matrix".into()));
        }
        let reward: Vec<f64> = payoff.iter().flatten().copied().collect();
        let transition = vec![1.0; rows * cols];
        Self::new(1, rows, cols, reward, transition)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_max_actions(&self) -> usize {
        self.num_max_actions
    }

    pub fn num_min_actions(&self) -> usize {
        self.num_min_actions
    }

    /// `(S, A, B)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.num_states, self.num_max_actions, self.num_min_actions)
    }

    /// Flat index of `(s, a, b)` into S×A×B tables.
    #[inline]
    pub fn cell(&self, s: usize, a: usize, b: usize) -> usize {
        (s * self.num_max_actions + a) * self.num_min_actions + b
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize, b: usize) -> f64 {
        self.reward[self.cell(s, a, b)]
    }

    /// The reward table of state `s` as an A×B row-major slice.
    pub fn reward_matrix(&self, s: usize) -> &[f64] {
        let stride = self.num_max_actions * self.num_min_actions;
        &self.reward[s * stride..(s + 1) * stride]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    #[inline]
    pub fn transition_row(&self, s: usize, a: usize, b: usize) -> &[f64] {
        let cell = self.cell(s, a, b);
        &self.transition[cell * self.num_states..(cell + 1) * self.num_states]
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    /// `Σ_{s'} P(s'|s,a,b)·f(s')`.
    #[inline]
    pub fn expect(&self, s: usize, a: usize, b: usize, f: &[f64]) -> f64 {
        self.transition_row(s, a, b).iter().zip(f).map(|(p, v)| p * v).sum()
    }

    /// Game with rewards replaced by `1 − r`, the min-player's view of the
    /// same zero-sum game.
    pub fn complement(&self) -> StochasticGame {
        let (s_n, a_n, b_n) = self.dims();
        let mut reward = vec![0.0; self.reward.len()];
        let mut transition = vec![0.0; self.transition.len()];
        for s in 0..s_n {
            for a in 0..a_n {
                for b in 0..b_n {
                    let swapped = (s * b_n + b) * a_n + a;
                    reward[swapped] = 1.0 - self.reward(s, a, b);
                    transition[swapped * s_n..(swapped + 1) * s_n]
                        .copy_from_slice(self.transition_row(s, a, b));
                }
            }
        }
        StochasticGame {
            num_states: s_n,
            num_max_actions: b_n,
            num_min_actions: a_n,
            reward,
            transition,
        }
    }

    fn check_indices(&self, s: usize, a: usize, b: usize) -> Result<()> {
        check_index("state", s, self.num_states)?;
        check_index("max-action", a, self.num_max_actions)?;
        check_index("min-action", b, self.num_min_actions)
    }

    /// Draws the next state from `P(·|s,a,b)`. Consumes exactly one uniform
    /// variate from `rng`.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        s: usize,
        a: usize,
        b: usize,
        rng: &mut R,
    ) -> Result<usize> {
        self.check_indices(s, a, b)?;
        Ok(sample_index(self.transition_row(s, a, b), rng))
    }
}

pub(crate) fn check_index(what: &'static str, index: usize, bound: usize) -> Result<()> {
    if index >= bound {
        return Err(Error::IndexOutOfRange { what, index, bound });
    }
    Ok(())
}

/// Inverse-CDF draw from a probability vector using one uniform variate.
/// Falls back to the last index with positive mass when rounding leaves
/// the cumulative sum short of the draw.
pub fn sample_index<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardLaw {
    Uniform01,
    Bernoulli(f64),
}

/// Parameters of the random communicating-game generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameGenSpec {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_max_actions: usize,
    #[serde(rename = "B")]
    pub num_min_actions: usize,
    pub mixing_epsilon: f64,
    pub reward_law: RewardLaw,
    pub seed: u64,
}

impl GameGenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_states == 0 || self.num_max_actions == 0 || self.num_min_actions == 0 {
            return Err(Error::InvalidArgument("S, A and B must be positive".into()));
        }
        if !(self.mixing_epsilon > 0.0 && self.mixing_epsilon <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "mixing_epsilon {} not in (0,1]",
                self.mixing_epsilon
            )));
        }
        if let RewardLaw::Bernoulli(p) = self.reward_law {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("bernoulli p = {p} not in [0,1]")));
            }
        }
        Ok(())
    }
}

/// Generates a game seeded from `spec.seed`.
pub fn generate_game(spec: &GameGenSpec) -> Result<StochasticGame> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    generate_random_communicating_game(spec, &mut rng)
}

/// Every transition row is `(1 − ε)·Dirichlet(1,…,1) + ε·uniform`, so each
/// entry is at least `ε/S` and every state is reachable in one step under any
/// pair of policies.
pub fn generate_random_communicating_game<R: Rng + ?Sized>(
    spec: &GameGenSpec,
    rng: &mut R,
) -> Result<StochasticGame> {
    spec.validate()?;
    let (s_n, a_n, b_n) = (spec.num_states, spec.num_max_actions, spec.num_min_actions);
    let eps = spec.mixing_epsilon;
    let cells = s_n * a_n * b_n;

    let mut reward = Vec::with_capacity(cells);
    let mut transition = Vec::with_capacity(cells * s_n);
    let mut weights = vec![0.0; s_n];
    for _ in 0..cells {
        reward.push(match spec.reward_law {
            RewardLaw::Uniform01 => rng.random::<f64>(),
            RewardLaw::Bernoulli(p) => {
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
        });
        for w in weights.iter_mut() {
            *w = rng.sample::<f64, _>(Exp1);
        }
        let total: f64 = weights.iter().sum();
        let uniform = 1.0 / s_n as f64;
        if eps >= 1.0 || total <= 0.0 {
            transition.extend(std::iter::repeat_n(uniform, s_n));
        } else {
            transition.extend(weights.iter().map(|w| (1.0 - eps) * w / total + eps * uniform));
        }
    }
    StochasticGame::new(s_n, a_n, b_n, reward, transition)
}
