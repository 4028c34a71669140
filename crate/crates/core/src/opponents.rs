//! Min-player policies the learner can be paired with.

use rand::Rng;

use crate::agent::{DonqAgent, DonqConfig};
use crate::error::{Error, Result};
use crate::game::StochasticGame;
use crate::oracle::{discounted_best_response_min, shapley_iteration, DEFAULT_MAX_ITERS};
use crate::policy::{MarkovPolicy, Player};

pub const NASH_TOL: f64 = 1e-9;

/// Description of an opponent, resolved against a game by [`Opponent::new`].
#[derive(Debug, Clone, PartialEq)]
pub enum OpponentKind {
    Uniform,
    FixedMarkov(MarkovPolicy),
    /// Plays the min-player half of the discounted Nash pair. `None` uses
    /// the learner's discount.
    StationaryNash { gamma: Option<f64> },
    /// Recomputes a discounted best response to the learner's declared
    /// policy every `period` steps; `None` never rebuilds.
    BestResponder { period: Option<u64>, gamma: Option<f64>, tol: f64 },
    /// A second DONQ learner playing the min side, i.e. maximizing `1 − r`.
    /// `None` copies the learner's configuration.
    SelfPlayMirror(Option<DonqConfig>),
}

impl OpponentKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpponentKind::Uniform => "uniform",
            OpponentKind::FixedMarkov(_) => "fixed-markov",
            OpponentKind::StationaryNash { .. } => "stationary-nash",
            OpponentKind::BestResponder { .. } => "best-responder",
            OpponentKind::SelfPlayMirror(_) => "self-play-mirror",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BestResponder {
    period: Option<u64>,
    gamma: f64,
    tol: f64,
    policy: MarkovPolicy,
    /// Learner policy the cached response was built against.
    snapshot: MarkovPolicy,
    residual: f64,
    steps: u64,
}

impl BestResponder {
    pub fn policy(&self) -> &MarkovPolicy {
        &self.policy
    }

    pub fn snapshot(&self) -> &MarkovPolicy {
        &self.snapshot
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    fn rebuild(&mut self, game: &StochasticGame, learner: &MarkovPolicy) -> Result<()> {
        let br = discounted_best_response_min(game, learner, self.gamma, self.tol)?;
        self.policy = br.policy;
        self.residual = br.residual;
        self.snapshot = learner.clone();
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum Opponent {
    Uniform { num_actions: usize },
    Fixed(MarkovPolicy),
    Nash(MarkovPolicy),
    BestResponder(BestResponder),
    Mirror(Box<DonqAgent>),
}

impl Opponent {
    /// Instantiates `kind` for `game`. `learner` is the learner's
    /// configuration; its discount is the default for discounted opponents.
    pub fn new(kind: &OpponentKind, game: &StochasticGame, learner: &DonqConfig) -> Result<Self> {
        let (s_n, a_n, b_n) = game.dims();
        Ok(match kind {
            OpponentKind::Uniform => Opponent::Uniform { num_actions: b_n },
            OpponentKind::FixedMarkov(policy) => {
                if policy.owner() != Player::Min || policy.num_states() != s_n || policy.num_actions() != b_n {
                    return Err(Error::InvalidPolicy(format!(
                        "fixed opponent needs a min-player policy over {s_n} states and {b_n} actions"
                    )));
                }
                Opponent::Fixed(policy.clone())
            }
            OpponentKind::StationaryNash { gamma } => {
                let gamma = gamma.unwrap_or_else(|| learner.gamma());
                let sol = shapley_iteration(game, gamma, NASH_TOL, DEFAULT_MAX_ITERS)?;
                Opponent::Nash(sol.nu_gamma)
            }
            OpponentKind::BestResponder { period, gamma, tol } => {
                if *period == Some(0) {
                    return Err(Error::InvalidArgument("best-responder period must be >= 1".into()));
                }
                let uniform = MarkovPolicy::uniform(Player::Max, s_n, a_n);
                let mut br = BestResponder {
                    period: *period,
                    gamma: gamma.unwrap_or_else(|| learner.gamma()),
                    tol: *tol,
                    policy: MarkovPolicy::uniform(Player::Min, s_n, b_n),
                    snapshot: uniform.clone(),
                    residual: f64::INFINITY,
                    steps: 0,
                };
                br.rebuild(game, &uniform)?;
                Opponent::BestResponder(br)
            }
            OpponentKind::SelfPlayMirror(config) => {
                let config = config.unwrap_or(*learner);
                Opponent::Mirror(Box::new(DonqAgent::new(config, (s_n, b_n, a_n))?))
            }
        })
    }

    /// Draws the opponent's action at `s`.
    pub fn act<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> Result<usize> {
        match self {
            Opponent::Uniform { num_actions } => Ok(rng.random_range(0..*num_actions)),
            Opponent::Fixed(policy) | Opponent::Nash(policy) => policy.sample(s, rng),
            Opponent::BestResponder(br) => br.policy.sample(s, rng),
            Opponent::Mirror(agent) => agent.act(s, rng),
        }
    }

    /// Feedback after a step. `learner` is the learner's declared policy
    /// after its own update.
    #[allow(clippy::too_many_arguments)]
    pub fn observe(
        &mut self,
        game: &StochasticGame,
        s: usize,
        a: usize,
        b: usize,
        reward: f64,
        s_next: usize,
        learner: &MarkovPolicy,
    ) -> Result<()> {
        match self {
            Opponent::Uniform { .. } | Opponent::Fixed(_) | Opponent::Nash(_) => Ok(()),
            Opponent::BestResponder(br) => {
                br.steps += 1;
                match br.period {
                    Some(p) if br.steps % p == 0 => br.rebuild(game, learner),
                    _ => Ok(()),
                }
            }
            Opponent::Mirror(agent) => agent.observe(s, b, a, 1.0 - reward, s_next).map(|_| ()),
        }
    }
}
