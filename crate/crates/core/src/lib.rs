//! DONQ-learning for infinite-horizon average-reward two-player zero-sum
//! stochastic games, with the oracles needed to measure its regret.

pub mod agent;
pub mod cli;
pub mod error;
pub mod game;
pub mod harness;
pub mod io;
pub mod matrix_game;
pub mod opponents;
pub mod oracle;
pub mod policy;

pub use error::{Error, Result};
