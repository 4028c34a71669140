//! Command-line surface.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{generate_game, GameGenSpec, RewardLaw};
use crate::harness::{Experiment, ExperimentConfig, HMode, DEFAULT_TARGET_ERR};
use crate::io;
use crate::matrix_game::solve_matrix_game;
use crate::oracle::{average_nash_value, estimate_diameter_capped, DiameterEstimate, DEFAULT_ENUMERATION_CAP};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "donq", version, about = "Optimistic Nash Q-learning for average-reward stochastic games")]
pub struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    HighProb,
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardLawArg(pub RewardLaw);

impl FromStr for RewardLawArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "uniform01" {
            return Ok(RewardLawArg(RewardLaw::Uniform01));
        }
        match s.strip_prefix("bernoulli:").map(str::parse::<f64>) {
            Some(Ok(p)) => Ok(RewardLawArg(RewardLaw::Bernoulli(p))),
            _ => Err(format!("expected `uniform01` or `bernoulli:<p>`, got `{s}`")),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a generated game as JSON.
    Gen {
        #[arg(long = "states", short = 'S')]
        states: usize,
        #[arg(long = "max-actions", short = 'A')]
        max_actions: usize,
        #[arg(long = "min-actions", short = 'B')]
        min_actions: usize,
        /// Mixing weight of the uniform distribution in every transition row.
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// `uniform01` or `bernoulli:<p>`.
        #[arg(long, default_value = "uniform01")]
        reward_law: RewardLawArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a game file.
    Validate { game: PathBuf },
    /// Solve a matrix game given as a JSON array of rows.
    Nash {
        matrix: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Average-reward value J* and the discounted values behind it.
    Solve {
        game: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TARGET_ERR)]
        target_err: f64,
        /// Diameter bound to use instead of the estimator.
        #[arg(long = "diameter")]
        d: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the diameter by enumerating deterministic min-player policies.
    Diameter {
        game: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one episode and write the regret CSV.
    Run {
        config: PathBuf,
        /// Overrides the first seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        preset: Option<Preset>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every (T, seed) pair of the config and write a JSON summary.
    Sweep {
        config: PathBuf,
        /// Replaces the config's seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        preset: Option<Preset>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_convergence() {
        EXIT_NOT_CONVERGED
    } else {
        EXIT_INVALID
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => io::write_file(path, text.as_bytes()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|source| Error::Io { path: PathBuf::from("<stdout>"), source })
        }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable output");
    text.push('\n');
    text
}

fn load_experiment(path: &Path, seed: Option<u64>, preset: Option<Preset>) -> Result<ExperimentConfig> {
    let mut config = io::load_config(path)?;
    if let Some(seed) = seed {
        config.seeds = vec![seed];
    }
    match preset {
        Some(Preset::HighProb) => config.h_mode = HMode::HighProb,
        Some(Preset::Expected) => config.h_mode = HMode::Expected,
        None => {}
    }
    Ok(config)
}

#[derive(Serialize)]
struct SolveOutput {
    j_star: f64,
    gamma_used: f64,
    error_bound: f64,
    v_star_gamma: Vec<f64>,
    diameter: DiameterEstimate,
}

/// Executes a parsed command.
pub fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        // Fails only if a pool already exists, in which case it is reused.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Gen { states, max_actions, min_actions, epsilon, reward_law, seed, out } => {
            let spec = GameGenSpec {
                num_states: states,
                num_max_actions: max_actions,
                num_min_actions: min_actions,
                mixing_epsilon: epsilon,
                reward_law: reward_law.0,
                seed,
            };
            emit(out.as_deref(), &io::game_to_json(&generate_game(&spec)?))
        }
        Command::Validate { game } => {
            let report = io::read_game_file(&game)?.validate().map_err(|e| match e {
                Error::Dimension(msg) => Error::Parse { path: game.clone(), message: msg },
                other => other,
            })?;
            if report.violations.is_empty() {
                emit(None, &format!("{}: valid\n", game.display()))
            } else {
                Err(Error::InvalidGame(report))
            }
        }
        Command::Nash { matrix, tol } => {
            let m = io::load_matrix(&matrix)?;
            emit(None, &json(&solve_matrix_game(m.view(), tol)?))
        }
        Command::Solve { game, target_err, d, out } => {
            let g = io::load_game(&game)?;
            let diameter = match d {
                Some(d) => DiameterEstimate::user_supplied(d)?,
                None => estimate_diameter_capped(&g, DEFAULT_ENUMERATION_CAP)?,
            };
            let sol = average_nash_value(&g, target_err, diameter.d_hat)?;
            let output = SolveOutput {
                j_star: sol.j_star,
                gamma_used: sol.gamma_used,
                error_bound: sol.error_bound,
                v_star_gamma: sol.v_star_ref,
                diameter,
            };
            emit(out.as_deref(), &json(&output))
        }
        Command::Diameter { game, cap, out } => {
            let g = io::load_game(&game)?;
            emit(out.as_deref(), &json(&estimate_diameter_capped(&g, cap)?))
        }
        Command::Run { config, seed, preset, out } => {
            let config = load_experiment(&config, seed, preset)?;
            let seed = config.seeds[0];
            let horizon = config.horizon_t;
            let experiment = Experiment::prepare(config)?;
            let record = experiment.run_episode(horizon, seed)?;
            emit(out.as_deref(), &io::regret_csv(&record))
        }
        Command::Sweep { config, seed, preset, out } => {
            let config = load_experiment(&config, seed, preset)?;
            let experiment = Experiment::prepare(config)?;
            emit(out.as_deref(), &io::sweep_json(&experiment.run_sweep()?))
        }
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// exit code. Diagnostics go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
