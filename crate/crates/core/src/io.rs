//! File formats: game, policy and matrix JSON, experiment configs, the
//! per-episode regret CSV and the sweep summary JSON.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{validate_parts, GameGenSpec, StochasticGame, ValidationReport};
use crate::harness::{DSource, DeltaMode, ExperimentConfig, HMode, RegretRecord, SweepSummary, DEFAULT_TARGET_ERR};
use crate::matrix_game::PayoffMatrix;
use crate::opponents::OpponentKind;
use crate::policy::{MarkovPolicy, Player};

/// Game JSON: `{"S","A","B","r":[s][a][b],"P":[s][a][b][s']}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_max_actions: usize,
    #[serde(rename = "B")]
    pub num_min_actions: usize,
    pub r: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<Vec<Vec<f64>>>>,
}

fn shape_error(path: &str, expected: usize, found: usize) -> Error {
    Error::Dimension(format!("{path} has length {found}, expected {expected}"))
}

impl GameFile {
    pub fn from_game(game: &StochasticGame) -> Self {
        let (s_n, a_n, b_n) = game.dims();
        GameFile {
            num_states: s_n,
            num_max_actions: a_n,
            num_min_actions: b_n,
            r: (0..s_n)
                .map(|s| (0..a_n).map(|a| (0..b_n).map(|b| game.reward(s, a, b)).collect()).collect())
                .collect(),
            p: (0..s_n)
                .map(|s| {
                    (0..a_n)
                        .map(|a| (0..b_n).map(|b| game.transition_row(s, a, b).to_vec()).collect())
                        .collect()
                })
                .collect(),
        }
    }

    /// Flattens the nested tables, checking every length.
    pub fn flatten(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let (s_n, a_n, b_n) = (self.num_states, self.num_max_actions, self.num_min_actions);
        let mut r = Vec::with_capacity(s_n * a_n * b_n);
        let mut p = Vec::with_capacity(s_n * a_n * b_n * s_n);
        if self.r.len() != s_n {
            return Err(shape_error("r", s_n, self.r.len()));
        }
        if self.p.len() != s_n {
            return Err(shape_error("P", s_n, self.p.len()));
        }
        for s in 0..s_n {
            if self.r[s].len() != a_n {
                return Err(shape_error(&format!("r[{s}]"), a_n, self.r[s].len()));
            }
            if self.p[s].len() != a_n {
                return Err(shape_error(&format!("P[{s}]"), a_n, self.p[s].len()));
            }
            for a in 0..a_n {
                if self.r[s][a].len() != b_n {
                    return Err(shape_error(&format!("r[{s}][{a}]"), b_n, self.r[s][a].len()));
                }
                if self.p[s][a].len() != b_n {
                    return Err(shape_error(&format!("P[{s}][{a}]"), b_n, self.p[s][a].len()));
                }
                for b in 0..b_n {
                    let row = &self.p[s][a][b];
                    if row.len() != s_n {
                        return Err(shape_error(&format!("P[{s}][{a}][{b}]"), s_n, row.len()));
                    }
                    r.push(self.r[s][a][b]);
                    p.extend_from_slice(row);
                }
            }
        }
        Ok((r, p))
    }

    pub fn into_game(self) -> Result<StochasticGame> {
        let (r, p) = self.flatten()?;
        StochasticGame::new_renormalized(self.num_states, self.num_max_actions, self.num_min_actions, r, p)
    }

    /// Violations after load-time renormalization.
    pub fn validate(&self) -> Result<ValidationReport> {
        let (r, p) = self.flatten()?;
        match StochasticGame::new_renormalized(self.num_states, self.num_max_actions, self.num_min_actions, r, p) {
            Ok(g) => Ok(validate_parts(g.num_states(), g.num_max_actions(), g.num_min_actions(), g.rewards(), g.transitions())),
            Err(Error::InvalidGame(report)) => Ok(report),
            Err(e) => Err(e),
        }
    }
}

/// Policy JSON: `{"owner": "max"|"min", "dist": [[...], ...]}`, one row per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub owner: Player,
    pub dist: Vec<Vec<f64>>,
}

impl PolicyFile {
    pub fn from_policy(policy: &MarkovPolicy) -> Self {
        PolicyFile { owner: policy.owner(), dist: policy.rows() }
    }

    pub fn into_policy(self) -> Result<MarkovPolicy> {
        MarkovPolicy::from_rows(self.owner, self.dist)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse { path: path.to_owned(), message: e.to_string() })
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Io { .. } | Error::Parse { .. } => e,
        other => Error::Parse { path: path.to_owned(), message: other.to_string() },
    }
}

pub fn read_game_file(path: &Path) -> Result<GameFile> {
    parse(path, &read(path)?)
}

pub fn load_game(path: &Path) -> Result<StochasticGame> {
    read_game_file(path)?.into_game().map_err(|e| match e {
        Error::InvalidGame(_) => e,
        other => with_path(path, other),
    })
}

pub fn game_to_json(game: &StochasticGame) -> String {
    let mut text = serde_json::to_string(&GameFile::from_game(game)).expect("game serializes");
    text.push('\n');
    text
}

pub fn save_game(path: &Path, game: &StochasticGame) -> Result<()> {
    write_file(path, game_to_json(game).as_bytes())
}

pub fn load_policy(path: &Path) -> Result<MarkovPolicy> {
    let file: PolicyFile = parse(path, &read(path)?)?;
    file.into_policy().map_err(|e| with_path(path, e))
}

pub fn policy_to_json(policy: &MarkovPolicy) -> String {
    let mut text = serde_json::to_string(&PolicyFile::from_policy(policy)).expect("policy serializes");
    text.push('\n');
    text
}

/// Matrix JSON: an array of rows.
pub fn load_matrix(path: &Path) -> Result<PayoffMatrix> {
    parse(path, &read(path)?)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io { path: path.to_owned(), source })
}

// ---------------------------------------------------------------------------
// Experiment config

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GameSection {
    File(PathBuf),
    Generate(GameGenSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum HSetting {
    Explicit(f64),
    HighProb,
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DeltaSetting {
    Explicit(f64),
    #[serde(rename = "one-over-T")]
    OneOverT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DSetting {
    UserSupplied(f64),
    Estimator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    #[serde(rename = "horizon_T")]
    pub horizon_t: u64,
    #[serde(rename = "H", default = "default_h")]
    pub h: HSetting,
    #[serde(default = "default_delta")]
    pub delta: DeltaSetting,
    #[serde(rename = "D", default = "default_d")]
    pub d: DSetting,
    #[serde(default)]
    pub initial_state: usize,
}

fn default_h() -> HSetting {
    HSetting::Expected
}

fn default_delta() -> DeltaSetting {
    DeltaSetting::OneOverT
}

fn default_d() -> DSetting {
    DSetting::Estimator
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OpponentSection {
    Uniform {},
    FixedMarkov {
        #[serde(default)]
        policy_file: Option<PathBuf>,
        #[serde(default)]
        policy: Option<Vec<Vec<f64>>>,
    },
    StationaryNash {
        #[serde(default)]
        gamma: Option<f64>,
    },
    BestResponder {
        /// Steps between rebuilds; absent means never.
        #[serde(default)]
        period: Option<u64>,
        #[serde(default)]
        gamma: Option<f64>,
        #[serde(default = "default_br_tol")]
        tol: f64,
    },
    SelfPlayMirror {},
}

fn default_br_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_target_err")]
    pub target_err: f64,
}

fn default_target_err() -> f64 {
    DEFAULT_TARGET_ERR
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection { target_err: DEFAULT_TARGET_ERR }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub horizons: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { seeds: default_seeds(), horizons: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub game: GameSection,
    pub agent: AgentSection,
    #[serde(default = "default_opponent")]
    pub opponent: OpponentSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn default_opponent() -> OpponentSection {
    OpponentSection::Uniform {}
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_owned()
    } else {
        base.join(p)
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", path.display())))
    }
}

impl ConfigFile {
    /// Resolves the file into an experiment. Relative paths are taken from
    /// `base` (the directory holding the config).
    pub fn resolve(&self, base: &Path) -> Result<ExperimentConfig> {
        let (game, label) = match &self.game {
            GameSection::File(p) => {
                let path = resolve(base, p);
                require_file(&path, "game file")?;
                (load_game(&path)?, serde_json::json!({ "file": p }))
            }
            GameSection::Generate(spec) => (crate::game::generate_game(spec)?, serde_json::json!({ "generate": spec })),
        };
        let opponent = match &self.opponent {
            OpponentSection::Uniform {} => OpponentKind::Uniform,
            OpponentSection::FixedMarkov { policy_file, policy } => {
                let policy = match (policy_file, policy) {
                    (Some(p), None) => {
                        let path = resolve(base, p);
                        require_file(&path, "policy file")?;
                        load_policy(&path)?
                    }
                    (None, Some(rows)) => MarkovPolicy::from_rows(Player::Min, rows.clone())?,
                    _ => {
                        return Err(Error::Config(
                            "fixed-markov opponent needs exactly one of policy_file or policy".into(),
                        ))
                    }
                };
                OpponentKind::FixedMarkov(policy)
            }
            OpponentSection::StationaryNash { gamma } => OpponentKind::StationaryNash { gamma: *gamma },
            OpponentSection::BestResponder { period, gamma, tol } => {
                OpponentKind::BestResponder { period: *period, gamma: *gamma, tol: *tol }
            }
            OpponentSection::SelfPlayMirror {} => OpponentKind::SelfPlayMirror(None),
        };
        let config = ExperimentConfig {
            game,
            game_label: label,
            horizon_t: self.agent.horizon_t,
            horizons: self.sweep.horizons.clone(),
            h_mode: match self.agent.h {
                HSetting::Explicit(h) => HMode::Explicit(h),
                HSetting::HighProb => HMode::HighProb,
                HSetting::Expected => HMode::Expected,
            },
            delta_mode: match self.agent.delta {
                DeltaSetting::Explicit(d) => DeltaMode::Explicit(d),
                DeltaSetting::OneOverT => DeltaMode::OneOverT,
            },
            d_source: match self.agent.d {
                DSetting::UserSupplied(d) => DSource::UserSupplied(d),
                DSetting::Estimator => DSource::Estimator,
            },
            opponent,
            seeds: self.sweep.seeds.clone(),
            target_err: self.oracle.target_err,
            initial_state: self.agent.initial_state,
        };
        config.validate()?;
        Ok(config)
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let file: ConfigFile = parse(path, &read(path)?)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    file.resolve(base)
}

// ---------------------------------------------------------------------------
// Outputs

/// Decimal rendering with exactly 17 significant digits, which round-trips
/// any `f64`.
pub fn fmt_sig17(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0000000000000000".into() } else { "0.0000000000000000".into() };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let body = if exp >= 0 {
        let int_len = exp as usize + 1;
        if int_len >= digits.len() {
            format!("{digits}{}", "0".repeat(int_len - digits.len()))
        } else {
            format!("{}.{}", &digits[..int_len], &digits[int_len..])
        }
    } else {
        format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
    };
    format!("{sign}{body}")
}

/// Per-episode CSV: `t,s,a,b,reward,cum_regret`, `t` starting at 1.
pub fn write_regret_csv<W: Write>(record: &RegretRecord, mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,s,a,b,reward,cum_regret")?;
    for (i, (step, reg)) in record.steps.iter().zip(&record.cum_regret).enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            i + 1,
            step.s,
            step.a,
            step.b,
            fmt_sig17(step.reward),
            fmt_sig17(*reg)
        )?;
    }
    Ok(())
}

pub fn regret_csv(record: &RegretRecord) -> String {
    let mut buf = Vec::new();
    write_regret_csv(record, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii")
}

pub fn sweep_json(summary: &SweepSummary) -> String {
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{generate_game, RewardLaw};

    #[test]
    fn sig17_formatting() {
        assert_eq!(fmt_sig17(0.5), "0.50000000000000000");
        assert_eq!(fmt_sig17(-1.25), "-1.2500000000000000");
        assert_eq!(fmt_sig17(1234.5), "1234.5000000000000");
        assert_eq!(fmt_sig17(0.001), "0.0010000000000000000");
        assert_eq!(fmt_sig17(1e20), "100000000000000000000");
        for x in [0.1, 1.0 / 3.0, -2.0e-7, 123456.789, f64::MIN_POSITIVE * 1e10] {
            assert_eq!(fmt_sig17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn game_round_trip_is_byte_identical() {
        let game = generate_game(&GameGenSpec {
            num_states: 3,
            num_max_actions: 2,
            num_min_actions: 3,
            mixing_epsilon: 0.2,
            reward_law: RewardLaw::Uniform01,
            seed: 21,
        })
        .unwrap();
        let text = game_to_json(&game);
        let back: GameFile = serde_json::from_str(&text).unwrap();
        let reloaded = back.into_game().unwrap();
        assert_eq!(reloaded, game);
        assert_eq!(game_to_json(&reloaded), text);
    }

    #[test]
    fn shape_errors_name_the_index() {
        let text = r#"{"S":1,"A":1,"B":2,"r":[[[0.5,0.5]]],"P":[[[[1.0],[1.0,0.0]]]]}"#;
        let file: GameFile = serde_json::from_str(text).unwrap();
        let err = file.into_game().unwrap_err().to_string();
        assert!(err.contains("P[0][0][1]"), "{err}");
    }

    #[test]
    fn unknown_game_key_rejected() {
        let text = r#"{"S":1,"A":1,"B":1,"r":[[[0.5]]],"P":[[[[1.0]]]],"extra":1}"#;
        assert!(serde_json::from_str::<GameFile>(text).is_err());
    }

    #[test]
    fn config_unknown_key_names_it() {
        let text = r#"{"game":{"generate":{"S":2,"A":2,"B":2,"mixing_epsilon":0.5,"reward_law":"uniform01","seed":1}},
                       "agent":{"horizon_T":100,"gama":0.9}}"#;
        let err = serde_json::from_str::<ConfigFile>(text).unwrap_err().to_string();
        assert!(err.contains("gama"), "{err}");
    }

    #[test]
    fn config_variants_parse() {
        let text = r#"{
            "game": {"generate": {"S":2,"A":2,"B":2,"mixing_epsilon":0.5,"reward_law":{"bernoulli":0.3},"seed":1}},
            "agent": {"horizon_T": 100, "H": {"explicit": 4.0}, "delta": "one-over-T", "D": {"user_supplied": 3.0}},
            "opponent": {"kind": "best-responder", "period": 10},
            "oracle": {"target_err": 1e-5},
            "sweep": {"seeds": [1, 2], "horizons": [50, 100]}
        }"#;
        let file: ConfigFile = serde_json::from_str(text).unwrap();
        let cfg = file.resolve(Path::new(".")).unwrap();
        assert_eq!(cfg.h_mode, HMode::Explicit(4.0));
        assert_eq!(cfg.d_source, DSource::UserSupplied(3.0));
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert!(matches!(cfg.opponent, OpponentKind::BestResponder { period: Some(10), .. }));

        let bad_kind = r#"{"game":{"file":"x.json"},"agent":{"horizon_T":1},"opponent":{"kind":"uniform","period":3}}"#;
        assert!(serde_json::from_str::<ConfigFile>(bad_kind).is_err());
    }

    #[test]
    fn missing_game_file_is_rejected_at_parse_time() {
        let file: ConfigFile =
            serde_json::from_str(r#"{"game":{"file":"no-such-game.json"},"agent":{"horizon_T":10}}"#).unwrap();
        let err = file.resolve(Path::new("/nonexistent")).unwrap_err().to_string();
        assert!(err.contains("does not exist"), "{err}");
    }
}
