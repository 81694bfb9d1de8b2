//! The single run configuration, its JSON loading and `PPOSG_*` overrides.

use std::path::{Path, PathBuf};

use pposg_core::dp::GameGrid;
use pposg_core::eval::{Protocol, TournamentConfig};
use pposg_core::marl::TrainConfig;
use pposg_core::policies::PolicySpec;
use pposg_core::sim::EnvConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Prefix of environment variables that override configuration keys.
/// Nested keys are joined with `__`: `PPOSG_TRAIN__EPISODES=100`.
pub const ENV_PREFIX: &str = "PPOSG_";

/// Every key is required in configuration files; `pposg config` prints the
/// defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub solve: GameGrid,
    pub play: PlayConfig,
    pub serve: ServeConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            solve: GameGrid::planar(5.0, 0.1, 2.0, 1.0, 0.05, 0.5),
            play: PlayConfig::default(),
            serve: ServeConfig::default(),
        }
    }
}

/// One evaluated method; run `k` uses model `k % models.len()`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub label: String,
    pub models: Vec<PolicySpec>,
}

impl MethodConfig {
    fn scripted(spec: PolicySpec) -> Self {
        Self {
            label: spec.label(),
            models: vec![spec],
        }
    }
}

/// Checkpoint tournament: files, or directories searched for
/// `policy_*.pposg`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TournamentSpec {
    pub checkpoints: Vec<PathBuf>,
    pub opponents: usize,
    pub episodes_per_pair: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Its seed is replaced by the run seed.
    pub protocol: Protocol,
    pub pursuers: Vec<MethodConfig>,
    pub evaders: Vec<MethodConfig>,
    pub tournament: Option<TournamentSpec>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::default(),
            pursuers: vec![
                MethodConfig::scripted(PolicySpec::PurePursuit { lookahead: 1.0 }),
                MethodConfig::scripted(PolicySpec::Stationary),
            ],
            evaders: vec![
                MethodConfig::scripted(PolicySpec::RandomWalk),
                MethodConfig::scripted(PolicySpec::Greedy),
                MethodConfig::scripted(PolicySpec::Stationary),
            ],
            tournament: None,
        }
    }
}

impl TournamentSpec {
    pub fn config(&self, seed: u64, scale: f64) -> TournamentConfig {
        TournamentConfig {
            opponents: self.opponents,
            episodes_per_pair: scaled(self.episodes_per_pair, scale),
            seed,
            ..TournamentConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayConfig {
    pub pursuer: PolicySpec,
    pub evader: PolicySpec,
    pub episodes: usize,
    /// Write one JSON-lines trajectory per episode.
    pub trajectories: bool,
}

impl Default for PlayConfig {
    fn default() -> Self {
        Self {
            pursuer: PolicySpec::PurePursuit { lookahead: 1.0 },
            evader: PolicySpec::RandomWalk,
            episodes: 10,
            trajectories: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: String,
    pub tick_ms: u64,
    pub pursuer: PolicySpec,
    pub belief_overlay: bool,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8765".into(),
            tick_ms: 100,
            pursuer: PolicySpec::PurePursuit { lookahead: 1.0 },
            belief_overlay: true,
        }
    }
}

/// `n * scale` rounded, at least one.
pub fn scaled(n: usize, scale: f64) -> usize {
    ((n as f64 * scale).round() as usize).max(1)
}

/// Deserializes with the failing key path in the error.
pub fn from_value<T: DeserializeOwned>(value: Value, what: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        let at = |key: &str| {
            let mut p = what.to_string();
            if path != "." {
                p = format!("{p}.{path}");
            }
            if !key.is_empty() {
                p = format!("{p}.{key}");
            }
            p
        };
        match inner.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
            Some(key) => CliError::Config(format!("missing config key `{}`", at(key))),
            None => CliError::Config(format!("config key `{}`: {inner}", at(""))),
        }
    })
}

pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Sets `a.b.c` from `PPOSG_A__B__C`. Values parse as JSON, falling back to
/// plain strings. Missing objects on the path are created; unknown keys are
/// then caught by deserialization.
pub fn apply_overrides(
    value: &mut Value,
    vars: impl IntoIterator<Item = (String, String)>,
) -> Result<Vec<String>, CliError> {
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    let mut applied = Vec::new();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(str::to_lowercase).collect();
        if path.iter().any(String::is_empty) {
            return Err(CliError::Config(format!("malformed override {key}")));
        }
        let parsed = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        let mut node = &mut *value;
        for seg in &path[..path.len() - 1] {
            if node.is_null() {
                *node = Value::Object(Default::default());
            }
            let obj = node
                .as_object_mut()
                .ok_or_else(|| CliError::Config(format!("override {key}: `{seg}` is not inside an object")))?;
            node = obj.entry(seg.clone()).or_insert(Value::Null);
        }
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("override {key} does not name an object key")))?;
        obj.insert(path[path.len() - 1].clone(), parsed);
        applied.push(path.join("."));
    }
    Ok(applied)
}

/// File (or defaults) plus overrides, validated.
pub fn load(
    path: Option<&Path>,
    vars: impl IntoIterator<Item = (String, String)>,
) -> Result<Config, CliError> {
    let mut value = match path {
        Some(p) => read_json(p)?,
        None => serde_json::to_value(Config::default()).expect("defaults serialize"),
    };
    for key in apply_overrides(&mut value, vars)? {
        log::info!("override {key}");
    }
    let config: Config = from_value(value, "config")?;
    config.env.validate()?;
    config.train.validate()?;
    config.solve.validate()?;
    Ok(config)
}

/// Hex SHA-256 of the compact JSON serialization.
pub fn config_hash(config: &Config) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}
