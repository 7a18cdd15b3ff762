//! Agent configuration: JSON round-tripping, validation, and named presets.
//!
//! Config files are flat JSON objects whose keys match [`AgentConfig`] field
//! names exactly; unknown keys are rejected. A config file may additionally
//! carry experiment-level keys (`env`, `episodes`, `step_limit`, `base_seed`,
//! `persist_tables`), which are split off before the agent fields are parsed.

use serde::{Deserialize, Serialize};

use crate::env::EnvKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    QLearning,
    Sarsa,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::QLearning => "q_learning",
            Algorithm::Sarsa => "sarsa",
        })
    }
}

/// One agent's full hyperparameter set.
///
/// The three `use_*` toggles switch the optional mechanisms independently:
/// the reversibility penalty (`use_precedence`), amplified updates on
/// threshold violation (`use_threshold_penalty`), and state restoration on
/// threshold violation (`use_rollback`). Optional fields are required
/// exactly when the toggle that reads them is enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub use_precedence: bool,
    #[serde(default)]
    pub use_threshold_penalty: bool,
    #[serde(default)]
    pub use_rollback: bool,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub q_init: f64,
    /// Return horizon K: steps within which a return must happen to count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_k: Option<u64>,
    /// EMA rate for reversibility scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ema_rate: Option<f64>,
    /// Penalty weight lambda: shaping strength of `-lambda * (1 - phi)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_weight: Option<f64>,
    /// Initial reversibility score for every state-action pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_init: Option<f64>,
    /// Threshold T: a target at or below `T * Q(s,a)` trips the response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Amplification factor P applied to the update when the threshold trips.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_factor: Option<f64>,
    /// Whether the threshold test uses the penalized target (default) or the
    /// raw reward target.
    #[serde(default = "default_true")]
    pub threshold_on_penalized_target: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("failed to parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config must be a flat JSON object")]
    NotAnObject,
    #[error("{field} must be {expected}, got {got}")]
    OutOfRange {
        field: &'static str,
        expected: &'static str,
        got: f64,
    },
    #[error("{field} is required {when}")]
    Missing {
        field: &'static str,
        when: &'static str,
    },
    #[error("{0}")]
    InvalidValue(String),
}

fn check(
    value: f64,
    field: &'static str,
    expected: &'static str,
    ok: impl Fn(f64) -> bool,
) -> Result<(), ConfigError> {
    if ok(value) {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange {
            field,
            expected,
            got: value,
        })
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.alpha, "alpha", "in (0, 1]", |v| v > 0.0 && v <= 1.0)?;
        check(self.gamma, "gamma", "in [0, 1]", |v| {
            (0.0..=1.0).contains(&v)
        })?;
        check(self.epsilon, "epsilon", "in [0, 1]", |v| {
            (0.0..=1.0).contains(&v)
        })?;
        check(self.q_init, "q_init", "finite", f64::is_finite)?;
        if let Some(v) = self.ema_rate {
            check(v, "ema_rate", "in (0, 1)", |v| v > 0.0 && v < 1.0)?;
        }
        if let Some(v) = self.penalty_weight {
            check(v, "penalty_weight", "finite and >= 0", |v| {
                v.is_finite() && v >= 0.0
            })?;
        }
        if let Some(v) = self.phi_init {
            check(v, "phi_init", "in [0, 1]", |v| (0.0..=1.0).contains(&v))?;
        }
        if let Some(v) = self.threshold {
            check(v, "threshold", "finite and > 0", |v| {
                v.is_finite() && v > 0.0
            })?;
        }
        if let Some(v) = self.penalty_factor {
            check(v, "penalty_factor", "finite and > 0", |v| {
                v.is_finite() && v > 0.0
            })?;
        }
        let need = |field: &'static str, when: &'static str| ConfigError::Missing { field, when };
        if (self.use_rollback || self.use_threshold_penalty) && self.threshold.is_none() {
            return Err(need(
                "threshold",
                "when use_rollback or use_threshold_penalty is enabled",
            ));
        }
        if self.use_threshold_penalty && self.penalty_factor.is_none() {
            return Err(need(
                "penalty_factor",
                "when use_threshold_penalty is enabled",
            ));
        }
        if self.use_precedence {
            if self.horizon_k.is_none() {
                return Err(need("horizon_k", "when use_precedence is enabled"));
            }
            if self.ema_rate.is_none() {
                return Err(need("ema_rate", "when use_precedence is enabled"));
            }
            if self.penalty_weight.is_none() {
                return Err(need("penalty_weight", "when use_precedence is enabled"));
            }
            if self.phi_init.is_none() {
                return Err(need("phi_init", "when use_precedence is enabled"));
            }
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }
}

/// Experiment-level keys that may appear alongside agent fields in a config
/// file. Anything left unset falls back to CLI flags or per-env defaults.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileOverrides {
    pub env: Option<EnvKind>,
    pub episodes: Option<u64>,
    pub step_limit: Option<u64>,
    pub base_seed: Option<u64>,
    pub persist_tables: Option<bool>,
}

/// Parses a config document, splitting experiment keys from agent fields and
/// validating the result.
pub fn parse_config_str(text: &str) -> Result<(AgentConfig, FileOverrides), ConfigError> {
    let mut value: serde_json::Value = serde_json::from_str(text)?;
    let obj = value.as_object_mut().ok_or(ConfigError::NotAnObject)?;
    let mut over = FileOverrides::default();
    if let Some(v) = obj.remove("env") {
        let name = v
            .as_str()
            .ok_or_else(|| ConfigError::InvalidValue("env must be a string".into()))?
            .to_owned();
        over.env = Some(name.parse().map_err(ConfigError::InvalidValue)?);
    }
    let take_u64 = |obj: &mut serde_json::Map<String, serde_json::Value>,
                    key: &str|
     -> Result<Option<u64>, ConfigError> {
        match obj.remove(key) {
            None => Ok(None),
            Some(v) => v.as_u64().map(Some).ok_or_else(|| {
                ConfigError::InvalidValue(format!("{key} must be a non-negative integer"))
            }),
        }
    };
    over.episodes = take_u64(obj, "episodes")?;
    over.step_limit = take_u64(obj, "step_limit")?;
    over.base_seed = take_u64(obj, "base_seed")?;
    if let Some(v) = obj.remove("persist_tables") {
        over.persist_tables =
            Some(v.as_bool().ok_or_else(|| {
                ConfigError::InvalidValue("persist_tables must be a boolean".into())
            })?);
    }
    let agent: AgentConfig = serde_json::from_value(value)?;
    agent.validate()?;
    Ok((agent, over))
}

/// Canonical preset names, in the order the ablation command runs them.
pub const PRESET_NAMES: [&str; 8] = [
    "baseline",
    "rollbackonly",
    "thresholdpeagent",
    "roll_threshold",
    "precedenceonly",
    "precedence_r",
    "precedence_th",
    "fullmodel",
];

/// Looks up a named preset. Matching is case-insensitive. The environment
/// picks between the two penalty parameterizations; presets without the
/// reversibility penalty are identical across environments.
pub fn preset(name: &str, env: EnvKind) -> Option<AgentConfig> {
    let base = AgentConfig {
        algorithm: Algorithm::QLearning,
        use_precedence: false,
        use_threshold_penalty: false,
        use_rollback: false,
        alpha: 0.1,
        gamma: 0.99,
        epsilon: 0.1,
        q_init: -1.0,
        horizon_k: None,
        ema_rate: None,
        penalty_weight: None,
        phi_init: None,
        threshold: None,
        penalty_factor: None,
        threshold_on_penalized_target: true,
    };
    let with_precedence = |mut cfg: AgentConfig| {
        cfg.use_precedence = true;
        cfg.horizon_k = Some(2);
        cfg.ema_rate = Some(0.01);
        cfg.penalty_weight = Some(match env {
            EnvKind::CliffWalking => 0.6,
            EnvKind::Taxi => 0.8,
        });
        cfg.phi_init = Some(match env {
            EnvKind::CliffWalking => 0.1,
            EnvKind::Taxi => 0.8,
        });
        cfg
    };
    let cfg = match name.to_ascii_lowercase().as_str() {
        "baseline" => AgentConfig {
            q_init: 0.0,
            ..base
        },
        "rollbackonly" => AgentConfig {
            use_rollback: true,
            threshold: Some(3.0),
            ..base
        },
        "thresholdpeagent" => AgentConfig {
            use_threshold_penalty: true,
            threshold: Some(3.0),
            penalty_factor: Some(1.1),
            ..base
        },
        "roll_threshold" => AgentConfig {
            use_rollback: true,
            use_threshold_penalty: true,
            threshold: Some(3.0),
            penalty_factor: Some(1.1),
            ..base
        },
        "precedenceonly" => with_precedence(base),
        "precedence_r" => {
            let mut cfg = with_precedence(base);
            cfg.use_rollback = true;
            cfg.threshold = Some(3.0);
            cfg
        }
        "precedence_th" => {
            let mut cfg = with_precedence(base);
            cfg.use_threshold_penalty = true;
            cfg.threshold = Some(3.0);
            cfg.penalty_factor = Some(1.1);
            cfg
        }
        "fullmodel" => {
            let mut cfg = with_precedence(base);
            cfg.use_rollback = true;
            cfg.use_threshold_penalty = true;
            cfg.threshold = Some(3.0);
            cfg.penalty_factor = Some(1.1);
            cfg
        }
        _ => return None,
    };
    Some(cfg)
}

/// Splits a qualified preset name like `fullmodel-cliff` into the preset and
/// its environment. Accepted suffixes: `-cliff`, `-cliffwalking`, `-taxi`.
pub fn split_qualified(name: &str) -> Option<(&str, EnvKind)> {
    for (suffix, env) in [
        ("-cliffwalking", EnvKind::CliffWalking),
        ("-cliff", EnvKind::CliffWalking),
        ("-taxi", EnvKind::Taxi),
    ] {
        if let Some(stem) = name.strip_suffix(suffix) {
            return Some((stem, env));
        }
    }
    None
}
