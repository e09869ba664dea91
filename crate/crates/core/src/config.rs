//! Configuration file plus `ARTISCOPE_<SECTION>_<KEY>` environment overrides.
//!
//! Nested keys join with underscores: `llm.budget.max_units` is overridden by
//! `ARTISCOPE_LLM_BUDGET_MAX_UNITS`. The file path comes from an explicit
//! argument or `ARTISCOPE_CONFIG`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::Session;
use crate::inference::RuleSet;

pub const CONFIG_ENV: &str = "ARTISCOPE_CONFIG";
const ENV_PREFIX: &str = "ARTISCOPE";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("environment override {var}={value:?}: {reason}")]
    Env {
        var: String,
        value: String,
        reason: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StringsConfig {
    pub min_length: usize,
}

impl Default for StringsConfig {
    fn default() -> Self {
        Self {
            min_length: crate::text::DEFAULT_MIN_LENGTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyConfig {
    pub window: usize,
    pub stride: usize,
    pub high_threshold: f64,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            window: crate::text::DEFAULT_WINDOW,
            stride: crate::text::DEFAULT_STRIDE,
            high_threshold: crate::text::DEFAULT_HIGH_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XorConfig {
    pub min_score: f64,
}

impl Default for XorConfig {
    fn default() -> Self {
        Self {
            min_score: crate::text::DEFAULT_MIN_SCORE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    /// Printable share at which content counts as text.
    pub text_ratio: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            text_ratio: crate::engine::DEFAULT_TEXT_RATIO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub max_depth: usize,
    pub max_artifacts: usize,
    pub max_derived_facts: usize,
    pub max_session_bytes: u64,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        Self {
            max_depth: 16,
            max_artifacts: 10_000,
            max_derived_facts: crate::inference::DEFAULT_DERIVED_FACT_CAP,
            max_session_bytes: 256 * 1024 * 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub max_units: usize,
    pub reserve: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            max_units: 4096,
            reserve: 512,
        }
    }
}

/// Per-category weights of context items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KindWeights {
    pub imports: f64,
    pub masquerade: f64,
    pub derived: f64,
    pub finding: f64,
    pub type_fact: f64,
    pub header: f64,
    pub behavioral: f64,
    pub string: f64,
    pub structure: f64,
    pub other: f64,
}

impl Default for KindWeights {
    fn default() -> Self {
        Self {
            imports: 1.0,
            masquerade: 1.0,
            derived: 0.9,
            finding: 0.8,
            type_fact: 0.6,
            header: 0.5,
            behavioral: 0.4,
            string: 0.3,
            structure: 0.1,
            other: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    pub w_type: f64,
    pub w_prox: f64,
    pub w_rec: f64,
    pub kinds: KindWeights,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            w_type: 1.0,
            w_prox: 1.0,
            w_rec: 0.5,
            kinds: KindWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// `mock:` selects the built-in deterministic client.
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub budget: BudgetConfig,
    pub weights: WeightsConfig,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "mock:".to_string(),
            model: "artiscope-mock".to_string(),
            api_key_env: "ARTISCOPE_LLM_API_KEY".to_string(),
            timeout_secs: 60,
            budget: BudgetConfig::default(),
            weights: WeightsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub max_upload_bytes: u64,
    pub data_dir: String,
    /// Directory of static UI assets served under `/`; empty disables it.
    pub static_dir: String,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8717".to_string(),
            max_upload_bytes: 64 * 1024 * 1024,
            data_dir: "artiscope-sessions".to_string(),
            static_dir: String::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulesConfig {
    /// Extra rule packs loaded after the bundled one.
    pub extra: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub strings: StringsConfig,
    pub entropy: EntropyConfig,
    pub xor: XorConfig,
    pub detect: DetectConfig,
    pub limits: LimitsConfig,
    pub llm: LlmConfig,
    pub server: ServerConfig,
    pub rules: RulesConfig,
}

/// The subset of configuration analysis depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSettings {
    pub min_string_length: usize,
    pub entropy_window: usize,
    pub entropy_stride: usize,
    pub high_entropy: f64,
    pub xor_min_score: f64,
    pub text_ratio: f64,
    pub max_depth: usize,
    pub max_artifacts: usize,
    pub max_derived_facts: usize,
    pub max_session_bytes: u64,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Config::default().analysis()
    }
}

impl Config {
    /// The bundled rule pack followed by every pack in `rules.extra`.
    pub fn rule_set(&self) -> Result<RuleSet, ConfigError> {
        let mut set = crate::inference::default_rules();
        for path in &self.rules.extra {
            let source = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: PathBuf::from(path),
                source,
            })?;
            set.extend_from_source(&source)
                .map_err(|e| ConfigError::Invalid(format!("rule pack {path}: {e}")))?;
        }
        Ok(set)
    }

    /// An empty session using this configuration and the default registry.
    pub fn new_session(&self, id: impl Into<String>) -> Result<Session, ConfigError> {
        Ok(Session::new(
            id,
            self.rule_set()?,
            Arc::new(crate::formats::default_registry()),
            self.analysis(),
        ))
    }

    pub fn analysis(&self) -> AnalysisSettings {
        AnalysisSettings {
            min_string_length: self.strings.min_length,
            entropy_window: self.entropy.window,
            entropy_stride: self.entropy.stride,
            high_entropy: self.entropy.high_threshold,
            xor_min_score: self.xor.min_score,
            text_ratio: self.detect.text_ratio,
            max_depth: self.limits.max_depth,
            max_artifacts: self.limits.max_artifacts,
            max_derived_facts: self.limits.max_derived_facts,
            max_session_bytes: self.limits.max_session_bytes,
        }
    }

    /// Reads `path`, or the file named by `ARTISCOPE_CONFIG`, or defaults,
    /// then applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let env = |k: &str| std::env::var(k).ok();
        let from_env = env(CONFIG_ENV).map(PathBuf::from);
        let path = path.map(Path::to_path_buf).or(from_env);
        let text = match &path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.clone(),
                source,
            })?,
            None => String::new(),
        };
        Self::from_toml_with_env(&text, env)
    }

    pub fn from_toml_with_env(text: &str, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let parsed: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut tree = toml::Table::try_from(&parsed).map_err(|e| ConfigError::Parse(e.to_string()))?;
        apply_env(&mut tree, ENV_PREFIX, &env)?;
        let config: Config = toml::Value::Table(tree)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.strings.min_length == 0 {
            return bad("strings.min_length must be at least 1");
        }
        if self.entropy.window == 0 || self.entropy.stride == 0 {
            return bad("entropy.window and entropy.stride must be at least 1");
        }
        if !(self.llm.budget.max_units > self.llm.budget.reserve && self.llm.budget.reserve > 0) {
            return bad("llm.budget requires max_units > reserve > 0");
        }
        Ok(())
    }
}

fn apply_env(table: &mut toml::Table, prefix: &str, env: &dyn Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
    for (key, value) in table.iter_mut() {
        let var = format!("{prefix}_{}", key.to_ascii_uppercase());
        if let toml::Value::Table(inner) = value {
            apply_env(inner, &var, env)?;
            continue;
        }
        let Some(raw) = env(&var) else { continue };
        let err = |reason: &str| ConfigError::Env {
            var: var.clone(),
            value: raw.clone(),
            reason: reason.to_string(),
        };
        *value = match value {
            toml::Value::Integer(_) => toml::Value::Integer(raw.trim().parse().map_err(|_| err("expected an integer"))?),
            toml::Value::Float(_) => toml::Value::Float(raw.trim().parse().map_err(|_| err("expected a number"))?),
            toml::Value::Boolean(_) => toml::Value::Boolean(raw.trim().parse().map_err(|_| err("expected true or false"))?),
            toml::Value::Array(_) => toml::Value::Array(
                raw.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| toml::Value::String(s.to_string()))
                    .collect(),
            ),
            _ => toml::Value::String(raw),
        };
    }
    Ok(())
}
