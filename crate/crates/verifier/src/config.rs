//! TOML configuration shared by every command. Flags override file values,
//! file values override defaults.

use std::path::Path;

use appi_verify_core::backend::RuleBackendConfig;
use appi_verify_core::coordinator::CoordinatorConfig;
use appi_verify_core::forge::GeneratorConfig;
use serde::{Deserialize, Serialize};

use crate::llm::LlmConfig;
use crate::runtime::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Rule,
    Llm,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Rule => "rule",
            BackendKind::Llm => "llm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub mode: Mode,
    pub backend: BackendKind,
    /// Cases verified concurrently.
    pub parallel: usize,
    /// Per-agent deadline in seconds; unset means wait for the backend's own timeout.
    pub agent_timeout_secs: Option<f64>,
    /// Delegate synthesis to the model (LLM backend only); the weighted vote stays as fallback.
    pub coordinator_model: bool,
    pub generator: GeneratorConfig,
    pub rule_backend: RuleBackendConfig,
    pub coordinator: CoordinatorConfig,
    pub llm: LlmConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            mode: Mode::Multi,
            backend: BackendKind::Rule,
            parallel: 4,
            agent_timeout_secs: None,
            coordinator_model: false,
            generator: GeneratorConfig::default(),
            rule_backend: RuleBackendConfig::default(),
            coordinator: CoordinatorConfig::default(),
            llm: LlmConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else { return Ok(AppConfig::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_toml(&text).map_err(|message| ConfigError::Parse { path: path.display().to_string(), message })
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.generator.validate().map_err(|e| invalid(&e))?;
        self.rule_backend.validate().map_err(|e| invalid(&e))?;
        self.coordinator.validate().map_err(|e| invalid(&e))?;
        if self.backend == BackendKind::Llm {
            self.llm.validate().map_err(|e| invalid(&e))?;
        }
        if self.parallel == 0 {
            return Err(ConfigError::Invalid("parallel must be at least 1".into()));
        }
        if let Some(t) = self.agent_timeout_secs {
            if !(t > 0.0) {
                return Err(ConfigError::Invalid("agent_timeout_secs must be positive".into()));
            }
        }
        Ok(())
    }

    /// Stable hash of the effective configuration.
    pub fn hash(&self) -> String {
        crate::corpus::sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}
