//! Service configuration file (TOML). Relative paths resolve against the
//! directory holding the file.

use std::path::{Path, PathBuf};

use cgait_core::adjudicator::{AdjudicatorConfig, RetryPolicy};
use cgait_core::xmed::XmedConfig;
use serde::{Deserialize, Serialize};

use crate::backend::{HttpBackend, HttpBackendConfig, MockBackend, SharedBackend};

pub const DEFAULT_API_KEY_ENV: &str = "CGAIT_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Read(PathBuf, std::io::Error),
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmConfig {
    pub backend: BackendKind,
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the API key.
    pub api_key_source: String,
    pub temperature: f64,
    pub timeout_s: u64,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    /// Concurrent backend requests across all cases.
    pub max_concurrency: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            backend: BackendKind::Mock,
            base_url: "https://api.openai.com/v1".into(),
            model_name: "mock".into(),
            api_key_source: DEFAULT_API_KEY_ENV.into(),
            temperature: 0.0,
            timeout_s: 60,
            max_attempts: 3,
            initial_backoff_ms: 1000,
            max_concurrency: 2,
        }
    }
}

impl LlmConfig {
    pub fn adjudicator(&self) -> AdjudicatorConfig {
        AdjudicatorConfig {
            model: self.model_name.clone(),
            temperature: self.temperature,
            retry: RetryPolicy {
                max_attempts: self.max_attempts,
                initial_backoff_ms: self.initial_backoff_ms,
            },
        }
    }

    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_source).ok().filter(|k| !k.is_empty())
    }

    pub fn build_backend(&self) -> SharedBackend {
        match self.backend {
            BackendKind::Mock => std::sync::Arc::new(MockBackend::retain()),
            BackendKind::Http => std::sync::Arc::new(HttpBackend::new(&HttpBackendConfig {
                base_url: self.base_url.clone(),
                api_key: self.api_key(),
                timeout_s: self.timeout_s,
            })),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub data_directory: PathBuf,
    /// Without a checkpoint the service browses data but cannot predict.
    #[serde(default)]
    pub checkpoint_path: Option<PathBuf>,
    pub audit_log_path: PathBuf,
    #[serde(default = "default_listen")]
    pub listen_address: String,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub xmed: XmedConfig,
    /// Queue an adjudication as soon as a new case raises an XMED alert.
    #[serde(default = "default_true")]
    pub auto_adjudicate_on_alert: bool,
    /// Static bearer token required on every request when set.
    #[serde(default)]
    pub auth_token: Option<String>,
}

fn default_true() -> bool {
    true
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

impl ServiceConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<ServiceConfig, ConfigError> {
        let mut cfg: ServiceConfig = toml::from_str(text)?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data_directory);
        resolve(&mut cfg.audit_log_path);
        if let Some(p) = cfg.checkpoint_path.as_mut() {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ServiceConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(path.to_path_buf(), e))?;
        ServiceConfig::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let x = &self.xmed;
        if !(x.threshold > 0.0 && x.threshold.is_finite()) {
            return invalid(format!("xmed.threshold must be positive, got {}", x.threshold));
        }
        if !(x.alert_pct > 0.0 && x.alert_pct.is_finite()) {
            return invalid(format!("xmed.alert_pct must be positive, got {}", x.alert_pct));
        }
        if !self.data_directory.is_dir() {
            return invalid(format!("data_directory {} is not a directory", self.data_directory.display()));
        }
        if let Some(p) = &self.checkpoint_path {
            if !p.is_file() {
                return invalid(format!("checkpoint_path {} does not exist", p.display()));
            }
        }
        if self.llm.max_concurrency == 0 || self.llm.max_attempts == 0 {
            return invalid("llm.max_concurrency and llm.max_attempts must be at least 1".into());
        }
        if !(0.0..=2.0).contains(&self.llm.temperature) {
            return invalid(format!("llm.temperature {} outside [0, 2]", self.llm.temperature));
        }
        if self.listen_address.parse::<std::net::SocketAddr>().is_err() {
            return invalid(format!("listen_address `{}` is not host:port", self.listen_address));
        }
        Ok(())
    }
}
