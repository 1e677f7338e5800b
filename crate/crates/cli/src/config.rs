//! Run configuration: TOML file, then environment overrides, then flags.

use std::path::{Path, PathBuf};

use anyhow::Context;
use realtor_core::agent::AgentConfig;
use realtor_core::arena::EloConfig;
use realtor_core::factcheck::FactCheckSpec;
use realtor_core::listing::DEFAULT_MIN_RATIO;
use realtor_survey::plan::PlanConfig;
use serde::{Deserialize, Serialize};

pub const ENV_LLM_ENDPOINT: &str = "REALTOR_LLM_ENDPOINT";
pub const ENV_LLM_API_KEY: &str = "REALTOR_LLM_API_KEY";
pub const ENV_LLM_MODEL: &str = "REALTOR_LLM_MODEL";
pub const ENV_EMBED_MODEL: &str = "REALTOR_EMBED_MODEL";
pub const ENV_BIND: &str = "REALTOR_BIND";
pub const ENV_DATA_DIR: &str = "REALTOR_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub model: String,
    /// Prefer the environment variable; a key in a config file is read but
    /// never echoed into manifests.
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub embedding_model: String,
    pub embedding_dim: usize,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    /// Worker threads for batch commands.
    pub workers: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            api_key: None,
            embedding_model: "text-embedding-3-small".into(),
            embedding_dim: 1536,
            temperature: 0.0,
            max_tokens: None,
            timeout_secs: 60,
            retries: 2,
            backoff_ms: 250,
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: Option<usize>,
    pub test_fraction: f64,
    pub hidden_bias: bool,
    pub freeze_hidden: bool,
    /// Minimum favorites-to-views ratio for a description to be used as
    /// training signal.
    pub min_engagement: f64,
    /// Dimension of the offline hashing embedder used with `--mock-llm`.
    pub mock_embedding_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let t = realtor_core::grounding::TrainOptions::default();
        Self {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            test_fraction: t.test_fraction,
            hidden_bias: t.hidden_bias,
            freeze_hidden: t.freeze_hidden,
            min_engagement: DEFAULT_MIN_RATIO,
            mock_embedding_dim: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurveyConfig {
    pub bind: String,
    pub plan: PlanConfig,
    pub elo: EloConfig,
    pub rating_candidates: usize,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        let s = realtor_survey::ServiceConfig::default();
        Self {
            bind: "127.0.0.1:8080".into(),
            plan: s.plan,
            elo: s.elo,
            rating_candidates: s.rating_candidates,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub llm: LlmConfig,
    pub train: TrainConfig,
    pub agent: AgentConfig,
    pub factcheck: FactCheckSpec,
    pub survey: SurveyConfig,
}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Config::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok());
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get(ENV_LLM_ENDPOINT) {
            self.llm.endpoint = v;
        }
        if let Some(v) = get(ENV_LLM_API_KEY) {
            self.llm.api_key = Some(v);
        }
        if let Some(v) = get(ENV_LLM_MODEL) {
            self.llm.model = v;
        }
        if let Some(v) = get(ENV_EMBED_MODEL) {
            self.llm.embedding_model = v;
        }
        if let Some(v) = get(ENV_BIND) {
            self.survey.bind = v;
        }
        if let Some(v) = get(ENV_DATA_DIR) {
            self.data_dir = Some(v.into());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_then_env_overrides() {
        let mut cfg: Config = toml::from_str(
            r#"
            seed = 5
            [llm]
            model = "from-file"
            endpoint = "http://file"
            [train]
            epochs = 7
            [survey.plan]
            scored_pairs = 4
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(5));
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.survey.plan.scored_pairs, 4);
        assert_eq!(cfg.survey.plan.arms.len(), 5);
        cfg.apply_env(|k| (k == ENV_LLM_MODEL).then(|| "from-env".to_string()));
        assert_eq!(cfg.llm.model, "from-env");
        assert_eq!(cfg.llm.endpoint, "http://file");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Config>("[llm]\nmodle = \"x\"").is_err());
    }

    #[test]
    fn api_key_never_serialized() {
        let mut cfg = Config::default();
        cfg.llm.api_key = Some("sk-secret".into());
        assert!(!serde_json::to_string(&cfg).unwrap().contains("sk-secret"));
    }
}
