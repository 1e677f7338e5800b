//! Language-model and embedding client contracts.
//!
//! Every component that talks to a model goes through [`LanguageModelClient`]
//! or [`EmbeddingClient`]. The mocks in [`mock`] are deterministic and are what
//! the test suites and `--mock-llm` runs use.

pub mod mock;

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use mock::{EchoClient, FeatureHashEmbedder, HeuristicMock, ScriptedClient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Decode parameters, recorded alongside every generated record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub seed: u64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: None,
            seed: 0,
        }
    }
}

/// Named JSON schema handed to structured-output endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSchema {
    pub name: String,
    pub schema: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("empty completion")]
    EmptyCompletion,
    #[error("unparseable output ({reason}): {raw}")]
    Unparseable { raw: String, reason: String },
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<LlmError> },
}

impl LlmError {
    fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Transport(_) | LlmError::EmptyCompletion)
    }
}

pub trait LanguageModelClient: Send + Sync {
    /// Tag recorded on generated records, e.g. `gpt-4o` or `mock`.
    fn model_tag(&self) -> &str;

    fn complete(&self, messages: &[Message], params: &DecodeParams) -> Result<String, LlmError>;

    /// Structured output. The default implementation asks for plain completion
    /// and parses the first JSON object in the reply.
    fn structured(
        &self,
        messages: &[Message],
        schema: &OutputSchema,
        params: &DecodeParams,
    ) -> Result<serde_json::Value, LlmError> {
        let _ = schema;
        let raw = self.complete(messages, params)?;
        parse_json_reply(&raw)
    }
}

impl<T: LanguageModelClient + ?Sized> LanguageModelClient for &T {
    fn model_tag(&self) -> &str {
        (**self).model_tag()
    }

    fn complete(&self, messages: &[Message], params: &DecodeParams) -> Result<String, LlmError> {
        (**self).complete(messages, params)
    }

    fn structured(
        &self,
        messages: &[Message],
        schema: &OutputSchema,
        params: &DecodeParams,
    ) -> Result<serde_json::Value, LlmError> {
        (**self).structured(messages, schema, params)
    }
}

impl<T: LanguageModelClient + ?Sized> LanguageModelClient for std::sync::Arc<T> {
    fn model_tag(&self) -> &str {
        (**self).model_tag()
    }

    fn complete(&self, messages: &[Message], params: &DecodeParams) -> Result<String, LlmError> {
        (**self).complete(messages, params)
    }

    fn structured(
        &self,
        messages: &[Message],
        schema: &OutputSchema,
        params: &DecodeParams,
    ) -> Result<serde_json::Value, LlmError> {
        (**self).structured(messages, schema, params)
    }
}

/// Typed wrapper over [`LanguageModelClient::structured`].
pub fn structured_as<T: DeserializeOwned>(
    client: &dyn LanguageModelClient,
    messages: &[Message],
    schema: &OutputSchema,
    params: &DecodeParams,
) -> Result<T, LlmError> {
    let value = client.structured(messages, schema, params)?;
    serde_json::from_value(value.clone()).map_err(|e| LlmError::Unparseable {
        raw: value.to_string(),
        reason: e.to_string(),
    })
}

/// Extracts the first JSON value from a reply, tolerating code fences and
/// surrounding prose.
pub fn parse_json_reply(raw: &str) -> Result<serde_json::Value, LlmError> {
    let trimmed = raw.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Ok(v);
    }
    let start = trimmed.find(['{', '[']);
    if let Some(start) = start {
        let mut stream = serde_json::Deserializer::from_str(&trimmed[start..]).into_iter();
        if let Some(Ok(v)) = stream.next() {
            return Ok(v);
        }
    }
    Err(LlmError::Unparseable {
        raw: raw.to_string(),
        reason: "no JSON value found".into(),
    })
}

/// Bounded retry with jittered exponential backoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 2,
            base_delay_ms: 250,
        }
    }
}

impl RetryPolicy {
    pub fn immediate(retries: u32) -> Self {
        Self {
            retries,
            base_delay_ms: 0,
        }
    }

    /// Runs `op` until it succeeds, returns a non-retryable error, or the
    /// retry budget is spent.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, LlmError>) -> Result<T, LlmError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_delay_ms ^ 0x5eed);
        let mut attempt = 0u32;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if !e.is_retryable() => return Err(e),
                Err(e) if attempt >= self.retries => {
                    return Err(LlmError::Exhausted {
                        attempts: attempt + 1,
                        last: Box::new(e),
                    })
                }
                Err(_) => {
                    if self.base_delay_ms > 0 {
                        let backoff = self.base_delay_ms << attempt;
                        let jitter = rng.random_range(0..=backoff / 2);
                        std::thread::sleep(Duration::from_millis(backoff + jitter));
                    }
                    attempt += 1;
                }
            }
        }
    }
}

pub trait EmbeddingClient: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Vec<f64>, LlmError>;
}

impl<T: EmbeddingClient + ?Sized> EmbeddingClient for &T {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, LlmError> {
        (**self).embed(text)
    }
}

impl<T: EmbeddingClient + ?Sized> EmbeddingClient for std::sync::Arc<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, LlmError> {
        (**self).embed(text)
    }
}
