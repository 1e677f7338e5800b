//! Blocking client for OpenAI-compatible chat-completion and embedding APIs.

use std::time::Duration;

use realtor_core::llm::{
    parse_json_reply, DecodeParams, EmbeddingClient, LanguageModelClient, LlmError, Message,
    OutputSchema, Role,
};
use serde_json::{json, Value};

use crate::config::LlmConfig;

pub struct OpenAiClient {
    http: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    model: String,
    embedding_model: String,
    embedding_dim: usize,
}

fn role(r: Role) -> &'static str {
    match r {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

/// Request body for `/chat/completions`.
pub fn chat_body(
    model: &str,
    messages: &[Message],
    params: &DecodeParams,
    schema: Option<&OutputSchema>,
) -> Value {
    let mut body = json!({
        "model": model,
        "messages": messages.iter().map(|m| json!({"role": role(m.role), "content": m.content})).collect::<Vec<_>>(),
        "temperature": params.temperature,
        "seed": params.seed,
    });
    if let Some(n) = params.max_tokens {
        body["max_tokens"] = json!(n);
    }
    if let Some(s) = schema {
        body["response_format"] = json!({
            "type": "json_schema",
            "json_schema": {"name": s.name, "schema": s.schema, "strict": true},
        });
    }
    body
}

/// Text of the first choice of a chat-completion response.
pub fn completion_text(response: &Value) -> Result<String, LlmError> {
    let content = response
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| {
            LlmError::Transport(format!("response has no message content: {response}"))
        })?;
    if content.trim().is_empty() {
        return Err(LlmError::EmptyCompletion);
    }
    Ok(content.to_string())
}

impl OpenAiClient {
    pub fn new(cfg: &LlmConfig) -> anyhow::Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()?;
        Ok(Self {
            http,
            endpoint: cfg.endpoint.trim_end_matches('/').to_string(),
            api_key: cfg.api_key.clone(),
            model: cfg.model.clone(),
            embedding_model: cfg.embedding_model.clone(),
            embedding_dim: cfg.embedding_dim,
        })
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, LlmError> {
        let mut req = self
            .http
            .post(format!("{}{path}", self.endpoint))
            .json(body);
        if let Some(k) = &self.api_key {
            req = req.bearer_auth(k);
        }
        let res = req.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = res.status();
        let text = res.text().map_err(|e| LlmError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::Transport(format!("HTTP {status}: {text}")));
        }
        serde_json::from_str(&text)
            .map_err(|e| LlmError::Transport(format!("invalid JSON response: {e}")))
    }
}

impl LanguageModelClient for OpenAiClient {
    fn model_tag(&self) -> &str {
        &self.model
    }

    fn complete(&self, messages: &[Message], params: &DecodeParams) -> Result<String, LlmError> {
        completion_text(&self.post(
            "/chat/completions",
            &chat_body(&self.model, messages, params, None),
        )?)
    }

    fn structured(
        &self,
        messages: &[Message],
        schema: &OutputSchema,
        params: &DecodeParams,
    ) -> Result<Value, LlmError> {
        let raw = completion_text(&self.post(
            "/chat/completions",
            &chat_body(&self.model, messages, params, Some(schema)),
        )?)?;
        parse_json_reply(&raw)
    }
}

impl EmbeddingClient for OpenAiClient {
    fn dimension(&self) -> usize {
        self.embedding_dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, LlmError> {
        let res = self.post(
            "/embeddings",
            &json!({"model": self.embedding_model, "input": text}),
        )?;
        let v: Vec<f64> = res
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| LlmError::Transport("response has no embedding".into()))?
            .iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| LlmError::Transport("non-numeric embedding".into()))
            })
            .collect::<Result<_, _>>()?;
        if v.len() != self.embedding_dim {
            return Err(LlmError::Transport(format!(
                "embedding length {} differs from the configured {}",
                v.len(),
                self.embedding_dim
            )));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_carries_roles_and_decode_params() {
        let msgs = [
            Message::system("s"),
            Message::user("u"),
            Message::assistant("a"),
        ];
        let params = DecodeParams {
            temperature: 0.7,
            max_tokens: Some(64),
            seed: 3,
        };
        let b = chat_body("m", &msgs, &params, None);
        assert_eq!(b["model"], "m");
        assert_eq!(b["messages"][0], json!({"role": "system", "content": "s"}));
        assert_eq!(b["messages"][2]["role"], "assistant");
        assert_eq!(b["temperature"], 0.7);
        assert_eq!(b["max_tokens"], 64);
        assert_eq!(b["seed"], 3);
        assert!(b.get("response_format").is_none());
        let schema = OutputSchema {
            name: "x".into(),
            schema: json!({"type": "object"}),
        };
        let b = chat_body("m", &msgs, &DecodeParams::default(), Some(&schema));
        assert_eq!(b["response_format"]["json_schema"]["name"], "x");
        assert!(b.get("max_tokens").is_none());
    }

    #[test]
    fn completion_text_extraction() {
        let ok = json!({"choices": [{"message": {"role": "assistant", "content": "hi"}}]});
        assert_eq!(completion_text(&ok).unwrap(), "hi");
        let empty = json!({"choices": [{"message": {"content": "  "}}]});
        assert_eq!(completion_text(&empty), Err(LlmError::EmptyCompletion));
        assert!(matches!(
            completion_text(&json!({})),
            Err(LlmError::Transport(_))
        ));
    }
}
