//! OpenAI-compatible HTTP backend (`/chat/completions`, `/embeddings`).

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde_json::{json, Value};
use ureq::Agent;

use super::{Backend, ChatRequest, ChatResponse, GatewayError, ResponseFormat, TokenUsage};

#[derive(Debug, Clone)]
pub struct LiveConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub chat_model: String,
    pub embedding_model: String,
    pub timeout: Duration,
}

pub struct LiveBackend {
    config: LiveConfig,
    agent: Agent,
    network_ops: AtomicU64,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent, network_ops: AtomicU64::new(0) }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        self.network_ops.fetch_add(1, Ordering::SeqCst);
        let mut req = self.agent.post(&self.url(path)).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| GatewayError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::Network(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| GatewayError::MalformedResponse(e.to_string())),
            // rate limits and server faults are transient
            429 | 500..=599 => Err(GatewayError::Network(format!("status {status}: {text}"))),
            _ => Err(GatewayError::Http { status, body: text }),
        }
    }
}

impl Backend for LiveBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut body = json!({
            "model": self.config.chat_model,
            "messages": [{ "role": "user", "content": request.prompt_text }],
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        });
        if request.response_format == ResponseFormat::JsonObject {
            body["response_format"] = json!({ "type": "json_object" });
        }
        let v = self.post("chat/completions", &body)?;
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| GatewayError::MalformedResponse("missing choices[0].message.content".into()))?
            .to_string();
        let usage = TokenUsage {
            prompt_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        };
        Ok(ChatResponse { text, usage })
    }

    fn embed(&self, texts: &[String]) -> Result<(Vec<Vec<f32>>, u64), GatewayError> {
        let body = json!({ "model": self.config.embedding_model, "input": texts });
        let v = self.post("embeddings", &body)?;
        let data = v["data"]
            .as_array()
            .ok_or_else(|| GatewayError::MalformedResponse("missing data array".into()))?;
        let mut rows: Vec<(u64, Vec<f32>)> = Vec::with_capacity(data.len());
        for (i, item) in data.iter().enumerate() {
            let index = item["index"].as_u64().unwrap_or(i as u64);
            let values = item["embedding"]
                .as_array()
                .ok_or_else(|| GatewayError::MalformedResponse("missing embedding".into()))?
                .iter()
                .map(|x| x.as_f64().map(|f| f as f32))
                .collect::<Option<Vec<f32>>>()
                .ok_or_else(|| GatewayError::MalformedResponse("non-numeric embedding".into()))?;
            rows.push((index, values));
        }
        rows.sort_by_key(|(i, _)| *i);
        let tokens = v["usage"]["prompt_tokens"].as_u64().unwrap_or(0);
        Ok((rows.into_iter().map(|(_, r)| r).collect(), tokens))
    }

    fn network_operations(&self) -> u64 {
        self.network_ops.load(Ordering::SeqCst)
    }

    fn name(&self) -> &'static str {
        "live"
    }
}
