use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LlmError;
use crate::config::LlmConfig;
use crate::engine::{ChatRole, ChatTurn};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatTurn>,
    pub max_reply_units: usize,
}

/// A chat-completion backend. Calls may block.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

/// Deterministic client for tests and offline use.
///
/// Endpoint syntax: `mock:` followed by optional `;`-separated settings
/// `reply=<text>`, `delay=<ms>` and `fail=<message>`. Without `reply` the
/// answer is `mock reply <hash>`, the hash being the first 16 hex digits of
/// the SHA-256 of the last message.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockClient {
    pub reply: Option<String>,
    pub delay: Option<Duration>,
    pub fail: Option<String>,
}

impl MockClient {
    pub fn parse(endpoint: &str) -> Result<Self, LlmError> {
        let rest = endpoint
            .strip_prefix("mock:")
            .ok_or_else(|| LlmError::Config(format!("{endpoint:?} is not a mock endpoint")))?;
        let mut m = MockClient::default();
        for part in rest.split(';').filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').unwrap_or((part, ""));
            match k {
                "reply" => m.reply = Some(v.to_string()),
                "fail" => m.fail = Some(v.to_string()),
                "delay" => {
                    let ms = v
                        .parse()
                        .map_err(|_| LlmError::Config(format!("mock delay {v:?} is not a number of milliseconds")))?;
                    m.delay = Some(Duration::from_millis(ms));
                }
                _ => return Err(LlmError::Config(format!("unknown mock setting {k:?}"))),
            }
        }
        Ok(m)
    }

    pub fn replying(reply: impl Into<String>) -> Self {
        MockClient {
            reply: Some(reply.into()),
            ..Default::default()
        }
    }

    pub fn hash_reply(text: &str) -> String {
        let digest = Sha256::digest(text.as_bytes());
        format!("mock reply {}", &hex::encode(digest)[..16])
    }
}

impl ChatClient for MockClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        if let Some(d) = self.delay {
            std::thread::sleep(d);
        }
        if let Some(f) = &self.fail {
            return Err(LlmError::Transport(f.clone()));
        }
        Ok(match &self.reply {
            Some(r) => r.clone(),
            None => Self::hash_reply(request.messages.last().map_or("", |m| m.text.as_str())),
        })
    }
}

/// JSON-over-HTTP chat completion with bearer-token auth.
pub struct HttpClient {
    endpoint: String,
    token: Option<String>,
    http: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    max_tokens: usize,
}

fn role_name(r: ChatRole) -> &'static str {
    match r {
        ChatRole::System => "system",
        ChatRole::User => "user",
        ChatRole::Assistant => "assistant",
    }
}

/// Pulls the reply text out of the common response shapes.
pub fn extract_reply(body: &serde_json::Value) -> Option<String> {
    let candidates = [
        body.pointer("/choices/0/message/content"),
        body.get("reply"),
        body.get("text"),
        body.pointer("/content/0/text"),
    ];
    candidates.into_iter().flatten().find_map(|v| v.as_str().map(str::to_string))
}

impl HttpClient {
    pub fn new(config: &LlmConfig) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpClient {
            endpoint: config.endpoint.clone(),
            token: std::env::var(&config.api_key_env).ok().filter(|t| !t.is_empty()),
            http,
        })
    }
}

impl ChatClient for HttpClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let wire = WireRequest {
            model: &request.model,
            messages: request
                .messages
                .iter()
                .map(|m| WireMessage {
                    role: role_name(m.role),
                    content: &m.text,
                })
                .collect(),
            max_tokens: request.max_reply_units,
        };
        let mut req = self.http.post(&self.endpoint).json(&wire);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(LlmError::Transport(format!("endpoint answered {status}")));
        }
        let body: serde_json::Value = resp.json().map_err(|e| LlmError::BadReply(e.to_string()))?;
        extract_reply(&body).ok_or_else(|| LlmError::BadReply("no reply text in response".into()))
    }
}

pub fn client_from_config(config: &LlmConfig) -> Result<Box<dyn ChatClient>, LlmError> {
    if config.endpoint.starts_with("mock:") {
        Ok(Box::new(MockClient::parse(&config.endpoint)?))
    } else if config.endpoint.starts_with("http://") || config.endpoint.starts_with("https://") {
        Ok(Box::new(HttpClient::new(config)?))
    } else {
        Err(LlmError::Config(format!("unsupported llm endpoint {:?}", config.endpoint)))
    }
}
