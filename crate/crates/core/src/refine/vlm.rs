//! Client for an OpenAI-compatible chat-completions endpoint that picks the
//! most plausible image out of a small group.

use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{Entrant, RefineError, Result, Selector, Verdict};

/// Environment variable holding the bearer token.
pub const DEFAULT_API_KEY_ENV: &str = "GRASPFIT_VLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlmConfig {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: f64,
    /// Extra attempts after the first on transport errors, 429 and 5xx.
    pub max_retries: usize,
    /// First backoff delay; doubled after every failed attempt.
    pub backoff_ms: u64,
    pub temperature: f64,
    /// What the hand is doing with the object, e.g. "a hand holding a mug".
    pub description: String,
}

impl Default for VlmConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 500,
            temperature: 0.0,
            description: "a hand grasping an object".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionParseError {
    #[error("no JSON object in reply")]
    NoJson,
    #[error("reply JSON is malformed: {0}")]
    Malformed(String),
    #[error("reply has no integer \"selection\" field")]
    MissingSelection,
    #[error("selection {got} outside 1..={max}")]
    OutOfRange { got: i64, max: usize },
}

/// Extracts the 1-based choice from a reply. Anything up to a closing
/// `</think>` is discarded; the rest must contain one JSON object with an
/// integer `selection`.
pub fn parse_selection(reply: &str, group_size: usize) -> Result<usize, SelectionParseError> {
    let body = match reply.rfind("</think>") {
        Some(i) => &reply[i + "</think>".len()..],
        None => reply,
    };
    let start = body.find('{').ok_or(SelectionParseError::NoJson)?;
    let end = body.rfind('}').ok_or(SelectionParseError::NoJson)?;
    if end < start {
        return Err(SelectionParseError::NoJson);
    }
    let v: Value = serde_json::from_str(&body[start..=end]).map_err(|e| SelectionParseError::Malformed(e.to_string()))?;
    let got = v.get("selection").and_then(Value::as_i64).ok_or(SelectionParseError::MissingSelection)?;
    if got < 1 || got as usize > group_size {
        return Err(SelectionParseError::OutOfRange { got, max: group_size });
    }
    Ok(got as usize)
}

fn choices(n: usize) -> String {
    let list: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
    format!("[{}]", list.join(", "))
}

/// The instruction sent with every group.
pub fn instruction(description: &str, group_size: usize) -> String {
    format!(
        "The {group_size} attached pictures show the same hand and the same object, \
         each with the hand placed at a slightly different position. They are numbered \
         1 to {group_size} in the order attached. The intended interaction is: {description}.\n\
         Decide which picture shows the most believable placement for that interaction. \
         Prefer fingers that rest on the object's surface, and reject hands that sink into \
         the object or hover away from it.\n\
         Write your reasoning between <think> and </think>. After the closing tag, output a \
         single JSON object {{\"selection\": k}} with k taken from {}.",
        choices(group_size)
    )
}

fn reminder(group_size: usize) -> String {
    format!(
        "That answer could not be used. Reply again: reasoning between <think> and </think>, \
         then only {{\"selection\": k}} with k from {}.",
        choices(group_size)
    )
}

pub struct VlmSelector {
    config: VlmConfig,
    token: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for VlmSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VlmSelector").field("config", &self.config).finish_non_exhaustive()
    }
}

impl VlmSelector {
    /// Reads the token from the configured environment variable. Fails
    /// without touching the network if it is unset or empty.
    pub fn from_env(config: VlmConfig) -> Result<Self> {
        match std::env::var(&config.api_key_env) {
            Ok(t) if !t.is_empty() => Self::with_token(config, t),
            _ => Err(RefineError::Config(format!("environment variable {} is not set", config.api_key_env))),
        }
    }

    pub fn with_token(config: VlmConfig, token: String) -> Result<Self> {
        if !(config.timeout_secs.is_finite() && config.timeout_secs > 0.0) {
            return Err(RefineError::Config(format!("timeout must be positive, got {}", config.timeout_secs)));
        }
        if config.base_url.is_empty() {
            return Err(RefineError::Config("empty base_url".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, token, agent })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    /// Serialized request body. `retry` carries the rejected reply, which is
    /// echoed back followed by a format reminder.
    pub fn request_body(&self, images: &[&[u8]], retry: Option<&str>) -> String {
        let b64 = base64::engine::general_purpose::STANDARD;
        let mut content = vec![json!({"type": "text", "text": instruction(&self.config.description, images.len())})];
        for png in images {
            content.push(json!({
                "type": "image_url",
                "image_url": {"url": format!("data:image/png;base64,{}", b64.encode(png))}
            }));
        }
        let mut messages = vec![json!({"role": "user", "content": content})];
        if let Some(prev) = retry {
            messages.push(json!({"role": "assistant", "content": prev}));
            messages.push(json!({"role": "user", "content": reminder(images.len())}));
        }
        json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": messages,
        })
        .to_string()
    }

    /// Posts `body`, retrying transport failures, 429 and 5xx with doubling
    /// delays. Returns the assistant message text.
    fn send(&self, body: &str, log: &mut Vec<String>) -> Result<String> {
        let attempts = self.config.max_retries + 1;
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            let res = self
                .agent
                .post(&self.endpoint())
                .header("Authorization", &format!("Bearer {}", self.token))
                .header("Content-Type", "application/json")
                .send(body);
            match res {
                Err(e) => last = format!("attempt {attempt}: transport error: {e}"),
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.body_mut().read_to_string().unwrap_or_default();
                    if (200..300).contains(&status) {
                        return message_text(&text);
                    }
                    if status == 429 || status >= 500 {
                        last = format!("attempt {attempt}: HTTP {status}");
                    } else {
                        return Err(RefineError::Protocol(format!("HTTP {status}: {text}")));
                    }
                }
            }
            log::warn!("{last}");
            log.push(last.clone());
        }
        Err(RefineError::Transport { attempts, message: last })
    }
}

fn message_text(body: &str) -> Result<String> {
    let v: Value = serde_json::from_str(body).map_err(|e| RefineError::Protocol(format!("response is not JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| RefineError::Protocol("response has no choices[0].message.content".into()))
}

impl Selector for VlmSelector {
    fn select(&mut self, group: &[Entrant]) -> Result<Verdict> {
        let images = group
            .iter()
            .map(|e| e.image.as_deref().ok_or_else(|| RefineError::Config(format!("candidate {} has no image", e.id))))
            .collect::<Result<Vec<_>>>()?;
        let mut log = Vec::new();
        let reply = self.send(&self.request_body(&images, None), &mut log)?;
        match parse_selection(&reply, group.len()) {
            Ok(choice) => Ok(Verdict { choice, raw: reply, log }),
            Err(e) => {
                log.push(format!("unusable reply ({e}), asking again"));
                let again = self.send(&self.request_body(&images, Some(&reply)), &mut log)?;
                let choice = parse_selection(&again, group.len())
                    .map_err(|e| RefineError::Protocol(format!("unusable reply after reminder: {e}")))?;
                Ok(Verdict { choice, raw: again, log })
            }
        }
    }
}
