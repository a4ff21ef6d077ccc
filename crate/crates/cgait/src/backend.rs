//! Chat backends: a scripted mock for tests and offline sweeps, and an
//! OpenAI-compatible HTTP client.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use cgait_core::adjudicator::{parse_final_decision, BackendError, ChatBackend, ChatRequest, ChatResponse, Clock, Role};
use cgait_core::Severity;
use serde::{Deserialize, Serialize};

/// Wall clock; sleeping blocks the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
    }

    fn sleep_ms(&self, ms: u64) {
        std::thread::sleep(Duration::from_millis(ms));
    }
}

pub type SharedBackend = std::sync::Arc<dyn ChatBackend + Send + Sync>;

#[derive(Debug)]
enum MockMode {
    /// Repeat the classifier's label.
    Retain,
    Fixed(Severity),
    Scripted(Mutex<VecDeque<Result<String, BackendError>>>),
}

/// Offline backend. Replies cite the figures of the first user message and
/// end with a "Final decision:" line.
#[derive(Debug)]
pub struct MockBackend {
    mode: MockMode,
    delay: Duration,
}

impl MockBackend {
    pub fn retain() -> Self {
        MockBackend {
            mode: MockMode::Retain,
            delay: Duration::ZERO,
        }
    }

    pub fn fixed(label: Severity) -> Self {
        MockBackend {
            mode: MockMode::Fixed(label),
            delay: Duration::ZERO,
        }
    }

    /// Replies in order; once exhausted every call is `Unavailable`.
    pub fn scripted<I: IntoIterator<Item = Result<String, BackendError>>>(replies: I) -> Self {
        MockBackend {
            mode: MockMode::Scripted(Mutex::new(replies.into_iter().collect())),
            delay: Duration::ZERO,
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

/// Value following `key` on its line of `text`, up to whitespace.
fn field<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    let at = text.find(key)? + key.len();
    text[at..].split_whitespace().next().map(|v| v.trim_end_matches([',', '.', ')']))
}

/// Justification text in the shape real replies take.
pub fn mock_justification(user_prompt: &str, label: Severity) -> String {
    let predicted = user_prompt
        .lines()
        .find(|l| l.contains("Prediction:"))
        .and_then(|l| parse_final_decision(l.split('(').next().unwrap_or(l)).ok());
    let stride = field(user_prompt, "Mean stride time:").unwrap_or("n/a");
    let stance = field(user_prompt, "Stance:").unwrap_or("n/a");
    let swing = field(user_prompt, "Swing:").unwrap_or("n/a");
    let disc = field(user_prompt, "Discrepancy percentage:").unwrap_or("n/a");
    let verdict = match predicted {
        Some(p) if p == label => "I keep the original classification.",
        Some(_) => "I revise the original classification.",
        None => "The original classification is unclear.",
    };
    format!(
        "The mean stride time is {stride} s with stance at {stance} and swing at {swing}. \
         The explanation maps disagree on {disc} of the window. {verdict}\n\nFinal decision: {label}"
    )
}

impl ChatBackend for MockBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let first_user = req
            .messages
            .iter()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str());
        let text = match &self.mode {
            MockMode::Scripted(queue) => queue
                .lock()
                .unwrap()
                .pop_front()
                .unwrap_or_else(|| Err(BackendError::Unavailable("mock script exhausted".into())))?,
            MockMode::Fixed(label) => mock_justification(first_user, *label),
            MockMode::Retain => {
                let line = first_user.lines().find(|l| l.contains("Prediction:")).unwrap_or("");
                let label = parse_final_decision(line.split('(').next().unwrap_or(line))
                    .map_err(|_| BackendError::Rejected("prompt names no prediction".into()))?;
                mock_justification(first_user, label)
            }
        };
        Ok(ChatResponse {
            text,
            output_tokens: None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpBackendConfig {
    /// e.g. `https://api.openai.com/v1`; `/chat/completions` is appended.
    pub base_url: String,
    pub api_key: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
}

fn default_timeout() -> u64 {
    60
}

/// OpenAI-compatible `/chat/completions` client.
pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    completion_tokens: Option<u64>,
}

impl HttpBackend {
    pub fn new(cfg: &HttpBackendConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            agent,
            url: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            api_key: cfg.api_key.clone(),
        }
    }
}

/// Client errors other than rate limiting will not succeed on retry.
fn classify_status(status: u16, body: &str) -> BackendError {
    let msg = format!("HTTP {status}: {}", body.chars().take(200).collect::<String>());
    if (400..500).contains(&status) && status != 408 && status != 429 {
        BackendError::Rejected(msg)
    } else {
        BackendError::Unavailable(msg)
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let body = serde_json::json!({
            "model": req.model,
            "messages": req.messages,
            "temperature": req.temperature,
        });
        let mut call = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(&body)
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &text));
        }
        let wire: WireResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Unavailable(format!("malformed reply: {e}")))?;
        let content = wire
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Unavailable("reply has no message content".into()))?;
        Ok(ChatResponse {
            text: content,
            output_tokens: wire.usage.and_then(|u| u.completion_tokens),
        })
    }
}
