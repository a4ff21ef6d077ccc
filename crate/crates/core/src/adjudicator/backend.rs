use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
        }
    }
}

/// Wire body of a chat-completion request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    /// Completion token count when the backend reports usage.
    pub output_tokens: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: timeouts, connection failures, 429 and 5xx.
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    /// Retrying will not help: bad credentials, malformed request or reply.
    #[error("backend rejected the request: {0}")]
    Rejected(String),
}

pub trait ChatBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for alloc::boxed::Box<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}

/// Wall clock and sleeping, injected so tests control time.
pub trait Clock {
    /// Milliseconds since the Unix epoch.
    fn now_ms(&self) -> u64;
    fn sleep_ms(&self, ms: u64);
}

impl<C: Clock + ?Sized> Clock for &C {
    fn now_ms(&self) -> u64 {
        (**self).now_ms()
    }

    fn sleep_ms(&self, ms: u64) {
        (**self).sleep_ms(ms)
    }
}

/// Clock whose time only moves when told to; sleeping advances it.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: core::cell::Cell<u64>,
    slept: core::cell::RefCell<Vec<u64>>,
}

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        ManualClock {
            now: core::cell::Cell::new(start_ms),
            slept: Default::default(),
        }
    }

    pub fn advance(&self, ms: u64) {
        self.now.set(self.now.get() + ms);
    }

    /// Every sleep requested so far, in order.
    pub fn sleeps(&self) -> Vec<u64> {
        self.slept.borrow().clone()
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.now.get()
    }

    fn sleep_ms(&self, ms: u64) {
        self.slept.borrow_mut().push(ms);
        self.advance(ms);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles after each further failure.
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 1_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Completed {
    pub response: ChatResponse,
    pub attempts: u32,
    /// Duration of the successful attempt.
    pub elapsed_ms: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Exhausted {
    pub error: BackendError,
    pub attempts: u32,
}

/// Call `backend` until it succeeds, a non-retryable error occurs or the
/// attempt budget is spent.
pub fn complete_with_retry<B: ChatBackend + ?Sized, C: Clock + ?Sized>(
    backend: &B,
    clock: &C,
    request: &ChatRequest,
    policy: &RetryPolicy,
) -> Result<Completed, Exhausted> {
    let mut backoff = policy.initial_backoff_ms;
    let mut attempts = 0;
    loop {
        attempts += 1;
        let start = clock.now_ms();
        match backend.complete(request) {
            Ok(response) => {
                return Ok(Completed {
                    response,
                    attempts,
                    elapsed_ms: clock.now_ms().saturating_sub(start),
                })
            }
            Err(error @ BackendError::Rejected(_)) => return Err(Exhausted { error, attempts }),
            Err(error) if attempts >= policy.max_attempts.max(1) => return Err(Exhausted { error, attempts }),
            Err(_) => {
                clock.sleep_ms(backoff);
                backoff = backoff.saturating_mul(2);
            }
        }
    }
}
