use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::audit::{next_entry, verify_chain, AuditAction, AuditEntry};
use super::backend::{complete_with_retry, ChatBackend, ChatMessage, ChatRequest, Clock, RetryPolicy, Role};
use super::decision::parse_final_decision;
use super::prompt::{render_followup, render_prompt, Contestation, PromptContext, SYSTEM_TEMPLATE, TEMPLATE_VERSION};
use super::AdjudicatorError;
use crate::cnn::Prediction;
use crate::severity::Severity;
use crate::xmed::DiscrepancyReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalOutcome {
    Accepted,
    Overridden,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseState {
    Predicted,
    UnderReview,
    Contested,
    Justified,
    Finalized(FinalOutcome),
}

impl CaseState {
    pub fn is_finalized(self) -> bool {
        matches!(self, CaseState::Finalized(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision", content = "label")]
pub enum FinalDecision {
    Accept,
    Override(Severity),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRef {
    pub subject_id: String,
    pub window_index: usize,
    pub start_frame: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationResult {
    pub final_class: Severity,
    pub justification_text: String,
    pub response_time_s: f64,
    pub output_tokens: u64,
    /// Token count estimated from characters because the backend reported none.
    pub output_tokens_approximate: bool,
    pub overturned: bool,
    pub attempts: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub template_version: String,
    pub prompt: String,
    pub response: String,
    pub result: AdjudicationResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjudicatorConfig {
    pub model: String,
    pub temperature: f64,
    pub retry: RetryPolicy,
}

impl Default for AdjudicatorConfig {
    fn default() -> Self {
        AdjudicatorConfig {
            model: String::from("mock"),
            temperature: 0.0,
            retry: RetryPolicy::default(),
        }
    }
}

pub const SYSTEM_ACTOR: &str = "system";
pub const ADJUDICATOR_ACTOR: &str = "adjudicator";

/// One prediction under clinical review, with its dialogue and audit chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub window: WindowRef,
    pub prediction: Prediction,
    pub discrepancy: DiscrepancyReport,
    pub context: PromptContext,
    pub turns: Vec<DialogueTurn>,
    pub contestations: Vec<Contestation>,
    pub state: CaseState,
    pub final_label: Option<Severity>,
    pub audit: Vec<AuditEntry>,
}

fn approx_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

impl CaseRecord {
    pub fn new<C: Clock + ?Sized>(
        case_id: impl Into<String>,
        window: WindowRef,
        prediction: Prediction,
        discrepancy: DiscrepancyReport,
        context: PromptContext,
        clock: &C,
    ) -> Result<CaseRecord, AdjudicatorError> {
        context.validate()?;
        let mut rec = CaseRecord {
            case_id: case_id.into(),
            window,
            prediction,
            discrepancy,
            context,
            turns: Vec::new(),
            contestations: Vec::new(),
            state: CaseState::Predicted,
            final_label: None,
            audit: Vec::new(),
        };
        let payload = json!({
            "window": rec.window,
            "predicted_class": rec.prediction.predicted_class,
            "confidence": rec.prediction.confidence,
            "probabilities": rec.prediction.probabilities,
            "xmed": rec.discrepancy.summary(),
        });
        rec.log(clock, SYSTEM_ACTOR, AuditAction::CaseCreated, payload);
        Ok(rec)
    }

    pub fn initial_class(&self) -> Severity {
        self.prediction.predicted_class
    }

    fn log<C: Clock + ?Sized>(&mut self, clock: &C, actor: &str, action: AuditAction, payload: serde_json::Value) {
        let e = next_entry(&self.audit, &self.case_id, clock.now_ms(), actor, action, payload);
        self.audit.push(e);
    }

    fn ensure_open(&self) -> Result<(), AdjudicatorError> {
        if self.state.is_finalized() {
            Err(AdjudicatorError::AlreadyFinalized)
        } else {
            Ok(())
        }
    }

    pub fn begin_review<C: Clock + ?Sized>(&mut self, actor: &str, clock: &C) -> Result<(), AdjudicatorError> {
        self.ensure_open()?;
        if self.state != CaseState::Predicted {
            return Err(AdjudicatorError::InvalidTransition {
                from: self.state,
                action: "begin_review",
            });
        }
        self.state = CaseState::UnderReview;
        self.log(clock, actor, AuditAction::ReviewOpened, json!({}));
        Ok(())
    }

    pub fn contest<C: Clock + ?Sized>(&mut self, c: Contestation, clock: &C) -> Result<(), AdjudicatorError> {
        self.ensure_open()?;
        if !matches!(self.state, CaseState::UnderReview | CaseState::Justified) {
            return Err(AdjudicatorError::InvalidTransition {
                from: self.state,
                action: "contest",
            });
        }
        if c.free_text.trim().is_empty() {
            return Err(AdjudicatorError::EmptyContestation);
        }
        let payload = json!({
            "kind": c.kind,
            "free_text": c.free_text,
            "contested_at": c.timestamp,
        });
        let author = c.author.clone();
        self.contestations.push(c);
        self.state = CaseState::Contested;
        self.log(clock, &author, AuditAction::Contested, payload);
        Ok(())
    }

    /// Messages for the next turn: system, then every earlier exchange, then
    /// the new user message.
    pub fn next_messages(&self) -> (Vec<ChatMessage>, String) {
        let pending = match self.state {
            CaseState::Contested => self.contestations.last(),
            _ => None,
        };
        let prompt = if self.turns.is_empty() {
            render_prompt(&self.context, pending).1
        } else {
            pending.map(render_followup).unwrap_or_default()
        };
        let mut messages = Vec::with_capacity(2 + 2 * self.turns.len());
        messages.push(ChatMessage::new(Role::System, SYSTEM_TEMPLATE));
        for t in &self.turns {
            messages.push(ChatMessage::new(Role::User, t.prompt.clone()));
            messages.push(ChatMessage::new(Role::Assistant, t.response.clone()));
        }
        messages.push(ChatMessage::new(Role::User, prompt.clone()));
        (messages, prompt)
    }

    pub fn adjudicate<B, C>(
        &mut self,
        backend: &B,
        clock: &C,
        cfg: &AdjudicatorConfig,
    ) -> Result<AdjudicationResult, AdjudicatorError>
    where
        B: ChatBackend + ?Sized,
        C: Clock + ?Sized,
    {
        self.ensure_open()?;
        if !matches!(self.state, CaseState::UnderReview | CaseState::Contested) {
            return Err(AdjudicatorError::InvalidTransition {
                from: self.state,
                action: "adjudicate",
            });
        }
        let (messages, prompt) = self.next_messages();
        let request = ChatRequest {
            model: cfg.model.clone(),
            messages,
            temperature: cfg.temperature,
        };
        let done = match complete_with_retry(backend, clock, &request, &cfg.retry) {
            Ok(done) => done,
            Err(ex) => {
                let payload = json!({
                    "reason": "backend_unavailable",
                    "attempts": ex.attempts,
                    "error": alloc::format!("{}", ex.error),
                });
                self.log(clock, ADJUDICATOR_ACTOR, AuditAction::AdjudicationFailed, payload);
                return Err(AdjudicatorError::BackendUnavailable {
                    attempts: ex.attempts,
                    error: ex.error,
                });
            }
        };
        let text = done.response.text;
        let final_class = match parse_final_decision(&text) {
            Ok(c) => c,
            Err(_) => {
                let payload = json!({
                    "reason": "no_decision",
                    "attempts": done.attempts,
                    "response": text,
                });
                self.log(clock, ADJUDICATOR_ACTOR, AuditAction::AdjudicationFailed, payload);
                return Err(AdjudicatorError::DecisionParseFailure);
            }
        };
        let (output_tokens, output_tokens_approximate) = match done.response.output_tokens {
            Some(n) => (n, false),
            None => (approx_tokens(&text), true),
        };
        let result = AdjudicationResult {
            final_class,
            justification_text: text.clone(),
            response_time_s: done.elapsed_ms as f64 / 1000.0,
            output_tokens,
            output_tokens_approximate,
            overturned: final_class != self.initial_class(),
            attempts: done.attempts,
        };
        let payload = json!({
            "turn": self.turns.len(),
            "model": cfg.model,
            "temperature": cfg.temperature,
            "template_version": TEMPLATE_VERSION,
            "prompt": prompt,
            "response": text,
            "final_class": result.final_class,
            "overturned": result.overturned,
            "response_time_s": result.response_time_s,
            "output_tokens": result.output_tokens,
            "output_tokens_approximate": result.output_tokens_approximate,
            "attempts": result.attempts,
        });
        self.turns.push(DialogueTurn {
            template_version: String::from(TEMPLATE_VERSION),
            prompt,
            response: text,
            result: result.clone(),
        });
        self.state = CaseState::Justified;
        self.log(clock, ADJUDICATOR_ACTOR, AuditAction::Adjudicated, payload);
        Ok(result)
    }

    pub fn finalize<C: Clock + ?Sized>(
        &mut self,
        actor: &str,
        decision: FinalDecision,
        clock: &C,
    ) -> Result<Severity, AdjudicatorError> {
        self.ensure_open()?;
        if self.state != CaseState::Justified {
            return Err(AdjudicatorError::NotJustified);
        }
        let last = self.turns.last().ok_or(AdjudicatorError::NotJustified)?.result.final_class;
        let (label, outcome) = match decision {
            FinalDecision::Accept => (last, FinalOutcome::Accepted),
            FinalDecision::Override(label) => (label, FinalOutcome::Overridden),
        };
        self.final_label = Some(label);
        self.state = CaseState::Finalized(outcome);
        let payload = json!({
            "outcome": outcome,
            "final_label": label,
            "initial_class": self.initial_class(),
            "adjudicated_class": last,
        });
        self.log(clock, actor, AuditAction::Finalized, payload);
        Ok(label)
    }

    pub fn verify_audit(&self) -> bool {
        verify_chain(&self.audit) && self.audit.iter().all(|e| e.case_id == self.case_id)
    }
}
