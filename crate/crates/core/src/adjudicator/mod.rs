//! Contest-and-justify lifecycle around a prediction: prompt rendering,
//! decision parsing, a pluggable chat backend with retries, and a
//! hash-chained audit record.

mod audit;
mod backend;
mod decision;
mod prompt;
mod record;

pub use audit::{genesis_hash, next_entry, parse_jsonl, to_jsonl, verify_chain, verify_jsonl, AuditAction, AuditEntry};
pub use backend::{
    complete_with_retry, BackendError, ChatBackend, ChatMessage, ChatRequest, ChatResponse, Clock, Completed, Exhausted,
    ManualClock, RetryPolicy, Role,
};
pub use decision::{parse_final_decision, NoDecisionFound};
pub use prompt::{
    render_followup, render_prompt, render_regions, render_user, Contestation, ContestationKind, PromptContext,
    PromptError, FOLLOWUP_TEMPLATE, SYSTEM_TEMPLATE, TEMPLATE_VERSION, USER_TEMPLATE,
};
pub use record::{
    AdjudicationResult, AdjudicatorConfig, CaseRecord, CaseState, DialogueTurn, FinalDecision, FinalOutcome, WindowRef,
    ADJUDICATOR_ACTOR, SYSTEM_ACTOR,
};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum AdjudicatorError {
    #[error("case is finalized")]
    AlreadyFinalized,
    #[error("case has no adjudication to finalize")]
    NotJustified,
    #[error("cannot {action} a case in state {from:?}")]
    InvalidTransition { from: CaseState, action: &'static str },
    #[error("contestation text is empty")]
    EmptyContestation,
    #[error("backend unavailable after {attempts} attempt(s): {error}")]
    BackendUnavailable { attempts: u32, error: BackendError },
    #[error("response contained no final decision")]
    DecisionParseFailure,
    #[error(transparent)]
    Prompt(#[from] PromptError),
}
