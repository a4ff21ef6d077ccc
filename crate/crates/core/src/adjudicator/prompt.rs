use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::severity::Severity;
use crate::signal::GaitMetrics;
use crate::xmed::Region;

/// Version tag of the bundled template text; stored with every dialogue turn.
pub const TEMPLATE_VERSION: &str = "template-a/1";

pub const SYSTEM_TEMPLATE: &str = include_str!("../../assets/template_a_system.txt");
pub const USER_TEMPLATE: &str = include_str!("../../assets/template_a_user.txt");
pub const FOLLOWUP_TEMPLATE: &str = include_str!("../../assets/contest_followup.txt");

/// Everything the user message reports about one prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptContext {
    pub predicted_class: Severity,
    pub confidence: f64,
    pub gait_metrics: GaitMetrics,
    pub discrepancy_percentage: f64,
    pub regions: Vec<Region>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("field {0} is not finite")]
    NonFinite(&'static str),
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("region [{0}, {1}] outside the window")]
    Region(usize, usize),
}

impl PromptContext {
    pub fn validate(&self) -> Result<(), PromptError> {
        let fields = [
            ("confidence", self.confidence),
            ("mean_stride_time", self.gait_metrics.mean_stride_time),
            ("stance_percentage", self.gait_metrics.stance_percentage),
            ("swing_percentage", self.gait_metrics.swing_percentage),
            ("discrepancy_percentage", self.discrepancy_percentage),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(PromptError::NonFinite(name));
            }
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(PromptError::Confidence(self.confidence));
        }
        for r in &self.regions {
            if r.start > r.end || r.end >= crate::signal::WINDOW_LEN {
                return Err(PromptError::Region(r.start, r.end));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContestationKind {
    FactualError,
    NormativeConflict,
    ReasoningFlaw,
}

impl ContestationKind {
    pub const ALL: [ContestationKind; 3] = [
        ContestationKind::FactualError,
        ContestationKind::NormativeConflict,
        ContestationKind::ReasoningFlaw,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ContestationKind::FactualError => "Factual Error",
            ContestationKind::NormativeConflict => "Normative Conflict",
            ContestationKind::ReasoningFlaw => "Reasoning Flaw",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contestation {
    pub kind: ContestationKind,
    pub free_text: String,
    pub author: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

pub fn render_regions(regions: &[Region]) -> String {
    if regions.is_empty() {
        return String::from("none");
    }
    regions
        .iter()
        .map(|r| format!("[{}, {}]", r.start, r.end))
        .collect::<Vec<_>>()
        .join(", ")
}

/// User message of the first turn.
pub fn render_user(ctx: &PromptContext) -> String {
    let m = &ctx.gait_metrics;
    USER_TEMPLATE
        .replace("{class}", ctx.predicted_class.label())
        .replace("{confidence}", &format!("{:.3}", ctx.confidence))
        .replace("{mean_stride_time}", &format!("Mean stride time: {:.3} s", m.mean_stride_time))
        .replace("{swing_percentage}", &format!("Swing: {:.1}%", m.swing_percentage))
        .replace("{stance_percentage}", &format!("Stance: {:.1}%", m.stance_percentage))
        .replace("{discrepancy_percentage}", &format!("{:.1}", ctx.discrepancy_percentage))
        .replace("{regions}", &render_regions(&ctx.regions))
}

/// Clinician challenge block followed by the finalization request.
pub fn render_followup(c: &Contestation) -> String {
    FOLLOWUP_TEMPLATE
        .replace("{kind}", c.kind.label())
        .replace("{free_text}", c.free_text.trim())
}

/// `(system, user)` for a single-shot request. With a contestation the user
/// message carries the challenge and asks for a final decision.
pub fn render_prompt(ctx: &PromptContext, contestation: Option<&Contestation>) -> (String, String) {
    let mut user = render_user(ctx);
    if let Some(c) = contestation {
        user.push_str("\n\n");
        user.push_str(&render_followup(c));
    }
    (String::from(SYSTEM_TEMPLATE), user)
}
