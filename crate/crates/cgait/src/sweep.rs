//! Batch adjudication over held-out windows, summarized in the layout of
//! the run report: readability, grounding, self-correction, the four-way
//! confusion and mean response time and length.

use cgait_core::adjudicator::{
    AdjudicationResult, AdjudicatorConfig, AdjudicatorError, CaseRecord, ChatBackend, Clock, FinalDecision, WindowRef,
};
use cgait_core::cnn::Network;
use cgait_core::metrics::{
    adjudication_confusion, clinical_grounding, extract_numbers, fkgl, fre, sca, text_stats, EvaluationCase,
    EvaluationSet, RunSummary,
};
use cgait_core::signal::Window;
use cgait_core::xmed::XmedConfig;

use crate::data::window_index;
use crate::pipeline::{analyze, prompt_context, window_gait_metrics, PipelineError, NO_STRIDES};

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("case {case}: {source}")]
    Adjudication {
        case: String,
        #[source]
        source: AdjudicatorError,
    },
    #[error("window {0} has no label")]
    Unlabeled(String),
}

/// Outcome of one case of the sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCase {
    pub record: CaseRecord,
    pub result: AdjudicationResult,
    pub truth: cgait_core::Severity,
    pub grounding_pct: f64,
}

pub const CASES_CSV_HEADER: &str =
    "case_id,subject_id,window_index,truth,baseline,final,overturned,discrepancy_pct,alert,fre,fkgl,cg_pct,rt_s,ot_tokens";

impl SweepCase {
    pub fn csv_row(&self) -> String {
        let stats = text_stats(&self.result.justification_text);
        let f = |v: Result<f64, _>| v.map_or(String::new(), |v: f64| format!("{v:.2}"));
        format!(
            "{},{},{},{},{},{},{},{:.1},{},{},{},{:.2},{:.3},{}",
            self.record.case_id,
            self.record.window.subject_id,
            self.record.window.window_index,
            self.truth.label(),
            self.record.prediction.predicted_class.label(),
            self.result.final_class.label(),
            self.result.overturned,
            self.record.discrepancy.discrepancy_percentage,
            self.record.discrepancy.alert,
            f(fre(&stats)),
            f(fkgl(&stats)),
            self.grounding_pct,
            self.result.response_time_s,
            self.result.output_tokens
        )
    }
}

/// Predict, adjudicate once and finalize with the adjudicator's label, for
/// each window in order. `backend_for` picks the backend per window so
/// scripted runs can see the truth.
pub fn run_sweep<'b, F>(
    net: &Network,
    windows: &[Window],
    xmed: &XmedConfig,
    cfg: &AdjudicatorConfig,
    clock: &dyn Clock,
    mut backend_for: F,
) -> Result<Vec<SweepCase>, SweepError>
where
    F: FnMut(&Window) -> &'b dyn ChatBackend,
{
    let mut out = Vec::with_capacity(windows.len());
    for (i, w) in windows.iter().enumerate() {
        let truth = w.label.ok_or_else(|| SweepError::Unlabeled(w.source_id.clone()))?;
        let a = analyze(net, w, xmed)?;
        let metrics = window_gait_metrics(w, None).unwrap_or(NO_STRIDES);
        let case_id = format!("sweep-{:04}", i + 1);
        let wrap = |source| SweepError::Adjudication {
            case: case_id.clone(),
            source,
        };
        let window = WindowRef {
            subject_id: w.source_id.clone(),
            window_index: window_index(w),
            start_frame: w.start_frame,
        };
        let context = prompt_context(&a, metrics);
        let mut record = CaseRecord::new(case_id.clone(), window, a.prediction, a.discrepancy, context, clock)
        .map_err(wrap)?;
        record.begin_review("sweep", clock).map_err(wrap)?;
        let result = record.adjudicate(backend_for(w), clock, cfg).map_err(wrap)?;
        let decision = if result.overturned {
            FinalDecision::Override(result.final_class)
        } else {
            FinalDecision::Accept
        };
        record.finalize("sweep", decision, clock).map_err(wrap)?;
        let prompt = &record.turns.last().expect("adjudicated").prompt;
        let grounding_pct = clinical_grounding(&extract_numbers(&result.justification_text), &extract_numbers(prompt));
        out.push(SweepCase {
            record,
            result,
            truth,
            grounding_pct,
        });
    }
    Ok(out)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn evaluation_set(cases: &[SweepCase]) -> EvaluationSet {
    EvaluationSet {
        cases: cases
            .iter()
            .map(|c| EvaluationCase {
                case_id: c.record.case_id.clone(),
                truth: c.truth,
                baseline: c.record.prediction.predicted_class,
                final_label: c.record.final_label.expect("sweep cases are finalized"),
                contested: !c.record.contestations.is_empty(),
            })
            .collect(),
    }
}

/// Readability means skip texts without words or sentences; SCA is `None`
/// when the baseline made no errors.
pub fn summarize(run: &str, cases: &[SweepCase]) -> RunSummary {
    let stats: Vec<_> = cases.iter().map(|c| text_stats(&c.result.justification_text)).collect();
    let set = evaluation_set(cases);
    RunSummary {
        run: run.to_string(),
        fre_mean: mean(stats.iter().filter_map(|s| fre(s).ok())),
        fkgl_mean: mean(stats.iter().filter_map(|s| fkgl(s).ok())),
        cg_mean_pct: mean(cases.iter().map(|c| c.grounding_pct)),
        sca_pct: sca(&set).ok(),
        confusion: adjudication_confusion(&set),
        mean_rt_s: mean(cases.iter().map(|c| c.result.response_time_s)),
        mean_ot_tokens: mean(cases.iter().map(|c| c.result.output_tokens as f64)),
    }
}
