//! Reasoning-trace generation and verification filtering.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gateway::{render_tracegen_prompt, CallMeta, Gateway};
use crate::lang::Lang;
use crate::pipeline::extract::extract_answer;
use crate::qa::{OptionId, QAItem};

/// A generated trace with its extracted conclusion and verification flag.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningTrace {
    pub qa_id: String,
    pub lang: Lang,
    pub context: String,
    pub trace_text: String,
    pub extracted: Option<OptionId>,
    pub verified: bool,
}

/// Stage-artifact row for a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub qa_id: String,
    pub trace_text: String,
    pub extracted: Option<OptionId>,
    pub verified: bool,
}

impl From<&ReasoningTrace> for TraceRow {
    fn from(trace: &ReasoningTrace) -> Self {
        TraceRow {
            qa_id: trace.qa_id.clone(),
            trace_text: trace.trace_text.clone(),
            extracted: trace.extracted.clone(),
            verified: trace.verified,
        }
    }
}

/// Generates one trace: prompt, chat call, answer extraction, verification
/// against the gold id.
pub fn generate_trace(
    qa: &QAItem,
    context: &str,
    gateway: &Gateway,
    ordinal: Option<u64>,
) -> Result<ReasoningTrace> {
    let messages = render_tracegen_prompt(context, qa)?;
    let trace_text = gateway.chat_with(
        CallMeta {
            item_id: Some(&qa.qa_id),
            ordinal,
        },
        &messages,
    )?;
    let extracted = extract_answer(&trace_text, qa.lang);
    let verified = extracted.as_deref() == Some(qa.gold.as_str());
    Ok(ReasoningTrace {
        qa_id: qa.qa_id.clone(),
        lang: qa.lang,
        context: context.to_string(),
        trace_text,
        extracted,
        verified,
    })
}

/// Verification summary; `discard_rate` is undefined for an empty input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub total: usize,
    pub kept: usize,
    pub discard_rate: Option<f64>,
}

/// Keeps the verified traces and reports the discard rate,
/// `1 - kept/total`.
pub fn verify_and_filter(traces: Vec<TraceRow>) -> (Vec<TraceRow>, VerifyReport) {
    let total = traces.len();
    let kept: Vec<TraceRow> = traces.into_iter().filter(|t| t.verified).collect();
    let discard_rate = if total == 0 {
        None
    } else {
        // discarded/total rather than 1 - kept/total: both are the same
        // number, but only the former lands on the exact f64 literal
        // (3 of 30 gives 0.1, not 0.09999...8).
        Some((total - kept.len()) as f64 / total as f64)
    };
    let report = VerifyReport {
        total,
        kept: kept.len(),
        discard_rate,
    };
    (kept, report)
}
