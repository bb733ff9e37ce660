//! Prompt rendering for the LLM backend.
//!
//! Prompts are strictly bounded: a self-state prompt sees only the span's own
//! fields, its direct children's records, and capped tool-result summaries; a
//! consolidation prompt sees only the span's own evidence and its children's
//! consolidated evidences. Nothing else from the trace leaks in, so prompt
//! size is independent of total trace size.

use std::fmt::Write as _;

use crate::logtool::LogQueryResult;
use crate::metric::MetricAnomaly;

use super::{ConsolidatedEvidence, SelfEvidence, SpanContext};

/// System instruction shared by both prompts (consolidation reuses it).
pub const SYSTEM_INSTRUCTION: &str = "You are a Root Cause Localization agent in a \
microservice system. A user-reported failure has occurred. Your task is to analyze logs \
and metrics to identify the DEEPEST ROOT CAUSE SERVICE that initiated the failure chain.";

const SELF_STATE_SCHEMA: &str = r#"{"span_id": "...", "service_name": "...", "is_abnormal": true/false, "key_symptoms": "brief string", "hypothesis": "why it might be faulty or not"}"#;

const CONSOLIDATION_SCHEMA: &str = r#"{"span_id": "...", "service_name": "...", "local_root_cause": "service name or 'self'", "reason": "...", "confidence": 0.0-1.0}"#;

/// Caps keeping tool summaries bounded regardless of store size.
const MAX_METRIC_LINES: usize = 12;
const MAX_SAMPLE_POINTS: usize = 3;
const MAX_LOG_LINES: usize = 20;
const MAX_LOG_MESSAGE_CHARS: usize = 160;

/// Compact, capped rendering of the metric tool's anomaly list.
pub fn summarize_metric_anomalies(anomalies: &[MetricAnomaly]) -> String {
    if anomalies.is_empty() {
        return "  (none)\n".to_string();
    }
    let mut out = String::new();
    for a in anomalies.iter().take(MAX_METRIC_LINES) {
        let samples: Vec<String> = a
            .flagged_points
            .iter()
            .take(MAX_SAMPLE_POINTS)
            .map(|(t, v)| format!("{t}:{v:.3}"))
            .collect();
        let sigmas = if a.max_deviation_sigmas.is_finite() {
            format!("{:.1}", a.max_deviation_sigmas)
        } else {
            "inf".to_string()
        };
        let _ = writeln!(
            out,
            "  - {}/{}: max deviation {sigmas} sigma, {} flagged of {} window points, samples [{}]",
            a.key.component_id,
            a.key.metric_name,
            a.flagged_points.len(),
            a.trajectory.len(),
            samples.join(", "),
        );
    }
    if anomalies.len() > MAX_METRIC_LINES {
        let _ = writeln!(
            out,
            "  ... {} more anomalous metrics",
            anomalies.len() - MAX_METRIC_LINES
        );
    }
    out
}

/// Compact, capped rendering of the log tool's result.
pub fn summarize_logs(logs: &LogQueryResult) -> String {
    if logs.entries.is_empty() {
        return "  (none)\n".to_string();
    }
    let mut out = String::new();
    for e in logs.entries.iter().take(MAX_LOG_LINES) {
        let mut message: String = e.message.chars().take(MAX_LOG_MESSAGE_CHARS).collect();
        if message.len() < e.message.len() {
            message.push_str("...");
        }
        let _ = writeln!(
            out,
            "  - [{}] {} {}: {}",
            e.severity, e.timestamp_ms, e.component_id, message
        );
    }
    if logs.entries.len() > MAX_LOG_LINES {
        let _ = writeln!(
            out,
            "  ... {} more entries",
            logs.entries.len() - MAX_LOG_LINES
        );
    }
    if logs.truncated {
        out.push_str("  (list truncated by the log tool)\n");
    }
    out
}

/// Renders the self-state verification prompt for one span.
pub fn render_self_state_prompt(
    ctx: &SpanContext,
    metric_summary: &str,
    log_summary: &str,
) -> String {
    let mut out = String::new();
    out.push_str("System:\n");
    out.push_str(SYSTEM_INSTRUCTION);
    out.push_str("\n\nUser:\nAnalyze the following span for root cause:\n");
    let s = &ctx.span;
    let _ = writeln!(out, "span_id: {}", s.span_id);
    let _ = writeln!(out, "service: {}", s.service);
    let _ = writeln!(out, "pod: {}", s.pod);
    let _ = writeln!(out, "operation: {}", s.operation);
    let _ = writeln!(out, "timestamp_ms: {}", s.timestamp_ms);
    let _ = writeln!(out, "duration_ms: {}", s.duration_ms);
    let _ = writeln!(out, "status: {}", s.status);
    let _ = writeln!(out, "children ({}):", ctx.children.len());
    for c in &ctx.children {
        let _ = writeln!(
            out,
            "  - span_id={} service={} operation={} duration_ms={} status={}",
            c.span_id, c.service, c.operation, c.duration_ms, c.status
        );
    }
    out.push_str(
        "\nYou have the following data tools to call: log_tool, metric_tool. \
Their results for this span's pod:\n",
    );
    out.push_str("Metric tool results:\n");
    out.push_str(metric_summary);
    out.push_str("Log tool results:\n");
    out.push_str(log_summary);
    out.push_str("\nSummarize self-state evidence as JSON:\n");
    out.push_str(SELF_STATE_SCHEMA);
    out.push('\n');
    out
}

/// Renders the evidence consolidation prompt for one span.
pub fn render_consolidation_prompt(
    evidence: &SelfEvidence,
    downstream: &[ConsolidatedEvidence],
) -> String {
    let mut out = String::new();
    out.push_str("System:\n");
    out.push_str(SYSTEM_INSTRUCTION);
    out.push_str("\n\nUser:\nDownstream evidences from children:\n");
    if downstream.is_empty() {
        out.push_str("  none\n");
    } else {
        for e in downstream {
            let json = serde_json::to_string(e).expect("evidence serializes");
            let _ = writeln!(out, "  {json}");
        }
    }
    out.push_str("Your own self-evidence:\n");
    let json = serde_json::to_string(evidence).expect("evidence serializes");
    let _ = writeln!(out, "  {json}");
    out.push_str(
        "Task: Synthesize these evidences into a locally consolidated root cause \
hypothesis to be propagated to your parent agent.\n",
    );
    out.push_str("Output format (JSON only):\n");
    out.push_str(CONSOLIDATION_SCHEMA);
    out.push('\n');
    out
}
