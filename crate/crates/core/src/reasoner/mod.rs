//! Per-span reasoning: self-state verification and evidence consolidation.
//!
//! Two backends produce the same structured outputs. The heuristic backend is
//! a deterministic rule table; the LLM backend renders bounded prompts, calls
//! an OpenAI-compatible chat-completion endpoint, and validates/repairs the
//! structured reply. Either way an agent emits a [`SelfEvidence`] for its own
//! span and a [`ConsolidatedEvidence`] fusing it with downstream hypotheses.

mod heuristic;
mod llm;
mod parse;
mod prompt;

pub use heuristic::{heuristic_consolidate, heuristic_self_state, HeuristicReasoner};
pub use llm::{LlmClient, LlmError, LlmReasoner};
pub use parse::{extract_json_object, parse_consolidated_evidence, parse_self_evidence};
pub use prompt::{
    render_consolidation_prompt, render_self_state_prompt, summarize_logs,
    summarize_metric_anomalies,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logtool::LogQueryResult;
use crate::metric::MetricAnomaly;
use crate::model::Span;
use crate::trace::ChildRecord;

/// Maximum length of free-text evidence fields.
pub const FIELD_CAP: usize = 500;

/// The literal self-reference value of `local_root_cause`.
pub const SELF_REFERENCE: &str = "self";

/// Everything an agent may see about its own span: the span's fields plus a
/// summary of its direct children. Nothing from the rest of the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanContext {
    pub span: Span,
    pub children: Vec<ChildRecord>,
}

impl SpanContext {
    pub fn new(span: Span, children: Vec<ChildRecord>) -> Self {
        SpanContext { span, children }
    }
}

/// Structured self-state verdict for one span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfEvidence {
    pub span_id: String,
    #[serde(rename = "service_name")]
    pub service: String,
    pub is_abnormal: bool,
    pub key_symptoms: String,
    pub hypothesis: String,
}

/// Locally consolidated root-cause hypothesis propagated to the parent.
///
/// `local_root_cause` is either the literal `"self"` or a concrete component
/// name (pod or service) taken from this agent's own or downstream evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidatedEvidence {
    pub span_id: String,
    #[serde(rename = "service_name")]
    pub service: String,
    pub local_root_cause: String,
    pub reason: String,
    pub confidence: f64,
}

impl ConsolidatedEvidence {
    pub fn is_self_reference(&self) -> bool {
        self.local_root_cause == SELF_REFERENCE
    }
}

pub(crate) fn truncate_field(s: &str, cap: usize) -> String {
    if s.chars().count() <= cap {
        s.to_string()
    } else {
        s.chars().take(cap).collect()
    }
}

pub(crate) fn clamp01(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Which reasoning backend to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Heuristic,
    Llm,
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "heuristic" => Ok(Backend::Heuristic),
            "llm" => Ok(Backend::Llm),
            other => Err(format!("unknown reasoner backend {other:?}")),
        }
    }
}

/// Thresholds of the deterministic rule table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    /// Minimum downstream confidence required to adopt a child hypothesis.
    pub tau_child: f64,
    /// Minimum number of relevant ERROR-or-worse logs to call a span abnormal.
    pub min_error_logs: usize,
    /// Confidence decay applied per hop when adopting a child hypothesis.
    pub confidence_decay: f64,
    /// Sigma floor a metric anomaly must reach to call a span abnormal.
    pub n_sigma: f64,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            tau_child: 0.6,
            min_error_logs: 1,
            confidence_decay: 0.95,
            n_sigma: 3.0,
        }
    }
}

/// Transport settings of the LLM backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub endpoint: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// Base of the exponential backoff between retries.
    pub backoff_base_ms: u64,
    /// Cap on concurrent in-flight requests. 0 follows the pool capacity
    /// when the config comes from a run configuration, and means unbounded
    /// on a bare client.
    pub max_concurrent: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: String::new(),
            api_key: None,
            model: "default".into(),
            timeout_ms: 30_000,
            max_retries: 3,
            backoff_base_ms: 500,
            max_concurrent: 0,
        }
    }
}

impl LlmConfig {
    /// Populates endpoint/key/model/timeout from the `RCL_LLM_*` env vars
    /// when they are set.
    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var("RCL_LLM_ENDPOINT") {
            self.endpoint = v;
        }
        if let Ok(v) = std::env::var("RCL_LLM_API_KEY") {
            self.api_key = Some(v);
        }
        if let Ok(v) = std::env::var("RCL_LLM_MODEL") {
            self.model = v;
        }
        if let Ok(v) = std::env::var("RCL_LLM_TIMEOUT_MS") {
            if let Ok(ms) = v.parse() {
                self.timeout_ms = ms;
            }
        }
    }
}

/// Full reasoner configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ReasonerConfig {
    pub backend: Backend,
    pub heuristic: HeuristicConfig,
    pub llm: LlmConfig,
}

/// A reasoning backend. Implementations are stateless and safe to call from
/// many agents concurrently.
pub trait Reasoner: Send + Sync {
    /// Self-state verification: judge the span from its own context and tool
    /// results only.
    fn self_state(
        &self,
        ctx: &SpanContext,
        metric_anomalies: &[MetricAnomaly],
        logs: &LogQueryResult,
    ) -> Result<SelfEvidence, ReasonerError>;

    /// Evidence consolidation: fuse the span's own evidence with its
    /// children's consolidated hypotheses.
    fn consolidate(
        &self,
        evidence: &SelfEvidence,
        downstream: &[ConsolidatedEvidence],
        dominant_child_share: Option<f64>,
    ) -> Result<ConsolidatedEvidence, ReasonerError>;
}

#[derive(Debug, Error)]
pub enum ReasonerError {
    #[error("reply does not match the evidence schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}
