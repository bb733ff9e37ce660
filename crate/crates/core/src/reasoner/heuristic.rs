//! Deterministic reasoning backend.
//!
//! A fixed rule table stands in for model judgment so diagnoses are exactly
//! reproducible: a span is abnormal when its tools surface a strong metric
//! deviation, enough error logs, or an error status; consolidation adopts the
//! strongest child hypothesis above a threshold, otherwise attributes to the
//! span itself.

use std::fmt::Write as _;

use crate::logtool::LogQueryResult;
use crate::metric::MetricAnomaly;
use crate::model::Severity;

use super::{
    clamp01, truncate_field, ConsolidatedEvidence, HeuristicConfig, Reasoner, ReasonerError,
    SelfEvidence, SpanContext, FIELD_CAP, SELF_REFERENCE,
};

/// Confidence for a self-attributed abnormal span.
const SELF_CONFIDENCE: f64 = 0.8;
/// Boosted confidence when children do not explain the span's latency.
const SELF_CONFIDENCE_BOOSTED: f64 = 0.9;
/// Dominant-child share below which the latency is considered unexplained.
const UNEXPLAINED_SHARE: f64 = 0.5;

/// Rule-table self-state verification over the span's tool results.
pub fn heuristic_self_state(
    ctx: &SpanContext,
    metric_anomalies: &[MetricAnomaly],
    logs: &LogQueryResult,
    cfg: &HeuristicConfig,
) -> SelfEvidence {
    let strong_metric = metric_anomalies
        .iter()
        .filter(|a| a.max_deviation_sigmas >= cfg.n_sigma)
        .max_by(|a, b| {
            a.max_deviation_sigmas
                .partial_cmp(&b.max_deviation_sigmas)
                .unwrap_or(std::cmp::Ordering::Equal)
                // Ties resolved toward the first key in sorted order.
                .then_with(|| b.key.cmp(&a.key))
        });
    let error_logs = logs
        .entries
        .iter()
        .filter(|e| e.severity >= Severity::Error)
        .count();
    let status_error = ctx.span.is_error_status();

    let is_abnormal = strong_metric.is_some() || error_logs >= cfg.min_error_logs || status_error;

    let mut symptoms = String::new();
    if let Some(a) = strong_metric {
        let _ = write!(
            symptoms,
            "metric {}/{} deviated {} from baseline",
            a.key.component_id,
            a.key.metric_name,
            fmt_sigmas(a.max_deviation_sigmas),
        );
    }
    if error_logs > 0 {
        if !symptoms.is_empty() {
            symptoms.push_str("; ");
        }
        let _ = write!(symptoms, "{error_logs} error-level log entries in window");
    }
    if status_error {
        if !symptoms.is_empty() {
            symptoms.push_str("; ");
        }
        let _ = write!(
            symptoms,
            "span status {} indicates failure",
            ctx.span.status
        );
    }
    if symptoms.is_empty() {
        symptoms.push_str("no anomalous signals");
    }

    let hypothesis = if let Some(a) = strong_metric {
        format!(
            "{} shows a {} deviation on {}, pointing at a local fault",
            ctx.span.pod,
            fmt_sigmas(a.max_deviation_sigmas),
            a.key.metric_name,
        )
    } else if error_logs >= cfg.min_error_logs {
        format!(
            "{} emitted {error_logs} error logs around the failure",
            ctx.span.pod
        )
    } else if status_error {
        format!("operation returned failure status {}", ctx.span.status)
    } else {
        "span appears healthy; no local fault indication".to_string()
    };

    SelfEvidence {
        span_id: ctx.span.span_id.clone(),
        service: ctx.span.service.clone(),
        is_abnormal,
        key_symptoms: truncate_field(&symptoms, FIELD_CAP),
        hypothesis: truncate_field(&hypothesis, FIELD_CAP),
    }
}

fn fmt_sigmas(sigmas: f64) -> String {
    if sigmas.is_finite() {
        format!("{sigmas:.1} sigma")
    } else {
        "off-baseline (zero variance)".to_string()
    }
}

/// Rule-table evidence consolidation.
///
/// Adopt the highest-confidence downstream hypothesis when it reaches
/// `tau_child` (confidence decays per hop); otherwise attribute to self when
/// abnormal, with a boost when the dominant child explains less than half of
/// this span's latency; otherwise report no anomaly with zero confidence.
/// Confidence ties are broken by child order.
pub fn heuristic_consolidate(
    evidence: &SelfEvidence,
    downstream: &[ConsolidatedEvidence],
    dominant_child_share: Option<f64>,
    cfg: &HeuristicConfig,
) -> ConsolidatedEvidence {
    let best = downstream.iter().enumerate().fold(
        None::<(usize, &ConsolidatedEvidence)>,
        |best, (i, e)| match best {
            Some((_, b)) if e.confidence <= b.confidence => best,
            _ => Some((i, e)),
        },
    );

    if let Some((_, child)) = best.filter(|(_, c)| c.confidence >= cfg.tau_child) {
        let confidence = clamp01(child.confidence * cfg.confidence_decay);
        let reason = format!(
            "adopted downstream hypothesis from span {} ({}): {}",
            child.span_id, child.service, child.reason
        );
        return ConsolidatedEvidence {
            span_id: evidence.span_id.clone(),
            service: evidence.service.clone(),
            local_root_cause: child.local_root_cause.clone(),
            reason: truncate_field(&reason, FIELD_CAP),
            confidence,
        };
    }

    if evidence.is_abnormal {
        let unexplained = dominant_child_share
            .map(|s| s < UNEXPLAINED_SHARE)
            .unwrap_or(false);
        let confidence = if unexplained {
            SELF_CONFIDENCE_BOOSTED
        } else {
            SELF_CONFIDENCE
        };
        let mut reason = evidence.key_symptoms.clone();
        if unexplained {
            reason.push_str("; children do not account for the span's latency");
        }
        return ConsolidatedEvidence {
            span_id: evidence.span_id.clone(),
            service: evidence.service.clone(),
            local_root_cause: SELF_REFERENCE.to_string(),
            reason: truncate_field(&reason, FIELD_CAP),
            confidence,
        };
    }

    ConsolidatedEvidence {
        span_id: evidence.span_id.clone(),
        service: evidence.service.clone(),
        local_root_cause: SELF_REFERENCE.to_string(),
        reason: "no anomaly observed".to_string(),
        confidence: 0.0,
    }
}

/// The deterministic [`Reasoner`] backend.
#[derive(Debug, Clone, Default)]
pub struct HeuristicReasoner {
    pub cfg: HeuristicConfig,
}

impl HeuristicReasoner {
    pub fn new(cfg: HeuristicConfig) -> Self {
        HeuristicReasoner { cfg }
    }
}

impl Reasoner for HeuristicReasoner {
    fn self_state(
        &self,
        ctx: &SpanContext,
        metric_anomalies: &[MetricAnomaly],
        logs: &LogQueryResult,
    ) -> Result<SelfEvidence, ReasonerError> {
        Ok(heuristic_self_state(ctx, metric_anomalies, logs, &self.cfg))
    }

    fn consolidate(
        &self,
        evidence: &SelfEvidence,
        downstream: &[ConsolidatedEvidence],
        dominant_child_share: Option<f64>,
    ) -> Result<ConsolidatedEvidence, ReasonerError> {
        Ok(heuristic_consolidate(
            evidence,
            downstream,
            dominant_child_share,
            &self.cfg,
        ))
    }
}
