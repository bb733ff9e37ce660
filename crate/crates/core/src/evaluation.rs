//! Ranking metrics (Recall@k, MRR) and the benchmark harness running the
//! whole engine over a dataset's labeled failure cases.

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::ingest::DatasetBundle;
use crate::metric::fit_baselines;
use crate::model::{ComponentRef, Level, TopologyManifest};
use crate::orchestrator::{diagnose_trace, DiagnosisOutcome, PoolConfig, ToolSuite};
use crate::reasoner::Reasoner;
use crate::synthesizer::{synthesize, RankedDiagnosis, SynthesizerError};
use crate::trace::{build_trace_graph, TraceError};

/// Rank cutoff beyond which a prediction counts as absent.
pub const ABSENT_CUTOFF: usize = 10;

/// Where the true root cause landed in one diagnosis (None = absent from
/// the top-10).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankOutcome {
    pub failure_id: String,
    pub rank: Option<usize>,
}

/// Rank of the first candidate matching the truth. A pod candidate counts
/// for a service truth when it belongs to that service (pod-to-service
/// credit); the reverse direction earns no credit.
pub fn match_rank(
    diagnosis: &RankedDiagnosis,
    truth: &ComponentRef,
    manifest: &TopologyManifest,
    failure_id: &str,
) -> RankOutcome {
    for (i, candidate) in diagnosis.candidates.iter().take(ABSENT_CUTOFF).enumerate() {
        let hit = candidate.component == *truth
            || (truth.level == Level::Service
                && candidate.component.level == Level::Pod
                && manifest.service_of(&candidate.component.name) == Some(truth.name.as_str()));
        if hit {
            return RankOutcome {
                failure_id: failure_id.to_string(),
                rank: Some(i + 1),
            };
        }
    }
    RankOutcome {
        failure_id: failure_id.to_string(),
        rank: None,
    }
}

/// Fraction of outcomes ranked at or above `k`.
pub fn recall_at_k(outcomes: &[RankOutcome], k: usize) -> Result<f64, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyOutcomeSet);
    }
    if ![1, 3, 5, 10].contains(&k) {
        return Err(EvalError::UnsupportedK(k));
    }
    let hits = outcomes
        .iter()
        .filter(|o| o.rank.map(|r| r <= k).unwrap_or(false))
        .count();
    Ok(hits as f64 / outcomes.len() as f64)
}

/// Mean reciprocal rank; an absent root cause contributes 0 (rank treated
/// as infinite).
pub fn mrr(outcomes: &[RankOutcome]) -> Result<f64, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyOutcomeSet);
    }
    let sum: f64 = outcomes
        .iter()
        .map(|o| o.rank.map(|r| 1.0 / r as f64).unwrap_or(0.0))
        .sum();
    Ok(sum / outcomes.len() as f64)
}

/// Per-case record of a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub failure_id: String,
    pub trace_id: String,
    pub truth: ComponentRef,
    pub rank: Option<usize>,
    pub error: Option<String>,
    pub diagnosis_secs: f64,
}

/// Aggregated benchmark results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub cases: usize,
    pub recall_at_1: f64,
    pub recall_at_3: f64,
    pub recall_at_5: f64,
    pub recall_at_10: f64,
    pub mrr: f64,
    pub mean_secs_per_query: f64,
    pub total_diagnosis_secs: f64,
    pub outcomes: Vec<CaseOutcome>,
}

/// Runs the full engine on one trace of a loaded bundle.
pub fn diagnose_case(
    bundle: &DatasetBundle,
    trace_id: &str,
    cfg: &RunConfig,
    reasoner: &dyn Reasoner,
) -> Result<(DiagnosisOutcome, RankedDiagnosis), EngineError> {
    let graph = build_trace_graph(&bundle.spans, trace_id)?;
    let t0 = graph.entry_span().timestamp_ms;
    let settings = cfg.tool_settings();
    let baselines = fit_baselines(
        &bundle.metrics,
        cfg.reference_window_policy,
        t0,
        settings.delta_ms,
    );
    let tools = ToolSuite {
        metrics: &bundle.metrics,
        logs: &bundle.logs,
        manifest: &bundle.manifest,
        baselines: &baselines,
        settings,
    };
    let outcome = diagnose_trace(
        &graph,
        &tools,
        reasoner,
        PoolConfig { capacity: cfg.pool },
        None,
    )?;
    let diagnosis = synthesize(
        &outcome.root_report,
        &outcome.evidence_graph,
        &graph,
        &bundle.manifest,
        cfg.top_n,
        &cfg.weights,
    )?;
    Ok((outcome, diagnosis))
}

/// Diagnoses every labeled failure case and aggregates ranking metrics.
/// Per-case failures are recorded as absent; the harness never aborts.
pub fn run_benchmark(
    bundle: &DatasetBundle,
    cfg: &RunConfig,
    reasoner: &dyn Reasoner,
) -> Result<BenchmarkReport, EvalError> {
    let cases = bundle
        .ground_truth
        .as_ref()
        .ok_or(EvalError::MissingGroundTruth)?;
    if cases.is_empty() {
        return Err(EvalError::MissingGroundTruth);
    }
    let mut outcomes = Vec::with_capacity(cases.len());
    let mut total_secs = 0.0;
    for case in cases {
        let start = Instant::now();
        let result = diagnose_case(bundle, &case.entry_trace_id, cfg, reasoner);
        let secs = start.elapsed().as_secs_f64();
        total_secs += secs;
        let (rank, error) = match result {
            Ok((_, diagnosis)) => {
                let outcome = match_rank(
                    &diagnosis,
                    &case.root_cause,
                    &bundle.manifest,
                    &case.failure_id,
                );
                (outcome.rank, None)
            }
            Err(e) => (None, Some(e.to_string())),
        };
        outcomes.push(CaseOutcome {
            failure_id: case.failure_id.clone(),
            trace_id: case.entry_trace_id.clone(),
            truth: case.root_cause.clone(),
            rank,
            error,
            diagnosis_secs: secs,
        });
    }
    let ranks: Vec<RankOutcome> = outcomes
        .iter()
        .map(|o| RankOutcome {
            failure_id: o.failure_id.clone(),
            rank: o.rank,
        })
        .collect();
    Ok(BenchmarkReport {
        cases: outcomes.len(),
        recall_at_1: recall_at_k(&ranks, 1)?,
        recall_at_3: recall_at_k(&ranks, 3)?,
        recall_at_5: recall_at_k(&ranks, 5)?,
        recall_at_10: recall_at_k(&ranks, 10)?,
        mrr: mrr(&ranks)?,
        mean_secs_per_query: total_secs / outcomes.len() as f64,
        total_diagnosis_secs: total_secs,
        outcomes,
    })
}

/// Trace ids of the bundle's labeled failures.
pub fn failure_trace_ids(bundle: &DatasetBundle) -> HashSet<String> {
    bundle
        .ground_truth
        .as_ref()
        .map(|cases| cases.iter().map(|c| c.entry_trace_id.clone()).collect())
        .unwrap_or_default()
}

/// Writes per-case outcomes as CSV.
pub fn write_outcomes_csv(path: &Path, outcomes: &[CaseOutcome]) -> Result<(), EvalError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| EvalError::Io(path.display().to_string(), e.to_string()))?;
    writer
        .write_record([
            "failure_id",
            "trace_id",
            "truth_level",
            "truth_name",
            "rank",
            "error",
            "diagnosis_secs",
        ])
        .map_err(|e| EvalError::Io(path.display().to_string(), e.to_string()))?;
    for o in outcomes {
        writer
            .write_record([
                o.failure_id.as_str(),
                o.trace_id.as_str(),
                o.truth.level.as_str(),
                o.truth.name.as_str(),
                &o.rank
                    .map(|r| r.to_string())
                    .unwrap_or_else(|| "ABSENT".into()),
                o.error.as_deref().unwrap_or(""),
                &format!("{:.6}", o.diagnosis_secs),
            ])
            .map_err(|e| EvalError::Io(path.display().to_string(), e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| EvalError::Io(path.display().to_string(), e.to_string()))?;
    Ok(())
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("outcome set is empty")]
    EmptyOutcomeSet,
    #[error("recall@k supports k in {{1, 3, 5, 10}}, got {0}")]
    UnsupportedK(usize),
    #[error("dataset has no ground truth")]
    MissingGroundTruth,
    #[error("io error on {0}: {1}")]
    Io(String, String),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Orchestrator(#[from] crate::orchestrator::OrchestratorError),
    #[error(transparent)]
    Synthesizer(#[from] SynthesizerError),
}
