//! Multi-agent execution over a trace graph.
//!
//! Every span gets one agent. Agents run bottom-up: a span becomes ready
//! only once all of its children are done, so consolidation always sees the
//! children's evidence. A fixed-capacity pool bounds how many agents execute
//! concurrently; queued agents are dispatched FIFO by readiness time, ties
//! by span id. All shared inputs are immutable; the only mutable state is
//! the task table, which is never held across a reasoner call.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::{EvidenceGraphError, GlobalEvidenceGraph};
use crate::logtool::{query_logs, LogQueryResult, LogStore, RelevanceRule};
use crate::metric::{query_anomalous_metrics, BaselineTable, MetricStore};
use crate::model::{ComponentRef, TopologyManifest};
use crate::reasoner::{ConsolidatedEvidence, Reasoner, ReasonerError, SelfEvidence, SpanContext};
use crate::trace::{children, dominant_child_share, TraceError, TraceGraph};

/// Capacity bound on concurrently active agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub capacity: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig { capacity: 100 }
    }
}

/// Tunables shared by every agent's tool queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSettings {
    pub n_sigma: f64,
    pub delta_ms: i64,
    pub log_rule: RelevanceRule,
    pub log_max_entries: usize,
    /// Log window override; falls back to `delta_ms` when unset.
    pub log_delta_ms: Option<i64>,
    /// When true each agent queries around its own span timestamp instead of
    /// the entry span's.
    pub per_span_t0: bool,
    /// Artificial per-agent tool latency, for scheduling experiments.
    pub simulated_latency_ms: u64,
}

impl Default for ToolSettings {
    fn default() -> Self {
        ToolSettings {
            n_sigma: 3.0,
            delta_ms: 60_000,
            log_rule: RelevanceRule::default(),
            log_max_entries: 100,
            log_delta_ms: None,
            per_span_t0: false,
            simulated_latency_ms: 0,
        }
    }
}

/// Immutable tool stores an agent may query.
pub struct ToolSuite<'a> {
    pub metrics: &'a MetricStore,
    pub logs: &'a LogStore,
    pub manifest: &'a TopologyManifest,
    pub baselines: &'a BaselineTable,
    pub settings: ToolSettings,
}

/// Lifecycle of one agent task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskState {
    Pending,
    Ready,
    Active,
    Done,
    Failed,
}

/// Final record of one agent task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTask {
    pub span_id: String,
    pub state: TaskState,
    /// Logical start/finish stamps from a shared monotone counter; a child's
    /// finish stamp always precedes its parent's start stamp.
    pub started_seq: u64,
    pub finished_seq: u64,
}

/// The entry-span agent's consolidated evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootReport {
    pub evidence: ConsolidatedEvidence,
}

/// Everything a diagnosis run produces.
#[derive(Debug)]
pub struct DiagnosisOutcome {
    pub root_report: RootReport,
    pub evidence_graph: GlobalEvidenceGraph,
    /// Consolidated evidence of every span (the root's is the report).
    pub consolidated: BTreeMap<String, ConsolidatedEvidence>,
    /// High-water mark of concurrently active agents.
    pub max_active_observed: usize,
    pub tasks: BTreeMap<String, AgentTask>,
    /// Tool failures that were tolerated (agents proceeded degraded).
    pub tool_errors: Vec<String>,
}

/// One agent's outputs.
#[derive(Debug, Clone)]
pub struct AgentOutput {
    pub self_evidence: SelfEvidence,
    pub consolidated: ConsolidatedEvidence,
    pub tool_errors: Vec<String>,
}

/// Runs one agent: tool-backed self-state verification, then consolidation
/// with the children's evidence. Tool errors degrade to empty tool results;
/// reasoner errors fail the agent.
pub fn run_agent(
    span_id: &str,
    graph: &TraceGraph,
    tools: &ToolSuite<'_>,
    reasoner: &dyn Reasoner,
    downstream: &[ConsolidatedEvidence],
    t0_ms: i64,
) -> Result<AgentOutput, AgentError> {
    if tools.settings.simulated_latency_ms > 0 {
        std::thread::sleep(Duration::from_millis(tools.settings.simulated_latency_ms));
    }
    let span = graph
        .span(span_id)
        .ok_or_else(|| AgentError::Trace(TraceError::UnknownSpan(span_id.to_string())))?;
    let ctx = SpanContext::new(span.clone(), children(graph, span_id)?);

    let mut tool_errors = Vec::new();
    let pod = ComponentRef::pod(span.pod.clone());
    let metric_anomalies = match query_anomalous_metrics(
        tools.metrics,
        t0_ms,
        tools.settings.delta_ms,
        &pod,
        tools.manifest,
        tools.settings.n_sigma,
        tools.baselines,
    ) {
        Ok(anomalies) => anomalies,
        Err(e) => {
            tool_errors.push(format!("metric tool failed for {span_id}: {e}"));
            Vec::new()
        }
    };
    let log_delta = tools
        .settings
        .log_delta_ms
        .unwrap_or(tools.settings.delta_ms);
    let logs = if log_delta > 0 {
        query_logs(
            tools.logs,
            t0_ms,
            log_delta,
            &pod,
            tools.manifest,
            &tools.settings.log_rule,
            tools.settings.log_max_entries,
        )
    } else {
        tool_errors.push(format!(
            "log tool skipped for {span_id}: non-positive delta"
        ));
        LogQueryResult {
            entries: vec![],
            truncated: false,
        }
    };

    let self_evidence = reasoner
        .self_state(&ctx, &metric_anomalies, &logs)
        .map_err(|e| AgentError::Reasoner(span_id.to_string(), e))?;
    let share = dominant_child_share(graph, span_id)?.map(|(_, share)| share);
    let consolidated = reasoner
        .consolidate(&self_evidence, downstream, share)
        .map_err(|e| AgentError::Reasoner(span_id.to_string(), e))?;
    Ok(AgentOutput {
        self_evidence,
        consolidated,
        tool_errors,
    })
}

/// Rewrites a child's literal `"self"` attribution to the child's concrete
/// pod before the parent reasons over it; a bare `"self"` would otherwise
/// change referent when it crosses the edge.
fn materialize_for_parent(child_pod: &str, e: &ConsolidatedEvidence) -> ConsolidatedEvidence {
    if e.is_self_reference() {
        ConsolidatedEvidence {
            local_root_cause: child_pod.to_string(),
            ..e.clone()
        }
    } else {
        e.clone()
    }
}

struct TaskEntry {
    state: TaskState,
    pending_children: usize,
    output: Option<AgentOutput>,
    started_seq: u64,
    finished_seq: u64,
}

struct SchedulerState {
    ready: BinaryHeap<Reverse<(u64, String)>>,
    tasks: HashMap<String, TaskEntry>,
    next_ready_seq: u64,
    completed: usize,
    active: usize,
    max_active: usize,
    root_failure: Option<String>,
}

struct Scheduler {
    state: Mutex<SchedulerState>,
    cv: Condvar,
    total: usize,
    clock: AtomicU64,
}

/// Diagnoses one trace: every span is verified and consolidated, the entry
/// span's evidence becomes the root report, and all self evidences form the
/// global evidence graph.
///
/// `t0_ms` defaults to the entry span's timestamp.
pub fn diagnose_trace(
    graph: &TraceGraph,
    tools: &ToolSuite<'_>,
    reasoner: &dyn Reasoner,
    pool: PoolConfig,
    t0_ms: Option<i64>,
) -> Result<DiagnosisOutcome, OrchestratorError> {
    if pool.capacity == 0 {
        return Err(OrchestratorError::PoolMisconfigured);
    }
    let default_t0 = t0_ms.unwrap_or(graph.entry_span().timestamp_ms);

    let mut tasks = HashMap::with_capacity(graph.len());
    let mut ready = BinaryHeap::new();
    let mut initial: Vec<&str> = Vec::new();
    for id in graph.preorder() {
        let pending = graph.child_ids(&id).len();
        if pending == 0 {
            initial.push(graph.span(&id).map(|s| s.span_id.as_str()).unwrap());
        }
        tasks.insert(
            id.clone(),
            TaskEntry {
                state: if pending == 0 {
                    TaskState::Ready
                } else {
                    TaskState::Pending
                },
                pending_children: pending,
                output: None,
                started_seq: 0,
                finished_seq: 0,
            },
        );
    }
    initial.sort();
    for id in initial {
        ready.push(Reverse((0, id.to_string())));
    }

    let scheduler = Scheduler {
        state: Mutex::new(SchedulerState {
            ready,
            tasks,
            next_ready_seq: 1,
            completed: 0,
            active: 0,
            max_active: 0,
            root_failure: None,
        }),
        cv: Condvar::new(),
        total: graph.len(),
        clock: AtomicU64::new(1),
    };

    let workers = pool.capacity.min(graph.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| worker_loop(&scheduler, graph, tools, reasoner, default_t0));
        }
    });

    let state = scheduler.state.into_inner().unwrap();
    if let Some(cause) = state.root_failure {
        return Err(OrchestratorError::AgentFailed(
            graph.entry_span_id().to_string(),
            cause,
        ));
    }

    let mut evidences = BTreeMap::new();
    let mut consolidated = BTreeMap::new();
    let mut task_log = BTreeMap::new();
    let mut tool_errors = Vec::new();
    for (id, entry) in &state.tasks {
        let output = entry
            .output
            .as_ref()
            .expect("completed run covers all spans");
        evidences.insert(id.clone(), output.self_evidence.clone());
        consolidated.insert(id.clone(), output.consolidated.clone());
        tool_errors.extend(output.tool_errors.iter().cloned());
        task_log.insert(
            id.clone(),
            AgentTask {
                span_id: id.clone(),
                state: entry.state,
                started_seq: entry.started_seq,
                finished_seq: entry.finished_seq,
            },
        );
    }
    let evidence_graph = build_evidence_graph(graph, &evidences)?;
    let root_evidence = consolidated[graph.entry_span_id()].clone();
    Ok(DiagnosisOutcome {
        root_report: RootReport {
            evidence: root_evidence,
        },
        evidence_graph,
        consolidated,
        max_active_observed: state.max_active,
        tasks: task_log,
        tool_errors,
    })
}

fn worker_loop(
    scheduler: &Scheduler,
    graph: &TraceGraph,
    tools: &ToolSuite<'_>,
    reasoner: &dyn Reasoner,
    default_t0: i64,
) {
    loop {
        let span_id = {
            let mut state = scheduler.state.lock().unwrap();
            loop {
                if state.completed == scheduler.total || state.root_failure.is_some() {
                    return;
                }
                if let Some(Reverse((_, id))) = state.ready.pop() {
                    let entry = state.tasks.get_mut(&id).unwrap();
                    entry.state = TaskState::Active;
                    entry.started_seq = scheduler.clock.fetch_add(1, Ordering::Relaxed);
                    state.active += 1;
                    state.max_active = state.max_active.max(state.active);
                    break id;
                }
                state = scheduler.cv.wait(state).unwrap();
            }
        };

        // Children are all done by construction; collect their evidence in
        // child order with self references materialized.
        let downstream: Vec<ConsolidatedEvidence> = {
            let state = scheduler.state.lock().unwrap();
            graph
                .child_ids(&span_id)
                .iter()
                .map(|child_id| {
                    let output = state.tasks[child_id]
                        .output
                        .as_ref()
                        .expect("child completed before parent became ready");
                    let child_pod = &graph.span(child_id).unwrap().pod;
                    materialize_for_parent(child_pod, &output.consolidated)
                })
                .collect()
        };

        let t0 = if tools.settings.per_span_t0 {
            graph
                .span(&span_id)
                .map(|s| s.timestamp_ms)
                .unwrap_or(default_t0)
        } else {
            default_t0
        };
        let result = run_agent(&span_id, graph, tools, reasoner, &downstream, t0);
        let finished = scheduler.clock.fetch_add(1, Ordering::Relaxed);

        let mut state = scheduler.state.lock().unwrap();
        let span = graph.span(&span_id).unwrap();
        let (final_state, output) = match result {
            Ok(output) => (TaskState::Done, output),
            Err(err) => {
                let cause = err.to_string();
                if span_id == graph.entry_span_id() {
                    state.root_failure = Some(cause);
                    scheduler.cv.notify_all();
                    return;
                }
                // A failed child still contributes placeholder evidence so
                // the run continues and the failure stays visible.
                (
                    TaskState::Failed,
                    AgentOutput {
                        self_evidence: SelfEvidence {
                            span_id: span_id.clone(),
                            service: span.service.clone(),
                            is_abnormal: false,
                            key_symptoms: "agent failed".into(),
                            hypothesis: format!("agent failed: {cause}"),
                        },
                        consolidated: ConsolidatedEvidence {
                            span_id: span_id.clone(),
                            service: span.service.clone(),
                            local_root_cause: crate::reasoner::SELF_REFERENCE.into(),
                            reason: format!("agent failed: {cause}"),
                            confidence: 0.0,
                        },
                        tool_errors: vec![],
                    },
                )
            }
        };
        {
            let entry = state.tasks.get_mut(&span_id).unwrap();
            entry.state = final_state;
            entry.finished_seq = finished;
            entry.output = Some(output);
        }
        state.active -= 1;
        state.completed += 1;
        if let Some(parent_id) = &span.parent_span_id {
            let parent = state.tasks.get_mut(parent_id).unwrap();
            parent.pending_children -= 1;
            if parent.pending_children == 0 {
                parent.state = TaskState::Ready;
                let seq = state.next_ready_seq;
                state.next_ready_seq += 1;
                state.ready.push(Reverse((seq, parent_id.clone())));
            }
        }
        scheduler.cv.notify_all();
    }
}

/// Builds the global evidence graph mirroring the trace graph's nodes and
/// edges, attributed with each span's self evidence.
pub fn build_evidence_graph(
    graph: &TraceGraph,
    evidences: &BTreeMap<String, SelfEvidence>,
) -> Result<GlobalEvidenceGraph, EvidenceGraphError> {
    let mut children = BTreeMap::new();
    let mut attributed = BTreeMap::new();
    for id in graph.preorder() {
        let evidence = evidences
            .get(&id)
            .ok_or_else(|| EvidenceGraphError::MissingEvidence(id.clone()))?;
        let kids = graph.child_ids(&id);
        if !kids.is_empty() {
            children.insert(id.clone(), kids.to_vec());
        }
        attributed.insert(id.clone(), evidence.clone());
    }
    GlobalEvidenceGraph::new(graph.entry_span_id().to_string(), children, attributed)
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("reasoner failed for span {0}: {1}")]
    Reasoner(String, ReasonerError),
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("agents pool capacity must be at least 1")]
    PoolMisconfigured,
    #[error("agent for span {0} failed: {1}")]
    AgentFailed(String, String),
    #[error(transparent)]
    Evidence(#[from] EvidenceGraphError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logtool::LogStore;
    use crate::metric::MetricStore;
    use crate::model::{MetricPoint, PodEntry, Span};
    use crate::reasoner::HeuristicReasoner;
    use crate::trace::build_trace_graph;

    fn span(id: &str, parent: Option<&str>, t: i64, d: u64, pod: &str, svc: &str) -> Span {
        Span {
            trace_id: "t1".into(),
            span_id: id.into(),
            parent_span_id: parent.map(String::from),
            timestamp_ms: t,
            service: svc.into(),
            pod: pod.into(),
            operation: format!("{svc}/op"),
            duration_ms: d,
            status: "0".into(),
        }
    }

    /// A(frontend) -> {B(checkout), C(currency)}, B -> {D(payment)}.
    fn fixture_graph() -> TraceGraph {
        let spans = vec![
            span("A", None, 1000, 5000, "frontend-0", "frontend"),
            span("B", Some("A"), 1010, 4800, "checkout-0", "checkout"),
            span("C", Some("A"), 1020, 30, "currency-0", "currency"),
            span("D", Some("B"), 1030, 4700, "payment-0", "payment"),
        ];
        build_trace_graph(&spans, "t1").unwrap()
    }

    fn manifest() -> TopologyManifest {
        TopologyManifest::new(vec![
            PodEntry {
                name: "frontend-0".into(),
                service: "frontend".into(),
                node: "n0".into(),
            },
            PodEntry {
                name: "checkout-0".into(),
                service: "checkout".into(),
                node: "n1".into(),
            },
            PodEntry {
                name: "currency-0".into(),
                service: "currency".into(),
                node: "n0".into(),
            },
            PodEntry {
                name: "payment-0".into(),
                service: "payment".into(),
                node: "n1".into(),
            },
        ])
        .unwrap()
    }

    /// Store where payment-0's cpu metric spikes inside the window.
    fn faulty_metrics() -> MetricStore {
        let mut points = Vec::new();
        for comp in ["frontend-0", "checkout-0", "currency-0", "payment-0"] {
            for i in 0..60 {
                points.push(MetricPoint {
                    timestamp_ms: i * 1000 - 200_000,
                    component_id: comp.into(),
                    metric_name: "cpu".into(),
                    value: 10.0 + (i % 3) as f64 * 0.1,
                });
            }
        }
        points.push(MetricPoint {
            timestamp_ms: 1500,
            component_id: "payment-0".into(),
            metric_name: "cpu".into(),
            value: 50.0,
        });
        MetricStore::from_points(points)
    }

    fn suite<'a>(
        metrics: &'a MetricStore,
        logs: &'a LogStore,
        manifest: &'a TopologyManifest,
        baselines: &'a BaselineTable,
        settings: ToolSettings,
    ) -> ToolSuite<'a> {
        ToolSuite {
            metrics,
            logs,
            manifest,
            baselines,
            settings,
        }
    }

    #[test]
    fn injected_leaf_fault_propagates_to_root_report() {
        let graph = fixture_graph();
        let metrics = faulty_metrics();
        let logs = LogStore::default();
        let manifest = manifest();
        let settings = ToolSettings {
            delta_ms: 60_000,
            ..ToolSettings::default()
        };
        let baselines = crate::metric::fit_baselines(
            &metrics,
            crate::metric::ReferenceWindowPolicy::AllBefore,
            1000,
            settings.delta_ms,
        );
        let tools = suite(&metrics, &logs, &manifest, &baselines, settings);
        let reasoner = HeuristicReasoner::default();
        let outcome =
            diagnose_trace(&graph, &tools, &reasoner, PoolConfig::default(), None).unwrap();
        assert_eq!(outcome.root_report.evidence.local_root_cause, "payment-0");
        assert!(outcome.root_report.evidence.confidence > 0.6);
        // The evidence graph marks exactly the faulty pod's span abnormal.
        let abnormal: Vec<String> = outcome
            .evidence_graph
            .abnormal_nodes()
            .into_iter()
            .map(|(id, _)| id)
            .collect();
        assert_eq!(abnormal, vec!["D".to_string()]);
    }

    #[test]
    fn single_span_trace_diagnoses() {
        let graph = build_trace_graph(&[span("A", None, 0, 10, "p-0", "svc")], "t1").unwrap();
        let metrics = MetricStore::default();
        let logs = LogStore::default();
        let manifest = TopologyManifest::new(vec![]).unwrap();
        let baselines = BaselineTable::new();
        let tools = suite(
            &metrics,
            &logs,
            &manifest,
            &baselines,
            ToolSettings::default(),
        );
        let reasoner = HeuristicReasoner::default();
        let outcome =
            diagnose_trace(&graph, &tools, &reasoner, PoolConfig::default(), None).unwrap();
        assert_eq!(outcome.evidence_graph.len(), 1);
        assert_eq!(outcome.evidence_graph.sorted_edges().len(), 0);
        assert_eq!(outcome.root_report.evidence.span_id, "A");
    }

    #[test]
    fn pool_bound_respected_with_k2() {
        let mut spans = vec![span("root", None, 0, 100, "p-root", "svc-root")];
        for i in 0..5 {
            spans.push(span(
                &format!("leaf-{i}"),
                Some("root"),
                10 + i,
                10,
                &format!("p-{i}"),
                &format!("svc-{i}"),
            ));
        }
        let graph = build_trace_graph(&spans, "t1").unwrap();
        let metrics = MetricStore::default();
        let logs = LogStore::default();
        let manifest = TopologyManifest::new(vec![]).unwrap();
        let baselines = BaselineTable::new();
        let settings = ToolSettings {
            simulated_latency_ms: 20,
            ..ToolSettings::default()
        };
        let tools = suite(&metrics, &logs, &manifest, &baselines, settings);
        let reasoner = HeuristicReasoner::default();
        let outcome =
            diagnose_trace(&graph, &tools, &reasoner, PoolConfig { capacity: 2 }, None).unwrap();
        assert!(outcome.max_active_observed <= 2);
        assert!(outcome.max_active_observed >= 1);
    }

    #[test]
    fn children_complete_before_parents_start() {
        let graph = fixture_graph();
        let metrics = MetricStore::default();
        let logs = LogStore::default();
        let manifest = manifest();
        let baselines = BaselineTable::new();
        let tools = suite(
            &metrics,
            &logs,
            &manifest,
            &baselines,
            ToolSettings::default(),
        );
        let reasoner = HeuristicReasoner::default();
        let outcome =
            diagnose_trace(&graph, &tools, &reasoner, PoolConfig::default(), None).unwrap();
        for (parent, child) in graph.edges() {
            let p = &outcome.tasks[&parent];
            let c = &outcome.tasks[&child];
            assert!(
                c.finished_seq < p.started_seq,
                "child {child} must finish before parent {parent} starts"
            );
        }
    }

    #[test]
    fn zero_capacity_pool_rejected() {
        let graph = fixture_graph();
        let metrics = MetricStore::default();
        let logs = LogStore::default();
        let manifest = manifest();
        let baselines = BaselineTable::new();
        let tools = suite(
            &metrics,
            &logs,
            &manifest,
            &baselines,
            ToolSettings::default(),
        );
        let reasoner = HeuristicReasoner::default();
        let err = diagnose_trace(&graph, &tools, &reasoner, PoolConfig { capacity: 0 }, None)
            .unwrap_err();
        assert!(matches!(err, OrchestratorError::PoolMisconfigured));
    }

    #[test]
    fn empty_tool_stores_degrade_gracefully() {
        let graph = fixture_graph();
        let metrics = MetricStore::default();
        let logs = LogStore::default();
        let manifest = manifest();
        let baselines = BaselineTable::new();
        let tools = suite(
            &metrics,
            &logs,
            &manifest,
            &baselines,
            ToolSettings::default(),
        );
        let reasoner = HeuristicReasoner::default();
        let outcome =
            diagnose_trace(&graph, &tools, &reasoner, PoolConfig::default(), None).unwrap();
        // Nothing abnormal anywhere; root attributes to itself with zero
        // confidence.
        assert_eq!(outcome.root_report.evidence.local_root_cause, "self");
        assert_eq!(outcome.root_report.evidence.confidence, 0.0);
    }

    #[test]
    fn determinism_across_pool_sizes() {
        let graph = fixture_graph();
        let metrics = faulty_metrics();
        let logs = LogStore::default();
        let manifest = manifest();
        let baselines = crate::metric::fit_baselines(
            &metrics,
            crate::metric::ReferenceWindowPolicy::AllBefore,
            1000,
            60_000,
        );
        let reasoner = HeuristicReasoner::default();
        let mut reports = Vec::new();
        for capacity in [1, 2, 4, 100] {
            let tools = suite(
                &metrics,
                &logs,
                &manifest,
                &baselines,
                ToolSettings::default(),
            );
            let outcome =
                diagnose_trace(&graph, &tools, &reasoner, PoolConfig { capacity }, None).unwrap();
            reports.push((
                outcome.root_report.evidence.clone(),
                outcome.evidence_graph.to_canonical_json(),
            ));
        }
        for pair in reports.windows(2) {
            assert_eq!(pair[0], pair[1]);
        }
    }

    #[test]
    fn evidence_graph_requires_total_coverage() {
        let graph = fixture_graph();
        let mut evidences = BTreeMap::new();
        evidences.insert(
            "A".to_string(),
            SelfEvidence {
                span_id: "A".into(),
                service: "frontend".into(),
                is_abnormal: false,
                key_symptoms: "k".into(),
                hypothesis: "h".into(),
            },
        );
        let err = build_evidence_graph(&graph, &evidences).unwrap_err();
        assert!(matches!(err, EvidenceGraphError::MissingEvidence(_)));
    }
}
