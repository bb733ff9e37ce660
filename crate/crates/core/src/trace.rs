//! Trace tool: per-request trace graphs, child-span queries, failed-request
//! identification, and the dominant-child latency heuristic.
//!
//! A trace graph is a rooted tree: the entry span is the root and children
//! are ordered by timestamp (ties by span id) so scheduling and reports stay
//! deterministic.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Span;

/// The invocation tree of one request.
#[derive(Debug, Clone)]
pub struct TraceGraph {
    pub trace_id: String,
    nodes: HashMap<String, Span>,
    children: HashMap<String, Vec<String>>,
    entry_span_id: String,
}

impl TraceGraph {
    pub fn entry_span_id(&self) -> &str {
        &self.entry_span_id
    }

    pub fn entry_span(&self) -> &Span {
        &self.nodes[&self.entry_span_id]
    }

    pub fn span(&self, span_id: &str) -> Option<&Span> {
        self.nodes.get(span_id)
    }

    pub fn contains(&self, span_id: &str) -> bool {
        self.nodes.contains_key(span_id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Child span ids of `span_id`, ordered by timestamp then span id.
    pub fn child_ids(&self, span_id: &str) -> &[String] {
        self.children.get(span_id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Span ids in pre-order (entry first, children in graph order).
    pub fn preorder(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.entry_span_id.clone()];
        while let Some(id) = stack.pop() {
            for child in self.child_ids(&id).iter().rev() {
                stack.push(child.clone());
            }
            out.push(id);
        }
        out
    }

    /// Directed (parent, child) edges in pre-order.
    pub fn edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::with_capacity(self.nodes.len().saturating_sub(1));
        for parent in self.preorder() {
            for child in self.child_ids(&parent) {
                out.push((parent.clone(), child.clone()));
            }
        }
        out
    }

    /// Depth of a span below the entry (entry is depth 0).
    pub fn depth(&self, span_id: &str) -> Option<usize> {
        let mut depth = 0;
        let mut current = self.nodes.get(span_id)?;
        while let Some(parent_id) = &current.parent_span_id {
            current = self.nodes.get(parent_id)?;
            depth += 1;
        }
        Some(depth)
    }
}

/// A child span's metadata as returned by the trace tool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChildRecord {
    pub timestamp_ms: i64,
    pub span_id: String,
    pub service: String,
    pub operation: String,
    pub duration_ms: u64,
    pub status: String,
}

impl ChildRecord {
    fn from_span(span: &Span) -> Self {
        ChildRecord {
            timestamp_ms: span.timestamp_ms,
            span_id: span.span_id.clone(),
            service: span.service.clone(),
            operation: span.operation.clone(),
            duration_ms: span.duration_ms,
            status: span.status.clone(),
        }
    }
}

/// A request whose entry latency strictly exceeds 100x the normal average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEpisode {
    pub trace_id: String,
    pub entry_latency_ms: u64,
    pub normal_avg_ms: f64,
    pub ratio: f64,
}

/// Builds the trace graph for `trace_id` from a span collection.
///
/// Spans of other traces are ignored. The spans must form a connected tree
/// with exactly one parentless span.
pub fn build_trace_graph(spans: &[Span], trace_id: &str) -> Result<TraceGraph, TraceError> {
    let mut nodes: HashMap<String, Span> = HashMap::new();
    for span in spans.iter().filter(|s| s.trace_id == trace_id) {
        if nodes.insert(span.span_id.clone(), span.clone()).is_some() {
            return Err(TraceError::DuplicateSpan(span.span_id.clone()));
        }
    }
    if nodes.is_empty() {
        return Err(TraceError::EmptyTrace(trace_id.to_string()));
    }

    let mut entry: Option<String> = None;
    let mut children: HashMap<String, Vec<String>> = HashMap::new();
    for span in nodes.values() {
        match &span.parent_span_id {
            None => match entry {
                None => entry = Some(span.span_id.clone()),
                Some(ref existing) => {
                    let mut pair = [existing.clone(), span.span_id.clone()];
                    pair.sort();
                    let [a, b] = pair;
                    return Err(TraceError::MultipleRoots(a, b));
                }
            },
            Some(parent) => {
                if !nodes.contains_key(parent) {
                    return Err(TraceError::OrphanSpan(span.span_id.clone()));
                }
                children
                    .entry(parent.clone())
                    .or_default()
                    .push(span.span_id.clone());
            }
        }
    }
    let entry_span_id = entry.ok_or(TraceError::CycleDetected)?;

    for list in children.values_mut() {
        list.sort_by(|a, b| {
            let (ta, tb) = (nodes[a].timestamp_ms, nodes[b].timestamp_ms);
            ta.cmp(&tb).then_with(|| a.cmp(b))
        });
    }

    let graph = TraceGraph {
        trace_id: trace_id.to_string(),
        nodes,
        children,
        entry_span_id,
    };

    // Every node must be reachable from the entry; a shortfall means the
    // remaining spans form a parent cycle detached from the root.
    let reachable: HashSet<String> = graph.preorder().into_iter().collect();
    if reachable.len() != graph.nodes.len() {
        return Err(TraceError::CycleDetected);
    }
    Ok(graph)
}

/// Child records of span `s`, in the graph's child order.
pub fn children(graph: &TraceGraph, span_id: &str) -> Result<Vec<ChildRecord>, TraceError> {
    if !graph.contains(span_id) {
        return Err(TraceError::UnknownSpan(span_id.to_string()));
    }
    Ok(graph
        .child_ids(span_id)
        .iter()
        .map(|id| ChildRecord::from_span(&graph.nodes[id]))
        .collect())
}

/// Traces whose entry duration strictly exceeds `100 * normal_avg_ms`.
pub fn detect_failed_requests(
    graphs: &[TraceGraph],
    normal_avg_ms: f64,
) -> Result<Vec<FailureEpisode>, TraceError> {
    if normal_avg_ms <= 0.0 {
        return Err(TraceError::NonPositiveBaseline(normal_avg_ms));
    }
    let mut episodes = Vec::new();
    for graph in graphs {
        let entry_latency = graph.entry_span().duration_ms;
        if (entry_latency as f64) > 100.0 * normal_avg_ms {
            episodes.push(FailureEpisode {
                trace_id: graph.trace_id.clone(),
                entry_latency_ms: entry_latency,
                normal_avg_ms,
                ratio: entry_latency as f64 / normal_avg_ms,
            });
        }
    }
    Ok(episodes)
}

/// The child explaining the largest share of `span_id`'s duration, with its
/// share clamped to [0, 1]. `None` for leaves and zero-duration spans.
/// Ties are broken by child order.
pub fn dominant_child_share(
    graph: &TraceGraph,
    span_id: &str,
) -> Result<Option<(String, f64)>, TraceError> {
    let span = graph
        .span(span_id)
        .ok_or_else(|| TraceError::UnknownSpan(span_id.to_string()))?;
    let child_ids = graph.child_ids(span_id);
    if child_ids.is_empty() || span.duration_ms == 0 {
        return Ok(None);
    }
    let mut best: Option<(&str, u64)> = None;
    for id in child_ids {
        let d = graph.nodes[id].duration_ms;
        if best.map(|(_, bd)| d > bd).unwrap_or(true) {
            best = Some((id, d));
        }
    }
    let (id, d) = best.expect("non-empty children");
    let share = (d as f64 / span.duration_ms as f64).min(1.0);
    Ok(Some((id.to_string(), share)))
}

/// Mean entry duration over traces not listed as failures. Returns `None`
/// when no usable normal trace exists.
pub fn normal_entry_latency_mean(
    spans: &[Span],
    failure_trace_ids: &HashSet<String>,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut seen: HashSet<&str> = HashSet::new();
    for span in spans {
        if span.parent_span_id.is_none()
            && !failure_trace_ids.contains(&span.trace_id)
            && seen.insert(span.trace_id.as_str())
        {
            sum += span.duration_ms as f64;
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace has multiple parentless spans: {0}, {1}")]
    MultipleRoots(String, String),
    #[error("span {0} references a parent that is not part of the trace")]
    OrphanSpan(String),
    #[error("trace contains a span cycle")]
    CycleDetected,
    #[error("duplicate span id {0} within one trace")]
    DuplicateSpan(String),
    #[error("no spans found for trace {0}")]
    EmptyTrace(String),
    #[error("unknown span id {0}")]
    UnknownSpan(String),
    #[error("normal-latency baseline must be positive, got {0}")]
    NonPositiveBaseline(f64),
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn span(trace: &str, id: &str, parent: Option<&str>, t: i64, d: u64) -> Span {
        Span {
            trace_id: trace.into(),
            span_id: id.into(),
            parent_span_id: parent.map(String::from),
            timestamp_ms: t,
            service: format!("svc-{id}"),
            pod: format!("pod-{id}"),
            operation: format!("op-{id}"),
            duration_ms: d,
            status: "0".into(),
        }
    }

    /// A -> {B, C}, B -> {D}; B starts before C.
    fn fixture() -> Vec<Span> {
        vec![
            span("t1", "A", None, 100, 1000),
            span("t1", "B", Some("A"), 110, 400),
            span("t1", "C", Some("A"), 150, 300),
            span("t1", "D", Some("B"), 120, 200),
        ]
    }

    #[test]
    fn build_four_node_fixture() {
        let g = build_trace_graph(&fixture(), "t1").unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.entry_span_id(), "A");
        assert_eq!(g.child_ids("A"), &["B".to_string(), "C".to_string()]);
        assert_eq!(g.child_ids("B"), &["D".to_string()]);
        assert!(g.child_ids("D").is_empty());
    }

    #[test]
    fn single_span_trace() {
        let g = build_trace_graph(&[span("t1", "A", None, 0, 10)], "t1").unwrap();
        assert_eq!(g.entry_span_id(), "A");
        assert!(g.child_ids("A").is_empty());
    }

    #[test]
    fn two_parentless_spans_rejected() {
        let spans = vec![span("t1", "A", None, 0, 10), span("t1", "B", None, 1, 10)];
        assert!(matches!(
            build_trace_graph(&spans, "t1").unwrap_err(),
            TraceError::MultipleRoots(_, _)
        ));
    }

    #[test]
    fn orphan_parent_reference_rejected() {
        let spans = vec![
            span("t1", "A", None, 0, 10),
            span("t1", "B", Some("ghost"), 1, 5),
        ];
        assert!(matches!(
            build_trace_graph(&spans, "t1").unwrap_err(),
            TraceError::OrphanSpan(id) if id == "B"
        ));
    }

    #[test]
    fn cycle_rejected() {
        let spans = vec![
            span("t1", "A", Some("B"), 0, 10),
            span("t1", "B", Some("A"), 1, 10),
        ];
        assert!(matches!(
            build_trace_graph(&spans, "t1").unwrap_err(),
            TraceError::CycleDetected
        ));
    }

    #[test]
    fn detached_cycle_rejected() {
        let spans = vec![
            span("t1", "A", None, 0, 10),
            span("t1", "B", Some("C"), 1, 10),
            span("t1", "C", Some("B"), 2, 10),
        ];
        assert!(matches!(
            build_trace_graph(&spans, "t1").unwrap_err(),
            TraceError::CycleDetected
        ));
    }

    #[test]
    fn children_returns_records_in_order() {
        let g = build_trace_graph(&fixture(), "t1").unwrap();
        let recs = children(&g, "A").unwrap();
        assert_eq!(recs.len(), 2);
        // Each record field-equals the child span.
        let b = g.span("B").unwrap();
        assert_eq!(recs[0].span_id, b.span_id);
        assert_eq!(recs[0].timestamp_ms, b.timestamp_ms);
        assert_eq!(recs[0].service, b.service);
        assert_eq!(recs[0].operation, b.operation);
        assert_eq!(recs[0].duration_ms, b.duration_ms);
        assert_eq!(recs[0].status, b.status);
        assert_eq!(recs[1].span_id, "C");
        assert_eq!(recs[1].duration_ms, 300);
    }

    #[test]
    fn duplicate_span_id_rejected() {
        let spans = vec![span("t1", "A", None, 0, 10), span("t1", "A", None, 1, 20)];
        assert!(matches!(
            build_trace_graph(&spans, "t1").unwrap_err(),
            TraceError::DuplicateSpan(id) if id == "A"
        ));
    }

    #[test]
    fn children_of_leaf_is_empty() {
        let g = build_trace_graph(&fixture(), "t1").unwrap();
        assert!(children(&g, "D").unwrap().is_empty());
    }

    #[test]
    fn children_unknown_span_errors() {
        let g = build_trace_graph(&fixture(), "t1").unwrap();
        assert!(matches!(
            children(&g, "Z").unwrap_err(),
            TraceError::UnknownSpan(_)
        ));
    }

    fn graph_with_entry_duration(trace: &str, d: u64) -> TraceGraph {
        build_trace_graph(&[span(trace, "root", None, 0, d)], trace).unwrap()
    }

    #[test]
    fn failed_request_detection_is_strict() {
        let graphs = vec![
            graph_with_entry_duration("high", 6000),
            graph_with_entry_duration("low", 4000),
            graph_with_entry_duration("boundary", 5000),
        ];
        let eps = detect_failed_requests(&graphs, 50.0).unwrap();
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].trace_id, "high");
        assert!((eps[0].ratio - 120.0).abs() < 1e-12);
    }

    #[test]
    fn failed_request_detection_rejects_bad_baseline() {
        assert!(matches!(
            detect_failed_requests(&[], 0.0).unwrap_err(),
            TraceError::NonPositiveBaseline(_)
        ));
    }

    #[test]
    fn raising_baseline_never_adds_episodes() {
        let graphs: Vec<TraceGraph> = (1..=20)
            .map(|i| graph_with_entry_duration(&format!("t{i}"), i * 500))
            .collect();
        let mut last = usize::MAX;
        for mu in [1.0, 2.0, 5.0, 20.0, 100.0] {
            let n = detect_failed_requests(&graphs, mu).unwrap().len();
            assert!(n <= last);
            last = n;
        }
    }

    #[test]
    fn dominant_child_matches_case_study_share() {
        let spans = vec![
            span("t1", "entry", None, 0, 48_276),
            span("t1", "hot", Some("entry"), 1, 48_213),
            span("t1", "cold", Some("entry"), 2, 6),
        ];
        let g = build_trace_graph(&spans, "t1").unwrap();
        let (id, share) = dominant_child_share(&g, "entry").unwrap().unwrap();
        assert_eq!(id, "hot");
        assert!((share - 0.9987).abs() < 1e-4);
    }

    #[test]
    fn dominant_child_absent_for_leaf() {
        let g = graph_with_entry_duration("t1", 100);
        assert!(dominant_child_share(&g, "root").unwrap().is_none());
    }

    #[test]
    fn dominant_child_picks_max_share() {
        let spans = vec![
            span("t1", "p", None, 0, 100),
            span("t1", "a", Some("p"), 1, 30),
            span("t1", "b", Some("p"), 2, 10),
        ];
        let g = build_trace_graph(&spans, "t1").unwrap();
        let (id, share) = dominant_child_share(&g, "p").unwrap().unwrap();
        assert_eq!(id, "a");
        assert!((share - 0.30).abs() < 1e-12);
    }

    #[test]
    fn tree_property_edges_and_reachability() {
        let g = build_trace_graph(&fixture(), "t1").unwrap();
        assert_eq!(g.edges().len(), g.len() - 1);
        assert_eq!(g.preorder().len(), g.len());
        assert_eq!(g.preorder(), vec!["A", "B", "D", "C"]);
    }

    #[test]
    fn normal_latency_mean_skips_failures() {
        let spans = vec![
            span("n1", "a", None, 0, 40),
            span("n2", "b", None, 0, 60),
            span("f1", "c", None, 0, 90_000),
        ];
        let failures: HashSet<String> = ["f1".to_string()].into_iter().collect();
        let mu = normal_entry_latency_mean(&spans, &failures).unwrap();
        assert!((mu - 50.0).abs() < 1e-12);
    }
}
