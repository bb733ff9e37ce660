//! Diagnosis synthesis: fuses the root-level report with the global evidence
//! graph into a ranked list of root-cause candidates across pod, service and
//! node levels.
//!
//! The deterministic scorer is the default path; an LLM-backed ranker is
//! opt-in and falls back to the deterministic result whenever its reply
//! cannot be used.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::GlobalEvidenceGraph;
use crate::model::{resolve_levels, ComponentRef, Level, ModelError, TopologyManifest};
use crate::orchestrator::RootReport;
use crate::reasoner::{ConsolidatedEvidence, LlmClient, SELF_REFERENCE};
use crate::trace::TraceGraph;

/// Weights of the three scoring signals: root-report match, abnormal-node
/// support, and the frontier (deepest-evidence) bonus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub root_match: f64,
    pub support: f64,
    pub frontier_bonus: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            root_match: 0.5,
            support: 0.35,
            frontier_bonus: 0.15,
        }
    }
}

/// One ranked root-cause candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    #[serde(flatten)]
    pub component: ComponentRef,
    pub score: f64,
    pub rationale: String,
    pub supporting_spans: Vec<String>,
}

/// The final ranked candidate list: scores non-increasing, components
/// unique, ties broken by level (POD < SERVICE < NODE) then name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDiagnosis {
    pub candidates: Vec<RankedCandidate>,
}

impl RankedDiagnosis {
    pub fn rank_of(&self, component: &ComponentRef) -> Option<usize> {
        self.candidates
            .iter()
            .position(|c| &c.component == component)
            .map(|i| i + 1)
    }
}

/// Candidate set: the levels of every abnormal node's pod; when nothing is
/// abnormal, the levels of every pod appearing in the trace.
pub fn expand_candidates(
    evidence: &GlobalEvidenceGraph,
    graph: &TraceGraph,
    manifest: &TopologyManifest,
) -> Result<BTreeSet<ComponentRef>, ModelError> {
    let abnormal = evidence.abnormal_nodes();
    let pods: BTreeSet<String> = if abnormal.is_empty() {
        graph
            .preorder()
            .iter()
            .filter_map(|id| graph.span(id))
            .map(|s| s.pod.clone())
            .collect()
    } else {
        abnormal
            .iter()
            .filter_map(|(id, _)| graph.span(id))
            .map(|s| s.pod.clone())
            .collect()
    };
    let mut out = BTreeSet::new();
    for pod in pods {
        out.extend(resolve_levels(&ComponentRef::pod(pod), manifest)?);
    }
    Ok(out)
}

/// The component set a candidate identifies with: a pod also counts as its
/// service and node, while service/node candidates stand for themselves.
fn levels_of(candidate: &ComponentRef, manifest: &TopologyManifest) -> BTreeSet<ComponentRef> {
    match candidate.level {
        Level::Pod => resolve_levels(candidate, manifest)
            .unwrap_or_else(|_| [candidate.clone()].into_iter().collect()),
        _ => [candidate.clone()].into_iter().collect(),
    }
}

/// Components the root report's `local_root_cause` can refer to, lifted
/// across levels. `"self"` means the entry span's own pod.
fn root_referent(
    root: &ConsolidatedEvidence,
    graph: &TraceGraph,
    manifest: &TopologyManifest,
) -> BTreeSet<ComponentRef> {
    let name = if root.local_root_cause == SELF_REFERENCE {
        graph.entry_span().pod.clone()
    } else {
        root.local_root_cause.clone()
    };
    if manifest.contains_pod(&name) {
        if let Ok(set) = resolve_levels(&ComponentRef::pod(name.clone()), manifest) {
            return set;
        }
    }
    if manifest.services().contains(name.as_str()) {
        return [ComponentRef::service(name)].into_iter().collect();
    }
    if manifest.nodes().contains(name.as_str()) {
        return [ComponentRef::node(name)].into_iter().collect();
    }
    // Unknown name: allow exact-name matches at any level.
    [
        ComponentRef::pod(name.clone()),
        ComponentRef::service(name.clone()),
        ComponentRef::node(name),
    ]
    .into_iter()
    .collect()
}

/// Scores one candidate against the root report and the evidence graph.
///
/// score = w1 * [matches root report at any level] * root confidence
///       + w2 * (fraction of abnormal nodes resolving to the candidate)
///       + w3 * [some supporting node sits on the abnormal frontier]
pub fn score_candidate(
    candidate: &ComponentRef,
    root: &ConsolidatedEvidence,
    evidence: &GlobalEvidenceGraph,
    graph: &TraceGraph,
    manifest: &TopologyManifest,
    weights: &ScoreWeights,
) -> (f64, String, Vec<String>) {
    let abnormal = evidence.abnormal_nodes();
    let candidate_levels = levels_of(candidate, manifest);

    // An abnormal span supports the candidate iff its pod resolves to it
    // (the candidate is the pod itself, its service, or its node).
    let mut supporting: Vec<String> = Vec::new();
    let mut frontier_support = false;
    for (span_id, _) in &abnormal {
        let Some(span) = graph.span(span_id) else {
            continue;
        };
        let pod_levels = levels_of(&ComponentRef::pod(span.pod.clone()), manifest);
        if pod_levels.contains(candidate) {
            frontier_support = frontier_support || evidence.is_abnormal_frontier(span_id);
            supporting.push(span_id.clone());
        }
    }
    let support = if abnormal.is_empty() {
        0.0
    } else {
        supporting.len() as f64 / abnormal.len() as f64
    };

    let referent = root_referent(root, graph, manifest);
    let root_match = referent.intersection(&candidate_levels).next().is_some();

    let score = (weights.root_match * if root_match { root.confidence } else { 0.0 }
        + weights.support * support
        + weights.frontier_bonus * if frontier_support { 1.0 } else { 0.0 })
    .clamp(0.0, 1.0);

    let mut rationale = String::new();
    if root_match {
        let _ = write!(
            rationale,
            "matches root-level hypothesis {:?} (confidence {:.2}): {}",
            root.local_root_cause, root.confidence, root.reason
        );
    }
    if !supporting.is_empty() {
        if !rationale.is_empty() {
            rationale.push_str("; ");
        }
        let _ = write!(
            rationale,
            "supported by {} of {} abnormal spans [{}]",
            supporting.len(),
            abnormal.len(),
            supporting.join(", ")
        );
        if frontier_support {
            rationale.push_str("; evidence reaches the deepest abnormal span");
        }
    }
    if rationale.is_empty() {
        rationale.push_str("no direct evidence; listed by trace membership");
    }
    (score, rationale, supporting)
}

/// Deterministic synthesis: expand, score, and rank candidates.
pub fn synthesize(
    root: &RootReport,
    evidence: &GlobalEvidenceGraph,
    graph: &TraceGraph,
    manifest: &TopologyManifest,
    top_n: usize,
    weights: &ScoreWeights,
) -> Result<RankedDiagnosis, SynthesizerError> {
    if top_n == 0 {
        return Err(SynthesizerError::InvalidTopN);
    }
    let candidates = expand_candidates(evidence, graph, manifest)?;
    let mut scored: Vec<RankedCandidate> = candidates
        .into_iter()
        .map(|component| {
            let (score, rationale, supporting_spans) = score_candidate(
                &component,
                &root.evidence,
                evidence,
                graph,
                manifest,
                weights,
            );
            RankedCandidate {
                component,
                score,
                rationale,
                supporting_spans,
            }
        })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.component.cmp(&b.component))
    });
    scored.truncate(top_n);
    Ok(RankedDiagnosis { candidates: scored })
}

/// Cap on evidence-graph nodes embedded in the ranking prompt.
const MAX_PROMPT_NODES: usize = 50;

/// Renders the ranking prompt for the LLM synthesizer: root report, evidence
/// graph nodes (abnormal first, capped), and the candidate set.
pub fn render_synthesis_prompt(
    root: &RootReport,
    evidence: &GlobalEvidenceGraph,
    candidates: &BTreeSet<ComponentRef>,
) -> String {
    let mut out = String::new();
    out.push_str("System:\nYou rank root-cause candidates for a microservice failure.\n\nUser:\n");
    out.push_str("Root-level diagnosis report:\n  ");
    out.push_str(&serde_json::to_string(&root.evidence).expect("report serializes"));
    out.push_str("\nEvidence graph nodes (abnormal first):\n");
    let abnormal: Vec<String> = evidence
        .abnormal_nodes()
        .into_iter()
        .map(|(id, _)| id)
        .collect();
    let ordered: Vec<String> = abnormal
        .iter()
        .cloned()
        .chain(
            evidence
                .preorder()
                .into_iter()
                .filter(|id| !abnormal.contains(id)),
        )
        .collect();
    for id in ordered.iter().take(MAX_PROMPT_NODES) {
        let e = evidence.evidence_of(id).expect("node attributed");
        let _ = writeln!(out, "  {}", serde_json::to_string(e).expect("serializes"));
    }
    if ordered.len() > MAX_PROMPT_NODES {
        out.push_str("  ...\n");
    }
    out.push_str("Candidates:\n");
    for c in candidates {
        let _ = writeln!(out, "  - {} {}", c.level, c.name);
    }
    out.push_str(
        "Task: Rank the candidates from most to least likely root cause.\n\
Output format (JSON only): [{\"level\": \"POD|SERVICE|NODE\", \"name\": \"...\", \
\"score\": 0.0-1.0, \"rationale\": \"...\"}]\n",
    );
    out
}

fn extract_json_array(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let start = bytes.iter().position(|&b| b == b'[')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'[' => depth += 1,
            b']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

#[derive(Deserialize)]
struct RankedEntry {
    level: String,
    name: String,
    score: Option<f64>,
    rationale: Option<String>,
}

/// Parses a model ranking, dropping entries that do not name a known
/// candidate. Returns `None` when nothing usable remains.
fn parse_ranking(
    text: &str,
    candidates: &BTreeSet<ComponentRef>,
) -> Option<Vec<(ComponentRef, Option<f64>, String)>> {
    let array = extract_json_array(text)?;
    let entries: Vec<RankedEntry> = serde_json::from_str(array).ok()?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for e in entries {
        let Ok(level) = e.level.parse::<Level>() else {
            continue;
        };
        let component = ComponentRef {
            level,
            name: e.name,
        };
        if !candidates.contains(&component) || !seen.insert(component.clone()) {
            continue;
        }
        out.push((
            component,
            e.score,
            e.rationale.unwrap_or_else(|| "ranked by model".to_string()),
        ));
    }
    (!out.is_empty()).then_some(out)
}

/// LLM-backed synthesis. The model's ordering is adopted after sanitization;
/// any failure (transport, schema, empty ranking) falls back to the
/// deterministic path and sets the fallback flag. Never aborts.
pub fn llm_synthesize(
    root: &RootReport,
    evidence: &GlobalEvidenceGraph,
    graph: &TraceGraph,
    manifest: &TopologyManifest,
    top_n: usize,
    weights: &ScoreWeights,
    client: &LlmClient,
) -> Result<(RankedDiagnosis, bool), SynthesizerError> {
    if top_n == 0 {
        return Err(SynthesizerError::InvalidTopN);
    }
    let candidates = expand_candidates(evidence, graph, manifest)?;
    let prompt = render_synthesis_prompt(root, evidence, &candidates);
    let ranking = match client.complete(&prompt) {
        Ok(reply) => parse_ranking(&reply, &candidates),
        Err(_) => None,
    };
    let Some(ranking) = ranking else {
        let fallback = synthesize(root, evidence, graph, manifest, top_n, weights)?;
        return Ok((fallback, true));
    };

    // Keep the model's order; make scores honor the non-increasing invariant
    // via a running minimum, synthesizing evenly spaced scores when absent.
    let n = ranking.len();
    let mut floor = 1.0_f64;
    let mut out = Vec::with_capacity(n.min(top_n));
    for (i, (component, score, rationale)) in ranking.into_iter().enumerate() {
        if i == top_n {
            break;
        }
        let raw = score
            .map(|s| s.clamp(0.0, 1.0))
            .unwrap_or_else(|| 1.0 - i as f64 / n.max(1) as f64);
        let score = raw.min(floor);
        floor = score;
        let (_, _, supporting_spans) = score_candidate(
            &component,
            &root.evidence,
            evidence,
            graph,
            manifest,
            weights,
        );
        out.push(RankedCandidate {
            component,
            score,
            rationale,
            supporting_spans,
        });
    }
    Ok((RankedDiagnosis { candidates: out }, false))
}

/// Flags recording degraded paths taken while producing a report.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackFlags {
    /// The LLM synthesizer reply was unusable and the deterministic ranking
    /// was emitted instead.
    pub llm_synthesizer_fallback: bool,
    /// At least one agent failed and contributed placeholder evidence.
    pub agent_failures: bool,
}

/// The on-disk diagnosis report (`report.json`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub failure_id: Option<String>,
    pub trace_id: String,
    pub root_report: ConsolidatedEvidence,
    pub ranked: Vec<RankedCandidate>,
    pub evidence_graph: serde_json::Value,
    pub config_echo: serde_json::Value,
    pub fallback_flags: FallbackFlags,
}

impl DiagnosisReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Error)]
pub enum SynthesizerError {
    #[error("top_n must be at least 1")]
    InvalidTopN,
    #[error(transparent)]
    Model(#[from] ModelError),
}
