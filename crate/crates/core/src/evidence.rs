//! Global evidence graph: a trace-isomorphic attributed tree mapping every
//! span to its self-state evidence.
//!
//! The node and edge sets mirror the source trace graph exactly; child order
//! is inherited from it so traversals are deterministic. Serialization is
//! canonical (nodes sorted by span id, edges sorted lexicographically) and
//! round-trips losslessly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reasoner::SelfEvidence;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalEvidenceGraph {
    entry_span_id: String,
    children: BTreeMap<String, Vec<String>>,
    evidence: BTreeMap<String, SelfEvidence>,
}

impl GlobalEvidenceGraph {
    /// Builds and validates the graph: `(V, E)` must form a rooted tree and
    /// the evidence map must cover every node.
    pub fn new(
        entry_span_id: String,
        children: BTreeMap<String, Vec<String>>,
        evidence: BTreeMap<String, SelfEvidence>,
    ) -> Result<Self, EvidenceGraphError> {
        if !evidence.contains_key(&entry_span_id) {
            return Err(EvidenceGraphError::MissingEvidence(entry_span_id));
        }
        for (parent, kids) in &children {
            if !evidence.contains_key(parent) {
                return Err(EvidenceGraphError::MissingEvidence(parent.clone()));
            }
            for child in kids {
                if !evidence.contains_key(child) {
                    return Err(EvidenceGraphError::MissingEvidence(child.clone()));
                }
            }
        }
        let graph = GlobalEvidenceGraph {
            entry_span_id,
            children,
            evidence,
        };
        let edge_count: usize = graph.children.values().map(Vec::len).sum();
        if edge_count != graph.evidence.len() - 1 {
            return Err(EvidenceGraphError::NotATree);
        }
        if graph.preorder().len() != graph.evidence.len() {
            return Err(EvidenceGraphError::NotATree);
        }
        Ok(graph)
    }

    pub fn entry_span_id(&self) -> &str {
        &self.entry_span_id
    }

    pub fn len(&self) -> usize {
        self.evidence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evidence.is_empty()
    }

    pub fn evidence_of(&self, span_id: &str) -> Option<&SelfEvidence> {
        self.evidence.get(span_id)
    }

    pub fn child_ids(&self, span_id: &str) -> &[String] {
        self.children.get(span_id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Directed (parent, child) pairs, sorted lexicographically.
    pub fn sorted_edges(&self) -> Vec<(String, String)> {
        let mut edges: Vec<(String, String)> = self
            .children
            .iter()
            .flat_map(|(p, kids)| kids.iter().map(move |c| (p.clone(), c.clone())))
            .collect();
        edges.sort();
        edges
    }

    /// Span ids in pre-order with inherited child order.
    pub fn preorder(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.evidence.len());
        let mut stack = vec![self.entry_span_id.clone()];
        while let Some(id) = stack.pop() {
            for child in self.child_ids(&id).iter().rev() {
                stack.push(child.clone());
            }
            out.push(id);
        }
        out
    }

    /// All abnormal nodes in deterministic pre-order.
    pub fn abnormal_nodes(&self) -> Vec<(String, &SelfEvidence)> {
        self.preorder()
            .into_iter()
            .filter(|id| self.evidence[id].is_abnormal)
            .map(|id| {
                let e = &self.evidence[&id];
                (id, e)
            })
            .collect()
    }

    /// Whether the node has no abnormal strict descendant, i.e. it sits on
    /// the frontier of the abnormal region.
    pub fn is_abnormal_frontier(&self, span_id: &str) -> bool {
        let mut stack: Vec<&str> = self.child_ids(span_id).iter().map(String::as_str).collect();
        while let Some(id) = stack.pop() {
            if self.evidence[id].is_abnormal {
                return false;
            }
            stack.extend(self.child_ids(id).iter().map(String::as_str));
        }
        true
    }

    /// Canonical JSON: nodes sorted by span id (each carrying its ordered
    /// child list), edges sorted lexicographically.
    pub fn to_canonical_json(&self) -> String {
        let nodes: Vec<NodeRecord> = self
            .evidence
            .values()
            .map(|e| NodeRecord {
                span_id: e.span_id.clone(),
                children: self.child_ids(&e.span_id).to_vec(),
                service_name: e.service.clone(),
                is_abnormal: e.is_abnormal,
                key_symptoms: e.key_symptoms.clone(),
                hypothesis: e.hypothesis.clone(),
            })
            .collect();
        let file = GraphFile {
            nodes,
            edges: self.sorted_edges(),
        };
        serde_json::to_string(&file).expect("graph serializes")
    }

    pub fn from_canonical_json(text: &str) -> Result<Self, EvidenceGraphError> {
        let file: GraphFile =
            serde_json::from_str(text).map_err(|e| EvidenceGraphError::Parse(e.to_string()))?;
        let mut children = BTreeMap::new();
        let mut evidence = BTreeMap::new();
        let mut is_child: BTreeMap<&str, bool> = BTreeMap::new();
        for node in &file.nodes {
            is_child.entry(&node.span_id).or_insert(false);
            for c in &node.children {
                is_child.insert(c, true);
            }
        }
        let mut roots = is_child.iter().filter(|(_, &c)| !c).map(|(id, _)| *id);
        let entry = roots
            .next()
            .ok_or_else(|| EvidenceGraphError::Parse("no root node".into()))?
            .to_string();
        if roots.next().is_some() {
            return Err(EvidenceGraphError::Parse("multiple root nodes".into()));
        }
        for node in file.nodes {
            if !node.children.is_empty() {
                children.insert(node.span_id.clone(), node.children.clone());
            }
            evidence.insert(
                node.span_id.clone(),
                SelfEvidence {
                    span_id: node.span_id,
                    service: node.service_name,
                    is_abnormal: node.is_abnormal,
                    key_symptoms: node.key_symptoms,
                    hypothesis: node.hypothesis,
                },
            );
        }
        GlobalEvidenceGraph::new(entry, children, evidence)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    nodes: Vec<NodeRecord>,
    edges: Vec<(String, String)>,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    span_id: String,
    children: Vec<String>,
    service_name: String,
    is_abnormal: bool,
    key_symptoms: String,
    hypothesis: String,
}

#[derive(Debug, Error)]
pub enum EvidenceGraphError {
    #[error("no evidence recorded for span {0}")]
    MissingEvidence(String),
    #[error("evidence graph nodes and edges do not form a rooted tree")]
    NotATree,
    #[error("malformed evidence graph json: {0}")]
    Parse(String),
}
