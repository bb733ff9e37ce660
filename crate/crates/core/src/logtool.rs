//! Log tool: relevance-filtered log retrieval for a component and window.
//!
//! A log entry is relevant when its severity reaches the configured floor,
//! or its message matches a keyword or status-code pattern. Pod queries also
//! cover the pod's service replicas so service-wide faults show up in every
//! replica's evidence.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{ComponentRef, Level, LogEntry, Severity, TopologyManifest};

/// Immutable store of log entries indexed by component, sorted by timestamp.
#[derive(Debug, Clone, Default)]
pub struct LogStore {
    by_component: BTreeMap<String, Vec<LogEntry>>,
}

impl LogStore {
    pub fn from_entries(entries: Vec<LogEntry>) -> Self {
        let mut by_component: BTreeMap<String, Vec<LogEntry>> = BTreeMap::new();
        for e in entries {
            by_component
                .entry(e.component_id.clone())
                .or_default()
                .push(e);
        }
        for list in by_component.values_mut() {
            list.sort_by_key(|e| e.timestamp_ms);
        }
        LogStore { by_component }
    }

    pub fn entry_count(&self) -> usize {
        self.by_component.values().map(Vec::len).sum()
    }

    pub fn entries_of(&self, component_id: &str) -> &[LogEntry] {
        self.by_component
            .get(component_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Flattens the store back into entries, by component then timestamp.
    pub fn to_entries(&self) -> Vec<LogEntry> {
        self.by_component.values().flatten().cloned().collect()
    }
}

/// Parameters of the binary relevance function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceRule {
    pub min_severity: Severity,
    /// Case-insensitive substrings matched against the message.
    pub keyword_patterns: Vec<String>,
    /// Substrings matched against the message as-is.
    pub status_code_patterns: Vec<String>,
}

impl Default for RelevanceRule {
    fn default() -> Self {
        RelevanceRule {
            min_severity: Severity::Warn,
            keyword_patterns: [
                "error",
                "fail",
                "exception",
                "timeout",
                "refused",
                "unavailable",
                "panic",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            status_code_patterns: vec!["5".into(), " 500".into(), "503".into()],
        }
    }
}

/// Binary relevance: severity floor, keyword match, or status-code match.
pub fn relevance(entry: &LogEntry, rule: &RelevanceRule) -> bool {
    if entry.severity >= rule.min_severity {
        return true;
    }
    let lower = entry.message.to_lowercase();
    if rule
        .keyword_patterns
        .iter()
        .any(|k| !k.is_empty() && lower.contains(&k.to_lowercase()))
    {
        return true;
    }
    rule.status_code_patterns
        .iter()
        .any(|p| !p.is_empty() && entry.message.contains(p.as_str()))
}

/// Result of a log query; `truncated` is set when more than `max_entries`
/// entries matched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogQueryResult {
    pub entries: Vec<LogEntry>,
    pub truncated: bool,
}

/// Components covered by a query: the component itself, plus all replicas
/// of its service when it is a pod.
fn components_for(component: &ComponentRef, manifest: &TopologyManifest) -> Vec<String> {
    let mut components = vec![component.name.clone()];
    if component.level == Level::Pod {
        if let Some(service) = manifest.service_of(&component.name) {
            for replica in manifest.pods_of_service(service) {
                if replica != component.name {
                    components.push(replica.to_string());
                }
            }
        }
    }
    components.sort();
    components.dedup();
    components
}

/// Relevant entries of the component (and its service replicas for pods)
/// within `[t0 - delta, t0 + delta]`, sorted by timestamp and truncated to
/// `max_entries`.
pub fn query_logs(
    store: &LogStore,
    t0_ms: i64,
    delta_ms: i64,
    component: &ComponentRef,
    manifest: &TopologyManifest,
    rule: &RelevanceRule,
    max_entries: usize,
) -> LogQueryResult {
    let start = t0_ms - delta_ms;
    let end = t0_ms + delta_ms;
    let mut matched: Vec<LogEntry> = Vec::new();
    for component_id in components_for(component, manifest) {
        for entry in store.entries_of(&component_id) {
            if entry.timestamp_ms >= start && entry.timestamp_ms <= end && relevance(entry, rule) {
                matched.push(entry.clone());
            }
        }
    }
    // Components were visited in sorted order; a stable sort on timestamp
    // keeps the result deterministic across runs.
    matched.sort_by_key(|e| e.timestamp_ms);
    let truncated = matched.len() > max_entries;
    matched.truncate(max_entries);
    LogQueryResult {
        entries: matched,
        truncated,
    }
}
