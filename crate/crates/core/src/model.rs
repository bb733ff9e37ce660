//! Core telemetry domain types shared by every module, plus component-identity
//! resolution across the pod/service/node abstraction levels.
//!
//! All types here are immutable after construction and safe to share across
//! concurrent agents. Component identity is case-sensitive exact string match.

use std::collections::BTreeSet;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One RPC operation record within a distributed trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub trace_id: String,
    pub span_id: String,
    /// Absent for the entry span of a trace.
    pub parent_span_id: Option<String>,
    /// Epoch milliseconds.
    pub timestamp_ms: i64,
    /// Service the span belongs to.
    pub service: String,
    /// Pod instance identifier (dataset `cmdb_id`).
    pub pod: String,
    /// Operation name.
    pub operation: String,
    /// Duration in milliseconds, non-negative.
    pub duration_ms: u64,
    /// Status code as recorded by the instrumentation (free-form string).
    pub status: String,
}

impl Span {
    /// Whether the status code looks like a failure. Recognizes HTTP 4xx/5xx
    /// prefixes and common textual failure markers; everything else (including
    /// "0", "200", "OK" and empty strings) counts as success.
    pub fn is_error_status(&self) -> bool {
        status_is_error(&self.status)
    }
}

/// Status-code failure test shared by span-level heuristics.
pub fn status_is_error(status: &str) -> bool {
    let s = status.trim();
    if s.is_empty() {
        return false;
    }
    if s.starts_with('4') || s.starts_with('5') {
        // Numeric HTTP-style code.
        if s.chars().all(|c| c.is_ascii_digit()) {
            return true;
        }
    }
    matches!(
        s.to_ascii_uppercase().as_str(),
        "ERROR" | "ERR" | "FAIL" | "FAILED" | "EXCEPTION" | "TIMEOUT"
    )
}

/// A single sample of one metric series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    /// Epoch milliseconds.
    pub timestamp_ms: i64,
    /// Component the series belongs to (pod, service or node identifier).
    pub component_id: String,
    pub metric_name: String,
    pub value: f64,
}

/// Log severity, ordered from least to most severe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Severity {
    Trace,
    Debug,
    Info,
    Warn,
    Error,
    Fatal,
}

impl Severity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Severity::Trace => "TRACE",
            Severity::Debug => "DEBUG",
            Severity::Info => "INFO",
            Severity::Warn => "WARN",
            Severity::Error => "ERROR",
            Severity::Fatal => "FATAL",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = UnknownSeverity;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TRACE" => Ok(Severity::Trace),
            "DEBUG" => Ok(Severity::Debug),
            "INFO" => Ok(Severity::Info),
            "WARN" | "WARNING" => Ok(Severity::Warn),
            "ERROR" => Ok(Severity::Error),
            "FATAL" | "CRITICAL" => Ok(Severity::Fatal),
            other => Err(UnknownSeverity(other.to_string())),
        }
    }
}

/// Raised by [`Severity::from_str`]; ingestion maps these to `INFO` with a
/// counted warning instead of aborting.
#[derive(Debug, Error)]
#[error("unknown severity {0:?}")]
pub struct UnknownSeverity(pub String);

/// One log line attributed to a component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Epoch milliseconds.
    pub timestamp_ms: i64,
    pub component_id: String,
    pub severity: Severity,
    pub message: String,
}

/// Abstraction level of a root-cause candidate. The ordering (POD < SERVICE
/// < NODE) is the tie-break order used when ranking candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Level {
    Pod,
    Service,
    Node,
}

impl Level {
    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Pod => "POD",
            Level::Service => "SERVICE",
            Level::Node => "NODE",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "POD" => Ok(Level::Pod),
            "SERVICE" => Ok(Level::Service),
            "NODE" => Ok(Level::Node),
            other => Err(ModelError::UnknownLevel(other.to_string())),
        }
    }
}

/// Identity of a root-cause candidate: a (level, name) pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ComponentRef {
    pub level: Level,
    pub name: String,
}

impl ComponentRef {
    pub fn pod(name: impl Into<String>) -> Self {
        ComponentRef {
            level: Level::Pod,
            name: name.into(),
        }
    }

    pub fn service(name: impl Into<String>) -> Self {
        ComponentRef {
            level: Level::Service,
            name: name.into(),
        }
    }

    pub fn node(name: impl Into<String>) -> Self {
        ComponentRef {
            level: Level::Node,
            name: name.into(),
        }
    }
}

impl fmt::Display for ComponentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.level, self.name)
    }
}

/// One pod record of the topology manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PodEntry {
    pub name: String,
    pub service: String,
    pub node: String,
}

/// Pod ↔ service ↔ node mapping used to broaden candidates across levels.
///
/// Every pod maps to exactly one service and one node; pod names are unique.
#[derive(Debug, Clone, Default)]
pub struct TopologyManifest {
    pods: Vec<PodEntry>,
    by_pod: HashMap<String, usize>,
}

impl TopologyManifest {
    pub fn new(pods: Vec<PodEntry>) -> Result<Self, ModelError> {
        let mut by_pod = HashMap::with_capacity(pods.len());
        for (idx, entry) in pods.iter().enumerate() {
            if entry.name.is_empty() {
                return Err(ModelError::EmptyPodName);
            }
            if by_pod.insert(entry.name.clone(), idx).is_some() {
                return Err(ModelError::DuplicatePod(entry.name.clone()));
            }
        }
        Ok(TopologyManifest { pods, by_pod })
    }

    pub fn pods(&self) -> &[PodEntry] {
        &self.pods
    }

    pub fn contains_pod(&self, pod_name: &str) -> bool {
        self.by_pod.contains_key(pod_name)
    }

    pub fn service_of(&self, pod_name: &str) -> Option<&str> {
        self.by_pod
            .get(pod_name)
            .map(|&i| self.pods[i].service.as_str())
    }

    pub fn node_of(&self, pod_name: &str) -> Option<&str> {
        self.by_pod
            .get(pod_name)
            .map(|&i| self.pods[i].node.as_str())
    }

    /// All pods of a service, in manifest order.
    pub fn pods_of_service<'a>(&'a self, service: &'a str) -> impl Iterator<Item = &'a str> {
        self.pods
            .iter()
            .filter(move |p| p.service == service)
            .map(|p| p.name.as_str())
    }

    /// Distinct service names, sorted.
    pub fn services(&self) -> BTreeSet<&str> {
        self.pods.iter().map(|p| p.service.as_str()).collect()
    }

    /// Distinct node names, sorted.
    pub fn nodes(&self) -> BTreeSet<&str> {
        self.pods.iter().map(|p| p.node.as_str()).collect()
    }
}

/// Expands a pod to the full set of abstraction levels it belongs to:
/// the pod itself, its service, and its node. Always three refs.
pub fn resolve_levels(
    pod: &ComponentRef,
    manifest: &TopologyManifest,
) -> Result<BTreeSet<ComponentRef>, ModelError> {
    if pod.level != Level::Pod {
        return Err(ModelError::NotAPod(pod.clone()));
    }
    let service = manifest
        .service_of(&pod.name)
        .ok_or_else(|| ModelError::UnknownPod(pod.name.clone()))?;
    let node = manifest
        .node_of(&pod.name)
        .ok_or_else(|| ModelError::UnknownPod(pod.name.clone()))?;
    let mut set = BTreeSet::new();
    set.insert(pod.clone());
    set.insert(ComponentRef::service(service));
    set.insert(ComponentRef::node(node));
    Ok(set)
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("pod {0:?} not present in topology manifest")]
    UnknownPod(String),
    #[error("expected a POD-level component, got {0}")]
    NotAPod(ComponentRef),
    #[error("duplicate pod {0:?} in topology manifest")]
    DuplicatePod(String),
    #[error("manifest contains a pod with an empty name")]
    EmptyPodName,
    #[error("unknown component level {0:?}")]
    UnknownLevel(String),
}
