//! Dataset ingestion: loads trace, metric, log, manifest and ground-truth
//! files from a dataset directory into immutable in-memory stores.
//!
//! The directory layout is fixed: `traces.csv`, `metrics.csv`, `logs.jsonl`,
//! `manifest.json`, and optionally `ground_truth.json`. Timestamps are epoch
//! milliseconds everywhere. Matching writers are provided so generated
//! fixtures round-trip through the same code path.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logtool::LogStore;
use crate::metric::MetricStore;
use crate::model::{
    ComponentRef, Level, LogEntry, MetricPoint, ModelError, PodEntry, Severity, Span,
    TopologyManifest,
};

pub const TRACES_FILE: &str = "traces.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const LOGS_FILE: &str = "logs.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

const TRACE_HEADER: [&str; 9] = [
    "timestamp",
    "trace_id",
    "span_id",
    "parent_span_id",
    "cmdb_id",
    "service_name",
    "operation_name",
    "duration_ms",
    "status_code",
];

const METRIC_HEADER: [&str; 4] = ["timestamp", "cmdb_id", "kpi_name", "value"];

/// One labeled failure of the dataset's ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureCase {
    pub failure_id: String,
    pub entry_trace_id: String,
    pub root_cause: ComponentRef,
    pub fault_kind: String,
}

/// Everything loaded from one dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub spans: Vec<Span>,
    pub metrics: MetricStore,
    pub logs: LogStore,
    pub manifest: TopologyManifest,
    pub ground_truth: Option<Vec<FailureCase>>,
    pub load_stats: LoadStats,
}

/// Counters for tolerated irregularities encountered while loading.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    /// Log lines with a severity outside the enum, mapped to INFO.
    pub unknown_severities: usize,
    /// Blank or '#'-prefixed JSONL lines skipped.
    pub skipped_log_lines: usize,
}

fn check_header(got: &csv::StringRecord, want: &[&str]) -> Result<(), IngestError> {
    let got_cols: Vec<&str> = got.iter().collect();
    if got_cols != want {
        let missing: Vec<String> = want
            .iter()
            .filter(|c| !got_cols.contains(*c))
            .map(|c| c.to_string())
            .collect();
        return Err(IngestError::MissingColumn {
            missing: if missing.is_empty() {
                format!("column order mismatch, got {got_cols:?}")
            } else {
                missing.join(", ")
            },
        });
    }
    Ok(())
}

fn field(record: &csv::StringRecord, idx: usize, line: u64) -> Result<&str, IngestError> {
    record.get(idx).ok_or(IngestError::ParseError {
        line,
        reason: format!("missing field {idx}"),
    })
}

fn parse_num<T: FromStr>(raw: &str, line: u64, what: &str) -> Result<T, IngestError> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| IngestError::ParseError {
            line,
            reason: format!("invalid {what}: {raw:?}"),
        })
}

/// Loads `traces.csv`. Row order is preserved.
pub fn load_traces(path: &Path) -> Result<Vec<Span>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    check_header(
        reader
            .headers()
            .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?,
        &TRACE_HEADER,
    )?;

    let mut spans = Vec::new();
    // Header is line 1.
    for (i, row) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = row.map_err(|e| IngestError::ParseError {
            line,
            reason: e.to_string(),
        })?;
        let duration_raw = field(&record, 7, line)?;
        let duration: i64 = parse_num(duration_raw, line, "duration_ms")?;
        if duration < 0 {
            return Err(IngestError::ParseError {
                line,
                reason: format!("negative duration_ms: {duration}"),
            });
        }
        let parent = field(&record, 3, line)?;
        spans.push(Span {
            timestamp_ms: parse_num(field(&record, 0, line)?, line, "timestamp")?,
            trace_id: field(&record, 1, line)?.to_string(),
            span_id: field(&record, 2, line)?.to_string(),
            parent_span_id: (!parent.is_empty()).then(|| parent.to_string()),
            pod: field(&record, 4, line)?.to_string(),
            service: field(&record, 5, line)?.to_string(),
            operation: field(&record, 6, line)?.to_string(),
            duration_ms: duration as u64,
            status: field(&record, 8, line)?.to_string(),
        });
    }
    Ok(spans)
}

/// Loads `metrics.csv` into a store with per-series sorted points.
pub fn load_metrics(path: &Path) -> Result<MetricStore, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    check_header(
        reader
            .headers()
            .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?,
        &METRIC_HEADER,
    )?;

    let mut points = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = row.map_err(|e| IngestError::ParseError {
            line,
            reason: e.to_string(),
        })?;
        let value: f64 = parse_num(field(&record, 3, line)?, line, "value")?;
        if !value.is_finite() {
            return Err(IngestError::ParseError {
                line,
                reason: format!("non-finite value: {value}"),
            });
        }
        points.push(MetricPoint {
            timestamp_ms: parse_num(field(&record, 0, line)?, line, "timestamp")?,
            component_id: field(&record, 1, line)?.to_string(),
            metric_name: field(&record, 2, line)?.to_string(),
            value,
        });
    }
    Ok(MetricStore::from_points(points))
}

#[derive(Debug, Deserialize, Serialize)]
struct LogRecord {
    timestamp: i64,
    cmdb_id: String,
    severity: String,
    message: String,
}

/// Loads `logs.jsonl`. Blank and '#'-prefixed lines are skipped and counted;
/// unknown severities are mapped to INFO and counted.
pub fn load_logs(path: &Path) -> Result<(LogStore, LoadStats), IngestError> {
    let file = fs::File::open(path)
        .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    let mut entries = Vec::new();
    let mut stats = LoadStats::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i as u64 + 1;
        let raw = line.map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            stats.skipped_log_lines += 1;
            continue;
        }
        let record: LogRecord =
            serde_json::from_str(trimmed).map_err(|e| IngestError::ParseError {
                line: line_no,
                reason: e.to_string(),
            })?;
        let severity = record.severity.parse::<Severity>().unwrap_or_else(|_| {
            stats.unknown_severities += 1;
            Severity::Info
        });
        entries.push(LogEntry {
            timestamp_ms: record.timestamp,
            component_id: record.cmdb_id,
            severity,
            message: record.message,
        });
    }
    Ok((LogStore::from_entries(entries), stats))
}

#[derive(Debug, Deserialize, Serialize)]
struct ManifestFile {
    pods: Vec<ManifestPod>,
}

#[derive(Debug, Deserialize, Serialize)]
struct ManifestPod {
    name: String,
    service: String,
    node: String,
}

/// Loads `manifest.json`.
pub fn load_manifest(path: &Path) -> Result<TopologyManifest, IngestError> {
    let raw = fs::read_to_string(path)
        .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    let parsed: ManifestFile = serde_json::from_str(&raw).map_err(|e| IngestError::ParseError {
        line: 0,
        reason: e.to_string(),
    })?;
    let pods = parsed
        .pods
        .into_iter()
        .map(|p| PodEntry {
            name: p.name,
            service: p.service,
            node: p.node,
        })
        .collect();
    Ok(TopologyManifest::new(pods)?)
}

#[derive(Debug, Deserialize, Serialize)]
struct GroundTruthRecord {
    failure_id: String,
    entry_trace_id: String,
    level: String,
    name: String,
    fault_kind: String,
}

/// Loads `ground_truth.json`.
pub fn load_ground_truth(path: &Path) -> Result<Vec<FailureCase>, IngestError> {
    let raw = fs::read_to_string(path)
        .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    let parsed: Vec<GroundTruthRecord> =
        serde_json::from_str(&raw).map_err(|e| IngestError::ParseError {
            line: 0,
            reason: e.to_string(),
        })?;
    parsed
        .into_iter()
        .map(|r| {
            let level = r.level.parse::<Level>()?;
            Ok(FailureCase {
                failure_id: r.failure_id,
                entry_trace_id: r.entry_trace_id,
                root_cause: ComponentRef {
                    level,
                    name: r.name,
                },
                fault_kind: r.fault_kind,
            })
        })
        .collect()
}

/// Loads a complete dataset directory and validates cross-references.
pub fn load_bundle(dir: &Path) -> Result<DatasetBundle, IngestError> {
    let spans = load_traces(&dir.join(TRACES_FILE))?;
    let metrics = load_metrics(&dir.join(METRICS_FILE))?;
    let (logs, load_stats) = load_logs(&dir.join(LOGS_FILE))?;
    let manifest = load_manifest(&dir.join(MANIFEST_FILE))?;
    let gt_path = dir.join(GROUND_TRUTH_FILE);
    let ground_truth = if gt_path.exists() {
        Some(load_ground_truth(&gt_path)?)
    } else {
        None
    };

    if let Some(cases) = &ground_truth {
        let trace_ids: HashSet<&str> = spans.iter().map(|s| s.trace_id.as_str()).collect();
        for case in cases {
            if !trace_ids.contains(case.entry_trace_id.as_str()) {
                return Err(IngestError::UnknownGroundTruthTrace(
                    case.entry_trace_id.clone(),
                ));
            }
            if !component_known(&case.root_cause, &manifest, &spans) {
                return Err(IngestError::UnknownGroundTruthComponent(
                    case.root_cause.clone(),
                ));
            }
        }
    }
    Ok(DatasetBundle {
        spans,
        metrics,
        logs,
        manifest,
        ground_truth,
        load_stats,
    })
}

fn component_known(c: &ComponentRef, manifest: &TopologyManifest, spans: &[Span]) -> bool {
    match c.level {
        Level::Pod => manifest.contains_pod(&c.name) || spans.iter().any(|s| s.pod == c.name),
        Level::Service => {
            manifest.services().contains(c.name.as_str())
                || spans.iter().any(|s| s.service == c.name)
        }
        Level::Node => manifest.nodes().contains(c.name.as_str()),
    }
}

/// Writes spans in the `traces.csv` schema, preserving order.
pub fn write_traces(path: &Path, spans: &[Span]) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    writer
        .write_record(TRACE_HEADER)
        .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    for s in spans {
        writer
            .write_record([
                s.timestamp_ms.to_string().as_str(),
                &s.trace_id,
                &s.span_id,
                s.parent_span_id.as_deref().unwrap_or(""),
                &s.pod,
                &s.service,
                &s.operation,
                &s.duration_ms.to_string(),
                &s.status,
            ])
            .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    Ok(())
}

/// Writes metric points in the `metrics.csv` schema, preserving order.
pub fn write_metrics(path: &Path, points: &[MetricPoint]) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    writer
        .write_record(METRIC_HEADER)
        .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    for p in points {
        writer
            .write_record([
                p.timestamp_ms.to_string().as_str(),
                &p.component_id,
                &p.metric_name,
                &format_value(p.value),
            ])
            .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    Ok(())
}

// Stable decimal formatting so identical values always serialize to
// identical bytes.
fn format_value(v: f64) -> String {
    let s = format!("{v:.6}");
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    if trimmed.is_empty() {
        "0".to_string()
    } else {
        trimmed.to_string()
    }
}

/// Writes log entries in the `logs.jsonl` schema, preserving order.
pub fn write_logs(path: &Path, entries: &[LogEntry]) -> Result<(), IngestError> {
    let mut file = fs::File::create(path)
        .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    for e in entries {
        let record = LogRecord {
            timestamp: e.timestamp_ms,
            cmdb_id: e.component_id.clone(),
            severity: e.severity.as_str().to_string(),
            message: e.message.clone(),
        };
        let line = serde_json::to_string(&record)
            .map_err(|err| IngestError::Io(path.display().to_string(), err.to_string()))?;
        writeln!(file, "{line}")
            .map_err(|err| IngestError::Io(path.display().to_string(), err.to_string()))?;
    }
    Ok(())
}

/// Writes `manifest.json`.
pub fn write_manifest(path: &Path, manifest: &TopologyManifest) -> Result<(), IngestError> {
    let file = ManifestFile {
        pods: manifest
            .pods()
            .iter()
            .map(|p| ManifestPod {
                name: p.name.clone(),
                service: p.service.clone(),
                node: p.node.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    fs::write(path, json + "\n")
        .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    Ok(())
}

/// Writes `ground_truth.json`.
pub fn write_ground_truth(path: &Path, cases: &[FailureCase]) -> Result<(), IngestError> {
    let records: Vec<GroundTruthRecord> = cases
        .iter()
        .map(|c| GroundTruthRecord {
            failure_id: c.failure_id.clone(),
            entry_trace_id: c.entry_trace_id.clone(),
            level: c.root_cause.level.as_str().to_string(),
            name: c.root_cause.name.clone(),
            fault_kind: c.fault_kind.clone(),
        })
        .collect();
    let json = serde_json::to_string_pretty(&records)
        .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    fs::write(path, json + "\n")
        .map_err(|e| IngestError::Io(path.display().to_string(), e.to_string()))?;
    Ok(())
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {0}: {1}")]
    Io(String, String),
    #[error("line {line}: {reason}")]
    ParseError { line: u64, reason: String },
    #[error("header mismatch, missing or misordered columns: {missing}")]
    MissingColumn { missing: String },
    #[error("ground truth references unknown trace {0}")]
    UnknownGroundTruthTrace(String),
    #[error("ground truth references unknown component {0}")]
    UnknownGroundTruthComponent(ComponentRef),
    #[error(transparent)]
    Model(#[from] ModelError),
}
