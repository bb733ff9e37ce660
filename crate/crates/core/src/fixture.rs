//! Synthetic fault-injected telemetry bundles with ground truth.
//!
//! A scenario describes a service tree, replica counts, and one fault. The
//! generator emits a full dataset directory (traces, metrics, logs, manifest,
//! ground truth) that always passes ingestion and trace validation, and whose
//! injected target is recoverable by construction:
//!
//! - the fault adds `magnitude x` the scenario's normal end-to-end latency to
//!   the affected spans, so entry latency exceeds `magnitude x` the normal
//!   average strictly (duration noise only jitters downward);
//! - the target's metrics deviate 8 sigma from their own generated baseline;
//! - the target emits ERROR logs inside the diagnostic window;
//! - a packet-loss-like fault additionally leaves the callee span fast while
//!   the caller absorbs the wait, so the caller's duration dwarfs the
//!   callee's on that edge.
//!
//! Generation is fully deterministic given the seeds: identical inputs give
//! byte-identical bundles.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{
    self, DatasetBundle, FailureCase, IngestError, GROUND_TRUTH_FILE, LOGS_FILE, MANIFEST_FILE,
    METRICS_FILE, TRACES_FILE,
};
use crate::model::{ComponentRef, Level, LogEntry, MetricPoint, PodEntry, Severity, Span};

/// Epoch base of all generated timestamps.
const TIME_BASE_MS: i64 = 1_700_000_000_000;
/// Offset of the fault timestamp from the start of telemetry.
const FAULT_OFFSET_MS: i64 = 1_800_000;
/// Spacing between faults in multi-case suites.
const FAULT_SPACING_MS: i64 = 180_000;
/// Metric sampling period.
const METRIC_STEP_MS: i64 = 5_000;
/// Half-width of the injected anomaly burst around the fault timestamp.
const BURST_HALF_WIDTH_MS: i64 = 30_000;
/// Injected metric deviation in units of the series' own noise sigma.
const FAULT_SIGMAS: f64 = 8.0;
/// Metric noise sigma as a fraction of the series mean.
const NOISE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FaultKind {
    PodLatency,
    ServiceLatency,
    NodeCpu,
    PacketLossLike,
}

impl FaultKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FaultKind::PodLatency => "POD_LATENCY",
            FaultKind::ServiceLatency => "SERVICE_LATENCY",
            FaultKind::NodeCpu => "NODE_CPU",
            FaultKind::PacketLossLike => "PACKET_LOSS_LIKE",
        }
    }
}

/// One synthetic failure scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    /// Fan-out per tree level; `[2, 3]` means the root service calls 2
    /// services, each of which calls 3.
    pub fan_outs: Vec<usize>,
    pub pods_per_service: usize,
    pub num_nodes: usize,
    pub fault_kind: FaultKind,
    pub target: ComponentRef,
    /// Added latency at the fault, as a multiple of the scenario's normal
    /// end-to-end latency.
    pub magnitude: f64,
    /// Per-operation processing time.
    pub baseline_ms: u64,
    pub normal_traces: usize,
    pub noise_seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            fan_outs: vec![2, 2, 2],
            pods_per_service: 2,
            num_nodes: 3,
            fault_kind: FaultKind::PodLatency,
            target: ComponentRef::pod("svc07-0"),
            magnitude: 150.0,
            baseline_ms: 100,
            normal_traces: 20,
            noise_seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn from_json_file(path: &Path) -> Result<Self, FixtureError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| FixtureError::Io(path.display().to_string(), e.to_string()))?;
        serde_json::from_str(&raw).map_err(|e| FixtureError::InvalidSpec(e.to_string()))
    }

    /// Number of services (= spans per trace) the fan-outs produce.
    pub fn service_count(&self) -> usize {
        let mut total = 1;
        let mut level = 1;
        for f in &self.fan_outs {
            level *= f;
            total += level;
        }
        total
    }
}

/// The service tree with per-service parents, level-order named `svcNN`.
struct Topology {
    services: Vec<String>,
    parents: Vec<Option<usize>>,
    pods: Vec<PodEntry>,
}

fn build_topology(spec: &ScenarioSpec) -> Topology {
    let mut services = vec!["svc00".to_string()];
    let mut parents = vec![None];
    let mut frontier = vec![0usize];
    for fan in &spec.fan_outs {
        let mut next = Vec::new();
        for &parent in &frontier {
            for _ in 0..*fan {
                let idx = services.len();
                services.push(format!("svc{idx:02}"));
                parents.push(Some(parent));
                next.push(idx);
            }
        }
        frontier = next;
    }
    let mut pods = Vec::new();
    let mut pod_index = 0usize;
    for service in &services {
        for replica in 0..spec.pods_per_service {
            pods.push(PodEntry {
                name: format!("{service}-{replica}"),
                service: service.clone(),
                node: format!("node-{}", pod_index % spec.num_nodes),
            });
            pod_index += 1;
        }
    }
    Topology {
        services,
        parents,
        pods,
    }
}

fn validate(spec: &ScenarioSpec, topology: &Topology) -> Result<(), FixtureError> {
    if spec.magnitude <= 0.0 {
        return Err(FixtureError::InvalidSpec(
            "magnitude must be positive".into(),
        ));
    }
    if spec.pods_per_service == 0 || spec.num_nodes == 0 || spec.baseline_ms == 0 {
        return Err(FixtureError::InvalidSpec(
            "pods_per_service, num_nodes and baseline_ms must be positive".into(),
        ));
    }
    if spec.normal_traces == 0 {
        return Err(FixtureError::InvalidSpec(
            "normal_traces must be positive".into(),
        ));
    }
    let target = &spec.target;
    let exists = match (spec.fault_kind, target.level) {
        (FaultKind::PodLatency | FaultKind::PacketLossLike, Level::Pod) => {
            topology.pods.iter().any(|p| p.name == target.name)
        }
        (FaultKind::ServiceLatency, Level::Service) => topology.services.contains(&target.name),
        (FaultKind::NodeCpu, Level::Node) => topology.pods.iter().any(|p| p.node == target.name),
        _ => {
            return Err(FixtureError::InvalidSpec(format!(
                "{} fault cannot target a {} component",
                spec.fault_kind.as_str(),
                target.level
            )))
        }
    };
    if !exists {
        return Err(FixtureError::InvalidSpec(format!(
            "target {target} does not exist in the generated topology"
        )));
    }
    if spec.fault_kind == FaultKind::PacketLossLike {
        let service = topology
            .pods
            .iter()
            .find(|p| p.name == target.name)
            .map(|p| p.service.clone())
            .unwrap_or_default();
        if service == topology.services[0] {
            return Err(FixtureError::InvalidSpec(
                "packet-loss-like faults need a caller; the root service cannot be the target"
                    .into(),
            ));
        }
    }
    if spec.fault_kind == FaultKind::NodeCpu {
        let services_on_node: std::collections::BTreeSet<&str> = topology
            .pods
            .iter()
            .filter(|p| p.node == target.name)
            .map(|p| p.service.as_str())
            .collect();
        if services_on_node.len() < 2 {
            return Err(FixtureError::InvalidSpec(
                "node faults need at least two services with replicas on the target node".into(),
            ));
        }
    }
    Ok(())
}

/// Per-trace span emission. Children of a service call run sequentially;
/// a span's duration is its own processing plus its children's durations
/// plus any injected wait.
struct TraceEmitter<'a> {
    spec: &'a ScenarioSpec,
    topology: &'a Topology,
    children_of: Vec<Vec<usize>>,
    /// Deterministic no-noise end-to-end latency of a normal trace.
    normal_entry_ms: u64,
}

impl<'a> TraceEmitter<'a> {
    fn new(spec: &'a ScenarioSpec, topology: &'a Topology) -> Self {
        let mut children_of = vec![Vec::new(); topology.services.len()];
        for (idx, parent) in topology.parents.iter().enumerate() {
            if let Some(p) = parent {
                children_of[*p].push(idx);
            }
        }
        let normal_entry_ms = spec.baseline_ms * topology.services.len() as u64;
        TraceEmitter {
            spec,
            topology,
            children_of,
            normal_entry_ms,
        }
    }

    fn fault_extra_ms(&self) -> u64 {
        (self.spec.magnitude * self.normal_entry_ms as f64).ceil() as u64
    }

    /// Downward-only duration jitter keeps every normal duration at or below
    /// its baseline, so the normal average never exceeds the deterministic
    /// baseline sum and the injected ratio bound holds strictly.
    fn jitter(&self, rng: &mut ChaCha8Rng) -> u64 {
        let max = (self.spec.baseline_ms / 50).max(1);
        rng.random_range(0..=max)
    }

    fn pick_pod(
        &self,
        service_idx: usize,
        rng: &mut ChaCha8Rng,
        fault: Option<&FaultInjection>,
    ) -> String {
        let service = &self.topology.services[service_idx];
        let replicas: Vec<&PodEntry> = self
            .topology
            .pods
            .iter()
            .filter(|p| &p.service == service)
            .collect();
        if let Some(fault) = fault {
            match fault.kind {
                FaultKind::PodLatency | FaultKind::PacketLossLike => {
                    if let Some(hit) = replicas.iter().find(|p| p.name == fault.target) {
                        return hit.name.clone();
                    }
                }
                FaultKind::NodeCpu => {
                    // Route onto the faulty node when possible so its impact
                    // is visible in the trace.
                    if let Some(hit) = replicas.iter().find(|p| p.node == fault.target) {
                        return hit.name.clone();
                    }
                }
                FaultKind::ServiceLatency => {}
            }
        }
        let idx = rng.random_range(0..replicas.len());
        replicas[idx].name.clone()
    }

    fn emit(
        &self,
        trace_id: &str,
        start_ms: i64,
        rng: &mut ChaCha8Rng,
        fault: Option<&FaultInjection>,
        out: &mut Vec<Span>,
    ) {
        let mut counter = 0usize;
        self.emit_service(0, trace_id, None, start_ms, rng, fault, &mut counter, out);
    }

    /// Returns the emitted span's duration. Spans are appended in call order.
    #[allow(clippy::too_many_arguments)]
    fn emit_service(
        &self,
        service_idx: usize,
        trace_id: &str,
        parent_span_id: Option<&str>,
        start_ms: i64,
        rng: &mut ChaCha8Rng,
        fault: Option<&FaultInjection>,
        counter: &mut usize,
        out: &mut Vec<Span>,
    ) -> u64 {
        let span_id = format!("s{:03}", *counter);
        *counter += 1;
        let service = self.topology.services[service_idx].clone();
        let pod = self.pick_pod(service_idx, rng, fault);
        let own = self.spec.baseline_ms - self.jitter(rng);

        let slot = out.len();
        out.push(Span {
            trace_id: trace_id.to_string(),
            span_id: span_id.clone(),
            parent_span_id: parent_span_id.map(String::from),
            timestamp_ms: start_ms,
            service: service.clone(),
            pod: pod.clone(),
            operation: format!("{service}/handle"),
            duration_ms: 0,
            status: "0".into(),
        });

        let mut child_clock = start_ms + 1;
        let mut children_total = 0u64;
        let mut faulty_edge = false;
        for &child_idx in &self.children_of[service_idx] {
            let child_slot = out.len();
            let child_duration = self.emit_service(
                child_idx,
                trace_id,
                Some(&span_id),
                child_clock,
                rng,
                fault,
                counter,
                out,
            );
            if let Some(fault) = fault {
                // A packet-loss-like fault leaves the callee fast but makes
                // the caller wait out the drops on that edge.
                if fault.kind == FaultKind::PacketLossLike && out[child_slot].pod == fault.target {
                    faulty_edge = true;
                }
            }
            child_clock += child_duration as i64 + 1;
            children_total += child_duration;
        }

        let mut duration = own + children_total;
        if let Some(fault) = fault {
            match fault.kind {
                FaultKind::PodLatency if pod == fault.target => {
                    duration += self.fault_extra_ms();
                }
                FaultKind::ServiceLatency if service == fault.target => {
                    duration += self.fault_extra_ms();
                }
                FaultKind::NodeCpu => {
                    let on_node = self
                        .topology
                        .pods
                        .iter()
                        .any(|p| p.name == pod && p.node == fault.target);
                    if on_node {
                        duration += self.fault_extra_ms();
                    }
                }
                FaultKind::PacketLossLike if faulty_edge => {
                    duration += self.fault_extra_ms();
                }
                _ => {}
            }
        }
        out[slot].duration_ms = duration;
        duration
    }
}

struct FaultInjection {
    kind: FaultKind,
    /// Pod, service or node name the fault lives on.
    target: String,
}

/// Component ids whose telemetry carries the injected anomaly.
fn anomalous_components(spec: &ScenarioSpec, topology: &Topology) -> Vec<String> {
    match spec.fault_kind {
        FaultKind::PodLatency | FaultKind::PacketLossLike => vec![spec.target.name.clone()],
        // Service faults show up in every replica, mirroring the
        // replica cross-check that separates service from pod faults.
        FaultKind::ServiceLatency => topology
            .pods
            .iter()
            .filter(|p| p.service == spec.target.name)
            .map(|p| p.name.clone())
            .collect(),
        FaultKind::NodeCpu => vec![spec.target.name.clone()],
    }
}

fn metric_series_for(is_node: bool) -> Vec<(&'static str, f64)> {
    if is_node {
        vec![("node_cpu_usage", 40.0), ("node_memory_usage", 55.0)]
    } else {
        vec![("cpu_usage", 30.0), ("memory_usage", 45.0)]
    }
}

fn emit_metrics(
    topology: &Topology,
    rng: &mut ChaCha8Rng,
    horizon_start: i64,
    horizon_end: i64,
    fault_times: &[(i64, Vec<String>)],
    out: &mut Vec<MetricPoint>,
) {
    let mut components: Vec<(String, bool)> = topology
        .pods
        .iter()
        .map(|p| (p.name.clone(), false))
        .collect();
    let mut nodes: Vec<String> = topology.pods.iter().map(|p| p.node.clone()).collect();
    nodes.sort();
    nodes.dedup();
    components.extend(nodes.into_iter().map(|n| (n, true)));

    for (component, is_node) in components {
        for (metric, mean) in metric_series_for(is_node) {
            let sigma = mean * NOISE_FRACTION;
            let noise = Normal::new(0.0, sigma).expect("valid sigma");
            let mut t = horizon_start;
            while t <= horizon_end {
                let anomalous = fault_times.iter().any(|(fault_t, targets)| {
                    targets.iter().any(|c| c == &component)
                        && (t - fault_t).abs() <= BURST_HALF_WIDTH_MS
                });
                let value = if anomalous {
                    mean + FAULT_SIGMAS * sigma
                } else {
                    // Clamp the tails so healthy series never cross the
                    // default detection threshold by chance.
                    mean + noise.sample(rng).clamp(-2.5 * sigma, 2.5 * sigma)
                };
                out.push(MetricPoint {
                    timestamp_ms: t,
                    component_id: component.clone(),
                    metric_name: metric.to_string(),
                    value,
                });
                t += METRIC_STEP_MS;
            }
        }
    }
}

fn emit_logs(
    topology: &Topology,
    rng: &mut ChaCha8Rng,
    horizon_start: i64,
    horizon_end: i64,
    fault_times: &[(i64, Vec<String>)],
    out: &mut Vec<LogEntry>,
) {
    for pod in &topology.pods {
        let mut t = horizon_start + rng.random_range(0..10_000);
        while t <= horizon_end {
            out.push(LogEntry {
                timestamp_ms: t,
                component_id: pod.name.clone(),
                severity: Severity::Info,
                message: "request completed ok".into(),
            });
            t += 30_000;
        }
    }
    for (fault_t, targets) in fault_times {
        for target in targets {
            for i in 0..6 {
                out.push(LogEntry {
                    timestamp_ms: fault_t - BURST_HALF_WIDTH_MS / 2 + i * 5_000,
                    component_id: target.clone(),
                    severity: Severity::Error,
                    message: "request failed: connection timeout to upstream".into(),
                });
            }
        }
    }
    out.sort_by(|a, b| {
        (a.timestamp_ms, &a.component_id, &a.message).cmp(&(
            b.timestamp_ms,
            &b.component_id,
            &b.message,
        ))
    });
}

/// Generates one single-fault bundle into `out_dir` and loads it back.
pub fn generate(
    spec: &ScenarioSpec,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetBundle, FixtureError> {
    generate_suite(std::slice::from_ref(spec), seed, out_dir)
}

/// Generates a multi-case bundle: every spec shares the first one's topology
/// and timing grid, each fault gets its own disjoint time slot and trace.
pub fn generate_suite(
    specs: &[ScenarioSpec],
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetBundle, FixtureError> {
    let Some(first) = specs.first() else {
        return Err(FixtureError::InvalidSpec("no scenarios given".into()));
    };
    let topology = build_topology(first);
    for spec in specs {
        if spec.fan_outs != first.fan_outs
            || spec.pods_per_service != first.pods_per_service
            || spec.num_nodes != first.num_nodes
            || spec.baseline_ms != first.baseline_ms
        {
            return Err(FixtureError::InvalidSpec(
                "all scenarios of one suite must share the topology".into(),
            ));
        }
        validate(spec, &topology)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(first.noise_seed ^ seed);
    let emitter = TraceEmitter::new(first, &topology);

    let mut spans = Vec::new();
    let normal_span_start = TIME_BASE_MS + 60_000;
    for i in 0..first.normal_traces {
        emitter.emit(
            &format!("t-{i:04}"),
            normal_span_start + i as i64 * 10_000,
            &mut rng,
            None,
            &mut spans,
        );
    }

    let mut fault_times = Vec::new();
    let mut cases = Vec::new();
    for (case_idx, spec) in specs.iter().enumerate() {
        let fault_t = TIME_BASE_MS + FAULT_OFFSET_MS + case_idx as i64 * FAULT_SPACING_MS;
        let trace_id = format!("t-fault-{case_idx:03}");
        let injection = FaultInjection {
            kind: spec.fault_kind,
            target: spec.target.name.clone(),
        };
        emitter.emit(&trace_id, fault_t, &mut rng, Some(&injection), &mut spans);
        fault_times.push((fault_t, anomalous_components(spec, &topology)));
        cases.push(FailureCase {
            failure_id: format!("f-{case_idx:03}"),
            entry_trace_id: trace_id,
            root_cause: spec.target.clone(),
            fault_kind: spec.fault_kind.as_str().to_string(),
        });
    }

    let horizon_start = TIME_BASE_MS;
    let horizon_end = fault_times
        .last()
        .map(|(t, _)| t + BURST_HALF_WIDTH_MS * 2)
        .unwrap_or(TIME_BASE_MS);
    let mut metrics = Vec::new();
    emit_metrics(
        &topology,
        &mut rng,
        horizon_start,
        horizon_end,
        &fault_times,
        &mut metrics,
    );
    let mut logs = Vec::new();
    emit_logs(
        &topology,
        &mut rng,
        horizon_start,
        horizon_end,
        &fault_times,
        &mut logs,
    );

    std::fs::create_dir_all(out_dir)
        .map_err(|e| FixtureError::Io(out_dir.display().to_string(), e.to_string()))?;
    ingest::write_traces(&out_dir.join(TRACES_FILE), &spans)?;
    ingest::write_metrics(&out_dir.join(METRICS_FILE), &metrics)?;
    ingest::write_logs(&out_dir.join(LOGS_FILE), &logs)?;
    let manifest = crate::model::TopologyManifest::new(topology.pods.clone())
        .map_err(|e| FixtureError::InvalidSpec(e.to_string()))?;
    ingest::write_manifest(&out_dir.join(MANIFEST_FILE), &manifest)?;
    ingest::write_ground_truth(&out_dir.join(GROUND_TRUTH_FILE), &cases)?;

    Ok(ingest::load_bundle(out_dir)?)
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("io error on {0}: {1}")]
    Io(String, String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}
