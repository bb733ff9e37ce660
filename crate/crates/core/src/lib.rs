//! Root cause localization for microservice failures over distributed traces.
//!
//! The engine decomposes a failed request's trace graph into per-span agents,
//! runs them bottom-up under a bounded pool, and synthesizes a ranked list of
//! root-cause candidates (pods, services, nodes) from the root-level report
//! and a global evidence graph. Agents gather evidence through three data
//! tools: the trace tool (child-span queries), the metric tool (n-sigma
//! anomaly retrieval), and the log tool (relevance-filtered retrieval).
//!
//! ```
//! use rcl_core::config::RunConfig;
//! use rcl_core::evaluation::diagnose_case;
//! use rcl_core::fixture::{generate, FaultKind, ScenarioSpec};
//! use rcl_core::model::ComponentRef;
//! use rcl_core::reasoner::HeuristicReasoner;
//!
//! let dir = tempfile::tempdir().unwrap();
//! let spec = ScenarioSpec {
//!     fan_outs: vec![2, 2],
//!     fault_kind: FaultKind::PodLatency,
//!     target: ComponentRef::pod("svc05-0"),
//!     ..ScenarioSpec::default()
//! };
//! let bundle = generate(&spec, 1, dir.path()).unwrap();
//!
//! let cfg = RunConfig::default();
//! let reasoner = HeuristicReasoner::new(cfg.reasoner_config().heuristic);
//! let (outcome, diagnosis) =
//!     diagnose_case(&bundle, "t-fault-000", &cfg, &reasoner).unwrap();
//! assert_eq!(diagnosis.candidates[0].component, ComponentRef::pod("svc05-0"));
//! assert!(outcome.root_report.evidence.confidence > 0.5);
//! ```

pub mod config;
pub mod evaluation;
pub mod evidence;
pub mod fixture;
pub mod ingest;
pub mod logtool;
pub mod metric;
pub mod model;
pub mod orchestrator;
pub mod reasoner;
pub mod synthesizer;
pub mod trace;

pub use config::RunConfig;
pub use evidence::GlobalEvidenceGraph;
pub use model::{ComponentRef, Level, LogEntry, MetricPoint, Severity, Span, TopologyManifest};
pub use orchestrator::{PoolConfig, RootReport};
pub use reasoner::{ConsolidatedEvidence, SelfEvidence};
pub use synthesizer::{DiagnosisReport, RankedCandidate, RankedDiagnosis};
pub use trace::TraceGraph;
