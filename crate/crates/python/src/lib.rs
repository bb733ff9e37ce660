//! Python bindings: load datasets, diagnose traces, run the benchmark, and
//! generate synthetic fixtures from Python. Reports come back as JSON
//! strings ready for `json.loads`.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rcl_core::config::RunConfig;
use rcl_core::evaluation::{self, diagnose_case, run_benchmark, RankOutcome};
use rcl_core::fixture::{generate, ScenarioSpec};
use rcl_core::ingest::{load_bundle, DatasetBundle};
use rcl_core::reasoner::HeuristicReasoner;
use rcl_core::synthesizer::{DiagnosisReport, FallbackFlags};
use rcl_core::trace::{build_trace_graph, detect_failed_requests, normal_entry_latency_mean};

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn config_from_args(n_sigma: f64, delta_ms: i64, pool: usize, top_n: usize) -> PyResult<RunConfig> {
    if pool == 0 || top_n == 0 {
        return Err(PyValueError::new_err("pool and top_n must be at least 1"));
    }
    Ok(RunConfig {
        n_sigma,
        delta_ms,
        pool,
        top_n,
        ..RunConfig::default()
    })
}

/// A loaded dataset directory.
#[pyclass]
struct Bundle {
    inner: DatasetBundle,
}

#[pymethods]
impl Bundle {
    /// Distinct trace ids, sorted.
    fn trace_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .inner
            .spans
            .iter()
            .map(|s| s.trace_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    fn span_count(&self) -> usize {
        self.inner.spans.len()
    }

    fn metric_point_count(&self) -> usize {
        self.inner.metrics.point_count()
    }

    fn log_entry_count(&self) -> usize {
        self.inner.logs.entry_count()
    }

    /// Trace ids of labeled failure cases.
    fn failure_trace_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = evaluation::failure_trace_ids(&self.inner)
            .into_iter()
            .collect();
        ids.sort();
        ids
    }

    /// Trace ids whose entry latency strictly exceeds 100x the normal
    /// average. The baseline comes from `mu_lat_ms` or, when omitted, from
    /// traces not labeled as failures.
    #[pyo3(signature = (mu_lat_ms=None))]
    fn detect_failures(&self, mu_lat_ms: Option<f64>) -> PyResult<Vec<String>> {
        let failure_ids = evaluation::failure_trace_ids(&self.inner);
        let mu = mu_lat_ms
            .or_else(|| normal_entry_latency_mean(&self.inner.spans, &failure_ids))
            .ok_or_else(|| PyValueError::new_err("no baseline available; pass mu_lat_ms"))?;
        let mut trace_ids: Vec<&str> = self
            .inner
            .spans
            .iter()
            .map(|s| s.trace_id.as_str())
            .collect();
        trace_ids.sort();
        trace_ids.dedup();
        let mut graphs = Vec::new();
        for id in trace_ids {
            if let Ok(g) = build_trace_graph(&self.inner.spans, id) {
                graphs.push(g);
            }
        }
        let episodes = detect_failed_requests(&graphs, mu).map_err(runtime_err)?;
        Ok(episodes.into_iter().map(|e| e.trace_id).collect())
    }

    /// Diagnoses one trace with the deterministic reasoner and returns the
    /// diagnosis report as a JSON string.
    #[pyo3(signature = (trace_id, n_sigma=3.0, delta_ms=60_000, pool=100, top_n=10))]
    fn diagnose(
        &self,
        trace_id: &str,
        n_sigma: f64,
        delta_ms: i64,
        pool: usize,
        top_n: usize,
    ) -> PyResult<String> {
        let cfg = config_from_args(n_sigma, delta_ms, pool, top_n)?;
        let reasoner = HeuristicReasoner::new(cfg.reasoner_config().heuristic);
        let (outcome, diagnosis) =
            diagnose_case(&self.inner, trace_id, &cfg, &reasoner).map_err(runtime_err)?;
        let failure_id = self.inner.ground_truth.as_ref().and_then(|cases| {
            cases
                .iter()
                .find(|c| c.entry_trace_id == trace_id)
                .map(|c| c.failure_id.clone())
        });
        let report = DiagnosisReport {
            failure_id,
            trace_id: trace_id.to_string(),
            root_report: outcome.root_report.evidence.clone(),
            ranked: diagnosis.candidates,
            evidence_graph: serde_json::from_str(&outcome.evidence_graph.to_canonical_json())
                .map_err(runtime_err)?,
            config_echo: cfg.echo(),
            fallback_flags: FallbackFlags::default(),
        };
        Ok(report.to_json_pretty())
    }

    /// Runs the benchmark harness over the labeled failures and returns the
    /// benchmark report as a JSON string.
    #[pyo3(signature = (n_sigma=3.0, delta_ms=60_000, pool=100, top_n=10))]
    fn evaluate(&self, n_sigma: f64, delta_ms: i64, pool: usize, top_n: usize) -> PyResult<String> {
        let cfg = config_from_args(n_sigma, delta_ms, pool, top_n)?;
        let reasoner = HeuristicReasoner::new(cfg.reasoner_config().heuristic);
        let report = run_benchmark(&self.inner, &cfg, &reasoner).map_err(runtime_err)?;
        serde_json::to_string_pretty(&report).map_err(runtime_err)
    }
}

/// Loads a dataset directory (traces.csv, metrics.csv, logs.jsonl,
/// manifest.json, optional ground_truth.json).
#[pyfunction]
fn load_dataset(path: PathBuf) -> PyResult<Bundle> {
    Ok(Bundle {
        inner: load_bundle(&path).map_err(runtime_err)?,
    })
}

/// Generates a synthetic fault-injected dataset from a scenario spec given
/// as a JSON string; returns the output directory.
#[pyfunction]
#[pyo3(signature = (spec_json, out_dir, seed=0))]
fn generate_fixture(spec_json: &str, out_dir: PathBuf, seed: u64) -> PyResult<String> {
    let spec: ScenarioSpec =
        serde_json::from_str(spec_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    generate(&spec, seed, &out_dir).map_err(runtime_err)?;
    Ok(out_dir.display().to_string())
}

fn to_outcomes(ranks: Vec<Option<usize>>) -> Vec<RankOutcome> {
    ranks
        .into_iter()
        .enumerate()
        .map(|(i, rank)| RankOutcome {
            failure_id: format!("case-{i}"),
            rank,
        })
        .collect()
}

/// Recall@k over a list of ranks (None = absent from the top-10).
#[pyfunction]
fn recall_at_k(ranks: Vec<Option<usize>>, k: usize) -> PyResult<f64> {
    evaluation::recall_at_k(&to_outcomes(ranks), k)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Mean reciprocal rank over a list of ranks (None = absent, counted as 0).
#[pyfunction]
fn mrr(ranks: Vec<Option<usize>>) -> PyResult<f64> {
    evaluation::mrr(&to_outcomes(ranks)).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn rclpy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Bundle>()?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(generate_fixture, m)?)?;
    m.add_function(wrap_pyfunction!(recall_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(mrr, m)?)?;
    Ok(())
}
