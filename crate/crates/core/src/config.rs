//! Run configuration: defaults, TOML config files, and the tool settings
//! derived from them.
//!
//! Defaults follow the engine's standard operating point: n-sigma threshold
//! 3, retrieval window 60 s, pool capacity 100, top-10 candidates.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logtool::RelevanceRule;
use crate::metric::ReferenceWindowPolicy;
use crate::model::Severity;
use crate::orchestrator::ToolSettings;
use crate::reasoner::{Backend, HeuristicConfig, LlmConfig, ReasonerConfig};
use crate::synthesizer::ScoreWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub reasoner: Backend,
    pub n_sigma: f64,
    pub delta_ms: i64,
    /// Agents pool capacity.
    pub pool: usize,
    pub top_n: usize,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Normal average entry latency; computed from ground-truth normal
    /// traces when unset.
    pub mu_lat_ms: Option<f64>,
    pub per_span_t0: bool,
    pub reference_window_policy: ReferenceWindowPolicy,
    pub log_min_severity: Severity,
    pub log_keywords: Vec<String>,
    pub log_status_patterns: Vec<String>,
    pub log_max_entries: usize,
    pub log_delta_ms: Option<i64>,
    /// Per reasoner-call timeout override (maps onto the LLM timeout).
    pub agent_timeout_ms: Option<u64>,
    pub weights: ScoreWeights,
    pub llm: LlmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let rule = RelevanceRule::default();
        RunConfig {
            data_dir: None,
            reasoner: Backend::Heuristic,
            n_sigma: 3.0,
            delta_ms: 60_000,
            pool: 100,
            top_n: 10,
            out: None,
            seed: 0,
            mu_lat_ms: None,
            per_span_t0: false,
            reference_window_policy: ReferenceWindowPolicy::AllBefore,
            log_min_severity: rule.min_severity,
            log_keywords: rule.keyword_patterns,
            log_status_patterns: rule.status_code_patterns,
            log_max_entries: 100,
            log_delta_ms: None,
            agent_timeout_ms: None,
            weights: ScoreWeights::default(),
            llm: LlmConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(path.display().to_string(), e.to_string()))?;
        toml::from_str(&raw).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn tool_settings(&self) -> ToolSettings {
        ToolSettings {
            n_sigma: self.n_sigma,
            delta_ms: self.delta_ms,
            log_rule: RelevanceRule {
                min_severity: self.log_min_severity,
                keyword_patterns: self.log_keywords.clone(),
                status_code_patterns: self.log_status_patterns.clone(),
            },
            log_max_entries: self.log_max_entries,
            log_delta_ms: self.log_delta_ms,
            per_span_t0: self.per_span_t0,
            simulated_latency_ms: 0,
        }
    }

    /// Reasoner configuration with env vars applied and the agent timeout
    /// folded into the LLM transport timeout.
    pub fn reasoner_config(&self) -> ReasonerConfig {
        let mut llm = self.llm.clone();
        llm.apply_env();
        if let Some(timeout) = self.agent_timeout_ms {
            llm.timeout_ms = timeout;
        }
        if llm.max_concurrent == 0 {
            llm.max_concurrent = self.pool;
        }
        ReasonerConfig {
            backend: self.reasoner,
            heuristic: HeuristicConfig {
                n_sigma: self.n_sigma,
                ..HeuristicConfig::default()
            },
            llm,
        }
    }

    /// The configuration as JSON, for report echoing.
    pub fn echo(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("config serializes");
        // Never echo credentials into reports.
        if let Some(llm) = value.get_mut("llm") {
            if let Some(obj) = llm.as_object_mut() {
                obj.remove("api_key");
            }
        }
        value
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error on {0}: {1}")]
    Io(String, String),
    #[error("malformed config: {0}")]
    Parse(String),
}
