//! LLM reasoning backend: chat-completion transport plus evidence parsing.
//!
//! The wire contract is the OpenAI-compatible chat-completion shape: a JSON
//! request `{model, messages: [{role, content}]}` answered by a JSON body
//! whose `choices[0].message.content` holds the generated text. Transport
//! failures, timeouts and 429s are retried with exponential backoff; auth
//! failures are fatal. A concurrency cap bounds in-flight requests across
//! all agents sharing the client.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::logtool::LogQueryResult;
use crate::metric::MetricAnomaly;

use super::parse::{parse_consolidated_evidence, parse_self_evidence};
use super::prompt::{
    render_consolidation_prompt, render_self_state_prompt, summarize_logs,
    summarize_metric_anomalies,
};
use super::{ConsolidatedEvidence, LlmConfig, Reasoner, ReasonerError, SelfEvidence, SpanContext};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out after {0} ms")]
    Timeout(u64),
    #[error("rate limited by endpoint")]
    RateLimited,
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("response did not contain generated text: {0}")]
    MalformedResponse(String),
    #[error("no endpoint configured (set RCL_LLM_ENDPOINT)")]
    NoEndpoint,
}

impl LlmError {
    fn retryable(&self) -> bool {
        matches!(
            self,
            LlmError::Transport(_) | LlmError::Timeout(_) | LlmError::RateLimited
        )
    }
}

// Counting semaphore bounding concurrent requests.
struct Gate {
    slots: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(capacity: usize) -> Self {
        // 0 means no cap.
        let slots = if capacity == 0 { usize::MAX } else { capacity };
        Gate {
            slots: Mutex::new(slots),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePermit<'_> {
        let mut slots = self.slots.lock().unwrap();
        while *slots == 0 {
            slots = self.cv.wait(slots).unwrap();
        }
        *slots -= 1;
        GatePermit { gate: self }
    }
}

struct GatePermit<'a> {
    gate: &'a Gate,
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        *self.gate.slots.lock().unwrap() += 1;
        self.gate.cv.notify_one();
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

/// Blocking chat-completion client with retries and a concurrency cap.
pub struct LlmClient {
    cfg: LlmConfig,
    http: reqwest::blocking::Client,
    gate: Gate,
}

impl LlmClient {
    pub fn new(cfg: LlmConfig) -> Result<Self, LlmError> {
        if cfg.endpoint.is_empty() {
            return Err(LlmError::NoEndpoint);
        }
        if cfg.timeout_ms == 0 {
            return Err(LlmError::Transport("timeout_ms must be positive".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let gate = Gate::new(cfg.max_concurrent);
        Ok(LlmClient { cfg, http, gate })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.cfg
    }

    /// Sends the prompt and returns the generated text, retrying transient
    /// failures up to `max_retries` times with exponential backoff.
    pub fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let mut last = LlmError::Transport("no attempt made".into());
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                let backoff = self
                    .cfg
                    .backoff_base_ms
                    .saturating_mul(1 << (attempt - 1).min(10))
                    .min(10_000);
                std::thread::sleep(Duration::from_millis(backoff));
            }
            match self.attempt(prompt) {
                Ok(text) => return Ok(text),
                Err(e) if e.retryable() => last = e,
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }

    fn attempt(&self, prompt: &str) -> Result<String, LlmError> {
        let _permit = self.gate.acquire();
        let body = json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut request = self.http.post(&self.cfg.endpoint).json(&body);
        if let Some(key) = &self.cfg.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                LlmError::Timeout(self.cfg.timeout_ms)
            } else {
                LlmError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        if status.as_u16() == 429 {
            return Err(LlmError::RateLimited);
        }
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(LlmError::Auth(status.to_string()));
        }
        if !status.is_success() {
            return Err(LlmError::Transport(format!("endpoint returned {status}")));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| LlmError::MalformedResponse("empty choices array".into()))
    }
}

const REPAIR_SUFFIX: &str = "\nYour previous reply was not valid JSON matching the schema. \
Reply again with ONLY the JSON object, no prose and no code fences.";

/// [`Reasoner`] backed by a chat-completion endpoint.
///
/// Tool queries are executed eagerly by the orchestrator and their summaries
/// embedded in the prompt; there is no mid-generation tool calling. A reply
/// failing schema validation is re-prompted once before giving up.
pub struct LlmReasoner {
    client: LlmClient,
}

impl LlmReasoner {
    pub fn new(cfg: LlmConfig) -> Result<Self, LlmError> {
        Ok(LlmReasoner {
            client: LlmClient::new(cfg)?,
        })
    }

    pub fn from_client(client: LlmClient) -> Self {
        LlmReasoner { client }
    }

    fn complete_with_repair<T>(
        &self,
        prompt: &str,
        parse: impl Fn(&str) -> Result<T, ReasonerError>,
    ) -> Result<T, ReasonerError> {
        let reply = self.client.complete(prompt)?;
        match parse(&reply) {
            Ok(v) => Ok(v),
            Err(ReasonerError::Schema(_)) => {
                let repair_prompt = format!("{prompt}{REPAIR_SUFFIX}");
                let reply = self.client.complete(&repair_prompt)?;
                parse(&reply)
            }
            Err(e) => Err(e),
        }
    }
}

impl Reasoner for LlmReasoner {
    fn self_state(
        &self,
        ctx: &SpanContext,
        metric_anomalies: &[MetricAnomaly],
        logs: &LogQueryResult,
    ) -> Result<SelfEvidence, ReasonerError> {
        let prompt = render_self_state_prompt(
            ctx,
            &summarize_metric_anomalies(metric_anomalies),
            &summarize_logs(logs),
        );
        let mut evidence = self.complete_with_repair(&prompt, parse_self_evidence)?;
        // The span identity is ground truth; never trust the model with it.
        evidence.span_id = ctx.span.span_id.clone();
        evidence.service = ctx.span.service.clone();
        Ok(evidence)
    }

    fn consolidate(
        &self,
        evidence: &SelfEvidence,
        downstream: &[ConsolidatedEvidence],
        _dominant_child_share: Option<f64>,
    ) -> Result<ConsolidatedEvidence, ReasonerError> {
        let prompt = render_consolidation_prompt(evidence, downstream);
        let mut out = self.complete_with_repair(&prompt, parse_consolidated_evidence)?;
        out.span_id = evidence.span_id.clone();
        out.service = evidence.service.clone();
        Ok(out)
    }
}
