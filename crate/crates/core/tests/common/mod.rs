//! Shared helpers for integration tests: a scripted chat-completion stub
//! server and random trace generators.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use rcl_core::model::{PodEntry, Span, TopologyManifest};

/// One scripted reply of the stub server.
#[derive(Clone)]
pub struct StubResponse {
    pub status: u16,
    pub body: String,
    pub delay_ms: u64,
}

impl StubResponse {
    pub fn ok(body: impl Into<String>) -> Self {
        StubResponse {
            status: 200,
            body: body.into(),
            delay_ms: 0,
        }
    }

    pub fn status(status: u16) -> Self {
        StubResponse {
            status,
            body: "{}".into(),
            delay_ms: 0,
        }
    }
}

pub struct Stub {
    pub url: String,
    hits: Arc<AtomicUsize>,
}

impl Stub {
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

/// Wraps generated text in the chat-completion response shape.
pub fn chat_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}

fn write_response(stream: &mut std::net::TcpStream, response: &StubResponse) {
    if response.delay_ms > 0 {
        std::thread::sleep(Duration::from_millis(response.delay_ms));
    }
    let body = response.body.as_bytes();
    let head = format!(
        "HTTP/1.1 {} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
        response.status,
        body.len()
    );
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(body);
    let _ = stream.flush();
}

fn drain_request(stream: &mut std::net::TcpStream) {
    let mut reader = BufReader::new(stream.try_clone().expect("clone stream"));
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            break;
        }
        if let Some(v) = trimmed.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = v.trim().parse().unwrap_or(0);
        }
    }
    let mut body = vec![0u8; content_length];
    let _ = reader.read_exact(&mut body);
}

/// Serves the scripted responses in order; once the script is exhausted the
/// last response repeats. Runs until the test process exits.
pub fn start_stub(script: Vec<StubResponse>) -> Stub {
    assert!(!script.is_empty(), "stub needs at least one response");
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let hits = Arc::new(AtomicUsize::new(0));
    let thread_hits = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let idx = thread_hits.fetch_add(1, Ordering::SeqCst);
            let response = script
                .get(idx)
                .unwrap_or_else(|| script.last().unwrap())
                .clone();
            std::thread::spawn(move || {
                drain_request(&mut stream);
                write_response(&mut stream, &response);
            });
        }
    });
    Stub { url, hits }
}

/// A random rooted tree of `n` spans with bounded fan-out. Ids are fixed
/// width so no id is a substring of another.
pub fn random_tree_spans(
    rng: &mut impl Rng,
    trace_id: &str,
    n: usize,
    max_fanout: usize,
) -> Vec<Span> {
    assert!((1..=999).contains(&n));
    let mut spans = Vec::with_capacity(n);
    let mut fanout = vec![0usize; n];
    for i in 0..n {
        let parent = if i == 0 {
            None
        } else {
            // Choose among earlier spans that still have fan-out budget.
            let candidates: Vec<usize> = (0..i).filter(|&p| fanout[p] < max_fanout).collect();
            let p = candidates[rng.random_range(0..candidates.len())];
            fanout[p] += 1;
            Some(p)
        };
        spans.push(make_span(trace_id, i, parent));
    }
    spans
}

/// A complete 4-ary tree of `n` spans (parent of node i is (i-1)/4).
pub fn complete_4ary_spans(trace_id: &str, n: usize) -> Vec<Span> {
    (0..n)
        .map(|i| make_span(trace_id, i, if i == 0 { None } else { Some((i - 1) / 4) }))
        .collect()
}

/// A balanced binary tree of `n` spans (n = 2^d - 1 for a full tree).
pub fn binary_tree_spans(trace_id: &str, n: usize) -> Vec<Span> {
    (0..n)
        .map(|i| make_span(trace_id, i, if i == 0 { None } else { Some((i - 1) / 2) }))
        .collect()
}

fn make_span(trace_id: &str, index: usize, parent: Option<usize>) -> Span {
    Span {
        trace_id: trace_id.to_string(),
        span_id: format!("sx{index:03}"),
        parent_span_id: parent.map(|p| format!("sx{p:03}")),
        timestamp_ms: 1_000_000 + index as i64,
        service: format!("svc{:03}", index % 40),
        pod: format!("svc{:03}-0", index % 40),
        operation: format!("svc{:03}/handle", index % 40),
        duration_ms: 100,
        status: "0".into(),
    }
}

/// Manifest covering the pods `make_span` emits.
pub fn tree_manifest() -> TopologyManifest {
    let pods = (0..40)
        .map(|i| PodEntry {
            name: format!("svc{i:03}-0"),
            service: format!("svc{i:03}"),
            node: format!("node-{}", i % 4),
        })
        .collect();
    TopologyManifest::new(pods).unwrap()
}
