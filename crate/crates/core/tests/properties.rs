//! Property tests for the invariants the modules promise: tool monotonicity,
//! oracle equivalence for log retrieval, lossless evidence parsing, score
//! monotonicity, ranking consistency, and ingestion round-trips.

mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use common::tree_manifest;
use rcl_core::ingest;
use rcl_core::logtool::{query_logs, relevance, LogStore, RelevanceRule};
use rcl_core::metric::{
    query_anomalous_metrics, BaselineStats, BaselineTable, MetricKey, MetricStore,
};
use rcl_core::model::{
    ComponentRef, LogEntry, MetricPoint, PodEntry, Severity, Span, TopologyManifest,
};
use rcl_core::orchestrator::build_evidence_graph;
use rcl_core::reasoner::{
    heuristic_consolidate, parse_consolidated_evidence, parse_self_evidence, ConsolidatedEvidence,
    HeuristicConfig, SelfEvidence,
};
use rcl_core::synthesizer::{expand_candidates, score_candidate, synthesize, ScoreWeights};
use rcl_core::trace::build_trace_graph;

fn severity_strategy() -> impl Strategy<Value = Severity> {
    prop_oneof![
        Just(Severity::Trace),
        Just(Severity::Debug),
        Just(Severity::Info),
        Just(Severity::Warn),
        Just(Severity::Error),
        Just(Severity::Fatal),
    ]
}

fn metric_points_strategy() -> impl Strategy<Value = Vec<MetricPoint>> {
    prop::collection::vec(
        (
            -500i64..500,
            prop_oneof![Just("pod-a"), Just("node-a")],
            prop_oneof![Just("m0"), Just("m1")],
            -40i32..40,
        )
            .prop_map(|(t, component, metric, v)| MetricPoint {
                timestamp_ms: t,
                component_id: component.to_string(),
                metric_name: metric.to_string(),
                value: v as f64 / 4.0,
            }),
        0..120,
    )
}

fn baselines_for(store: &MetricStore, sigma: f64) -> BaselineTable {
    let mut table = BaselineTable::new();
    for key in store.keys() {
        table.insert(
            key.clone(),
            BaselineStats {
                key: key.clone(),
                mean: 0.0,
                std_dev: sigma,
                sample_count: 8,
            },
        );
    }
    table
}

fn pod_manifest() -> TopologyManifest {
    TopologyManifest::new(vec![PodEntry {
        name: "pod-a".into(),
        service: "svc-a".into(),
        node: "node-a".into(),
    }])
    .unwrap()
}

proptest! {
    /// Shrinking the window never adds anomalies, per metric key.
    #[test]
    fn metric_window_monotonicity(points in metric_points_strategy(),
                                  delta_small in 1i64..200,
                                  extra in 1i64..300,
                                  sigma in 0.0f64..2.0) {
        let store = MetricStore::from_points(points);
        let baselines = baselines_for(&store, sigma);
        let manifest = pod_manifest();
        let component = ComponentRef::pod("pod-a");
        let small = query_anomalous_metrics(
            &store, 0, delta_small, &component, &manifest, 3.0, &baselines).unwrap();
        let large = query_anomalous_metrics(
            &store, 0, delta_small + extra, &component, &manifest, 3.0, &baselines).unwrap();
        let small_keys: Vec<&MetricKey> = small.iter().map(|a| &a.key).collect();
        let large_keys: Vec<&MetricKey> = large.iter().map(|a| &a.key).collect();
        for key in &small_keys {
            prop_assert!(large_keys.contains(key),
                "metric {key:?} flagged in the narrow window but not the wide one");
        }
    }

    /// Raising the threshold never adds anomalies.
    #[test]
    fn metric_threshold_monotonicity(points in metric_points_strategy(),
                                     n_low in 0.5f64..3.0,
                                     bump in 0.1f64..3.0,
                                     sigma in 0.0f64..2.0) {
        let store = MetricStore::from_points(points);
        let baselines = baselines_for(&store, sigma);
        let manifest = pod_manifest();
        let component = ComponentRef::pod("pod-a");
        let low = query_anomalous_metrics(
            &store, 0, 250, &component, &manifest, n_low, &baselines).unwrap();
        let high = query_anomalous_metrics(
            &store, 0, 250, &component, &manifest, n_low + bump, &baselines).unwrap();
        let low_keys: Vec<&MetricKey> = low.iter().map(|a| &a.key).collect();
        for anomaly in &high {
            prop_assert!(low_keys.contains(&&anomaly.key));
        }
    }

    /// With a zero-deviation baseline, a series is flagged iff any window
    /// value differs from the mean.
    #[test]
    fn metric_zero_sigma_flags_any_deviation(values in prop::collection::vec(-10i32..10, 1..30)) {
        let points: Vec<MetricPoint> = values.iter().enumerate().map(|(i, v)| MetricPoint {
            timestamp_ms: i as i64,
            component_id: "pod-a".into(),
            metric_name: "m0".into(),
            value: *v as f64,
        }).collect();
        let store = MetricStore::from_points(points);
        let mut baselines = BaselineTable::new();
        let key = MetricKey::new("pod-a", "m0");
        baselines.insert(key.clone(), BaselineStats {
            key: key.clone(), mean: 0.0, std_dev: 0.0, sample_count: 4,
        });
        let got = query_anomalous_metrics(
            &store, 500, 600, &ComponentRef::pod("pod-a"), &pod_manifest(), 3.0, &baselines,
        );
        let got = got.unwrap();
        let any_deviation = values.iter().any(|v| *v != 0);
        prop_assert_eq!(!got.is_empty(), any_deviation);
    }

    /// The log query equals the brute-force filter whenever the match count
    /// stays under the cap, and is a sorted prefix-subset otherwise.
    #[test]
    fn log_query_oracle_equivalence(
        entries in prop::collection::vec(
            (-400i64..400, severity_strategy(), prop_oneof![
                Just("health check ok"),
                Just("connection timeout to upstream"),
                Just("request failed: exception"),
                Just("user logged in"),
            ]),
            0..150,
        ),
        delta in 1i64..400,
        max_entries in 1usize..40,
    ) {
        let entries: Vec<LogEntry> = entries.into_iter().map(|(t, severity, msg)| LogEntry {
            timestamp_ms: t,
            component_id: "pod-a".into(),
            severity,
            message: msg.into(),
        }).collect();
        let rule = RelevanceRule::default();

        // Independent oracle over the raw entries.
        let mut expected: Vec<LogEntry> = entries
            .iter()
            .filter(|e| e.timestamp_ms >= -delta && e.timestamp_ms <= delta)
            .filter(|e| relevance(e, &rule))
            .cloned()
            .collect();
        expected.sort_by_key(|e| e.timestamp_ms);

        let store = LogStore::from_entries(entries);
        let got = query_logs(
            &store, 0, delta, &ComponentRef::pod("pod-a"), &pod_manifest(), &rule, max_entries);

        prop_assert!(got.entries.windows(2).all(|w| w[0].timestamp_ms <= w[1].timestamp_ms));
        if expected.len() <= max_entries {
            prop_assert!(!got.truncated);
            prop_assert_eq!(got.entries, expected);
        } else {
            prop_assert!(got.truncated);
            prop_assert_eq!(got.entries.len(), max_entries);
            prop_assert_eq!(&got.entries[..], &expected[..max_entries]);
        }
    }

    /// Parsing a serialized evidence recovers it exactly (fields within
    /// caps, confidence already in range).
    #[test]
    fn evidence_parse_render_lossless(
        span_id in "[a-z0-9-]{1,12}",
        service in "[a-z0-9-]{1,12}",
        abnormal in any::<bool>(),
        symptoms in "[ -~]{0,120}",
        hypothesis in "[ -~]{0,120}",
        rc in prop_oneof![Just("self".to_string()), "[a-z0-9-]{1,12}"],
        confidence in 0.0f64..=1.0,
        wrap in any::<bool>(),
    ) {
        let evidence = SelfEvidence {
            span_id: span_id.clone(),
            service: service.clone(),
            is_abnormal: abnormal,
            key_symptoms: symptoms.clone(),
            hypothesis: hypothesis.clone(),
        };
        let mut text = serde_json::to_string(&evidence).unwrap();
        if wrap {
            text = format!("Sure!\n```json\n{text}\n```\ndone");
        }
        let parsed = parse_self_evidence(&text).unwrap();
        prop_assert_eq!(parsed, evidence);

        let consolidated = ConsolidatedEvidence {
            span_id,
            service,
            local_root_cause: rc,
            reason: hypothesis,
            confidence,
        };
        let text = serde_json::to_string(&consolidated).unwrap();
        let parsed = parse_consolidated_evidence(&text).unwrap();
        prop_assert_eq!(parsed, consolidated);
    }

    /// Consolidation output confidence always lies in [0, 1].
    #[test]
    fn consolidation_confidence_in_range(
        abnormal in any::<bool>(),
        confs in prop::collection::vec(0.0f64..=1.0, 0..6),
        share in prop::option::of(0.0f64..=1.0),
    ) {
        let evidence = SelfEvidence {
            span_id: "s".into(),
            service: "svc".into(),
            is_abnormal: abnormal,
            key_symptoms: "k".into(),
            hypothesis: "h".into(),
        };
        let downstream: Vec<ConsolidatedEvidence> = confs.iter().enumerate().map(|(i, c)| {
            ConsolidatedEvidence {
                span_id: format!("c{i}"),
                service: format!("svc{i}"),
                local_root_cause: format!("pod{i}"),
                reason: "r".into(),
                confidence: *c,
            }
        }).collect();
        let out = heuristic_consolidate(
            &evidence, &downstream, share, &HeuristicConfig::default());
        prop_assert!((0.0..=1.0).contains(&out.confidence));
    }
}

/// Builds a random tree over the shared test manifest with a chosen
/// abnormal set, returning what the synthesizer consumes.
fn tree_with_abnormal(
    n: usize,
    parents: &[usize],
    abnormal: &[bool],
) -> (
    rcl_core::trace::TraceGraph,
    rcl_core::evidence::GlobalEvidenceGraph,
) {
    let spans: Vec<Span> = (0..n)
        .map(|i| Span {
            trace_id: "t".into(),
            span_id: format!("sx{i:03}"),
            parent_span_id: if i == 0 {
                None
            } else {
                Some(format!("sx{:03}", parents[i] % i))
            },
            timestamp_ms: 1_000 + i as i64,
            service: format!("svc{:03}", i % 40),
            pod: format!("svc{:03}-0", i % 40),
            operation: "op".into(),
            duration_ms: 100,
            status: "0".into(),
        })
        .collect();
    let graph = build_trace_graph(&spans, "t").unwrap();
    let mut evidences = BTreeMap::new();
    for (i, id) in (0..n).map(|i| (i, format!("sx{i:03}"))) {
        let span = graph.span(&id).unwrap();
        evidences.insert(
            id.clone(),
            SelfEvidence {
                span_id: id.clone(),
                service: span.service.clone(),
                is_abnormal: abnormal[i],
                key_symptoms: "k".into(),
                hypothesis: "h".into(),
            },
        );
    }
    let evidence_graph = build_evidence_graph(&graph, &evidences).unwrap();
    (graph, evidence_graph)
}

fn root_evidence(rc: &str, confidence: f64) -> ConsolidatedEvidence {
    ConsolidatedEvidence {
        span_id: "sx000".into(),
        service: "svc000".into(),
        local_root_cause: rc.into(),
        reason: "fixed".into(),
        confidence,
    }
}

proptest! {
    /// Flipping one more node (whose pod resolves to the candidate) to
    /// abnormal never lowers the candidate's score, for a fixed root report.
    #[test]
    fn score_monotone_in_support(
        n in 2usize..24,
        parents in prop::collection::vec(0usize..64, 24),
        mut abnormal in prop::collection::vec(any::<bool>(), 24),
        flip in 0usize..24,
        conf in 0.0f64..=1.0,
    ) {
        let manifest = tree_manifest();
        let weights = ScoreWeights::default();
        let flip = flip % n;
        abnormal[flip] = false;
        // Something must be abnormal before and after the flip, otherwise
        // the candidate universe switches definition.
        prop_assume!(abnormal[..n].iter().any(|a| *a));

        let (graph, before_graph) = tree_with_abnormal(n, &parents, &abnormal);
        let root = root_evidence("svc001-0", conf);
        // The candidate the flipped span's pod resolves to: its service.
        let flipped_pod = graph.span(&format!("sx{flip:03}")).unwrap().pod.clone();
        let candidate = ComponentRef::service(
            manifest.service_of(&flipped_pod).unwrap().to_string());

        let (before, _, _) = score_candidate(
            &candidate, &root, &before_graph, &graph, &manifest, &weights);
        abnormal[flip] = true;
        let (_, after_graph) = tree_with_abnormal(n, &parents, &abnormal);
        let (after, _, _) = score_candidate(
            &candidate, &root, &after_graph, &graph, &manifest, &weights);
        prop_assert!(after + 1e-12 >= before,
            "score dropped from {before} to {after} after adding support");
    }

    /// The produced ordering equals an independent brute-force sort of
    /// score_candidate over the full candidate set.
    #[test]
    fn ranking_equals_brute_force_sort(
        n in 1usize..24,
        parents in prop::collection::vec(0usize..64, 24),
        abnormal in prop::collection::vec(any::<bool>(), 24),
        conf in 0.0f64..=1.0,
    ) {
        let manifest = tree_manifest();
        let weights = ScoreWeights::default();
        let (graph, evidence_graph) = tree_with_abnormal(n, &parents, &abnormal);
        let root = rcl_core::orchestrator::RootReport {
            evidence: root_evidence("self", conf),
        };
        let diagnosis = synthesize(
            &root, &evidence_graph, &graph, &manifest, 50, &weights).unwrap();

        let mut brute: Vec<(f64, ComponentRef)> =
            expand_candidates(&evidence_graph, &graph, &manifest)
                .unwrap()
                .into_iter()
                .map(|c| {
                    let (score, _, _) = score_candidate(
                        &c, &root.evidence, &evidence_graph, &graph, &manifest, &weights);
                    (score, c)
                })
                .collect();
        brute.sort_by(|a, b| {
            b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1))
        });
        let brute_order: Vec<ComponentRef> =
            brute.into_iter().take(50).map(|(_, c)| c).collect();
        let got_order: Vec<ComponentRef> =
            diagnosis.candidates.iter().map(|c| c.component.clone()).collect();
        prop_assert_eq!(got_order, brute_order);
    }
}

#[test]
fn ingestion_round_trip_property() {
    // Hand-rolled cases plus a few random ones; serialize then reload and
    // compare field-by-field.
    let dir = tempfile::tempdir().unwrap();
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(55);
    for case in 0..25 {
        let n = rng.random_range(1..40);
        let spans: Vec<Span> = (0..n)
            .map(|i| Span {
                trace_id: format!("t-{case}"),
                span_id: format!("s-{i:03}"),
                parent_span_id: if i == 0 {
                    None
                } else {
                    Some(format!("s-{:03}", i - 1))
                },
                timestamp_ms: rng.random_range(0..10_000),
                service: format!("svc-{}", rng.random_range(0..5)),
                pod: format!("pod-{}", rng.random_range(0..9)),
                operation: "op/x,with-comma".into(),
                duration_ms: rng.random_range(0..100_000),
                status: ["0", "200", "500"][rng.random_range(0..3)].into(),
            })
            .collect();
        let traces_path = dir.path().join("traces.csv");
        ingest::write_traces(&traces_path, &spans).unwrap();
        assert_eq!(ingest::load_traces(&traces_path).unwrap(), spans);

        let points: Vec<MetricPoint> = (0..rng.random_range(1..60))
            .map(|_| MetricPoint {
                timestamp_ms: rng.random_range(-5_000..5_000),
                component_id: format!("pod-{}", rng.random_range(0..4)),
                metric_name: format!("m{}", rng.random_range(0..3)),
                value: rng.random_range(-4_000..4_000) as f64 / 8.0,
            })
            .collect();
        let metrics_path = dir.path().join("metrics.csv");
        ingest::write_metrics(&metrics_path, &points).unwrap();
        let loaded = ingest::load_metrics(&metrics_path).unwrap();
        assert_eq!(loaded.to_points().len(), points.len());
        assert_eq!(
            MetricStore::from_points(points).to_points(),
            loaded.to_points()
        );

        let entries: Vec<LogEntry> = (0..rng.random_range(1..40))
            .map(|_| LogEntry {
                timestamp_ms: rng.random_range(0..9_000),
                component_id: format!("pod-{}", rng.random_range(0..4)),
                severity: [Severity::Info, Severity::Warn, Severity::Error][rng.random_range(0..3)],
                message: "text with \"quotes\" and unicode: ok".into(),
            })
            .collect();
        let logs_path = dir.path().join("logs.jsonl");
        ingest::write_logs(&logs_path, &entries).unwrap();
        let (loaded, stats) = ingest::load_logs(&logs_path).unwrap();
        assert_eq!(stats.unknown_severities, 0);
        assert_eq!(
            loaded.to_entries(),
            LogStore::from_entries(entries).to_entries()
        );
    }
}
