//! Metric tool: baseline statistics and n-sigma anomaly retrieval.
//!
//! For each metric of a component the tool compares values inside a local
//! window `[t0 - delta, t0 + delta]` against a historical mean and population
//! standard deviation fitted over a reference window. A metric is returned
//! iff some window value deviates from the mean by strictly more than
//! `n * sigma`. For pods, the hosting node's metrics are examined as well.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ComponentRef, Level, MetricPoint, TopologyManifest};

/// Identity of one metric series.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MetricKey {
    pub component_id: String,
    pub metric_name: String,
}

impl MetricKey {
    pub fn new(component_id: impl Into<String>, metric_name: impl Into<String>) -> Self {
        MetricKey {
            component_id: component_id.into(),
            metric_name: metric_name.into(),
        }
    }
}

/// Immutable store of metric series, each sorted by timestamp.
///
/// Duplicate timestamps are kept in ingest order (stable sort).
#[derive(Debug, Clone, Default)]
pub struct MetricStore {
    series: BTreeMap<MetricKey, Vec<(i64, f64)>>,
}

impl MetricStore {
    pub fn from_points(points: Vec<MetricPoint>) -> Self {
        let mut series: BTreeMap<MetricKey, Vec<(i64, f64)>> = BTreeMap::new();
        for p in points {
            series
                .entry(MetricKey::new(p.component_id, p.metric_name))
                .or_default()
                .push((p.timestamp_ms, p.value));
        }
        for points in series.values_mut() {
            points.sort_by_key(|(t, _)| *t);
        }
        MetricStore { series }
    }

    pub fn series_count(&self) -> usize {
        self.series.len()
    }

    pub fn point_count(&self) -> usize {
        self.series.values().map(Vec::len).sum()
    }

    pub fn keys(&self) -> impl Iterator<Item = &MetricKey> {
        self.series.keys()
    }

    pub fn points(&self, key: &MetricKey) -> Option<&[(i64, f64)]> {
        self.series.get(key).map(Vec::as_slice)
    }

    /// Keys whose series belongs to the given component, in sorted order.
    pub fn keys_of_component<'a>(
        &'a self,
        component_id: &'a str,
    ) -> impl Iterator<Item = &'a MetricKey> {
        self.series
            .keys()
            .filter(move |k| k.component_id == component_id)
    }

    /// Points of one series restricted to `[start, end]`, both inclusive.
    pub fn window(&self, key: &MetricKey, start: i64, end: i64) -> &[(i64, f64)] {
        let Some(points) = self.series.get(key) else {
            return &[];
        };
        let lo = points.partition_point(|(t, _)| *t < start);
        let hi = points.partition_point(|(t, _)| *t <= end);
        &points[lo..hi]
    }

    /// Flattens the store back into points, sorted by key then timestamp.
    pub fn to_points(&self) -> Vec<MetricPoint> {
        self.series
            .iter()
            .flat_map(|(k, pts)| {
                pts.iter().map(move |(t, v)| MetricPoint {
                    timestamp_ms: *t,
                    component_id: k.component_id.clone(),
                    metric_name: k.metric_name.clone(),
                    value: *v,
                })
            })
            .collect()
    }
}

/// Historical mean and population standard deviation of one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub key: MetricKey,
    pub mean: f64,
    /// Population standard deviation (defined for a single sample as 0).
    pub std_dev: f64,
    pub sample_count: usize,
}

/// Baselines for every series of a store.
pub type BaselineTable = BTreeMap<MetricKey, BaselineStats>;

/// How the reference window for baseline fitting is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum ReferenceWindowPolicy {
    /// All data strictly before `t0 - delta`. Excluding the local window
    /// keeps the fault out of the baseline.
    #[default]
    AllBefore,
    /// An explicit closed interval.
    Fixed { start_ms: i64, end_ms: i64 },
}

/// Fits mean and population standard deviation over `[start, end]`.
pub fn fit_baseline(
    store: &MetricStore,
    key: &MetricKey,
    start_ms: i64,
    end_ms: i64,
) -> Result<BaselineStats, MetricError> {
    let points = store.window(key, start_ms, end_ms);
    if points.is_empty() {
        return Err(MetricError::EmptyWindow(key.clone()));
    }
    let n = points.len() as f64;
    let mean = points.iter().map(|(_, v)| v).sum::<f64>() / n;
    let var = points
        .iter()
        .map(|(_, v)| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    Ok(BaselineStats {
        key: key.clone(),
        mean,
        std_dev: var.sqrt(),
        sample_count: points.len(),
    })
}

/// Fits baselines for every series in the store under the given policy.
/// Series with no data in the reference window are skipped; querying them
/// later surfaces `MissingBaseline`.
pub fn fit_baselines(
    store: &MetricStore,
    policy: ReferenceWindowPolicy,
    t0_ms: i64,
    delta_ms: i64,
) -> BaselineTable {
    let (start, end) = match policy {
        ReferenceWindowPolicy::AllBefore => (i64::MIN, t0_ms - delta_ms - 1),
        ReferenceWindowPolicy::Fixed { start_ms, end_ms } => (start_ms, end_ms),
    };
    let mut table = BaselineTable::new();
    for key in store.keys() {
        if let Ok(stats) = fit_baseline(store, key, start, end) {
            table.insert(key.clone(), stats);
        }
    }
    table
}

/// One metric flagged by the n-sigma test, with its local trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAnomaly {
    pub key: MetricKey,
    /// Points inside the window where `|v - mean| > n * sigma` holds.
    pub flagged_points: Vec<(i64, f64)>,
    /// All points inside the window, flagged or not.
    pub trajectory: Vec<(i64, f64)>,
    /// Largest deviation observed in the window, in sigmas. Infinite when
    /// the baseline deviation is zero and any value moved at all.
    pub max_deviation_sigmas: f64,
}

/// Metric keys examined for a component: its own series plus, for pods,
/// the hosting node's series. Sorted and deduplicated.
pub fn metric_keys_for(
    store: &MetricStore,
    component: &ComponentRef,
    manifest: &TopologyManifest,
) -> Vec<MetricKey> {
    let mut keys: Vec<MetricKey> = store.keys_of_component(&component.name).cloned().collect();
    if component.level == Level::Pod {
        if let Some(node) = manifest.node_of(&component.name) {
            keys.extend(store.keys_of_component(node).cloned());
        }
    }
    keys.sort();
    keys.dedup();
    keys
}

/// Returns every metric of the component whose local window contains at
/// least one point deviating more than `n` sigmas from its baseline.
pub fn query_anomalous_metrics(
    store: &MetricStore,
    t0_ms: i64,
    delta_ms: i64,
    component: &ComponentRef,
    manifest: &TopologyManifest,
    n: f64,
    baselines: &BaselineTable,
) -> Result<Vec<MetricAnomaly>, MetricError> {
    if n <= 0.0 {
        return Err(MetricError::NonPositiveThreshold(n));
    }
    if delta_ms <= 0 {
        return Err(MetricError::NonPositiveDelta(delta_ms));
    }
    let mut anomalies = Vec::new();
    for key in metric_keys_for(store, component, manifest) {
        let stats = baselines
            .get(&key)
            .ok_or_else(|| MetricError::MissingBaseline(key.clone()))?;
        let window = store.window(&key, t0_ms - delta_ms, t0_ms + delta_ms);
        if window.is_empty() {
            continue;
        }
        let mut flagged = Vec::new();
        let mut max_sigmas = 0.0_f64;
        for &(t, v) in window {
            let dev = (v - stats.mean).abs();
            if dev > n * stats.std_dev {
                flagged.push((t, v));
            }
            let sigmas = if stats.std_dev > 0.0 {
                dev / stats.std_dev
            } else if dev > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            max_sigmas = max_sigmas.max(sigmas);
        }
        if !flagged.is_empty() {
            anomalies.push(MetricAnomaly {
                key,
                flagged_points: flagged,
                trajectory: window.to_vec(),
                max_deviation_sigmas: max_sigmas,
            });
        }
    }
    Ok(anomalies)
}

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("no points in reference window for {0:?}")]
    EmptyWindow(MetricKey),
    #[error("no baseline fitted for {0:?}")]
    MissingBaseline(MetricKey),
    #[error("n-sigma threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
    #[error("delta must be positive, got {0}")]
    NonPositiveDelta(i64),
}
