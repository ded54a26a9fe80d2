//! Tracing, metric aggregation, recovery-time measurement, and canonical
//! report serialization and comparison.
//!
//! Reports serialize with a fixed field order and every float printed with
//! exactly three decimals, so identical runs produce identical bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::platform::{InstanceId, ServiceKind, UtilizationSamples};
use crate::resilience::Caller;
use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Timeout,
    InstanceCrashed,
    Rejected,
    FastFail,
    BulkheadFull,
    Degraded,
    BusinessFailure,
    NoHealthyInstance,
    /// The callee answered with the failure of one of its own downstream calls.
    DependencyFailed,
    /// The caller gave up on the call (its own request ended first).
    Cancelled,
}

impl Outcome {
    pub fn is_success(self) -> bool {
        self == Outcome::Success
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

/// One hop of one trace. The root span of a trace is the gateway span.
#[derive(Debug, Clone, PartialEq)]
pub struct Span {
    pub trace_id: u64,
    pub span_id: u64,
    pub parent: Option<u64>,
    pub caller: Caller,
    pub callee: Option<ServiceKind>,
    pub endpoint: Arc<str>,
    pub instance: Option<InstanceId>,
    pub attempt: u32,
    pub probe: bool,
    pub start: SimTime,
    pub end: Option<SimTime>,
    pub outcome: Option<Outcome>,
    /// Trace that caused this one (asynchronous follow-up work).
    pub linked_trace: Option<u64>,
}

/// One client request from send to response.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub trace_id: u64,
    pub class: Arc<str>,
    pub created_at: SimTime,
    /// When the request reached the system boundary.
    pub arrived_at: Option<SimTime>,
    pub finished_at: Option<SimTime>,
    pub outcome: Option<Outcome>,
    pub request_bytes: u64,
    pub response_bytes: u64,
}

impl TraceRecord {
    pub fn latency(&self) -> Option<SimTime> {
        self.finished_at.map(|f| f - self.created_at)
    }
}

/// Float that always serializes with three decimals.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Fixed3(pub f64);

impl Serialize for Fixed3 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = if self.0.is_finite() { self.0 } else { 0.0 };
        // normalise -0.000
        let text = format!("{:.3}", v);
        let text = if text == "-0.000" { "0.000".to_string() } else { text };
        let raw = serde_json::value::RawValue::from_string(text).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Fixed3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        if !v.is_finite() {
            return Err(D::Error::custom("non-finite value"));
        }
        Ok(Fixed3(v))
    }
}

impl From<f64> for Fixed3 {
    fn from(v: f64) -> Self {
        Fixed3(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RequestCounts {
    pub issued: u64,
    pub completed: u64,
    pub rejected: u64,
    pub shed: u64,
    pub failed: u64,
    pub inflight_at_end: u64,
}

impl RequestCounts {
    pub fn conserved(&self) -> bool {
        self.issued == self.completed + self.rejected + self.shed + self.failed + self.inflight_at_end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LatencyStats {
    pub count: u64,
    pub mean: Fixed3,
    pub p50: Fixed3,
    pub p95: Fixed3,
    pub p99: Fixed3,
    pub max: Fixed3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct UtilizationStats {
    pub aggregate: Fixed3,
    pub per_service: BTreeMap<String, Fixed3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub start_ms: Fixed3,
    pub end_ms: Fixed3,
    pub arrivals: u64,
    pub completed: u64,
    pub errors: u64,
    pub mean_ms: Fixed3,
    pub p95_ms: Fixed3,
    pub tps: Fixed3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelinePoint {
    pub t_ms: Fixed3,
    pub service: String,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SagaStats {
    pub started: u64,
    pub completed: u64,
    pub compensated: u64,
    pub stuck: u64,
    pub running: u64,
    pub residue_violations: u64,
    pub notifications_enqueued: u64,
    pub notifications_delivered: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AuditStats {
    pub conservation_ok: bool,
    pub span_conservation_ok: bool,
    pub attempts_started: u64,
    pub spans_closed: u64,
    pub spans_pending: u64,
    pub trace_tree_ok: bool,
    pub dispatch_count: u64,
    pub dispatch_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub family: String,
    pub seed: u64,
    pub mode: String,
    pub duration_ms: Fixed3,
    pub warmup_ms: Fixed3,
    pub requests: RequestCounts,
    pub latency_ms: LatencyStats,
    pub throughput_tps: Fixed3,
    pub error_rate: Fixed3,
    pub degraded_rate: Fixed3,
    pub cpu_percent: UtilizationStats,
    pub memory_percent: UtilizationStats,
    pub network_kbps: Fixed3,
    pub network_entry_delay_ms: Fixed3,
    pub recovery_time_ms: Option<Fixed3>,
    #[serde(default)]
    pub saga: SagaStats,
    pub audit: AuditStats,
    pub windows: Vec<WindowStats>,
    pub instance_timeline: Vec<TimelinePoint>,
}

impl MetricsReport {
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TelemetryError {
    #[error("no requests completed in the measurement window")]
    EmptyMeasurementWindow,
    #[error("the system never recovered before the run ended")]
    NeverRecovered,
    #[error("reports come from different scenario families: `{0}` vs `{1}`")]
    ScenarioMismatch(String, String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("malformed assertion `{0}` (expected metric:A<B)")]
    BadAssertion(String),
}

/// Nearest-rank percentile of an ascending slice.
pub fn nearest_rank(sorted: &[u64], pct: f64) -> u64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

fn us_to_ms(us: f64) -> f64 {
    us / 1_000.0
}

pub fn latency_stats(lat_us: &mut [u64]) -> LatencyStats {
    if lat_us.is_empty() {
        return LatencyStats::default();
    }
    lat_us.sort_unstable();
    let sum: u128 = lat_us.iter().map(|x| u128::from(*x)).sum();
    LatencyStats {
        count: lat_us.len() as u64,
        mean: Fixed3(us_to_ms(sum as f64 / lat_us.len() as f64)),
        p50: Fixed3(us_to_ms(nearest_rank(lat_us, 50.0) as f64)),
        p95: Fixed3(us_to_ms(nearest_rank(lat_us, 95.0) as f64)),
        p99: Fixed3(us_to_ms(nearest_rank(lat_us, 99.0) as f64)),
        max: Fixed3(us_to_ms(*lat_us.last().expect("non-empty") as f64)),
    }
}

/// Synthetic memory model: per-instance footprint plus per-inflight overhead,
/// as a share of node memory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryModel {
    pub footprint: f64,
    pub per_inflight: f64,
    pub node_memory: f64,
}

impl Default for MemoryModel {
    fn default() -> Self {
        MemoryModel { footprint: 64.0, per_inflight: 1.0, node_memory: 1024.0 }
    }
}

/// Everything a finished run hands to aggregation.
#[derive(Debug, Clone, Default)]
pub struct RunLog {
    pub scenario: String,
    pub family: String,
    pub seed: u64,
    pub mode: String,
    pub duration: SimTime,
    pub traces: Vec<TraceRecord>,
    pub spans: Vec<Span>,
    pub counts: RequestCounts,
    pub utilization: UtilizationSamples,
    /// Pools reported per service, with their report label.
    pub services: Vec<(ServiceKind, String)>,
    pub timeline: Vec<(SimTime, ServiceKind, u32)>,
    pub entry_delay_ms: f64,
    pub fault_inject: Option<SimTime>,
    pub report_window: SimTime,
    pub attempts_started: u64,
    pub saga: SagaStats,
    pub dispatch_count: u64,
    pub dispatch_digest: u64,
    pub memory: MemoryModel,
}

/// Aggregate a run over the measurement window `[warmup, duration]`.
pub fn aggregate(log: &RunLog, warmup: SimTime) -> Result<MetricsReport, TelemetryError> {
    let end = log.duration;
    let measured: Vec<&TraceRecord> = log.traces.iter().filter(|t| t.created_at >= warmup && t.created_at < end).collect();
    let mut ok_lat: Vec<u64> = measured
        .iter()
        .filter(|t| t.outcome == Some(Outcome::Success))
        .filter_map(|t| t.latency().map(SimTime::micros))
        .collect();
    if ok_lat.is_empty() {
        return Err(TelemetryError::EmptyMeasurementWindow);
    }
    let window_s = (end - warmup).as_secs_f64();
    let finished = measured.iter().filter(|t| t.outcome.is_some()).count().max(1) as f64;
    let errors = measured
        .iter()
        .filter(|t| matches!(t.outcome, Some(o) if o != Outcome::Success && o != Outcome::Degraded))
        .count() as f64;
    let degraded = measured.iter().filter(|t| t.outcome == Some(Outcome::Degraded)).count() as f64;
    let latency = latency_stats(&mut ok_lat);
    let tps = latency.count as f64 / window_s;

    // client <-> gateway bytes for requests sent in the window
    let bytes: u64 = measured
        .iter()
        .map(|t| t.request_bytes + if t.outcome.is_some() { t.response_bytes } else { 0 })
        .sum();
    let network_kbps = bytes as f64 / 1_000.0 / window_s;

    let (cpu, memory) = utilization_stats(log, warmup, end);

    let recovery = log.fault_inject.and_then(|inject| {
        let base = baseline_p95(&log.traces, warmup, inject)?;
        recovery_time(&log.traces, inject, end, base, RecoveryRule::default()).ok()
    });

    let windows = window_stats(&log.traces, warmup, end, log.report_window);

    let span_pending = log.spans.iter().filter(|s| s.outcome.is_none()).count() as u64;
    let spans_closed = log.spans.len() as u64 - span_pending;
    let audit = AuditStats {
        conservation_ok: log.counts.conserved(),
        span_conservation_ok: log.attempts_started == log.spans.len() as u64,
        attempts_started: log.attempts_started,
        spans_closed,
        spans_pending: span_pending,
        trace_tree_ok: check_trace_tree(&log.spans).is_ok(),
        dispatch_count: log.dispatch_count,
        dispatch_digest: format!("{:016x}", log.dispatch_digest),
    };

    Ok(MetricsReport {
        scenario: log.scenario.clone(),
        family: log.family.clone(),
        seed: log.seed,
        mode: log.mode.clone(),
        duration_ms: Fixed3(end.as_millis_f64()),
        warmup_ms: Fixed3(warmup.as_millis_f64()),
        requests: log.counts.clone(),
        latency_ms: latency,
        throughput_tps: Fixed3(tps),
        error_rate: Fixed3(errors / finished),
        degraded_rate: Fixed3(degraded / finished),
        cpu_percent: cpu,
        memory_percent: memory,
        network_kbps: Fixed3(network_kbps),
        network_entry_delay_ms: Fixed3(log.entry_delay_ms),
        recovery_time_ms: recovery.map(|r| Fixed3(r.as_millis_f64())),
        saga: log.saga.clone(),
        audit,
        windows,
        instance_timeline: log
            .timeline
            .iter()
            .map(|(t, k, c)| TimelinePoint { t_ms: Fixed3(t.as_millis_f64()), service: k.name().to_string(), count: *c })
            .collect(),
    })
}

fn utilization_stats(log: &RunLog, from: SimTime, to: SimTime) -> (UtilizationStats, UtilizationStats) {
    let mut cpu = UtilizationStats::default();
    let mut mem = UtilizationStats::default();
    let m = log.memory;
    let mem_pct = |busy: u128, inst_us: u128| -> f64 {
        if inst_us == 0 {
            return 0.0;
        }
        let mean_inflight = busy as f64 / inst_us as f64;
        100.0 * (m.footprint + m.per_inflight * mean_inflight) / m.node_memory
    };
    let (mut tb, mut ta, mut tn) = (0u128, 0u128, 0u128);
    for (k, label) in &log.services {
        if let Ok((b, a, n)) = log.utilization.window(Some(*k), from, to) {
            let u = if a == 0 { 0.0 } else { (100.0 * b as f64 / a as f64).clamp(0.0, 100.0) };
            cpu.per_service.insert(label.clone(), Fixed3(u));
            mem.per_service.insert(label.clone(), Fixed3(mem_pct(b, n)));
            tb += b;
            ta += a;
            tn += n;
        }
    }
    cpu.aggregate = Fixed3(if ta == 0 { 0.0 } else { (100.0 * tb as f64 / ta as f64).clamp(0.0, 100.0) });
    mem.aggregate = Fixed3(mem_pct(tb, tn));
    (cpu, mem)
}

fn window_stats(traces: &[TraceRecord], from: SimTime, to: SimTime, width: SimTime) -> Vec<WindowStats> {
    if width == SimTime::ZERO {
        return vec![];
    }
    let mut out = vec![];
    let mut a = from;
    while a < to {
        let b = (a + width).min(to);
        let inw: Vec<&TraceRecord> = traces.iter().filter(|t| t.created_at >= a && t.created_at < b).collect();
        let mut lat: Vec<u64> = inw
            .iter()
            .filter(|t| t.outcome == Some(Outcome::Success))
            .filter_map(|t| t.latency().map(SimTime::micros))
            .collect();
        let errors = inw
            .iter()
            .filter(|t| matches!(t.outcome, Some(o) if o != Outcome::Success && o != Outcome::Degraded))
            .count() as u64;
        let st = latency_stats(&mut lat);
        out.push(WindowStats {
            start_ms: Fixed3(a.as_millis_f64()),
            end_ms: Fixed3(b.as_millis_f64()),
            arrivals: inw.len() as u64,
            completed: st.count,
            errors,
            mean_ms: st.mean,
            p95_ms: st.p95,
            tps: Fixed3(st.count as f64 / (b - a).as_secs_f64()),
        });
        a = b;
    }
    out
}

/// Healthy p95 of successful requests sent in `[from, until)`.
pub fn baseline_p95(traces: &[TraceRecord], from: SimTime, until: SimTime) -> Option<SimTime> {
    let mut lat: Vec<u64> = traces
        .iter()
        .filter(|t| t.created_at >= from && t.created_at < until && t.outcome == Some(Outcome::Success))
        .filter_map(|t| t.latency().map(SimTime::micros))
        .collect();
    if lat.is_empty() {
        return None;
    }
    lat.sort_unstable();
    Some(SimTime::from_micros(nearest_rank(&lat, 95.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryRule {
    pub stabilization: SimTime,
    pub tolerance: f64,
}

impl Default for RecoveryRule {
    fn default() -> Self {
        RecoveryRule { stabilization: SimTime::from_secs(1), tolerance: 1.5 }
    }
}

/// Time from `inject` to the first `t >= inject` such that every request
/// arriving in `[t, t + stabilization]` succeeded within
/// `tolerance * baseline_p95`. Arrival is entry into the system. The window
/// must lie inside the run and contain at least one request.
pub fn recovery_time(
    traces: &[TraceRecord],
    inject: SimTime,
    end: SimTime,
    baseline_p95: SimTime,
    rule: RecoveryRule,
) -> Result<SimTime, TelemetryError> {
    let limit = (baseline_p95.micros() as f64 * rule.tolerance).round() as u64;
    let mut after: Vec<(SimTime, bool)> = traces
        .iter()
        .filter_map(|t| {
            let at = t.arrived_at.unwrap_or(t.created_at);
            let good = t.outcome == Some(Outcome::Success) && t.latency().is_some_and(|l| l.micros() <= limit);
            (at >= inject).then_some((at, good))
        })
        .collect();
    after.sort_by_key(|(t, g)| (*t, !*g));
    let bad: Vec<SimTime> = after.iter().filter(|(_, g)| !*g).map(|(t, _)| *t).collect();
    let candidates = std::iter::once(inject).chain(after.iter().map(|(t, _)| *t));
    let mut bad_idx = 0;
    for t in candidates {
        let w_end = t + rule.stabilization;
        if w_end > end {
            break;
        }
        while bad_idx < bad.len() && bad[bad_idx] < t {
            bad_idx += 1;
        }
        let clean = bad_idx >= bad.len() || bad[bad_idx] > w_end;
        // non-vacuous: at least one request in the window
        let lo = after.partition_point(|(a, _)| *a < t);
        let nonempty = lo < after.len() && after[lo].0 <= w_end;
        if clean && nonempty {
            return Ok(t - inject);
        }
    }
    Err(TelemetryError::NeverRecovered)
}

/// Every span's parent exists in the same trace and encloses it in time.
pub fn check_trace_tree(spans: &[Span]) -> Result<(), String> {
    let by_id: BTreeMap<u64, &Span> = spans.iter().map(|s| (s.span_id, s)).collect();
    for s in spans {
        let Some(pid) = s.parent else { continue };
        let p = by_id.get(&pid).ok_or_else(|| format!("span {} has missing parent {pid}", s.span_id))?;
        if p.trace_id != s.trace_id {
            return Err(format!("span {} crosses traces", s.span_id));
        }
        if s.start < p.start {
            return Err(format!("span {} starts before parent {pid}", s.span_id));
        }
        match (s.end, p.end) {
            (Some(se), Some(pe)) if se > pe => return Err(format!("span {} ends after parent {pid}", s.span_id)),
            (None, Some(_)) => return Err(format!("span {} open after parent {pid} closed", s.span_id)),
            _ => {}
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ordering3 {
    #[serde(rename = "A<B")]
    Less,
    #[serde(rename = "A=B")]
    Equal,
    #[serde(rename = "A>B")]
    Greater,
}

impl Ordering3 {
    fn of(a: f64, b: f64) -> Self {
        // compare at the report's 3-decimal resolution
        let (a, b) = ((a * 1000.0).round(), (b * 1000.0).round());
        if a < b {
            Ordering3::Less
        } else if a > b {
            Ordering3::Greater
        } else {
            Ordering3::Equal
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: String,
    pub a: Fixed3,
    pub b: Fixed3,
    pub ratio: Option<Fixed3>,
    pub ordering: Ordering3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub family: String,
    pub a: String,
    pub b: String,
    pub metrics: Vec<MetricComparison>,
}

impl ComparisonReport {
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializes");
        s.push('\n');
        s
    }

    pub fn metric(&self, name: &str) -> Option<&MetricComparison> {
        self.metrics.iter().find(|m| m.metric == name)
    }
}

pub const COMPARED_METRICS: [&str; 10] = [
    "latency", "p50", "p95", "p99", "throughput", "cpu", "memory", "network", "error_rate", "recovery",
];

pub fn metric_value(r: &MetricsReport, metric: &str) -> Result<Option<f64>, TelemetryError> {
    Ok(match metric {
        "latency" => Some(r.latency_ms.mean.0),
        "p50" => Some(r.latency_ms.p50.0),
        "p95" => Some(r.latency_ms.p95.0),
        "p99" => Some(r.latency_ms.p99.0),
        "throughput" => Some(r.throughput_tps.0),
        "cpu" => Some(r.cpu_percent.aggregate.0),
        "memory" => Some(r.memory_percent.aggregate.0),
        "network" => Some(r.network_kbps.0),
        "network_delay" => Some(r.network_entry_delay_ms.0),
        "error_rate" => Some(r.error_rate.0),
        "recovery" => r.recovery_time_ms.map(|x| x.0),
        other => return Err(TelemetryError::UnknownMetric(other.to_string())),
    })
}

fn compare_metric(name: &str, a: f64, b: f64) -> MetricComparison {
    MetricComparison {
        metric: name.to_string(),
        a: Fixed3(a),
        b: Fixed3(b),
        ratio: if b != 0.0 { Some(Fixed3(a / b)) } else if a == 0.0 { Some(Fixed3(1.0)) } else { None },
        ordering: Ordering3::of(a, b),
    }
}

pub fn compare(a: &MetricsReport, b: &MetricsReport) -> Result<ComparisonReport, TelemetryError> {
    if a.family != b.family {
        return Err(TelemetryError::ScenarioMismatch(a.family.clone(), b.family.clone()));
    }
    let mut metrics = Vec::new();
    for m in COMPARED_METRICS {
        if let (Some(x), Some(y)) = (metric_value(a, m)?, metric_value(b, m)?) {
            metrics.push(compare_metric(m, x, y));
        }
    }
    Ok(ComparisonReport { family: a.family.clone(), a: a.scenario.clone(), b: b.scenario.clone(), metrics })
}

/// Parse and check `metric:A<B` style assertions against a comparison.
pub fn check_assertion(cmp: &ComparisonReport, assertion: &str) -> Result<bool, TelemetryError> {
    let bad = || TelemetryError::BadAssertion(assertion.to_string());
    let (metric, rel) = assertion.split_once(':').ok_or_else(bad)?;
    if !COMPARED_METRICS.contains(&metric) {
        return Err(TelemetryError::UnknownMetric(metric.to_string()));
    }
    let Some(m) = cmp.metric(metric) else { return Ok(false) };
    let o = m.ordering;
    Ok(match rel.replace(' ', "").as_str() {
        "A<B" => o == Ordering3::Less,
        "A>B" => o == Ordering3::Greater,
        "A=B" | "A==B" => o == Ordering3::Equal,
        "A<=B" => o != Ordering3::Greater,
        "A>=B" => o != Ordering3::Less,
        _ => return Err(bad()),
    })
}

/// Comparison of a paired suite: one row per scenario family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub scenario: String,
    pub metric: String,
    pub mcf: Option<Fixed3>,
    pub monolith: Option<Fixed3>,
    pub ratio: Option<Fixed3>,
    pub ordering: Option<Ordering3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteComparison {
    pub rows: Vec<SuiteRow>,
    pub comparisons: Vec<ComparisonReport>,
}

impl SuiteComparison {
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializes");
        s.push('\n');
        s
    }
}

pub fn suite_row(label: &str, metric: &str, a: Option<f64>, b: Option<f64>) -> SuiteRow {
    let (ratio, ordering) = match (a, b) {
        (Some(x), Some(y)) => {
            let c = compare_metric(metric, x, y);
            (c.ratio, Some(c.ordering))
        }
        _ => (None, None),
    };
    SuiteRow {
        scenario: label.to_string(),
        metric: metric.to_string(),
        mcf: a.map(Fixed3),
        monolith: b.map(Fixed3),
        ratio,
        ordering,
    }
}

pub const TABLE_HEADER: &str =
    "Concurrent Users,Response Time (ms),Throughput (TPS),CPU Utilization (%),Memory Utilization (%),Network Usage (KB/s)";

/// One row of the scalability table.
pub fn table_row(axis: &str, r: &MetricsReport) -> String {
    format!(
        "{},{:.3},{:.3},{:.3},{:.3},{:.3}",
        axis,
        r.latency_ms.mean.0,
        r.throughput_tps.0,
        r.cpu_percent.aggregate.0,
        r.memory_percent.aggregate.0,
        r.network_kbps.0
    )
}
