//! Fault-tolerance building blocks: circuit breaker, retry policy, bulkhead,
//! load-shedding controller, and the durable message queue behind async
//! notification delivery.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::control::ConfigStore;
use crate::platform::{Criticality, ServiceKind};
use crate::rng::RandomStream;
use crate::sim::SimTime;
use crate::telemetry::Outcome;
use crate::traffic::RouteTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Caller {
    Client,
    Gateway,
    Service(ServiceKind),
}

impl Caller {
    pub fn name(self) -> &'static str {
        match self {
            Caller::Client => "client",
            Caller::Gateway => "gateway",
            Caller::Service(k) => k.name(),
        }
    }
}

/// Breaker scope: calls from one caller to one callee service.
pub type Scope = (Caller, ServiceKind);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakerParams {
    pub window: usize,
    pub min_calls: usize,
    pub failure_ratio: f64,
    pub open_duration: SimTime,
    pub half_open_probes: u32,
}

impl Default for BreakerParams {
    fn default() -> Self {
        BreakerParams::from_config(&ConfigStore::default())
    }
}

impl BreakerParams {
    pub fn from_config(c: &ConfigStore) -> Self {
        BreakerParams {
            window: c.u64("breaker.window").max(1) as usize,
            min_calls: c.u64("breaker.min_calls") as usize,
            failure_ratio: c.f64("breaker.failure_ratio"),
            open_duration: c.millis("breaker.open_ms"),
            half_open_probes: c.u64("breaker.half_open_probes").max(1) as u32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakerState {
    Closed,
    Open { opened_at: SimTime },
    HalfOpen { probes_issued: u32, successes: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakerDecision {
    Admit,
    AdmitProbe,
    FastFail,
}

/// Ticket handed out on admission. Outcomes are only counted when the
/// breaker is still in the state (epoch) that admitted the call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Permit {
    pub epoch: u64,
    pub probe: bool,
}

/// Which outcomes count as failures for breaker purposes. Business
/// declines and propagated dependency errors are answers from a live callee.
pub fn breaker_failure(o: Outcome) -> bool {
    matches!(o, Outcome::Timeout | Outcome::InstanceCrashed | Outcome::Rejected)
}

#[derive(Debug, Clone)]
pub struct CircuitBreaker {
    state: BreakerState,
    /// true = failure
    window: VecDeque<bool>,
    epoch: u64,
    transitions: Vec<(SimTime, BreakerState)>,
}

impl Default for CircuitBreaker {
    fn default() -> Self {
        CircuitBreaker { state: BreakerState::Closed, window: VecDeque::new(), epoch: 0, transitions: Vec::new() }
    }
}

impl CircuitBreaker {
    pub fn state(&self) -> BreakerState {
        self.state
    }

    pub fn transitions(&self) -> &[(SimTime, BreakerState)] {
        &self.transitions
    }

    fn go(&mut self, now: SimTime, s: BreakerState) {
        self.state = s;
        self.epoch += 1;
        self.window.clear();
        self.transitions.push((now, s));
    }

    pub fn allow(&mut self, now: SimTime, p: &BreakerParams) -> (BreakerDecision, Option<Permit>) {
        match self.state {
            BreakerState::Closed => (BreakerDecision::Admit, Some(Permit { epoch: self.epoch, probe: false })),
            BreakerState::Open { opened_at } => {
                if now.saturating_sub(opened_at) < p.open_duration {
                    (BreakerDecision::FastFail, None)
                } else {
                    self.go(now, BreakerState::HalfOpen { probes_issued: 1, successes: 0 });
                    (BreakerDecision::AdmitProbe, Some(Permit { epoch: self.epoch, probe: true }))
                }
            }
            BreakerState::HalfOpen { probes_issued, successes } => {
                if probes_issued < p.half_open_probes {
                    self.state = BreakerState::HalfOpen { probes_issued: probes_issued + 1, successes };
                    (BreakerDecision::AdmitProbe, Some(Permit { epoch: self.epoch, probe: true }))
                } else {
                    (BreakerDecision::FastFail, None)
                }
            }
        }
    }

    /// Record the outcome of an admitted call. Returns the new state if it changed.
    pub fn record(&mut self, now: SimTime, permit: Permit, failed: bool, p: &BreakerParams) -> Option<BreakerState> {
        if permit.epoch != self.epoch {
            return None;
        }
        match self.state {
            BreakerState::Closed => {
                self.window.push_back(failed);
                while self.window.len() > p.window {
                    self.window.pop_front();
                }
                let n = self.window.len();
                let f = self.window.iter().filter(|x| **x).count();
                if n >= p.min_calls && n > 0 && f as f64 / n as f64 >= p.failure_ratio {
                    self.go(now, BreakerState::Open { opened_at: now });
                    return Some(self.state);
                }
                None
            }
            BreakerState::HalfOpen { probes_issued, successes } => {
                debug_assert!(permit.probe);
                if failed {
                    self.go(now, BreakerState::Open { opened_at: now });
                    Some(self.state)
                } else if successes + 1 >= p.half_open_probes {
                    self.go(now, BreakerState::Closed);
                    Some(self.state)
                } else {
                    self.state = BreakerState::HalfOpen { probes_issued, successes: successes + 1 };
                    None
                }
            }
            BreakerState::Open { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base: SimTime,
    pub multiplier: f64,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy::from_config(&ConfigStore::default())
    }
}

impl RetryPolicy {
    pub fn from_config(c: &ConfigStore) -> Self {
        RetryPolicy {
            max_attempts: c.u64("retry.max_attempts").max(1) as u32,
            backoff_base: c.millis("retry.backoff_ms"),
            multiplier: c.f64("retry.multiplier"),
            jitter: c.bool("retry.jitter"),
        }
    }

    pub fn retryable(o: Outcome) -> bool {
        matches!(o, Outcome::Timeout | Outcome::InstanceCrashed | Outcome::Rejected | Outcome::NoHealthyInstance)
    }

    /// Delay before attempt `failed + 1`, given `failed` attempts so far.
    pub fn backoff(&self, failed: u32, stream: Option<&mut RandomStream>) -> SimTime {
        let k = self.multiplier.powi(failed.saturating_sub(1) as i32);
        let mut us = self.backoff_base.micros() as f64 * k;
        if self.jitter {
            if let Some(s) = stream {
                us *= 0.5 + s.unit();
            }
        }
        SimTime::from_micros(us.round() as u64)
    }

    pub fn should_retry(&self, outcome: Outcome, attempts_made: u32) -> bool {
        Self::retryable(outcome) && attempts_made < self.max_attempts
    }
}

/// Concurrent outbound call caps per scope. Excess fails fast.
#[derive(Debug, Clone, Default)]
pub struct Bulkhead {
    active: BTreeMap<Scope, u32>,
    peak: BTreeMap<Scope, u32>,
}

impl Bulkhead {
    pub fn try_acquire(&mut self, scope: Scope, limit: u32) -> bool {
        let a = self.active.entry(scope).or_insert(0);
        if *a >= limit {
            return false;
        }
        *a += 1;
        let p = self.peak.entry(scope).or_insert(0);
        *p = (*p).max(*a);
        true
    }

    pub fn release(&mut self, scope: Scope) {
        if let Some(a) = self.active.get_mut(&scope) {
            *a = a.saturating_sub(1);
        }
    }

    pub fn active(&self, scope: Scope) -> u32 {
        self.active.get(&scope).copied().unwrap_or(0)
    }

    pub fn peak(&self, scope: Scope) -> u32 {
        self.peak.get(&scope).copied().unwrap_or(0)
    }

    pub fn peaks(&self) -> &BTreeMap<Scope, u32> {
        &self.peak
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradeParams {
    pub latency_ceiling_ms: f64,
    pub shed_watermark: f64,
}

/// Classes to shed: every non-critical class while either trigger holds,
/// nothing otherwise.
pub fn degrade_evaluate(routes: &RouteTable, p95_ms: Option<f64>, mean_utilization: f64, p: &DegradeParams) -> BTreeSet<String> {
    let hot = p95_ms.is_some_and(|x| x > p.latency_ceiling_ms) || mean_utilization > p.shed_watermark;
    if !hot {
        return BTreeSet::new();
    }
    routes
        .iter()
        .filter(|(_, r)| r.criticality == Criticality::NonCritical)
        .map(|(c, _)| c.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub id: u64,
    pub endpoint: String,
    pub saga: u64,
    pub trace_id: u64,
    pub enqueued_at: SimTime,
    pub deliveries: u32,
}

/// Durable queue with at-least-once delivery: a message leaves the queue only
/// when acknowledged. Unacknowledged messages go back to the front.
#[derive(Debug, Clone, Default)]
pub struct MessageQueue {
    ready: VecDeque<Message>,
    leased: BTreeMap<u64, Message>,
    next_id: u64,
    acked: BTreeMap<u64, SimTime>,
    enqueued: u64,
}

impl MessageQueue {
    pub fn enqueue(&mut self, now: SimTime, endpoint: &str, saga: u64, trace_id: u64) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.enqueued += 1;
        self.ready.push_back(Message { id, endpoint: endpoint.to_string(), saga, trace_id, enqueued_at: now, deliveries: 0 });
        id
    }

    pub fn lease(&mut self) -> Option<Message> {
        let mut m = self.ready.pop_front()?;
        m.deliveries += 1;
        self.leased.insert(m.id, m.clone());
        Some(m)
    }

    pub fn ack(&mut self, id: u64, now: SimTime) {
        if self.leased.remove(&id).is_some() {
            self.acked.entry(id).or_insert(now);
        }
    }

    pub fn nack(&mut self, id: u64) {
        if let Some(m) = self.leased.remove(&id) {
            self.ready.push_front(m);
        }
    }

    pub fn ready_len(&self) -> usize {
        self.ready.len()
    }

    pub fn leased_len(&self) -> usize {
        self.leased.len()
    }

    pub fn enqueued(&self) -> u64 {
        self.enqueued
    }

    pub fn delivered(&self) -> &BTreeMap<u64, SimTime> {
        &self.acked
    }

    pub fn undelivered(&self) -> usize {
        self.ready.len() + self.leased.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: BreakerParams = BreakerParams {
        window: 20,
        min_calls: 10,
        failure_ratio: 0.5,
        open_duration: SimTime::from_secs(5),
        half_open_probes: 3,
    };

    fn admit(b: &mut CircuitBreaker, t: SimTime) -> Permit {
        let (d, p) = b.allow(t, &P);
        assert_ne!(d, BreakerDecision::FastFail);
        p.unwrap()
    }

    #[test]
    fn closed_admits() {
        let mut b = CircuitBreaker::default();
        assert_eq!(b.allow(SimTime::ZERO, &P).0, BreakerDecision::Admit);
    }

    #[test]
    fn half_failures_over_twenty_opens() {
        let mut b = CircuitBreaker::default();
        for i in 0..20 {
            let p = admit(&mut b, SimTime::ZERO);
            let changed = b.record(SimTime::ZERO, p, i >= 10, &P);
            assert_eq!(changed.is_some(), i == 19, "call {i}");
        }
        assert_eq!(b.allow(SimTime::from_millis(1), &P).0, BreakerDecision::FastFail);
    }

    #[test]
    fn insufficient_volume_stays_closed() {
        let mut b = CircuitBreaker::default();
        for _ in 0..9 {
            let p = admit(&mut b, SimTime::ZERO);
            b.record(SimTime::ZERO, p, true, &P);
        }
        assert_eq!(b.state(), BreakerState::Closed);
    }

    #[test]
    fn probes_close_after_open_duration() {
        let mut b = CircuitBreaker::default();
        for _ in 0..10 {
            let p = admit(&mut b, SimTime::ZERO);
            b.record(SimTime::ZERO, p, true, &P);
        }
        assert!(matches!(b.state(), BreakerState::Open { .. }));
        assert_eq!(b.allow(SimTime::from_millis(4_999), &P).0, BreakerDecision::FastFail);
        let t = SimTime::from_secs(5);
        let probes: Vec<Permit> = (0..3)
            .map(|_| {
                let (d, p) = b.allow(t, &P);
                assert_eq!(d, BreakerDecision::AdmitProbe);
                p.unwrap()
            })
            .collect();
        assert_eq!(b.allow(t, &P).0, BreakerDecision::FastFail);
        for p in probes {
            b.record(t, p, false, &P);
        }
        assert_eq!(b.state(), BreakerState::Closed);
    }

    #[test]
    fn probe_failure_reopens_and_restarts_timer() {
        let mut b = CircuitBreaker::default();
        for _ in 0..10 {
            let p = admit(&mut b, SimTime::ZERO);
            b.record(SimTime::ZERO, p, true, &P);
        }
        let t = SimTime::from_secs(6);
        let p = admit(&mut b, t);
        b.record(t, p, true, &P);
        assert_eq!(b.state(), BreakerState::Open { opened_at: t });
        assert_eq!(b.allow(SimTime::from_secs(10), &P).0, BreakerDecision::FastFail);
        assert_eq!(b.allow(SimTime::from_secs(11), &P).0, BreakerDecision::AdmitProbe);
    }

    #[test]
    fn business_failure_is_not_a_breaker_failure() {
        assert!(!breaker_failure(Outcome::BusinessFailure));
        assert!(breaker_failure(Outcome::Rejected));
        assert!(!breaker_failure(Outcome::DependencyFailed));
        assert!(!RetryPolicy::retryable(Outcome::BusinessFailure));
    }

    #[test]
    fn stale_permits_ignored() {
        let mut b = CircuitBreaker::default();
        let stale = admit(&mut b, SimTime::ZERO);
        for _ in 0..10 {
            let p = admit(&mut b, SimTime::ZERO);
            b.record(SimTime::ZERO, p, true, &P);
        }
        let t = SimTime::from_secs(5);
        admit(&mut b, t);
        assert_eq!(b.record(t, stale, true, &P), None);
        assert!(matches!(b.state(), BreakerState::HalfOpen { .. }));
    }

    #[test]
    fn retry_backoff_doubles() {
        let r = RetryPolicy::default();
        assert_eq!(r.backoff(1, None), SimTime::from_millis(10));
        assert_eq!(r.backoff(2, None), SimTime::from_millis(20));
        assert!(r.should_retry(Outcome::Timeout, 2));
        assert!(!r.should_retry(Outcome::Timeout, 3));
    }

    #[test]
    fn bulkhead_limit() {
        let mut b = Bulkhead::default();
        let s = (Caller::Gateway, ServiceKind::FlightBooking);
        for _ in 0..8 {
            assert!(b.try_acquire(s, 8));
        }
        assert!(!b.try_acquire(s, 8));
        b.release(s);
        assert!(b.try_acquire(s, 8));
        assert_eq!(b.peak(s), 8);
    }

    #[test]
    fn shedding_never_touches_critical() {
        let routes = RouteTable::travel_default();
        let p = DegradeParams { latency_ceiling_ms: 200.0, shed_watermark: 90.0 };
        assert!(degrade_evaluate(&routes, Some(100.0), 10.0, &p).is_empty());
        let shed = degrade_evaluate(&routes, Some(300.0), 10.0, &p);
        assert_eq!(shed, ["search_trip".to_string(), "status_update".to_string()].into());
        assert!(!shed.contains("book_trip"));
        assert!(!degrade_evaluate(&routes, None, 95.0, &p).is_empty());
    }

    #[test]
    fn message_queue_redelivers_until_acked() {
        let mut q = MessageQueue::default();
        let id = q.enqueue(SimTime::ZERO, "notification.send", 1, 1);
        let m = q.lease().unwrap();
        q.nack(m.id);
        let m = q.lease().unwrap();
        assert_eq!(m.deliveries, 2);
        q.ack(id, SimTime::from_secs(1));
        assert_eq!(q.undelivered(), 0);
        assert!(q.delivered().contains_key(&id));
    }
}
