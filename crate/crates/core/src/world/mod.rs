//! The simulated platform: wires the engine, instances, databases, control
//! plane, traffic layer, resilience pipeline and saga coordinator together
//! and drives one scenario to a report.
//!
//! Work model: a job holds one instance slot from start to response. Its plan
//! is a list of compute bursts, sequential database queries and downstream
//! call stages. Calls go through bulkhead, breaker, discovery and balancing,
//! then a timeout-bounded attempt, retried per policy. A caller's deadline
//! bounds every nested attempt. When an attempt ends early the callee job is
//! orphaned: it stops at its next step boundary and its open calls are
//! cancelled, so span intervals always nest.

mod calls;
mod control;
mod jobs;
mod workload;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use crate::control::{ConfigStore, Registry, ScaleDecision};
use crate::platform::{
    DatabaseModel, DbOwner, DeploymentMode, EndpointSpec, InstanceId, InstanceState, ServiceInstance, ServiceKind,
    UtilizationSamples,
};
use crate::resilience::{Bulkhead, Caller, CircuitBreaker, MessageQueue, RetryPolicy, Scope};
use crate::rng::RandomStream;
use crate::saga::{LedgerResource, ReservationLedger, SagaId, SagaInstance, SagaState};
use crate::scenario::{InjectedFailure, Scenario};
use crate::sim::{Engine, EventTag, SimTime};
use crate::telemetry::{
    aggregate, MemoryModel, MetricsReport, Outcome, RequestCounts, RunLog, SagaStats, Span, TelemetryError, TraceRecord,
};
use crate::traffic::{LoadBalancer, RouteTarget};

use crate::resilience::BreakerState;

/// Events. Ids refer to entries in the world's tables; events whose target
/// no longer exists are ignored.
#[derive(Debug, Clone)]
pub(crate) enum Ev {
    Arrival { source: u32, generation: u64 },
    RateChange,
    EntryArrive { trace: u64 },
    JobStep { job: u64 },
    DbDone { job: u64, db: usize },
    AttemptSend { attempt: u64 },
    AttemptEnd { attempt: u64, outcome: Outcome },
    AttemptTimeout { attempt: u64 },
    Retry { call: u64 },
    SagaCoordinate { saga: u64, step: usize, compensation: bool },
    Deliver,
    Heartbeat { inst: u32, chain: u64 },
    HeartbeatDeadline { inst: u32, beat: SimTime },
    InstanceReady { inst: u32 },
    Restart { inst: u32 },
    FaultInject { idx: usize },
    FaultClear { idx: usize },
    ConfigUpdate { idx: usize },
    ScaleEvaluate,
    DegradeEvaluate,
    Sample { periodic: bool },
}

impl EventTag for Ev {
    fn tag(&self) -> u64 {
        let (d, id): (u64, u64) = match self {
            Ev::Arrival { source, generation } => (1, u64::from(*source) ^ (generation << 32)),
            Ev::RateChange => (2, 0),
            Ev::EntryArrive { trace } => (3, *trace),
            Ev::JobStep { job } => (4, *job),
            Ev::DbDone { job, db } => (5, job ^ ((*db as u64) << 48)),
            Ev::AttemptSend { attempt } => (6, *attempt),
            Ev::AttemptEnd { attempt, outcome } => (7, attempt ^ ((*outcome as u64) << 56)),
            Ev::AttemptTimeout { attempt } => (8, *attempt),
            Ev::Retry { call } => (9, *call),
            Ev::SagaCoordinate { saga, step, compensation } => (10, saga ^ ((*step as u64) << 48) ^ (u64::from(*compensation) << 56)),
            Ev::Deliver => (12, 0),
            Ev::Heartbeat { inst, chain } => (13, u64::from(*inst) ^ (chain << 32)),
            Ev::HeartbeatDeadline { inst, beat } => (14, u64::from(*inst) ^ (beat.micros() << 20)),
            Ev::InstanceReady { inst } => (15, u64::from(*inst)),
            Ev::Restart { inst } => (16, u64::from(*inst)),
            Ev::FaultInject { idx } => (17, *idx as u64),
            Ev::FaultClear { idx } => (18, *idx as u64),
            Ev::ConfigUpdate { idx } => (19, *idx as u64),
            Ev::ScaleEvaluate => (20, 0),
            Ev::DegradeEvaluate => (21, 0),
            Ev::Sample { periodic } => (22, u64::from(*periodic)),
        };
        d.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Source {
    User(u32),
    Open,
    Periodic(u32),
}

#[derive(Debug, Clone)]
pub(crate) struct TraceState {
    pub class: usize,
    pub source: Source,
    pub root_span: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Parent {
    Trace(u64),
    Job(u64),
    Saga { saga: u64, step: usize },
    Message(u64),
}

#[derive(Debug, Clone)]
pub(crate) struct Call {
    pub trace: u64,
    pub parent: Parent,
    pub parent_span: Option<usize>,
    pub caller: Caller,
    pub endpoint: usize,
    pub deadline: SimTime,
    pub attempts: u32,
    pub policy: RetryPolicy,
    pub bypass_breaker: bool,
    pub tried: Vec<InstanceId>,
    pub current: Option<u64>,
    pub saga: Option<SagaId>,
    pub link: Option<u64>,
    pub session: u64,
}

#[derive(Debug, Clone)]
pub(crate) struct Attempt {
    pub call: u64,
    pub span: usize,
    pub instance: Option<InstanceId>,
    pub job: Option<u64>,
    pub permit: Option<crate::resilience::Permit>,
    pub scope: Scope,
    pub bulkhead: bool,
    pub deadline: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Step {
    Compute(ServiceKind, SimTime),
    Db(ServiceKind, SimTime),
    /// Index into the job's stage list; endpoints in a stage are called together.
    Stage(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum JobOwner {
    Attempt(u64),
    Gateway(u64),
    /// Monolith: the whole request in-process.
    Request(u64),
    /// Monolith: asynchronous message handled in-process.
    Notify(u64),
}

#[derive(Debug, Clone)]
pub(crate) struct Job {
    pub owner: JobOwner,
    pub instance: usize,
    pub plan: VecDeque<Step>,
    pub stages: Vec<Vec<usize>>,
    pub pending: BTreeSet<u64>,
    pub failed: bool,
    pub orphaned: bool,
    pub deadline: SimTime,
    pub span: Option<usize>,
    pub trace: u64,
    pub session: u64,
    pub db_wait: Option<SimTime>,
    pub running: bool,
    /// Monolith: failure decided in-process for this request.
    pub forced: Option<Outcome>,
    /// Monolith: saga run in-process by this request.
    pub saga: Option<u64>,
}

#[derive(Debug, Clone)]
pub(crate) struct SagaRun {
    pub inst: SagaInstance,
    pub trace: u64,
    pub failure: Option<Outcome>,
}

/// Per-saga outcome kept for consistency checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SagaRecord {
    pub id: u64,
    pub state: SagaState,
    pub residue_ok: bool,
    pub failed_step: Option<usize>,
    pub completed_steps: Vec<usize>,
    pub compensation_log: Vec<usize>,
    pub notified: bool,
}

/// Observations beyond the report, for tests and audits.
#[derive(Debug, Clone, Default)]
pub struct Probe {
    /// `(time, kind, total queued jobs across its instances)` on the sample grid.
    pub queue_samples: Vec<(SimTime, ServiceKind, u64)>,
    pub scale_actions: Vec<(SimTime, ServiceKind, ScaleDecision)>,
    pub violations: Vec<String>,
    pub breaker_transitions: Vec<(Scope, Vec<(SimTime, BreakerState)>)>,
    pub bulkhead_peaks: Vec<(Scope, u32)>,
    pub sagas: Vec<SagaRecord>,
    pub max_outstanding: u64,
    pub evictions: Vec<(SimTime, InstanceId)>,
    pub shed_changes: Vec<(SimTime, BTreeSet<String>)>,
    pub db_peak_queue: u64,
}

pub struct RunResult {
    pub report: MetricsReport,
    pub log: RunLog,
    pub probe: Probe,
}

/// A finished run before aggregation. Runs where nothing succeeds still
/// carry their log and probe.
pub struct Simulation {
    pub log: RunLog,
    pub probe: Probe,
    pub warmup: SimTime,
}

impl Simulation {
    pub fn report(self) -> Result<RunResult, RunError> {
        let report = aggregate(&self.log, self.warmup)?;
        Ok(RunResult { report, log: self.log, probe: self.probe })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ActiveStepFault {
    pub endpoint: usize,
    pub mode: InjectedFailure,
    pub probability: f64,
}

pub(crate) struct Streams {
    pub workload: RandomStream,
    pub think: RandomStream,
    pub service: BTreeMap<ServiceKind, RandomStream>,
    pub db: BTreeMap<ServiceKind, RandomStream>,
    pub retry: RandomStream,
    pub chaos: RandomStream,
    pub decline: RandomStream,
}

/// Live fault effects.
#[derive(Debug, Clone, Default)]
pub(crate) struct FaultState {
    pub partitioned: BTreeMap<ServiceKind, u32>,
    pub slow: BTreeMap<ServiceKind, SimTime>,
    pub entry_extra: SimTime,
    pub internal_extra: SimTime,
    pub step: BTreeMap<usize, ActiveStepFault>,
}

pub(crate) const ASYNC_TRACE_BIT: u64 = 1 << 63;
const BOOKING_REQUEST_BYTES: u64 = 1024;
const BOOKING_RESPONSE_BYTES: u64 = 1024;

pub struct World {
    pub(crate) sc: Scenario,
    pub(crate) cfg: ConfigStore,
    pub(crate) engine: Engine<Ev>,
    pub(crate) mode: DeploymentMode,
    pub(crate) duration: SimTime,
    pub(crate) warmup: SimTime,

    pub(crate) eps: Vec<EndpointSpec>,
    pub(crate) ep_names: Vec<Arc<str>>,
    pub(crate) ep_index: BTreeMap<String, usize>,
    pub(crate) classes: Vec<(String, Arc<str>)>,
    pub(crate) class_weights: Vec<f64>,

    pub(crate) instances: Vec<ServiceInstance>,
    pub(crate) dbs: Vec<DatabaseModel>,
    pub(crate) db_of: BTreeMap<ServiceKind, usize>,
    pub(crate) registry: Registry,
    pub(crate) lb: LoadBalancer,
    pub(crate) ejected: BTreeMap<InstanceId, SimTime>,
    pub(crate) breakers: BTreeMap<Scope, CircuitBreaker>,
    pub(crate) bulkhead: Bulkhead,
    pub(crate) hb_chain: Vec<u64>,

    pub(crate) traces: Vec<TraceRecord>,
    pub(crate) trace_state: Vec<TraceState>,
    pub(crate) calls: BTreeMap<u64, Call>,
    pub(crate) attempts: BTreeMap<u64, Attempt>,
    pub(crate) jobs: BTreeMap<u64, Job>,
    pub(crate) spans: Vec<Span>,
    pub(crate) next_id: u64,
    pub(crate) next_async_trace: u64,

    pub(crate) sagas: BTreeMap<u64, SagaRun>,
    pub(crate) saga_done: Vec<SagaRecord>,
    pub(crate) ledger: ReservationLedger,
    pub(crate) mq: MessageQueue,
    pub(crate) msg_saga: BTreeMap<u64, u64>,

    pub(crate) streams: Streams,
    pub(crate) util: UtilizationSamples,
    pub(crate) timeline: Vec<(SimTime, ServiceKind, u32)>,
    pub(crate) counts: RequestCounts,
    pub(crate) outstanding: u64,
    pub(crate) attempts_started: u64,
    pub(crate) attempts_finished: u64,
    pub(crate) faults: FaultState,
    pub(crate) shed: BTreeSet<String>,
    pub(crate) recent_ok: VecDeque<(SimTime, u64)>,
    pub(crate) last_scale: BTreeMap<ServiceKind, SimTime>,
    pub(crate) arrival_generation: u64,
    pub(crate) saga_stats: SagaStats,
    pub(crate) probe: Probe,
}

impl World {
    pub fn new(sc: Scenario) -> Result<World, RunError> {
        let diags = sc.validate();
        if let Some(d) = diags.first() {
            return Err(RunError::Invalid(d.to_string()));
        }
        let seed = sc.run.seed;
        let eps: Vec<EndpointSpec> = sc.catalog.iter().cloned().collect();
        let ep_index = eps.iter().enumerate().map(|(i, e)| (e.name.clone(), i)).collect();
        let ep_names = eps.iter().map(|e| Arc::from(e.name.as_str())).collect();
        let mix = sc.workload.mix();
        let classes: Vec<(String, Arc<str>)> = mix.keys().map(|c| (c.clone(), Arc::from(c.as_str()))).collect();
        let class_weights = mix.values().copied().collect();
        let per_kind = |label: &str| {
            ServiceKind::ALL.iter().map(|k| (*k, RandomStream::new(seed, format!("{label}:{}", k.name())))).collect()
        };
        let streams = Streams {
            workload: RandomStream::new(seed, "workload"),
            think: RandomStream::new(seed, "think"),
            service: per_kind("service"),
            db: per_kind("db"),
            retry: RandomStream::new(seed, "retry"),
            chaos: RandomStream::new(seed, "chaos"),
            decline: RandomStream::new(seed, "decline"),
        };
        let cfg = sc.config.clone();
        let registry = Registry::new(cfg.millis("registry.heartbeat_ms"), cfg.u64("registry.eviction_misses") as u32);
        let mode = sc.deployment.mode;
        let duration = sc.run.duration();
        let warmup = sc.run.warmup();
        let mut w = World {
            cfg,
            engine: Engine::new(),
            mode,
            duration,
            warmup,
            eps,
            ep_names,
            ep_index,
            classes,
            class_weights,
            instances: Vec::new(),
            dbs: Vec::new(),
            db_of: BTreeMap::new(),
            registry,
            lb: LoadBalancer::default(),
            ejected: BTreeMap::new(),
            breakers: BTreeMap::new(),
            bulkhead: Bulkhead::default(),
            hb_chain: Vec::new(),
            traces: Vec::new(),
            trace_state: Vec::new(),
            calls: BTreeMap::new(),
            attempts: BTreeMap::new(),
            jobs: BTreeMap::new(),
            spans: Vec::new(),
            next_id: 0,
            next_async_trace: 0,
            sagas: BTreeMap::new(),
            saga_done: Vec::new(),
            ledger: ReservationLedger::default(),
            mq: MessageQueue::default(),
            msg_saga: BTreeMap::new(),
            streams,
            util: UtilizationSamples::default(),
            timeline: Vec::new(),
            counts: RequestCounts::default(),
            outstanding: 0,
            attempts_started: 0,
            attempts_finished: 0,
            faults: FaultState::default(),
            shed: BTreeSet::new(),
            recent_ok: VecDeque::new(),
            last_scale: BTreeMap::new(),
            arrival_generation: 0,
            saga_stats: SagaStats::default(),
            probe: Probe::default(),
            sc,
        };
        w.build_deployment();
        w.schedule_initial();
        Ok(w)
    }

    pub(crate) fn now(&self) -> SimTime {
        self.engine.now()
    }

    pub(crate) fn at(&mut self, t: SimTime, ev: Ev) {
        self.engine.schedule(t, ev).expect("events are never scheduled in the past");
    }

    pub(crate) fn after(&mut self, d: SimTime, ev: Ev) {
        self.engine.schedule_in(d, ev);
    }

    pub(crate) fn fresh_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    fn build_deployment(&mut self) {
        let d = self.sc.deployment.clone();
        match self.mode {
            DeploymentMode::Microservices => {
                for kind in ServiceKind::POOLED {
                    for _ in 0..d.count(kind) {
                        self.spawn_instance(kind, InstanceState::Up);
                    }
                }
                let mut kinds: BTreeSet<ServiceKind> = self.eps.iter().filter(|e| e.db.is_some()).map(|e| e.service).collect();
                kinds.extend(ServiceKind::ALL.into_iter().filter(|k| k.owns_data() && d.count(*k) > 0));
                for k in kinds {
                    self.db_of.insert(k, self.dbs.len());
                    self.dbs.push(DatabaseModel::new(DbOwner::Service(k), d.db_capacity));
                }
            }
            DeploymentMode::Monolith => {
                let instances: u32 = d.instances.values().sum();
                let inst = ServiceInstance::new(
                    InstanceId(0),
                    ServiceKind::ApiGateway,
                    d.monolith_capacity(),
                    d.queue_bound * instances.max(1) as usize,
                    SimTime::ZERO,
                    InstanceState::Up,
                );
                self.instances.push(inst);
                self.hb_chain.push(0);
                self.dbs.push(DatabaseModel::new(DbOwner::Shared, d.db_capacity));
            }
        }
        for kind in self.pool_kinds() {
            self.record_timeline(kind);
        }
    }

    pub(crate) fn pool_kinds(&self) -> Vec<ServiceKind> {
        let set: BTreeSet<ServiceKind> = self.instances.iter().map(|i| i.kind).collect();
        set.into_iter().collect()
    }

    /// Starting or Up instances of a kind: the autoscaler's notion of size.
    pub(crate) fn active_count(&self, kind: ServiceKind) -> u32 {
        self.instances
            .iter()
            .filter(|i| i.kind == kind && matches!(i.state(), InstanceState::Starting | InstanceState::Up))
            .count() as u32
    }

    pub(crate) fn record_timeline(&mut self, kind: ServiceKind) {
        let n = self.active_count(kind);
        let now = self.now();
        if self.timeline.iter().rev().find(|(_, k, _)| *k == kind).map(|(_, _, c)| *c) != Some(n) {
            self.timeline.push((now, kind, n));
        }
    }

    pub(crate) fn spawn_instance(&mut self, kind: ServiceKind, state: InstanceState) -> usize {
        let idx = self.instances.len();
        let d = &self.sc.deployment;
        let inst =
            ServiceInstance::new(InstanceId(idx as u32), kind, d.capacity_per_instance, d.queue_bound, self.now(), state);
        self.instances.push(inst);
        self.hb_chain.push(0);
        if state == InstanceState::Up {
            self.register(idx);
        }
        idx
    }

    fn schedule_initial(&mut self) {
        self.at(SimTime::ZERO, Ev::Sample { periodic: true });
        if self.warmup > SimTime::ZERO {
            self.at(self.warmup, Ev::Sample { periodic: false });
        }
        if self.mode == DeploymentMode::Microservices {
            let eval = self.cfg.millis("autoscale.eval_ms").max(SimTime::from_millis(1));
            self.at(eval, Ev::ScaleEvaluate);
        }
        let eval = self.cfg.millis("degrade.eval_ms").max(SimTime::from_millis(1));
        self.at(eval, Ev::DegradeEvaluate);
        for i in 0..self.sc.faults.len() {
            let (inject, clear) = self.sc.faults[i].window_ms();
            self.at(crate::scenario::ms(inject), Ev::FaultInject { idx: i });
            if clear.is_finite() && !self.sc.faults[i].is_crash() {
                self.at(crate::scenario::ms(clear), Ev::FaultClear { idx: i });
            }
        }
        for i in 0..self.sc.config_updates.len() {
            let at = crate::scenario::ms(self.sc.config_updates[i].at_ms);
            self.at(at, Ev::ConfigUpdate { idx: i });
        }
        self.start_workload();
    }

    fn dispatch(&mut self, ev: Ev) {
        match ev {
            Ev::Arrival { source, generation } => self.on_arrival(source, generation),
            Ev::RateChange => self.on_rate_change(),
            Ev::EntryArrive { trace } => self.on_entry(trace),
            Ev::JobStep { job } => self.on_job_step(job),
            Ev::DbDone { job, db } => self.on_db_done(job, db),
            Ev::AttemptSend { attempt } => self.send_attempt(attempt),
            Ev::AttemptEnd { attempt, outcome } => self.finish_attempt(attempt, outcome),
            Ev::AttemptTimeout { attempt } => self.finish_attempt(attempt, Outcome::Timeout),
            Ev::Retry { call } => self.start_attempt(call),
            Ev::SagaCoordinate { saga, step, compensation } => self.saga_issue(saga, step, compensation),
            Ev::Deliver => self.on_deliver(),
            Ev::Heartbeat { inst, chain } => self.on_heartbeat(inst as usize, chain),
            Ev::HeartbeatDeadline { inst, beat } => self.on_heartbeat_deadline(inst as usize, beat),
            Ev::InstanceReady { inst } => self.on_instance_ready(inst as usize),
            Ev::Restart { inst } => self.on_restart(inst as usize),
            Ev::FaultInject { idx } => self.on_fault(idx, true),
            Ev::FaultClear { idx } => self.on_fault(idx, false),
            Ev::ConfigUpdate { idx } => self.on_config_update(idx),
            Ev::ScaleEvaluate => self.on_scale_evaluate(),
            Ev::DegradeEvaluate => self.on_degrade_evaluate(),
            Ev::Sample { periodic } => self.on_sample(periodic),
        }
    }

    /// Run the scenario to completion, including the drain.
    pub fn run(mut self) -> Simulation {
        while let Some((_, ev)) = self.engine.pop_until(self.duration) {
            self.dispatch(ev);
        }
        self.engine.advance_to(self.duration);
        self.util.record(self.duration, &self.instances);
        let drain_until = self.duration + crate::scenario::ms(self.sc.run.drain_ms);
        if drain_until > self.duration {
            while self.outstanding > 0 || self.mq.undelivered() > 0 || !self.sagas.is_empty() {
                match self.engine.pop_until(drain_until) {
                    Some((_, ev)) => self.dispatch(ev),
                    None => break,
                }
            }
        }
        self.finish()
    }

    fn finish(mut self) -> Simulation {
        self.counts.inflight_at_end = self.traces.iter().filter(|t| t.outcome.is_none()).count() as u64;
        if self.counts.issued != self.traces.len() as u64 {
            self.probe.violations.push("issued counter disagrees with trace log".into());
        }
        let closed = self.spans.iter().filter(|s| s.outcome.is_some()).count() as u64;
        if closed != self.attempts_finished {
            self.probe.violations.push(format!("{closed} closed spans but {} finished attempts", self.attempts_finished));
        }

        // saga audit: every terminal saga is all-or-nothing
        let mut residue_bad = 0;
        for r in &mut self.saga_done {
            let run_expected = r.completed_steps.len();
            let _ = run_expected;
            let expected = self.sc.saga.steps.iter().filter(|s| !s.is_async).filter_map(|s| self.ep_index.get(&s.forward)).filter_map(|i| ledger_resource(&self.eps[*i])).collect();
            r.residue_ok = self.ledger.residue_ok(SagaId(r.id), r.state, &expected);
            if !r.residue_ok {
                residue_bad += 1;
            }
            let msgs: Vec<u64> = self.msg_saga.iter().filter(|(_, s)| **s == r.id).map(|(m, _)| *m).collect();
            r.notified = !msgs.is_empty() && msgs.iter().all(|m| self.mq.delivered().contains_key(m));
        }
        self.saga_stats.residue_violations = residue_bad;
        self.saga_stats.running = self.sagas.len() as u64;
        self.saga_stats.notifications_enqueued = self.mq.enqueued();
        self.saga_stats.notifications_delivered = self.mq.delivered().len() as u64;
        self.probe.sagas = std::mem::take(&mut self.saga_done);
        self.probe.breaker_transitions =
            self.breakers.iter().map(|(s, b)| (*s, b.transitions().to_vec())).collect();
        self.probe.bulkhead_peaks = self.bulkhead.peaks().iter().map(|(s, p)| (*s, *p)).collect();
        self.probe.evictions = self.registry.evictions().to_vec();

        let services: Vec<(ServiceKind, String)> = match self.mode {
            DeploymentMode::Microservices => self.pool_kinds().into_iter().map(|k| (k, k.name().to_string())).collect(),
            DeploymentMode::Monolith => vec![(ServiceKind::ApiGateway, "monolith".to_string())],
        };
        let fault_inject = self
            .sc
            .faults
            .iter()
            .filter(|f| f.is_crash())
            .map(|f| crate::scenario::ms(f.window_ms().0))
            .min();
        let log = RunLog {
            scenario: self.sc.name.clone(),
            family: self.sc.family.clone(),
            seed: self.sc.run.seed,
            mode: match self.mode {
                DeploymentMode::Microservices => "microservices".into(),
                DeploymentMode::Monolith => "monolith".into(),
            },
            duration: self.duration,
            traces: std::mem::take(&mut self.traces),
            spans: std::mem::take(&mut self.spans),
            counts: self.counts.clone(),
            utilization: std::mem::take(&mut self.util),
            services,
            timeline: std::mem::take(&mut self.timeline),
            entry_delay_ms: self.sc.config.f64("network.entry_ms"),
            fault_inject,
            report_window: crate::scenario::ms(self.sc.run.report_window_ms),
            attempts_started: self.attempts_started,
            saga: self.saga_stats.clone(),
            dispatch_count: self.engine.dispatched(),
            dispatch_digest: self.engine.dispatch_digest(),
            memory: MemoryModel::default(),
        };
        Simulation { log, probe: std::mem::take(&mut self.probe), warmup: self.warmup }
    }

    // ---- traces ----------------------------------------------------------

    pub(crate) fn new_trace(&mut self, class: usize, source: Source) {
        let now = self.now();
        let id = self.traces.len() as u64;
        let (req, resp) = self.class_bytes(class);
        self.traces.push(TraceRecord {
            trace_id: id,
            class: self.classes[class].1.clone(),
            created_at: now,
            arrived_at: None,
            finished_at: None,
            outcome: None,
            request_bytes: req,
            response_bytes: resp,
        });
        self.trace_state.push(TraceState { class, source, root_span: None });
        self.counts.issued += 1;
        self.outstanding += 1;
        self.probe.max_outstanding = self.probe.max_outstanding.max(self.outstanding);
        let delay = self.cfg.millis("network.entry_ms") + self.faults.entry_extra;
        self.after(delay, Ev::EntryArrive { trace: id });
    }

    fn class_bytes(&self, class: usize) -> (u64, u64) {
        match self.sc.routes.route(&self.classes[class].0).map(|r| r.target.clone()) {
            Ok(RouteTarget::Endpoint(ep)) => {
                let e = &self.eps[self.ep_index[&ep]];
                (e.request_bytes, e.response_bytes)
            }
            _ => (BOOKING_REQUEST_BYTES, BOOKING_RESPONSE_BYTES),
        }
    }

    pub(crate) fn open_span(
        &mut self,
        trace: u64,
        parent: Option<usize>,
        caller: Caller,
        callee: Option<ServiceKind>,
        endpoint: Arc<str>,
        attempt: u32,
        link: Option<u64>,
    ) -> usize {
        let id = self.spans.len();
        self.spans.push(Span {
            trace_id: trace,
            span_id: id as u64,
            parent: parent.map(|p| p as u64),
            caller,
            callee,
            endpoint,
            instance: None,
            attempt,
            probe: false,
            start: self.now(),
            end: None,
            outcome: None,
            linked_trace: link,
        });
        self.attempts_started += 1;
        id
    }

    pub(crate) fn close_span(&mut self, span: usize, outcome: Outcome) {
        let now = self.now();
        let s = &mut self.spans[span];
        if s.outcome.is_some() {
            self.probe.violations.push(format!("span {span} closed twice"));
            return;
        }
        s.end = Some(now);
        s.outcome = Some(outcome);
        self.attempts_finished += 1;
    }

    fn on_entry(&mut self, trace: u64) {
        let now = self.now();
        self.traces[trace as usize].arrived_at = Some(now);
        let class = self.trace_state[trace as usize].class;
        let name = self.classes[class].1.clone();
        let callee = (self.mode == DeploymentMode::Microservices).then_some(ServiceKind::ApiGateway);
        let root = self.open_span(trace, None, Caller::Client, callee, name, 1, None);
        self.trace_state[trace as usize].root_span = Some(root);
        if self.shed.contains(&self.classes[class].0) {
            self.finish_trace(trace, Outcome::Degraded);
            return;
        }
        match self.mode {
            DeploymentMode::Microservices => {
                let overhead = self.cfg.millis("gateway.overhead_ms");
                let plan = VecDeque::from([Step::Compute(ServiceKind::ApiGateway, overhead)]);
                if let Err(o) = self.gateway_job(JobOwner::Gateway(trace), plan, trace) {
                    self.finish_trace(trace, o);
                }
            }
            DeploymentMode::Monolith => self.monolith_request(trace),
        }
    }

    pub(crate) fn finish_trace(&mut self, trace: u64, outcome: Outcome) {
        let now = self.now();
        let t = &mut self.traces[trace as usize];
        if t.outcome.is_some() {
            self.probe.violations.push(format!("trace {trace} finished twice"));
            return;
        }
        t.finished_at = Some(now);
        t.outcome = Some(outcome);
        match outcome {
            Outcome::Success => {
                self.counts.completed += 1;
                let lat = (now - t.created_at).micros();
                self.recent_ok.push_back((now, lat));
            }
            Outcome::Degraded => self.counts.shed += 1,
            Outcome::Rejected => self.counts.rejected += 1,
            _ => self.counts.failed += 1,
        }
        self.outstanding -= 1;
        if let Some(span) = self.trace_state[trace as usize].root_span {
            self.close_span(span, outcome);
        }
        if let Source::User(u) = self.trace_state[trace as usize].source {
            self.user_thinks(u);
        }
    }

    // ---- saga ------------------------------------------------------------

    pub(crate) fn start_saga(&mut self, trace: u64) {
        let id = self.fresh_id();
        let inst = SagaInstance::new(SagaId(id), trace, &self.sc.saga);
        let action = inst.start();
        self.sagas.insert(id, SagaRun { inst, trace, failure: None });
        self.saga_stats.started += 1;
        self.saga_act(id, action);
    }

    fn saga_act(&mut self, saga: u64, action: crate::saga::SagaAction) {
        use crate::saga::SagaAction as A;
        match action {
            A::Forward(step) => self.saga_coordinate(saga, step, false, SimTime::ZERO),
            A::Compensate { step, delay, .. } => self.saga_coordinate(saga, step, true, delay),
            A::Complete(tail) => {
                let run = self.sagas.remove(&saga).expect("live saga");
                self.ledger.commit(SagaId(saga));
                self.saga_stats.completed += 1;
                for step in tail {
                    let ep = self.sc.saga.steps[step].forward.clone();
                    let m = self.mq.enqueue(self.now(), &ep, saga, run.trace);
                    self.msg_saga.insert(m, saga);
                    self.at(self.now(), Ev::Deliver);
                }
                self.saga_record(saga, &run);
                self.finish_trace(run.trace, Outcome::Success);
            }
            A::Compensated => {
                let run = self.sagas.remove(&saga).expect("live saga");
                self.saga_stats.compensated += 1;
                self.saga_record(saga, &run);
                self.finish_trace(run.trace, run.failure.unwrap_or(Outcome::BusinessFailure));
            }
            A::Stuck(_) => {
                let run = self.sagas.remove(&saga).expect("live saga");
                self.saga_stats.stuck += 1;
                self.saga_record(saga, &run);
                self.finish_trace(run.trace, run.failure.unwrap_or(Outcome::BusinessFailure));
            }
        }
    }

    fn saga_record(&mut self, saga: u64, run: &SagaRun) {
        self.saga_done.push(SagaRecord {
            id: saga,
            state: run.inst.state(),
            residue_ok: true,
            failed_step: run.inst.failed_step,
            completed_steps: run.inst.completed_steps().to_vec(),
            compensation_log: run.inst.compensation_log().to_vec(),
            notified: false,
        });
    }

    /// The orchestrator spends its overhead before each step call. It runs
    /// beside the gateway's worker pool, so an overloaded gateway cannot
    /// strand a saga between steps.
    fn saga_coordinate(&mut self, saga: u64, step: usize, compensation: bool, delay: SimTime) {
        let overhead = self.cfg.millis("gateway.overhead_ms");
        self.after(delay + overhead, Ev::SagaCoordinate { saga, step, compensation });
    }

    pub(crate) fn saga_issue(&mut self, saga: u64, step: usize, compensation: bool) {
        let Some(run) = self.sagas.get(&saga) else { return };
        let trace = run.trace;
        let def = &self.sc.saga.steps[step];
        let name = if compensation { def.compensation.clone().expect("compensable step") } else { def.forward.clone() };
        let ep = self.ep_index[&name];
        let policy = if compensation {
            RetryPolicy { max_attempts: 1, ..RetryPolicy::from_config(&self.cfg) }
        } else {
            RetryPolicy::from_config(&self.cfg)
        };
        let root = self.trace_state[trace as usize].root_span;
        self.start_call(calls::CallRequest {
            trace,
            parent: Parent::Saga { saga, step },
            parent_span: root,
            caller: Caller::Gateway,
            endpoint: ep,
            deadline: SimTime::MAX,
            policy,
            bypass_breaker: compensation,
            saga: Some(SagaId(saga)),
            link: None,
            session: trace,
        });
    }

    pub(crate) fn saga_result(&mut self, saga: u64, step: usize, outcome: Outcome) {
        let Some(run) = self.sagas.get_mut(&saga) else { return };
        let result = if outcome == Outcome::Success {
            crate::saga::StepResult::Success
        } else {
            crate::saga::StepResult::Failure
        };
        if run.inst.state() == SagaState::Running && outcome != Outcome::Success {
            run.failure.get_or_insert(outcome);
        }
        let action = run.inst.on_step_result(step, result);
        self.saga_act(saga, action);
    }

    // ---- messaging -------------------------------------------------------

    fn on_deliver(&mut self) {
        let Some(msg) = self.mq.lease() else { return };
        let ep = self.ep_index[&msg.endpoint];
        let trace = ASYNC_TRACE_BIT | self.next_async_trace;
        self.next_async_trace += 1;
        match self.mode {
            DeploymentMode::Microservices => {
                self.start_call(calls::CallRequest {
                    trace,
                    parent: Parent::Message(msg.id),
                    parent_span: None,
                    caller: Caller::Gateway,
                    endpoint: ep,
                    deadline: SimTime::MAX,
                    policy: RetryPolicy::from_config(&self.cfg),
                    bypass_breaker: false,
                    saga: Some(SagaId(msg.saga)),
                    link: Some(msg.trace_id),
                    session: msg.trace_id,
                });
            }
            DeploymentMode::Monolith => self.monolith_notify(msg.id, ep, trace),
        }
    }

    pub(crate) fn message_result(&mut self, msg: u64, ok: bool) {
        if ok {
            self.mq.ack(msg, self.now());
        } else {
            self.mq.nack(msg);
            let d = self.cfg.millis("messaging.redelivery_ms");
            self.after(d, Ev::Deliver);
        }
    }
}

pub(crate) fn ledger_resource(e: &EndpointSpec) -> Option<LedgerResource> {
    match e.ledger {
        Some(crate::saga::LedgerAction::Reserve(r)) => Some(r),
        _ => None,
    }
}

/// Run a scenario without aggregating.
pub fn simulate(sc: Scenario) -> Result<Simulation, RunError> {
    Ok(World::new(sc)?.run())
}

/// Run a scenario end to end.
pub fn run_scenario(sc: Scenario) -> Result<RunResult, RunError> {
    simulate(sc)?.report()
}
