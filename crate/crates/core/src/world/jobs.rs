//! Jobs: slot-holding work on an instance, its database queries and child
//! calls, plus the in-process monolith path.

use std::collections::{BTreeSet, VecDeque};

use crate::platform::{Admission, DeploymentMode, InstanceState, JobId, ServiceKind};
use crate::resilience::{Caller, RetryPolicy};
use crate::saga::{SagaId, SagaState};
use crate::scenario::InjectedFailure;
use crate::sim::SimTime;
use crate::telemetry::Outcome;
use crate::traffic::RouteTarget;

use super::calls::CallRequest;
use super::{ledger_resource, Ev, Job, JobOwner, Parent, SagaRecord, Step, World};

const RESPONSE_MARGIN: SimTime = SimTime::from_millis(1);

impl World {
    /// Admit a job on instance `inst`. Accepted jobs step at `now`; queued
    /// jobs step when a slot frees.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn admit_job(
        &mut self,
        owner: JobOwner,
        inst: usize,
        plan: VecDeque<Step>,
        stages: Vec<Vec<usize>>,
        trace: u64,
        deadline: SimTime,
        span: Option<usize>,
        session: u64,
    ) -> Result<u64, Outcome> {
        let id = self.fresh_id();
        let now = self.now();
        let admission = match self.instances[inst].admit(now, JobId(id), 1) {
            Ok(a) => a,
            Err(_) => return Err(Outcome::InstanceCrashed),
        };
        let running = match admission {
            Admission::Rejected => return Err(Outcome::Rejected),
            Admission::Queued => false,
            Admission::Accepted => true,
        };
        self.jobs.insert(
            id,
            Job {
                owner,
                instance: inst,
                plan,
                stages,
                pending: BTreeSet::new(),
                failed: false,
                orphaned: false,
                deadline,
                span,
                trace,
                session,
                db_wait: None,
                running,
                forced: None,
                saga: None,
            },
        );
        if running {
            self.at(self.now(), Ev::JobStep { job: id });
        }
        Ok(id)
    }

    /// A short job on the least busy live gateway instance.
    pub(crate) fn gateway_job(&mut self, owner: JobOwner, plan: VecDeque<Step>, trace: u64) -> Result<u64, Outcome> {
        let inst = self
            .instances
            .iter()
            .filter(|i| i.kind == ServiceKind::ApiGateway && i.state() == InstanceState::Up)
            .min_by_key(|i| (i.busyness(), i.id))
            .map(|i| i.id.0 as usize)
            .ok_or(Outcome::NoHealthyInstance)?;
        let session = self.session_of(trace);
        self.admit_job(owner, inst, plan, Vec::new(), trace, SimTime::MAX, None, session)
    }

    pub(crate) fn session_of(&self, trace: u64) -> u64 {
        match self.trace_state.get(trace as usize).map(|t| t.source) {
            Some(super::Source::User(u)) | Some(super::Source::Periodic(u)) => u64::from(u),
            _ => trace,
        }
    }

    pub(crate) fn on_job_step(&mut self, job: u64) {
        let now = self.now();
        let Some(j) = self.jobs.get_mut(&job) else { return };
        j.running = true;
        if j.orphaned {
            self.terminate_job(job);
            return;
        }
        match j.plan.pop_front() {
            None => {
                let outcome = j.forced.unwrap_or(Outcome::Success);
                self.end_job(job, outcome);
            }
            Some(Step::Compute(_, d)) => self.after(d, Ev::JobStep { job }),
            Some(Step::Db(kind, d)) => {
                let db = self.db_of.get(&kind).copied().unwrap_or(0);
                if self.dbs[db].submit(now, JobId(job)) {
                    self.after(d, Ev::DbDone { job, db });
                } else {
                    self.jobs.get_mut(&job).expect("live job").db_wait = Some(d);
                }
            }
            Some(Step::Stage(s)) => {
                let eps = j.stages[s].clone();
                let (trace, span, session) = (j.trace, j.span, j.session);
                // children give up just before the parent's own timeout so the
                // parent can still answer, and its callees see the failure
                let deadline = j.deadline.saturating_sub(RESPONSE_MARGIN);
                let caller = Caller::Service(self.instances[j.instance].kind);
                let policy = RetryPolicy::from_config(&self.cfg);
                let mut calls = Vec::with_capacity(eps.len());
                for ep in eps {
                    calls.push(self.start_call(CallRequest {
                        trace,
                        parent: Parent::Job(job),
                        parent_span: span,
                        caller,
                        endpoint: ep,
                        deadline,
                        policy: policy.clone(),
                        bypass_breaker: false,
                        saga: None,
                        link: None,
                        session,
                    }));
                }
                if let Some(j) = self.jobs.get_mut(&job) {
                    j.pending.extend(calls);
                }
            }
        }
    }

    pub(crate) fn on_db_done(&mut self, job: u64, db: usize) {
        let now = self.now();
        let started = self.dbs[db].finish(now);
        self.db_started(db, started);
        match self.jobs.get(&job) {
            Some(j) if j.orphaned => self.terminate_job(job),
            Some(_) => self.on_job_step(job),
            None => {}
        }
    }

    /// Schedule queries that just got a database slot. Queries of dead or
    /// orphaned jobs release their slot at once, which may start more.
    pub(crate) fn db_started(&mut self, db: usize, mut started: Vec<JobId>) {
        let now = self.now();
        while let Some(JobId(job)) = started.pop() {
            let d = match self.jobs.get_mut(&job) {
                Some(j) if !j.orphaned => j.db_wait.take(),
                _ => None,
            };
            match d {
                Some(d) => self.after(d, Ev::DbDone { job, db }),
                None => {
                    started.extend(self.dbs[db].finish(now));
                    if self.jobs.get(&job).is_some_and(|j| j.orphaned) {
                        self.terminate_job(job);
                    }
                }
            }
        }
    }

    pub(crate) fn child_done(&mut self, job: u64, call: u64, outcome: Outcome) {
        let Some(j) = self.jobs.get_mut(&job) else { return };
        j.pending.remove(&call);
        if outcome != Outcome::Success {
            j.failed = true;
        }
        if j.pending.is_empty() {
            if j.failed {
                self.end_job(job, Outcome::DependencyFailed);
            } else {
                self.on_job_step(job);
            }
        }
    }

    /// Release the slot of a finished job and start queued work.
    fn release_slot(&mut self, job: u64, inst: usize) {
        let now = self.now();
        for JobId(next) in self.instances[inst].complete(now, JobId(job)) {
            if let Some(j) = self.jobs.get_mut(&next) {
                j.running = true;
            }
            self.at(now, Ev::JobStep { job: next });
        }
        let i = &self.instances[inst];
        if i.state() == InstanceState::Draining && i.inflight() == 0 && i.queue_len() == 0 {
            self.retire(inst);
        }
    }

    /// Stop a job silently.
    pub(crate) fn terminate_job(&mut self, job: u64) {
        let Some(j) = self.jobs.remove(&job) else { return };
        for c in j.pending {
            self.cancel_call(c);
        }
        self.release_slot(job, j.instance);
    }

    /// Orphan a job whose caller gave up. Queued jobs leave at once; running
    /// ones stop at the next step boundary, or now if they wait on calls.
    pub(crate) fn abandon_job(&mut self, job: u64) {
        let Some(j) = self.jobs.get_mut(&job) else { return };
        if !j.running {
            let inst = j.instance;
            self.instances[inst].withdraw(JobId(job));
            self.jobs.remove(&job);
            return;
        }
        j.orphaned = true;
        if !j.pending.is_empty() {
            self.terminate_job(job);
        }
    }

    /// Finish a job and notify its owner.
    pub(crate) fn end_job(&mut self, job: u64, mut outcome: Outcome) {
        let Some(j) = self.jobs.remove(&job) else { return };
        for c in &j.pending {
            self.cancel_call(*c);
        }
        self.release_slot(job, j.instance);
        if j.orphaned {
            return;
        }
        match j.owner {
            JobOwner::Attempt(a) => {
                if outcome == Outcome::Success && self.is_declined_charge(a) {
                    outcome = Outcome::BusinessFailure;
                }
                self.finish_attempt(a, outcome);
            }
            JobOwner::Gateway(trace) => {
                if outcome == Outcome::Success {
                    self.route_trace(trace);
                } else {
                    self.finish_trace(trace, outcome);
                }
            }
            JobOwner::Request(trace) => self.monolith_done(trace, j.saga, outcome),
            JobOwner::Notify(msg) => self.message_result(msg, outcome == Outcome::Success),
        }
    }

    fn is_declined_charge(&mut self, attempt: u64) -> bool {
        let rate = self.cfg.f64("payment.decline_rate");
        if rate <= 0.0 {
            return false;
        }
        let Some(c) = self.attempts.get(&attempt).and_then(|a| self.calls.get(&a.call)) else { return false };
        self.eps[c.endpoint].name == "payment.charge" && self.streams.decline.unit() < rate
    }

    /// Gateway done: forward the request per its route.
    fn route_trace(&mut self, trace: u64) {
        let class = self.trace_state[trace as usize].class;
        let target = match self.sc.routes.route(&self.classes[class].0) {
            Ok(r) => r.target.clone(),
            Err(_) => {
                self.finish_trace(trace, Outcome::Rejected);
                return;
            }
        };
        match target {
            RouteTarget::Endpoint(name) => {
                let ep = self.ep_index[&name];
                let root = self.trace_state[trace as usize].root_span;
                let session = self.session_of(trace);
                self.start_call(CallRequest {
                    trace,
                    parent: Parent::Trace(trace),
                    parent_span: root,
                    caller: Caller::Gateway,
                    endpoint: ep,
                    deadline: SimTime::MAX,
                    policy: RetryPolicy::from_config(&self.cfg),
                    bypass_breaker: false,
                    saga: None,
                    link: None,
                    session,
                });
            }
            RouteTarget::Saga => self.start_saga(trace),
        }
    }

    /// Fail every job on a crashed instance through its owner.
    pub(crate) fn crash_instance(&mut self, inst: usize) {
        let now = self.now();
        let Ok(lost) = self.instances[inst].crash(now) else { return };
        self.hb_chain[inst] += 1;
        let mut owners = Vec::new();
        for JobId(job) in lost {
            if let Some(j) = self.jobs.remove(&job) {
                for c in &j.pending {
                    self.cancel_call(*c);
                }
                if !j.orphaned {
                    owners.push(j);
                }
            }
        }
        for j in owners {
            match j.owner {
                JobOwner::Attempt(a) => self.finish_attempt(a, Outcome::InstanceCrashed),
                JobOwner::Gateway(t) | JobOwner::Request(t) => {
                    if j.saga.is_some() {
                        self.monolith_done(t, j.saga, Outcome::InstanceCrashed);
                    } else {
                        self.finish_trace(t, Outcome::InstanceCrashed);
                    }
                }
                JobOwner::Notify(m) => self.message_result(m, false),
            }
        }
    }

    // ---- monolith ----------------------------------------------------------

    /// Depth-first, in-process expansion of an endpoint and its callees.
    fn inline_plan(&mut self, ep: usize, plan: &mut VecDeque<Step>, forced: &mut Option<Outcome>) {
        let (mut sub, stages) = self.service_plan(ep);
        if let Some(f) = self.faults.step.get(&ep).copied() {
            if forced.is_none() && (f.probability >= 1.0 || self.streams.chaos.unit() < f.probability) {
                *forced = Some(match f.mode {
                    InjectedFailure::Timeout => Outcome::Timeout,
                    InjectedFailure::InstanceCrashed => Outcome::InstanceCrashed,
                    InjectedFailure::Rejected => Outcome::Rejected,
                    InjectedFailure::PaymentDeclined => Outcome::BusinessFailure,
                });
            }
        }
        if forced.is_none()
            && self.eps[ep].name == "payment.charge"
            && self.cfg.f64("payment.decline_rate") > 0.0
            && self.streams.decline.unit() < self.cfg.f64("payment.decline_rate")
        {
            *forced = Some(Outcome::BusinessFailure);
        }
        while let Some(step) = sub.pop_front() {
            match step {
                Step::Stage(s) => {
                    for callee in stages[s].clone() {
                        self.inline_plan(callee, plan, forced);
                    }
                }
                other => plan.push_back(other),
            }
        }
    }

    pub(crate) fn monolith_request(&mut self, trace: u64) {
        let class = self.trace_state[trace as usize].class;
        let target = match self.sc.routes.route(&self.classes[class].0) {
            Ok(r) => r.target.clone(),
            Err(_) => {
                self.finish_trace(trace, Outcome::Rejected);
                return;
            }
        };
        let mut plan = VecDeque::new();
        let mut forced = None;
        let mut saga = None;
        match target {
            RouteTarget::Endpoint(name) => {
                let ep = self.ep_index[&name];
                self.inline_plan(ep, &mut plan, &mut forced);
            }
            RouteTarget::Saga => {
                let steps: Vec<usize> = self
                    .sc
                    .saga
                    .steps
                    .iter()
                    .filter(|s| !s.is_async)
                    .map(|s| self.ep_index[&s.forward])
                    .collect();
                for ep in steps {
                    self.inline_plan(ep, &mut plan, &mut forced);
                }
                let id = self.fresh_id();
                self.saga_stats.started += 1;
                saga = Some(id);
            }
        }
        let overhead = self.cfg.millis("gateway.overhead_ms");
        plan.push_front(Step::Compute(ServiceKind::ApiGateway, overhead));
        let root = self.trace_state[trace as usize].root_span;
        let session = self.session_of(trace);
        match self.admit_job(JobOwner::Request(trace), 0, plan, Vec::new(), trace, SimTime::MAX, root, session) {
            Ok(job) => {
                let j = self.jobs.get_mut(&job).expect("admitted");
                j.forced = forced;
                j.saga = saga;
            }
            Err(o) => self.monolith_done(trace, saga, o),
        }
    }

    /// In-process transaction end: commit every reservation atomically or none.
    fn monolith_done(&mut self, trace: u64, saga: Option<u64>, outcome: Outcome) {
        if let Some(id) = saga {
            let sync: Vec<usize> =
                self.sc.saga.steps.iter().enumerate().filter(|(_, s)| !s.is_async).map(|(i, _)| i).collect();
            let ok = outcome == Outcome::Success;
            if ok {
                for s in &sync {
                    let ep = self.ep_index[&self.sc.saga.steps[*s].forward];
                    if let Some(r) = ledger_resource(&self.eps[ep]) {
                        self.ledger.apply(SagaId(id), crate::saga::LedgerAction::Reserve(r));
                    }
                }
                self.ledger.commit(SagaId(id));
                self.saga_stats.completed += 1;
                let tail: Vec<String> =
                    self.sc.saga.steps.iter().filter(|s| s.is_async).map(|s| s.forward.clone()).collect();
                for ep in tail {
                    let m = self.mq.enqueue(self.now(), &ep, id, trace);
                    self.msg_saga.insert(m, id);
                    self.at(self.now(), Ev::Deliver);
                }
            } else {
                self.saga_stats.compensated += 1;
            }
            self.saga_done.push(SagaRecord {
                id,
                state: if ok { SagaState::Completed } else { SagaState::Compensated },
                residue_ok: true,
                failed_step: None,
                completed_steps: if ok { sync } else { Vec::new() },
                compensation_log: Vec::new(),
                notified: false,
            });
        }
        self.finish_trace(trace, outcome);
    }

    pub(crate) fn monolith_notify(&mut self, msg: u64, ep: usize, trace: u64) {
        let mut plan = VecDeque::new();
        let mut forced = None;
        self.inline_plan(ep, &mut plan, &mut forced);
        match self.admit_job(JobOwner::Notify(msg), 0, plan, Vec::new(), trace, SimTime::MAX, None, trace) {
            Ok(job) => self.jobs.get_mut(&job).expect("admitted").forced = forced,
            Err(_) => self.message_result(msg, false),
        }
    }

    pub(crate) fn is_monolith(&self) -> bool {
        self.mode == DeploymentMode::Monolith
    }
}
