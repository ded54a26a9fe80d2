//! Calls and attempts: bulkhead, breaker, discovery, balancing, timeout and
//! retry around one downstream request.

use std::collections::VecDeque;

use crate::platform::{InstanceId, InstanceState, ServiceKind};
use crate::resilience::{breaker_failure, BreakerDecision, BreakerParams, Caller, RetryPolicy};
use crate::saga::SagaId;
use crate::sim::SimTime;
use crate::telemetry::Outcome;
use crate::traffic::{Candidate, LbPolicy};

use super::{Attempt, Call, Ev, JobOwner, Parent, Step, World};
use crate::scenario::InjectedFailure;

pub(crate) struct CallRequest {
    pub trace: u64,
    pub parent: Parent,
    pub parent_span: Option<usize>,
    pub caller: Caller,
    pub endpoint: usize,
    pub deadline: SimTime,
    pub policy: RetryPolicy,
    pub bypass_breaker: bool,
    pub saga: Option<SagaId>,
    pub link: Option<u64>,
    pub session: u64,
}

impl World {
    pub(crate) fn start_call(&mut self, r: CallRequest) -> u64 {
        let id = self.fresh_id();
        self.calls.insert(
            id,
            Call {
                trace: r.trace,
                parent: r.parent,
                parent_span: r.parent_span,
                caller: r.caller,
                endpoint: r.endpoint,
                deadline: r.deadline,
                attempts: 0,
                policy: r.policy,
                bypass_breaker: r.bypass_breaker,
                tried: Vec::new(),
                current: None,
                saga: r.saga,
                link: r.link,
                session: r.session,
            },
        );
        self.start_attempt(id);
        id
    }

    /// Open a span and run the admission pipeline. Never completes the call
    /// synchronously: immediate failures are scheduled as events.
    pub(crate) fn start_attempt(&mut self, call: u64) {
        let now = self.now();
        let timeout = self.cfg.millis("call.timeout_ms");
        let Some(c) = self.calls.get_mut(&call) else { return };
        c.attempts += 1;
        let (trace, parent_span, caller, attempt_no, link, bypass) =
            (c.trace, c.parent_span, c.caller, c.attempts, c.link, c.bypass_breaker);
        // a call issued at or past its deadline times out at once
        let deadline = (now + timeout).min(c.deadline).max(now);
        let ep = c.endpoint;
        let kind = self.eps[ep].service;
        let name = self.ep_names[ep].clone();
        let span = self.open_span(trace, parent_span, caller, Some(kind), name, attempt_no, link);
        let aid = self.fresh_id();
        let scope = (caller, kind);
        let mut attempt =
            Attempt { call, span, instance: None, job: None, permit: None, scope, bulkhead: false, deadline };
        self.calls.get_mut(&call).expect("live call").current = Some(aid);

        if self.cfg.bool("bulkhead.enabled") {
            let limit = self.cfg.u64("bulkhead.limit") as u32;
            if !self.bulkhead.try_acquire(scope, limit) {
                self.attempts.insert(aid, attempt);
                self.at(now, Ev::AttemptEnd { attempt: aid, outcome: Outcome::BulkheadFull });
                return;
            }
            attempt.bulkhead = true;
        }

        if self.cfg.bool("breaker.enabled") && !bypass {
            let params = BreakerParams::from_config(&self.cfg);
            let breaker = self.breakers.entry(scope).or_default();
            let (decision, permit) = breaker.allow(now, &params);
            if decision == BreakerDecision::FastFail {
                self.attempts.insert(aid, attempt);
                let delay = self.cfg.millis("breaker.fast_fail_ms");
                self.at(now + delay, Ev::AttemptEnd { attempt: aid, outcome: Outcome::FastFail });
                return;
            }
            attempt.permit = permit;
            self.spans[span].probe = decision == BreakerDecision::AdmitProbe;
        }

        let Some(target) = self.choose_instance(call, kind) else {
            self.attempts.insert(aid, attempt);
            self.at(now, Ev::AttemptEnd { attempt: aid, outcome: Outcome::NoHealthyInstance });
            return;
        };
        attempt.instance = Some(target);
        self.spans[span].instance = Some(target);
        self.calls.get_mut(&call).expect("live call").tried.push(target);
        self.attempts.insert(aid, attempt);
        self.at(deadline, Ev::AttemptTimeout { attempt: aid });
        let delay = self.cfg.millis("network.internal_ms") + self.faults.internal_extra;
        if delay == SimTime::ZERO {
            self.send_attempt(aid);
        } else {
            self.after(delay, Ev::AttemptSend { attempt: aid });
        }
    }

    /// Discovery, then exclusion of instances this call already tried and of
    /// recently ejected instances (each relaxed if it would leave nothing),
    /// then the balancing policy.
    fn choose_instance(&mut self, call: u64, kind: ServiceKind) -> Option<InstanceId> {
        let now = self.now();
        let mut ids = self.registry.discover(kind).ok()?;
        let c = &self.calls[&call];
        let fresh: Vec<InstanceId> = ids.iter().copied().filter(|i| !c.tried.contains(i)).collect();
        if !fresh.is_empty() {
            ids = fresh;
        }
        let healthy: Vec<InstanceId> =
            ids.iter().copied().filter(|i| self.ejected.get(i).is_none_or(|until| *until <= now)).collect();
        if !healthy.is_empty() {
            ids = healthy;
        }
        let candidates: Vec<Candidate> =
            ids.iter().map(|id| Candidate { id: *id, busyness: self.instances[id.0 as usize].busyness() }).collect();
        let policy = LbPolicy::parse(self.cfg.text("lb.policy")).unwrap_or(LbPolicy::RoundRobin);
        let key = c.session;
        self.lb.pick(policy, kind, &candidates, key).ok()
    }

    pub(crate) fn send_attempt(&mut self, aid: u64) {
        let now = self.now();
        let Some(a) = self.attempts.get(&aid) else { return };
        let (call, span, deadline) = (a.call, a.span, a.deadline);
        let inst = a.instance.expect("sent attempts have a target").0 as usize;
        let Some(c) = self.calls.get(&call) else { return };
        let (ep, trace, session) = (c.endpoint, c.trace, c.session);
        let kind = self.eps[ep].service;
        if self.faults.partitioned.get(&kind).copied().unwrap_or(0) > 0 {
            // dropped on the wire; the timeout fires
            return;
        }
        if let Some(f) = self.faults.step.get(&ep).copied() {
            if f.probability >= 1.0 || self.streams.chaos.unit() < f.probability {
                let outcome = match f.mode {
                    InjectedFailure::Timeout => return,
                    InjectedFailure::InstanceCrashed => Outcome::InstanceCrashed,
                    InjectedFailure::Rejected => Outcome::Rejected,
                    InjectedFailure::PaymentDeclined => Outcome::BusinessFailure,
                };
                self.at(now, Ev::AttemptEnd { attempt: aid, outcome });
                return;
            }
        }
        if matches!(self.instances[inst].state(), InstanceState::Down | InstanceState::Starting) {
            self.at(now, Ev::AttemptEnd { attempt: aid, outcome: Outcome::InstanceCrashed });
            return;
        }
        let (plan, stages) = self.service_plan(ep);
        match self.admit_job(JobOwner::Attempt(aid), inst, plan, stages, trace, deadline, Some(span), session) {
            Ok(job) => self.attempts.get_mut(&aid).expect("live attempt").job = Some(job),
            Err(outcome) => self.at(now, Ev::AttemptEnd { attempt: aid, outcome }),
        }
    }

    /// Plan for one endpoint served by its own service: compute, sequential
    /// queries, then downstream stages.
    pub(crate) fn service_plan(&mut self, ep: usize) -> (VecDeque<Step>, Vec<Vec<usize>>) {
        let mut plan = VecDeque::new();
        let e = &self.eps[ep];
        let kind = e.service;
        let stream = self.streams.service.get_mut(&kind).expect("stream per kind");
        let mut t = stream.draw(&e.service_time);
        t += self.faults.slow.get(&kind).copied().unwrap_or(SimTime::ZERO);
        plan.push_back(Step::Compute(kind, t));
        if let Some(db) = &e.db {
            let stream = self.streams.db.get_mut(&kind).expect("stream per kind");
            for _ in 0..db.queries {
                plan.push_back(Step::Db(kind, stream.draw(&db.query_time)));
            }
        }
        let stages: Vec<Vec<usize>> =
            e.stages().iter().map(|s| s.iter().map(|n| self.ep_index[*n]).collect()).collect();
        for i in 0..stages.len() {
            plan.push_back(Step::Stage(i));
        }
        (plan, stages)
    }

    /// Close an attempt. Early ends orphan the callee job; successes apply
    /// their ledger effect, so effects of abandoned attempts never land.
    pub(crate) fn finish_attempt(&mut self, aid: u64, outcome: Outcome) {
        let now = self.now();
        let Some(a) = self.attempts.remove(&aid) else { return };
        self.close_span(a.span, outcome);
        if a.bulkhead {
            self.bulkhead.release(a.scope);
        }
        if let Some(permit) = a.permit {
            if outcome != Outcome::Cancelled || permit.probe {
                let failed = breaker_failure(outcome) || outcome == Outcome::Cancelled;
                let params = BreakerParams::from_config(&self.cfg);
                if let Some(b) = self.breakers.get_mut(&a.scope) {
                    b.record(now, permit, failed, &params);
                }
            }
        }
        if outcome == Outcome::InstanceCrashed {
            if let Some(id) = a.instance {
                let until = now + self.cfg.millis("lb.ejection_ms");
                self.ejected.insert(id, until);
            }
        }
        if let Some(job) = a.job {
            self.abandon_job(job);
        }
        let Some(c) = self.calls.get_mut(&a.call) else { return };
        if c.current == Some(aid) {
            c.current = None;
        }
        if outcome == Outcome::Cancelled {
            return;
        }
        if outcome == Outcome::Success {
            if let (Some(action), Some(saga)) = (self.eps[c.endpoint].ledger, c.saga) {
                self.ledger.apply(saga, action);
            }
            self.complete_call(a.call, Outcome::Success);
            return;
        }
        if c.policy.should_retry(outcome, c.attempts) {
            let stream = c.policy.jitter.then_some(&mut self.streams.retry);
            let backoff = c.policy.backoff(c.attempts, stream);
            if now + backoff < c.deadline {
                self.after(backoff, Ev::Retry { call: a.call });
                return;
            }
        }
        self.complete_call(a.call, outcome);
    }

    pub(crate) fn complete_call(&mut self, call: u64, outcome: Outcome) {
        let Some(c) = self.calls.remove(&call) else { return };
        match c.parent {
            Parent::Trace(t) => self.finish_trace(t, outcome),
            Parent::Job(j) => self.child_done(j, call, outcome),
            Parent::Saga { saga, step } => self.saga_result(saga, step, outcome),
            Parent::Message(m) => self.message_result(m, outcome == Outcome::Success),
        }
    }

    /// Abandon a call without notifying its parent.
    pub(crate) fn cancel_call(&mut self, call: u64) {
        let Some(c) = self.calls.remove(&call) else { return };
        if let Some(a) = c.current {
            self.finish_attempt(a, Outcome::Cancelled);
        }
    }
}
