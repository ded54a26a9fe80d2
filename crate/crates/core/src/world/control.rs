//! Control loops: heartbeats and eviction, autoscaling, load shedding,
//! sampling, fault injection and live configuration.

use crate::control::{evaluate_scaling, AutoscalePolicy, ScaleDecision};
use crate::platform::{InstanceState, ServiceKind};
use crate::resilience::{degrade_evaluate, DegradeParams};
use crate::scenario::{ms, DbName, DbTarget, FaultSpec, Link};
use crate::sim::SimTime;
use crate::telemetry::nearest_rank;

use super::{ActiveStepFault, Ev, World};

impl World {
    pub(crate) fn register(&mut self, inst: usize) {
        let now = self.now();
        let (id, kind) = (self.instances[inst].id, self.instances[inst].kind);
        if self.registry.register(id, kind, now).is_err() {
            // still healthy from before a quick restart
            self.registry.heartbeat(id, now);
        }
        self.registry.set_draining(id, false);
        self.hb_chain[inst] += 1;
        let chain = self.hb_chain[inst];
        let deadline = self.registry.deadline_for(now);
        self.at(deadline, Ev::HeartbeatDeadline { inst: inst as u32, beat: now });
        let interval = self.registry.heartbeat_interval;
        self.after(interval, Ev::Heartbeat { inst: inst as u32, chain });
    }

    pub(crate) fn on_heartbeat(&mut self, inst: usize, chain: u64) {
        if self.hb_chain[inst] != chain || !self.instances[inst].is_alive() {
            return;
        }
        let now = self.now();
        let id = self.instances[inst].id;
        if !self.registry.heartbeat(id, now) {
            // evicted while alive (e.g. after a long stall): re-register
            let _ = self.registry.register(id, self.instances[inst].kind, now);
            if self.instances[inst].state() == InstanceState::Draining {
                self.registry.set_draining(id, true);
            }
        }
        let deadline = self.registry.deadline_for(now);
        self.at(deadline, Ev::HeartbeatDeadline { inst: inst as u32, beat: now });
        let interval = self.registry.heartbeat_interval;
        self.after(interval, Ev::Heartbeat { inst: inst as u32, chain });
    }

    pub(crate) fn on_heartbeat_deadline(&mut self, inst: usize, beat: SimTime) {
        let id = self.instances[inst].id;
        self.registry.check_deadline(id, beat, self.now());
    }

    pub(crate) fn on_instance_ready(&mut self, inst: usize) {
        if self.instances[inst].state() != InstanceState::Starting {
            return;
        }
        let now = self.now();
        self.instances[inst].set_state(now, InstanceState::Up);
        self.register(inst);
    }

    pub(crate) fn on_restart(&mut self, inst: usize) {
        if self.instances[inst].state() != InstanceState::Down {
            return;
        }
        let now = self.now();
        self.instances[inst].restart(now);
        if !self.is_monolith() {
            self.register(inst);
        }
    }

    /// Take a drained instance out of service for good.
    pub(crate) fn retire(&mut self, inst: usize) {
        let now = self.now();
        self.instances[inst].set_state(now, InstanceState::Down);
        self.hb_chain[inst] += 1;
        self.registry.deregister(self.instances[inst].id);
        let kind = self.instances[inst].kind;
        self.record_timeline(kind);
    }

    pub(crate) fn on_scale_evaluate(&mut self) {
        let now = self.now();
        let eval = self.cfg.millis("autoscale.eval_ms").max(SimTime::from_millis(1));
        if now + eval <= self.duration {
            self.after(eval, Ev::ScaleEvaluate);
        }
        if !self.cfg.bool("autoscale.enabled") {
            return;
        }
        let policy = AutoscalePolicy::from_config(&self.cfg);
        if !policy.is_valid() {
            self.probe.violations.push(format!("invalid autoscale policy at {now}"));
            return;
        }
        self.util.record(now, &self.instances);
        let from = now.saturating_sub(policy.window);
        for kind in self.pool_kinds() {
            if kind == ServiceKind::ApiGateway {
                continue;
            }
            let Ok(util) = self.util.utilization(Some(kind), from, now) else { continue };
            let current = self.active_count(kind);
            let last = self.last_scale.get(&kind).copied();
            let decision = evaluate_scaling(&policy, current, util, now, last);
            match decision {
                ScaleDecision::Hold => continue,
                ScaleDecision::ScaleOut(n) => {
                    for _ in 0..n {
                        let idx = self.spawn_instance(kind, InstanceState::Starting);
                        self.after(policy.startup_delay, Ev::InstanceReady { inst: idx as u32 });
                    }
                }
                ScaleDecision::ScaleIn(n) => {
                    let victims: Vec<usize> = self
                        .instances
                        .iter()
                        .enumerate()
                        .rev()
                        .filter(|(_, i)| i.kind == kind && i.state() == InstanceState::Up)
                        .map(|(idx, _)| idx)
                        .take(n as usize)
                        .collect();
                    for idx in victims {
                        self.instances[idx].set_state(now, InstanceState::Draining);
                        self.registry.set_draining(self.instances[idx].id, true);
                        if self.instances[idx].inflight() == 0 && self.instances[idx].queue_len() == 0 {
                            self.retire(idx);
                        }
                    }
                }
            }
            // restoring the floor is exempt from cooldown
            let floor_repair = current < policy.min_instances;
            if let (Some(prev), false) = (last, floor_repair) {
                if now < prev + policy.cooldown {
                    self.probe.violations.push(format!("{} scaled inside cooldown at {now}", kind.name()));
                }
            }
            self.last_scale.insert(kind, now);
            self.probe.scale_actions.push((now, kind, decision));
            self.record_timeline(kind);
            let after = self.active_count(kind);
            if after < policy.min_instances || after > policy.max_instances {
                self.probe.violations.push(format!("{} has {after} instances outside bounds at {now}", kind.name()));
            }
        }
    }

    pub(crate) fn on_degrade_evaluate(&mut self) {
        let now = self.now();
        let eval = self.cfg.millis("degrade.eval_ms").max(SimTime::from_millis(1));
        if now + eval <= self.duration {
            self.after(eval, Ev::DegradeEvaluate);
        }
        let from = now.saturating_sub(self.cfg.millis("degrade.window_ms"));
        while self.recent_ok.front().is_some_and(|(t, _)| *t < from) {
            self.recent_ok.pop_front();
        }
        if !self.cfg.bool("degrade.enabled") {
            if !self.shed.is_empty() {
                self.shed.clear();
                self.probe.shed_changes.push((now, self.shed.clone()));
            }
            return;
        }
        let mut lat: Vec<u64> = self.recent_ok.iter().map(|(_, l)| *l).collect();
        lat.sort_unstable();
        let p95 = (!lat.is_empty()).then(|| nearest_rank(&lat, 95.0) as f64 / 1_000.0);
        self.util.record(now, &self.instances);
        let util = self.util.utilization(None, from, now).unwrap_or(0.0);
        let params = DegradeParams {
            latency_ceiling_ms: self.cfg.f64("degrade.latency_ceiling_ms"),
            shed_watermark: self.cfg.f64("degrade.shed_watermark"),
        };
        let shed = degrade_evaluate(&self.sc.routes, p95, util, &params);
        if shed != self.shed {
            self.shed = shed;
            self.probe.shed_changes.push((now, self.shed.clone()));
        }
    }

    pub(crate) fn on_sample(&mut self, periodic: bool) {
        let now = self.now();
        if periodic {
            let step = ms(self.sc.run.sample_ms).max(SimTime::from_millis(1));
            if now + step <= self.duration {
                self.after(step, Ev::Sample { periodic: true });
            }
        }
        self.util.record(now, &self.instances);
        for kind in self.pool_kinds() {
            let queued: u64 = self.instances.iter().filter(|i| i.kind == kind).map(|i| i.queue_len() as u64).sum();
            self.probe.queue_samples.push((now, kind, queued));
        }
        for i in &self.instances {
            if !i.work_conserving() {
                self.probe.violations.push(format!("{} idles with queued work at {now}", i.id));
            }
        }
        let dbq = self.dbs.iter().map(|d| d.queue_len() as u64).max().unwrap_or(0);
        self.probe.db_peak_queue = self.probe.db_peak_queue.max(dbq);
    }

    pub(crate) fn on_config_update(&mut self, idx: usize) {
        let u = self.sc.config_updates[idx].clone();
        if let Err(e) = self.cfg.set(&u.key, u.value) {
            self.probe.violations.push(format!("config update {}: {e}", u.key));
        }
    }

    fn fault_dbs(&self, target: DbTarget) -> Vec<usize> {
        match target {
            DbTarget::Named(DbName::All) => (0..self.dbs.len()).collect(),
            DbTarget::Named(DbName::Shared) => {
                if self.is_monolith() {
                    vec![0]
                } else {
                    Vec::new()
                }
            }
            DbTarget::Service(k) => {
                if self.is_monolith() {
                    vec![0]
                } else {
                    self.db_of.get(&k).map(|d| vec![*d]).unwrap_or_default()
                }
            }
        }
    }

    pub(crate) fn on_fault(&mut self, idx: usize, inject: bool) {
        let now = self.now();
        let f = self.sc.faults[idx].clone();
        let add = |t: &mut SimTime, d: SimTime| {
            *t = if inject { *t + d } else { t.saturating_sub(d) };
        };
        match f {
            FaultSpec::KillInstances { service, count, restart_after_ms, .. } => {
                let targets: Vec<usize> = if self.is_monolith() {
                    vec![0]
                } else {
                    self.instances
                        .iter()
                        .enumerate()
                        .filter(|(_, i)| i.kind == service && i.state() == InstanceState::Up)
                        .map(|(idx, _)| idx)
                        .take(count as usize)
                        .collect()
                };
                let restart = match (restart_after_ms, self.is_monolith()) {
                    (Some(r), _) => Some(ms(r)),
                    (None, true) => Some(ms(self.sc.deployment.restart_time_ms)),
                    (None, false) => None,
                };
                for t in targets {
                    self.crash_instance(t);
                    if let Some(r) = restart {
                        self.after(r, Ev::Restart { inst: t as u32 });
                    }
                }
            }
            FaultSpec::SlowInstances { service, added_ms, .. } => {
                add(self.faults.slow.entry(service).or_default(), ms(added_ms));
            }
            FaultSpec::NetworkDelay { link, delay_ms, .. } => match link {
                Link::Entry => add(&mut self.faults.entry_extra, ms(delay_ms)),
                Link::Internal => add(&mut self.faults.internal_extra, ms(delay_ms)),
            },
            FaultSpec::DbOverload { database, reduction, .. } => {
                for db in self.fault_dbs(database) {
                    let started = self.dbs[db].set_reduction(now, if inject { reduction } else { 0.0 });
                    self.db_started(db, started);
                }
            }
            FaultSpec::PartitionService { service, .. } => {
                let n = self.faults.partitioned.entry(service).or_default();
                *n = if inject { *n + 1 } else { n.saturating_sub(1) };
            }
            FaultSpec::StepFailure { endpoint, mode, probability, .. } => {
                let ep = self.ep_index[&endpoint];
                if inject {
                    self.faults.step.insert(ep, ActiveStepFault { endpoint: ep, mode, probability });
                } else {
                    self.faults.step.remove(&ep);
                }
            }
        }
    }

}
