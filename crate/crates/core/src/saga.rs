//! Orchestrated booking saga: forward steps in order, compensations in
//! reverse on the first terminal failure, and a reservation ledger that makes
//! the all-or-nothing outcome checkable.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerResource {
    Flight,
    Hotel,
    Payment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerAction {
    Reserve(LedgerResource),
    Release(LedgerResource),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SagaStep {
    pub forward: String,
    #[serde(default)]
    pub compensation: Option<String>,
    /// Fire-and-forget tail step delivered through the message queue.
    #[serde(default, rename = "async")]
    pub is_async: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SagaDefinition {
    pub steps: Vec<SagaStep>,
    #[serde(default = "default_comp_attempts")]
    pub compensation_attempts: u32,
    #[serde(default = "default_comp_backoff")]
    pub compensation_backoff_ms: f64,
}

fn default_comp_attempts() -> u32 {
    5
}

fn default_comp_backoff() -> f64 {
    50.0
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SagaDefinitionError {
    #[error("saga has no synchronous steps")]
    Empty,
    #[error("async step `{0}` must come after every synchronous step and carry no compensation")]
    MisplacedAsync(String),
}

impl SagaDefinition {
    pub fn booking() -> Self {
        let step = |f: &str, c: Option<&str>, a: bool| SagaStep {
            forward: f.to_string(),
            compensation: c.map(str::to_string),
            is_async: a,
        };
        SagaDefinition {
            steps: vec![
                step("flight.reserve", Some("flight.cancel"), false),
                step("hotel.reserve", Some("hotel.cancel"), false),
                step("payment.charge", Some("payment.refund"), false),
                step("notification.send", None, true),
            ],
            compensation_attempts: default_comp_attempts(),
            compensation_backoff_ms: default_comp_backoff(),
        }
    }

    pub fn validate(&self) -> Result<(), SagaDefinitionError> {
        let mut seen_async = false;
        let mut sync = 0;
        for s in &self.steps {
            if s.is_async {
                if s.compensation.is_some() {
                    return Err(SagaDefinitionError::MisplacedAsync(s.forward.clone()));
                }
                seen_async = true;
            } else {
                if seen_async {
                    return Err(SagaDefinitionError::MisplacedAsync(s.forward.clone()));
                }
                sync += 1;
            }
        }
        if sync == 0 {
            return Err(SagaDefinitionError::Empty);
        }
        Ok(())
    }

    pub fn sync_steps(&self) -> usize {
        self.steps.iter().filter(|s| !s.is_async).count()
    }

    pub fn async_steps(&self) -> impl Iterator<Item = &SagaStep> {
        self.steps.iter().filter(|s| s.is_async)
    }

    pub fn endpoints(&self) -> impl Iterator<Item = &str> {
        self.steps
            .iter()
            .flat_map(|s| std::iter::once(s.forward.as_str()).chain(s.compensation.as_deref()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SagaId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SagaState {
    Running,
    Completed,
    Compensating,
    Compensated,
    Stuck,
}

impl SagaState {
    pub fn is_terminal(self) -> bool {
        matches!(self, SagaState::Completed | SagaState::Compensated)
    }
}

/// What the coordinator must do next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SagaAction {
    Forward(usize),
    Compensate { step: usize, attempt: u32, delay: SimTime },
    /// Saga completed; enqueue these async tail steps.
    Complete(Vec<usize>),
    /// Compensation finished; the saga is rolled back.
    Compensated,
    Stuck(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepResult {
    Success,
    Failure,
}

#[derive(Debug, Clone)]
pub struct SagaInstance {
    pub id: SagaId,
    pub trace_id: u64,
    state: SagaState,
    sync_steps: usize,
    async_steps: Vec<usize>,
    comp_budget: u32,
    comp_backoff: SimTime,
    completed: Vec<usize>,
    compensated: Vec<usize>,
    comp_attempts: u32,
    pub failed_step: Option<usize>,
}

impl SagaInstance {
    pub fn new(id: SagaId, trace_id: u64, def: &SagaDefinition) -> Self {
        SagaInstance {
            id,
            trace_id,
            state: SagaState::Running,
            sync_steps: def.sync_steps(),
            async_steps: def
                .steps
                .iter()
                .enumerate()
                .filter(|(_, s)| s.is_async)
                .map(|(i, _)| i)
                .collect(),
            comp_budget: def.compensation_attempts.max(1),
            comp_backoff: SimTime::from_micros((def.compensation_backoff_ms * 1000.0).round() as u64),
            completed: Vec::new(),
            compensated: Vec::new(),
            comp_attempts: 0,
            failed_step: None,
        }
    }

    pub fn state(&self) -> SagaState {
        self.state
    }

    /// Forward steps that completed, in execution order.
    pub fn completed_steps(&self) -> &[usize] {
        &self.completed
    }

    /// Compensations that completed, in execution order.
    pub fn compensation_log(&self) -> &[usize] {
        &self.compensated
    }

    pub fn start(&self) -> SagaAction {
        SagaAction::Forward(0)
    }

    fn next_compensation(&mut self, delay: SimTime) -> SagaAction {
        let done = self.compensated.len();
        if done == self.completed.len() {
            self.state = SagaState::Compensated;
            SagaAction::Compensated
        } else {
            let step = self.completed[self.completed.len() - 1 - done];
            self.comp_attempts = 1;
            SagaAction::Compensate { step, attempt: 1, delay }
        }
    }

    /// Advance the state machine with the terminal result of `step`.
    pub fn on_step_result(&mut self, step: usize, result: StepResult) -> SagaAction {
        match (self.state, result) {
            (SagaState::Running, StepResult::Success) => {
                assert_eq!(step, self.completed.len(), "forward steps run in order");
                self.completed.push(step);
                if self.completed.len() == self.sync_steps {
                    self.state = SagaState::Completed;
                    SagaAction::Complete(self.async_steps.clone())
                } else {
                    SagaAction::Forward(step + 1)
                }
            }
            (SagaState::Running, StepResult::Failure) => {
                self.failed_step = Some(step);
                self.state = SagaState::Compensating;
                self.next_compensation(SimTime::ZERO)
            }
            (SagaState::Compensating, StepResult::Success) => {
                self.compensated.push(step);
                self.next_compensation(SimTime::ZERO)
            }
            (SagaState::Compensating, StepResult::Failure) => {
                if self.comp_attempts < self.comp_budget {
                    self.comp_attempts += 1;
                    SagaAction::Compensate { step, attempt: self.comp_attempts, delay: self.comp_backoff }
                } else {
                    self.state = SagaState::Stuck;
                    SagaAction::Stuck(step)
                }
            }
            (s, _) => panic!("step result delivered to saga in state {s:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Entry {
    Active,
    Committed,
}

/// Per-resource reservations keyed by saga.
#[derive(Debug, Clone, Default)]
pub struct ReservationLedger {
    entries: BTreeMap<LedgerResource, BTreeMap<SagaId, Entry>>,
    committed_sagas: BTreeSet<SagaId>,
}

impl ReservationLedger {
    pub fn apply(&mut self, saga: SagaId, action: LedgerAction) {
        match action {
            LedgerAction::Reserve(r) => {
                self.entries.entry(r).or_default().entry(saga).or_insert(Entry::Active);
            }
            LedgerAction::Release(r) => {
                if let Some(m) = self.entries.get_mut(&r) {
                    m.remove(&saga);
                }
            }
        }
    }

    pub fn commit(&mut self, saga: SagaId) {
        for m in self.entries.values_mut() {
            if let Some(e) = m.get_mut(&saga) {
                *e = Entry::Committed;
            }
        }
        self.committed_sagas.insert(saga);
    }

    pub fn holdings(&self, saga: SagaId) -> BTreeSet<LedgerResource> {
        self.entries
            .iter()
            .filter(|(_, m)| m.contains_key(&saga))
            .map(|(r, _)| *r)
            .collect()
    }

    pub fn active_count(&self, r: LedgerResource) -> usize {
        self.entries.get(&r).map_or(0, |m| m.values().filter(|e| **e == Entry::Active).count())
    }

    pub fn committed_count(&self, r: LedgerResource) -> usize {
        self.entries.get(&r).map_or(0, |m| m.values().filter(|e| **e == Entry::Committed).count())
    }

    /// All-or-nothing check for a saga in a terminal state.
    pub fn residue_ok(&self, saga: SagaId, state: SagaState, expected: &BTreeSet<LedgerResource>) -> bool {
        let held = self.holdings(saga);
        match state {
            SagaState::Completed => {
                &held == expected
                    && held.iter().all(|r| self.entries[r].get(&saga) == Some(&Entry::Committed))
            }
            SagaState::Compensated => held.is_empty(),
            _ => true,
        }
    }
}
