//! Suite execution shared by the command line and the test harnesses:
//! per-member seeding, parallel runs merged in canonical order, paired
//! comparison and the saga audit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builtins::{Suite, SuiteKind};
use crate::saga::SagaState;
use crate::scenario::Scenario;
use crate::telemetry::{compare, metric_value, suite_row, ComparisonReport, MetricsReport, SuiteComparison, TelemetryError};
use crate::world::{simulate, RunError, Simulation};

/// Seeds for suite members. Sweeps give member `i` the seed `root + i`, so a
/// single-value sweep equals a plain run; both sides of a paired family
/// share a seed; chaos cases all use the root.
pub fn member_seeds(suite: &Suite, root: Option<u64>) -> Vec<u64> {
    let root = root.or_else(|| suite.members.first().map(|(_, s)| s.run.seed)).unwrap_or(0);
    (0..suite.members.len() as u64)
        .map(|i| match suite.kind {
            SuiteKind::Sweep => root.wrapping_add(i),
            SuiteKind::Paired => root.wrapping_add(i / 2),
            SuiteKind::Chaos => root,
        })
        .collect()
}

/// Apply seeds to the members of a suite.
pub fn seeded(suite: &Suite, root: Option<u64>) -> Vec<(String, Scenario)> {
    suite
        .members
        .iter()
        .zip(member_seeds(suite, root))
        .map(|((label, s), seed)| {
            let mut s = s.clone();
            s.run.seed = seed;
            (label.clone(), s)
        })
        .collect()
}

/// Run independent scenarios in parallel. Results keep input order.
pub fn run_all(scenarios: Vec<Scenario>) -> Vec<Result<Simulation, RunError>> {
    scenarios.into_par_iter().map(simulate).collect()
}

/// Invariant breaches of a finished run; empty when the run is sound.
pub fn runtime_problems(sim: &Simulation) -> Vec<String> {
    let mut out = sim.probe.violations.clone();
    if !sim.log.counts.conserved() {
        out.push(format!("request counts do not balance: {:?}", sim.log.counts));
    }
    if sim.log.attempts_started != sim.log.spans.len() as u64 {
        out.push(format!("{} attempts started but {} spans recorded", sim.log.attempts_started, sim.log.spans.len()));
    }
    out
}

/// The headline metric of each comparison family.
pub fn family_metric(family: &str) -> &'static str {
    match family {
        "network" => "network_delay",
        "failover" => "recovery",
        _ => "latency",
    }
}

/// Headline rows plus full comparisons for `(mcf, monolith)` report pairs.
pub fn paired_comparison(pairs: &[(MetricsReport, MetricsReport)]) -> Result<SuiteComparison, TelemetryError> {
    let mut rows = Vec::new();
    let mut comparisons: Vec<ComparisonReport> = Vec::new();
    for (a, b) in pairs {
        let metric = family_metric(&a.family);
        rows.push(suite_row(&a.family, metric, metric_value(a, metric)?, metric_value(b, metric)?));
        comparisons.push(compare(a, b)?);
    }
    Ok(SuiteComparison { rows, comparisons })
}

/// All-or-nothing audit of the sagas of one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SagaAudit {
    pub case: String,
    pub sagas: u64,
    pub completed: u64,
    pub compensated: u64,
    pub stuck: u64,
    pub running: u64,
    /// Terminal sagas whose ledger disagrees with their state.
    pub residue_violations: u64,
}

impl SagaAudit {
    pub fn of(case: &str, sim: &Simulation) -> Self {
        let mut a = SagaAudit { case: case.to_string(), ..Default::default() };
        for s in &sim.probe.sagas {
            a.sagas += 1;
            match s.state {
                SagaState::Completed => a.completed += 1,
                SagaState::Compensated => a.compensated += 1,
                SagaState::Stuck => a.stuck += 1,
                _ => a.running += 1,
            }
            if s.state.is_terminal() && !s.residue_ok {
                a.residue_violations += 1;
            }
        }
        a
    }

    /// Every terminal saga is clean and none was left mid-flight.
    pub fn sound(&self) -> bool {
        self.residue_violations == 0 && self.running == 0
    }
}
