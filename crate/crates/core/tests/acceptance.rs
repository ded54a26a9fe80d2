//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line with the
//! measured values, then asserts. Tolerances are pinned here.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use mcfsim::builtins::{self, SuiteKind, LITTLE_USERS, TABLE3_USERS, TABLE4_FAMILIES};
use mcfsim::control::AutoscalePolicy;
use mcfsim::platform::{DeploymentMode, InstanceId, ServiceKind};
use mcfsim::resilience::{BreakerDecision, BreakerParams, BreakerState, CircuitBreaker, Permit, RetryPolicy};
use mcfsim::runner::{run_all, runtime_problems, seeded, SagaAudit};
use mcfsim::scenario::{Scenario, WorkloadSpec};
use mcfsim::sim::SimTime;
use mcfsim::telemetry::{nearest_rank, MetricsReport};
use mcfsim::traffic::{HashRing, DEFAULT_VNODES};
use mcfsim::world::{run_scenario, simulate, RunResult, Simulation};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

const DETERMINISM_BUDGET: Duration = Duration::from_secs(30);
const SWEEP_BUDGET: Duration = Duration::from_secs(300);
const PLATEAU_TOLERANCE: f64 = 0.05;
const NORMAL_BAND: f64 = 0.20;
const NORMAL_MCF_MS: f64 = 60.0;
const NORMAL_MONOLITH_MS: f64 = 100.0;
const MONOLITH_RESTART_MS: f64 = 500.0;
const FAST_FAIL_CEILING_MS: f64 = 2.0;
const TIMEOUT_BAND_MS: (f64, f64) = (900.0, 1000.0);
/// The breaker scenario partitions the callee from 5s; later calls are steady state.
const BREAKER_STEADY_FROM: SimTime = SimTime::from_millis(20_000);
const RANDOM_CHAOS_RUNS: u64 = 1000;
const RING_PROBES: usize = 10_000;
const RING_REMAP: (f64, f64) = (0.20, 0.30);
const BREAKER_SEQUENCES: u32 = 10_000;
const BREAKER_MAX_LEN: usize = 200;
const LITTLE_TOLERANCE: f64 = 0.05;
const COOLDOWNS_TO_BASELINE: u32 = 3;

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    println!("[{}] {id:02} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

/// Run with the conservation audit enforced on every acceptance run.
fn audited(sim: Simulation) -> Simulation {
    let problems = runtime_problems(&sim);
    assert!(problems.is_empty(), "{}: {problems:?}", sim.log.scenario);
    sim
}

fn run(s: Scenario) -> RunResult {
    audited(simulate(s).expect("valid scenario")).report().expect("report")
}

fn builtin(name: &str) -> RunResult {
    run(builtins::scenario(name).unwrap_or_else(|| panic!("{name} is built in")))
}

#[test]
fn c01_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    let mut slowest = Duration::ZERO;
    for i in 0..2 {
        let path = dir.path().join(format!("run{i}.json"));
        let t = Instant::now();
        let args = ["mcfsim", "run", "telemetry_steady", "--seed", "42", "--out", path.to_str().unwrap()];
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = mcfsim::cli::main_with(args, &mut out, &mut err);
        slowest = slowest.max(t.elapsed());
        assert_eq!(code, 0, "{}", String::from_utf8_lossy(&err));
        outputs.push(std::fs::read(&path).unwrap());
    }
    // every other built-in, at a seed other than its default
    let mut diverged = Vec::new();
    for name in builtins::scenario_names() {
        let mut s = builtins::scenario(&name).unwrap();
        s.run.seed = 0x5eed ^ s.run.seed;
        let runs = run_all(vec![s.clone(), s]);
        let texts: Vec<String> =
            runs.into_iter().map(|r| r.unwrap().report().map(|r| r.report.to_canonical_json()).unwrap_or_default()).collect();
        if texts[0] != texts[1] {
            diverged.push(name);
        }
    }
    let same = outputs[0] == outputs[1];
    verdict(
        1,
        "determinism",
        same && diverged.is_empty() && slowest < DETERMINISM_BUDGET,
        &format!(
            "telemetry_steady --seed 42 identical={same} ({} bytes), slowest run {:.2}s, built-ins diverging under reseed: {diverged:?}",
            outputs[0].len(),
            slowest.as_secs_f64()
        ),
    );
}

#[test]
fn c02_scalability_sweep() {
    let t = Instant::now();
    let suite = builtins::suite("table3_sweep").unwrap();
    assert_eq!(suite.kind, SuiteKind::Sweep);
    let members = seeded(&suite, None);
    let reports: Vec<MetricsReport> =
        run_all(members.into_iter().map(|(_, s)| s).collect()).into_iter().map(|r| audited(r.unwrap()).report().unwrap().report).collect();
    let elapsed = t.elapsed();
    let mean: Vec<f64> = reports.iter().map(|r| r.latency_ms.mean.0).collect();
    let cpu: Vec<f64> = reports.iter().map(|r| r.cpu_percent.aggregate.0).collect();
    let tps: Vec<f64> = reports.iter().map(|r| r.throughput_tps.0).collect();
    let non_decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0]);
    let plateau = tps.iter().copied().fold(f64::MIN, f64::max);
    // saturation: first point within tolerance of the plateau
    let sat = tps.iter().position(|x| *x >= plateau * (1.0 - PLATEAU_TOLERANCE)).unwrap();
    let rising = non_decreasing(&tps[..=sat]);
    let flat = tps[sat..].iter().all(|x| (plateau - x) / plateau <= PLATEAU_TOLERANCE);
    let pass = non_decreasing(&mean) && non_decreasing(&cpu) && rising && flat && elapsed < SWEEP_BUDGET;
    verdict(
        2,
        "scalability sweep",
        pass,
        &format!(
            "users {TABLE3_USERS:?} mean {mean:.1?} cpu {cpu:.2?} tps {tps:.1?}, saturates at {} users, {:.1}s",
            TABLE3_USERS[sat],
            elapsed.as_secs_f64()
        ),
    );
}

fn paired(family: &str) -> (MetricsReport, MetricsReport) {
    let m = run(builtins::paired(family, DeploymentMode::Microservices).unwrap()).report;
    let b = run(builtins::paired(family, DeploymentMode::Monolith).unwrap()).report;
    (m, b)
}

#[test]
fn c03_paired_orderings() {
    let mut rows = BTreeMap::new();
    for f in TABLE4_FAMILIES {
        rows.insert(f, paired(f));
    }
    let lat = |f: &str| (rows[f].0.latency_ms.mean.0, rows[f].1.latency_ms.mean.0);
    let mut detail = Vec::new();
    let mut pass = true;
    for f in ["normal", "peak", "heavy_db"] {
        let (m, b) = lat(f);
        pass &= m < b;
        detail.push(format!("{f} {m:.1}<{b:.1}"));
    }
    let rec = |r: &MetricsReport| r.recovery_time_ms.map_or(f64::INFINITY, |x| x.0);
    let (rm, rb) = (rec(&rows["failover"].0), rec(&rows["failover"].1));
    pass &= rm < rb;
    detail.push(format!("failover recovery {rm:.1}<{rb:.1}"));
    let (nm, nb) = lat("normal");
    let within = |x: f64, target: f64| (x - target).abs() <= NORMAL_BAND * target;
    pass &= within(nm, NORMAL_MCF_MS) && within(nb, NORMAL_MONOLITH_MS);
    let (dm, db) = (rows["network"].0.network_entry_delay_ms.0, rows["network"].1.network_entry_delay_ms.0);
    pass &= dm == 30.0 && db == 40.0;
    detail.push(format!("network entry delay {dm}/{db}"));
    verdict(3, "paired orderings", pass, &detail.join(", "));
}

#[test]
fn c04_failover() {
    let (m, b) = paired("failover");
    let s = builtins::paired("failover", DeploymentMode::Microservices).unwrap();
    let c = &s.config;
    let eviction = c.f64("registry.heartbeat_ms") * c.f64("registry.eviction_misses");
    let policy = RetryPolicy::from_config(c);
    let backoffs: f64 = (1..policy.max_attempts).map(|k| policy.backoff(k, None).micros() as f64 / 1_000.0).sum();
    let cycle = f64::from(policy.max_attempts) * c.f64("call.timeout_ms") + backoffs;
    let bound = eviction + cycle;
    let (rm, rb) = (m.recovery_time_ms.map(|x| x.0), b.recovery_time_ms.map(|x| x.0));
    let pass = matches!((rm, rb), (Some(x), Some(y)) if x.is_finite() && x <= bound && x < y && y >= MONOLITH_RESTART_MS);
    verdict(4, "failover", pass, &format!("mcf recovery {rm:?}ms (bound {bound:.0}ms), monolith {rb:?}ms"));
}

/// p95 latency of calls into the partitioned service once the breaker has settled.
fn callee_p95_ms(r: &RunResult) -> Option<f64> {
    let mut lat: Vec<u64> = r
        .log
        .spans
        .iter()
        .filter(|s| s.callee == Some(ServiceKind::HotelBooking) && s.start >= BREAKER_STEADY_FROM)
        .filter_map(|s| s.end.map(|e| (e - s.start).micros()))
        .collect();
    lat.sort_unstable();
    (!lat.is_empty()).then(|| nearest_rank(&lat, 95.0) as f64 / 1_000.0)
}

fn steady_max_queue(r: &RunResult, kind: ServiceKind) -> u64 {
    r.probe.queue_samples.iter().filter(|(t, k, _)| *k == kind && *t >= BREAKER_STEADY_FROM).map(|q| q.2).max().unwrap_or(0)
}

#[test]
fn c05_breaker_efficacy() {
    let (on, off) = (builtin("breaker_on"), builtin("breaker_off"));
    let (p_on, p_off) = (callee_p95_ms(&on), callee_p95_ms(&off));
    let s = builtins::scenario("breaker_on").unwrap();
    let upstream = ServiceKind::SearchRecommendations;
    let slots = u64::from(s.deployment.capacity_per_instance) * u64::from(s.deployment.count(upstream));
    let (q_on, q_off) = (steady_max_queue(&on, upstream), steady_max_queue(&off, upstream));
    let pass = p_on.is_some_and(|p| p <= FAST_FAIL_CEILING_MS)
        && p_off.is_some_and(|p| (TIMEOUT_BAND_MS.0..=TIMEOUT_BAND_MS.1).contains(&p))
        && q_on <= slots;
    verdict(
        5,
        "breaker efficacy",
        pass,
        &format!("callee p95 on {p_on:?}ms off {p_off:?}ms; steady upstream queue on {q_on} (slots {slots}) off {q_off}"),
    );
}

#[test]
fn c06_saga_consistency() {
    let suite = builtins::suite("chaos_saga").unwrap();
    let cases: Vec<Scenario> = seeded(&suite, None).into_iter().map(|(_, s)| s).collect();
    let n_cases = cases.len();
    let mut single = SagaAudit::default();
    for (i, sim) in run_all(cases).into_iter().enumerate() {
        let a = SagaAudit::of(&suite.members[i].0, &audited(sim.unwrap()));
        single.sagas += a.sagas;
        single.compensated += a.compensated;
        single.completed += a.completed;
        single.stuck += a.stuck;
        single.running += a.running;
        single.residue_violations += a.residue_violations;
    }
    let mut random = SagaAudit::default();
    for seed in 0..RANDOM_CHAOS_RUNS {
        let a = SagaAudit::of("random", &audited(simulate(builtins::chaos_random(seed)).unwrap()));
        random.sagas += a.sagas;
        random.completed += a.completed;
        random.compensated += a.compensated;
        random.stuck += a.stuck;
        random.running += a.running;
        random.residue_violations += a.residue_violations;
    }
    let terminal = single.completed + single.compensated + random.completed + random.compensated;
    let pass = n_cases == 12 && single.sound() && single.stuck == 0 && random.sound() && terminal > 0;
    verdict(
        6,
        "saga consistency",
        pass,
        &format!(
            "{n_cases} single-fault cases: {} sagas, {} compensated, {} stuck, {} residue; {RANDOM_CHAOS_RUNS} random runs: {} sagas, {} completed, {} compensated, {} stuck (surfaced), {} residue",
            single.sagas, single.compensated, single.stuck, single.residue_violations,
            random.sagas, random.completed, random.compensated, random.stuck, random.residue_violations
        ),
    );
}

#[test]
fn c07_consistent_hashing() {
    let keys: Vec<String> = (0..RING_PROBES).map(|i| format!("session-{i}")).collect();
    let mut ring = HashRing::new(DEFAULT_VNODES);
    for id in 0..4 {
        ring.add(InstanceId(id));
    }
    let before: Vec<InstanceId> = keys.iter().map(|k| ring.lookup(k).unwrap()).collect();
    let mut removed = ring.clone();
    removed.remove(InstanceId(2)).unwrap();
    let after: Vec<InstanceId> = keys.iter().map(|k| removed.lookup(k).unwrap()).collect();
    let moved = before.iter().zip(&after).filter(|(b, a)| b != a).count();
    // only keys owned by the removed node may move
    let stray = before.iter().zip(&after).filter(|(b, a)| b != a && **b != InstanceId(2)).count();
    let frac = moved as f64 / RING_PROBES as f64;
    let mut grown = ring.clone();
    grown.add(InstanceId(4));
    grown.remove(InstanceId(4)).unwrap();
    let restored = keys.iter().zip(&before).all(|(k, b)| grown.lookup(k) == Some(*b)) && grown == ring;
    let pass = (RING_REMAP.0..=RING_REMAP.1).contains(&frac) && stray == 0 && restored;
    verdict(7, "consistent hashing", pass, &format!("remapped {frac:.4} of {RING_PROBES} keys, {stray} strays, add-then-remove restores={restored}"));
}

/// Independent reference breaker: full history kept, window recomputed from
/// the tail on every record, stale outcomes identified by phase number.
#[derive(Debug, Clone)]
struct RefBreaker {
    phase: u64,
    mode: RefMode,
    outcomes: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RefMode {
    Closed,
    Open(u64),
    HalfOpen { issued: u32, ok: u32 },
}

impl RefBreaker {
    fn enter(&mut self, m: RefMode) {
        self.mode = m;
        self.phase += 1;
        self.outcomes.clear();
    }

    /// Returns `(admitted, probe, phase)`.
    fn allow(&mut self, now: u64, p: &BreakerParams) -> (bool, bool, u64) {
        match self.mode {
            RefMode::Closed => (true, false, self.phase),
            RefMode::Open(at) if now - at < p.open_duration.micros() => (false, false, 0),
            RefMode::Open(_) => {
                self.enter(RefMode::HalfOpen { issued: 1, ok: 0 });
                (true, true, self.phase)
            }
            RefMode::HalfOpen { issued, ok } if issued < p.half_open_probes => {
                self.mode = RefMode::HalfOpen { issued: issued + 1, ok };
                (true, true, self.phase)
            }
            RefMode::HalfOpen { .. } => (false, false, 0),
        }
    }

    fn record(&mut self, now: u64, phase: u64, failed: bool, p: &BreakerParams) {
        if phase != self.phase {
            return;
        }
        match self.mode {
            RefMode::Closed => {
                self.outcomes.push(failed);
                let tail = &self.outcomes[self.outcomes.len().saturating_sub(p.window)..];
                let failures = tail.iter().filter(|f| **f).count();
                if !tail.is_empty() && tail.len() >= p.min_calls && failures as f64 / tail.len() as f64 >= p.failure_ratio {
                    self.enter(RefMode::Open(now));
                }
            }
            RefMode::HalfOpen { .. } if failed => self.enter(RefMode::Open(now)),
            RefMode::HalfOpen { ok, .. } if ok + 1 >= p.half_open_probes => self.enter(RefMode::Closed),
            RefMode::HalfOpen { issued, ok } => self.mode = RefMode::HalfOpen { issued, ok: ok + 1 },
            RefMode::Open(_) => {}
        }
    }

    fn matches(&self, s: BreakerState) -> bool {
        match (self.mode, s) {
            (RefMode::Closed, BreakerState::Closed) => true,
            (RefMode::Open(a), BreakerState::Open { opened_at }) => a == opened_at.micros(),
            (RefMode::HalfOpen { issued, ok }, BreakerState::HalfOpen { probes_issued, successes }) => {
                issued == probes_issued && ok == successes
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    /// Advance the clock, then ask for admission.
    Call(u64),
    /// Resolve the pending call at this index (mod pending count).
    Resolve(usize, bool),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0u64..3_000_000).prop_map(Op::Call),
        4 => (any::<usize>(), prop::bool::weighted(0.6)).prop_map(|(i, f)| Op::Resolve(i, f)),
    ]
}

fn params() -> impl Strategy<Value = BreakerParams> {
    (1usize..30, 0usize..15, 0.05f64..1.0, 1u64..5_000, 1u32..5).prop_map(|(window, min_calls, ratio, open_ms, probes)| {
        BreakerParams {
            window,
            min_calls,
            failure_ratio: ratio,
            open_duration: SimTime::from_millis(open_ms),
            half_open_probes: probes,
        }
    })
}

#[test]
fn c08_breaker_equivalence() {
    let mut runner = TestRunner::new(Config { cases: BREAKER_SEQUENCES, failure_persistence: None, ..Config::default() });
    let strategy = (params(), prop::collection::vec(op(), 1..=BREAKER_MAX_LEN));
    let mut checked = 0u64;
    let result = runner.run(&strategy, |(p, ops)| {
        let mut b = CircuitBreaker::default();
        let mut r = RefBreaker { phase: 0, mode: RefMode::Closed, outcomes: Vec::new() };
        let mut now = 0u64;
        let mut pending: Vec<(Permit, u64)> = Vec::new();
        for op in ops {
            match op {
                Op::Call(dt) => {
                    now += dt;
                    let (d, permit) = b.allow(SimTime::from_micros(now), &p);
                    let (admitted, probe, phase) = r.allow(now, &p);
                    prop_assert_eq!(d != BreakerDecision::FastFail, admitted);
                    prop_assert_eq!(d == BreakerDecision::AdmitProbe, probe);
                    if let Some(permit) = permit {
                        pending.push((permit, phase));
                    }
                }
                Op::Resolve(i, failed) if !pending.is_empty() => {
                    let (permit, phase) = pending.remove(i % pending.len());
                    b.record(SimTime::from_micros(now), permit, failed, &p);
                    r.record(now, phase, failed, &p);
                }
                Op::Resolve(..) => {}
            }
            prop_assert!(r.matches(b.state()), "ref {:?} vs {:?}", r.mode, b.state());
        }
        Ok(())
    });
    checked += u64::from(BREAKER_SEQUENCES);
    let pass = result.is_ok();
    let detail = match &result {
        Ok(()) => format!("{checked} random sequences (length <= {BREAKER_MAX_LEN}) agree with the reference"),
        Err(e) => format!("divergence: {e}"),
    };
    verdict(8, "breaker equivalence", pass, &detail);
}

#[test]
fn c09_littles_law() {
    let mut detail = Vec::new();
    let mut pass = true;
    for n in LITTLE_USERS {
        let s = builtins::little(n);
        let WorkloadSpec::ClosedLoop { think_ms, .. } = s.workload else { panic!("closed loop") };
        let r = run(s).report;
        let x = r.throughput_tps.0;
        let resp = r.latency_ms.mean.0;
        let n_hat = x * (resp + think_ms) / 1_000.0;
        let err = (n_hat - f64::from(n)).abs() / f64::from(n);
        pass &= err <= LITTLE_TOLERANCE && r.error_rate.0 == 0.0;
        detail.push(format!("N={n}: X={x:.2}/s R={resp:.1}ms Z={think_ms}ms X(R+Z)={n_hat:.2} err {:.2}%", err * 100.0));
    }
    verdict(9, "little's law", pass, &detail.join("; "));
}

fn count_at(timeline: &[(SimTime, ServiceKind, u32)], kind: ServiceKind, t: SimTime) -> Option<u32> {
    timeline.iter().filter(|(at, k, _)| *k == kind && *at <= t).last().map(|x| x.2)
}

#[test]
fn c10_autoscaler_spike() {
    let (auto, fixed) = (builtin("spike_autoscale"), builtin("spike_fixed"));
    let s = builtins::scenario("spike_autoscale").unwrap();
    let ceiling = s.config.f64("degrade.latency_ceiling_ms");
    let WorkloadSpec::Spike { multiplier, start_ms, duration_ms, .. } = s.workload else { panic!("spike workload") };
    let policy = AutoscalePolicy::from_config(&s.config);
    let (pa, pf) = (auto.report.latency_ms.p95.0, fixed.report.latency_ms.p95.0);
    let spike_start = SimTime::from_micros((start_ms * 1_000.0) as u64);
    let spike_end = SimTime::from_micros(((start_ms + duration_ms) * 1_000.0) as u64);
    let settle = spike_end + SimTime::from_micros(policy.cooldown.micros() * u64::from(COOLDOWNS_TO_BASELINE));
    let kinds: BTreeSet<ServiceKind> = auto.log.timeline.iter().map(|x| x.1).filter(|k| *k != ServiceKind::ApiGateway).collect();
    let mut unreturned = Vec::new();
    let mut scaled = false;
    for k in &kinds {
        let base = count_at(&auto.log.timeline, *k, spike_start);
        let peak = auto.log.timeline.iter().filter(|x| x.1 == *k).map(|x| x.2).max();
        scaled |= peak > base;
        if count_at(&auto.log.timeline, *k, settle) != base {
            unreturned.push(k.name());
        }
    }
    // invariants re-derived from the raw action log and timeline
    let mut last: BTreeMap<ServiceKind, SimTime> = BTreeMap::new();
    let mut cooldown_breaches = 0;
    for (t, k, _) in &auto.probe.scale_actions {
        if let Some(prev) = last.insert(*k, *t) {
            if *t < prev + policy.cooldown {
                cooldown_breaches += 1;
            }
        }
    }
    let out_of_bounds = auto
        .log
        .timeline
        .iter()
        .filter(|(_, k, n)| *k != ServiceKind::ApiGateway && (*n < policy.min_instances || *n > policy.max_instances))
        .count();
    let pass = multiplier == 5.0
        && duration_ms == 30_000.0
        && pa < ceiling
        && pf > ceiling
        && scaled
        && unreturned.is_empty()
        && cooldown_breaches == 0
        && out_of_bounds == 0
        && auto.probe.violations.is_empty();
    verdict(
        10,
        "autoscaler spike",
        pass,
        &format!(
            "p95 autoscaled {pa:.1}ms fixed {pf:.1}ms (ceiling {ceiling}ms); not back to baseline {:.1}s after spike: {unreturned:?}; {cooldown_breaches} cooldown breaches, {out_of_bounds} out-of-bounds counts, {} scale actions",
            settle.as_secs_f64() - spike_end.as_secs_f64(),
            auto.probe.scale_actions.len()
        ),
    );
}

#[test]
fn c11_conservation() {
    let mut scenarios: Vec<Scenario> =
        builtins::scenario_names().iter().map(|n| builtins::scenario(n).unwrap()).collect();
    scenarios.extend((0..50).map(builtins::chaos_random));
    let total = scenarios.len();
    let mut broken = Vec::new();
    let mut issued = 0u64;
    let mut spans = 0u64;
    for sim in run_all(scenarios) {
        let sim = sim.unwrap();
        let c = &sim.log.counts;
        issued += c.issued;
        spans += sim.log.spans.len() as u64;
        let balanced = c.issued == c.completed + c.rejected + c.shed + c.failed + c.inflight_at_end;
        let span_ok = sim.log.attempts_started == sim.log.spans.len() as u64
            && sim.log.spans.iter().all(|s| s.end.is_some() == s.outcome.is_some());
        if !balanced || !span_ok || !runtime_problems(&sim).is_empty() {
            broken.push(sim.log.scenario.clone());
        }
    }
    verdict(
        11,
        "conservation",
        broken.is_empty(),
        &format!("{total} runs, {issued} requests, {spans} spans; unbalanced runs: {broken:?}"),
    );
}

#[test]
fn report_is_reachable_through_the_plain_entry_point() {
    // the convenience wrapper and the two-step path agree
    let s = builtins::scenario("normal_mcf").unwrap();
    let a = run_scenario(s.clone()).unwrap().report.to_canonical_json();
    let b = simulate(s).unwrap().report().unwrap().report.to_canonical_json();
    assert_eq!(a, b);
}
