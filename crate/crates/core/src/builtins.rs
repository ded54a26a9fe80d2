//! Scenarios and suites shipped with the binary. Every built-in is
//! self-contained: the documents are embedded at compile time.

use crate::control::ConfigValue;
use crate::platform::{DeploymentMode, ServiceKind};
use crate::rng::RandomStream;
use crate::scenario::{FaultSpec, InjectedFailure, Scenario, WorkloadSpec};

const TELEMETRY_STEADY: &str = include_str!("../scenarios/telemetry_steady.toml");
const NORMAL: &str = include_str!("../scenarios/normal.toml");
const PEAK: &str = include_str!("../scenarios/peak.toml");
const HEAVY_DB: &str = include_str!("../scenarios/heavy_db.toml");
const NETWORK: &str = include_str!("../scenarios/network.toml");
const FAILOVER: &str = include_str!("../scenarios/failover.toml");
const BREAKER: &str = include_str!("../scenarios/breaker.toml");
const SPIKE: &str = include_str!("../scenarios/spike.toml");
const LITTLE: &str = include_str!("../scenarios/little.toml");
const TABLE3: &str = include_str!("../scenarios/table3.toml");
const CHAOS_SAGA: &str = include_str!("../scenarios/chaos_saga.toml");

/// The paired comparison families, in table order.
pub const TABLE4_FAMILIES: [&str; 5] = ["normal", "peak", "heavy_db", "network", "failover"];
pub const TABLE3_USERS: [u32; 5] = [100, 500, 1000, 5000, 10000];
pub const LITTLE_USERS: [u32; 2] = [10, 100];
/// Forward steps of the booking saga that hold a reservation.
pub const SAGA_STEPS: [(&str, &str); 3] =
    [("flight", "flight.reserve"), ("hotel", "hotel.reserve"), ("payment", "payment.charge")];
pub const SUITES: [&str; 3] = ["table3_sweep", "table4_suite", "chaos_saga"];

fn load(text: &str) -> Scenario {
    match Scenario::from_toml(text) {
        Ok(s) => s,
        Err(d) => panic!("built-in scenario is invalid: {d:?}"),
    }
}

fn named(mut s: Scenario, name: String, family: &str) -> Scenario {
    s.name = name;
    s.family = family.to_string();
    s
}

fn family_text(family: &str) -> Option<&'static str> {
    Some(match family {
        "normal" => NORMAL,
        "peak" => PEAK,
        "heavy_db" => HEAVY_DB,
        "network" => NETWORK,
        "failover" => FAILOVER,
        _ => return None,
    })
}

/// One side of a comparison family.
pub fn paired(family: &str, mode: DeploymentMode) -> Option<Scenario> {
    let base = named(load(family_text(family)?), format!("{family}_mcf"), family);
    Some(match mode {
        DeploymentMode::Microservices => base,
        DeploymentMode::Monolith => base.with_mode(DeploymentMode::Monolith, &format!("{family}_monolith")),
    })
}

pub fn table3(users: u32) -> Scenario {
    let mut s = named(load(TABLE3), format!("table3_users_{users}"), "table3");
    if let WorkloadSpec::ClosedLoop { users: u, .. } = &mut s.workload {
        *u = users;
    }
    s
}

pub fn little(users: u32) -> Scenario {
    let mut s = named(load(LITTLE), format!("little_{users}"), "little");
    if let WorkloadSpec::ClosedLoop { users: u, .. } = &mut s.workload {
        *u = users;
    }
    if users >= 100 {
        s.run.duration_ms = 60_000.0;
        s.run.warmup_ms = Some(10_000.0);
    }
    s
}

/// Single forced failure on one saga step for the whole run.
pub fn chaos_case(step: &str, mode: InjectedFailure) -> Option<Scenario> {
    let (_, endpoint) = SAGA_STEPS.iter().find(|(s, _)| *s == step)?;
    let mut s = named(load(CHAOS_SAGA), format!("chaos_saga_{step}_{}", mode.name()), "chaos_saga");
    s.faults.push(FaultSpec::StepFailure {
        endpoint: endpoint.to_string(),
        mode,
        probability: 1.0,
        start_ms: 0.0,
        end_ms: f64::INFINITY,
    });
    Some(s)
}

/// Seeded multi-fault run: one to three step failures with random mode,
/// probability and window, sometimes with an instance crash of a booking service.
pub fn chaos_random(seed: u64) -> Scenario {
    let mut rng = RandomStream::new(seed, "chaos-plan");
    let mut s = named(load(CHAOS_SAGA), format!("chaos_saga_random_{seed}"), "chaos_saga");
    s.run.seed = seed;
    let horizon = s.run.duration_ms;
    let faults = 1 + rng.below(3);
    for _ in 0..faults {
        let (_, endpoint) = SAGA_STEPS[rng.below(3) as usize];
        let mode = InjectedFailure::ALL[rng.below(4) as usize];
        let start = (rng.unit() * horizon * 0.5).round();
        let end = start + (rng.unit() * horizon).round() + 1.0;
        s.faults.push(FaultSpec::StepFailure {
            endpoint: endpoint.to_string(),
            mode,
            probability: 0.2 + 0.8 * rng.unit(),
            start_ms: start,
            end_ms: end,
        });
    }
    if rng.unit() < 0.3 {
        let service = [ServiceKind::FlightBooking, ServiceKind::HotelBooking, ServiceKind::PaymentGateway]
            [rng.below(3) as usize];
        s.faults.push(FaultSpec::KillInstances {
            service,
            count: 1,
            at_ms: (rng.unit() * horizon).round(),
            restart_after_ms: Some(500.0),
        });
    }
    s
}

/// Resolve a built-in scenario by name.
pub fn scenario(name: &str) -> Option<Scenario> {
    match name {
        "telemetry_steady" => return Some(load(TELEMETRY_STEADY)),
        "breaker_on" => return Some(load(BREAKER)),
        "breaker_off" => {
            let mut s = named(load(BREAKER), "breaker_off".into(), "breaker");
            s.set("breaker.enabled", ConfigValue::Bool(false));
            return Some(s);
        }
        "spike_autoscale" => return Some(load(SPIKE)),
        "spike_fixed" => {
            let mut s = named(load(SPIKE), "spike_fixed".into(), "spike");
            s.set("autoscale.enabled", ConfigValue::Bool(false));
            return Some(s);
        }
        _ => {}
    }
    if let Some(f) = name.strip_suffix("_mcf") {
        return paired(f, DeploymentMode::Microservices);
    }
    if let Some(f) = name.strip_suffix("_monolith") {
        return paired(f, DeploymentMode::Monolith);
    }
    if let Some(n) = name.strip_prefix("table3_users_") {
        return n.parse().ok().filter(|u| TABLE3_USERS.contains(u)).map(table3);
    }
    if let Some(n) = name.strip_prefix("little_") {
        return n.parse().ok().filter(|u| LITTLE_USERS.contains(u)).map(little);
    }
    if let Some(rest) = name.strip_prefix("chaos_saga_") {
        if let Some(seed) = rest.strip_prefix("random_") {
            return seed.parse().ok().map(chaos_random);
        }
        for (step, _) in SAGA_STEPS {
            for mode in InjectedFailure::ALL {
                if rest == format!("{step}_{}", mode.name()) {
                    return chaos_case(step, mode);
                }
            }
        }
    }
    None
}

/// Every single built-in scenario name, in listing order.
pub fn scenario_names() -> Vec<String> {
    let mut v = vec!["telemetry_steady".to_string()];
    for f in TABLE4_FAMILIES {
        v.push(format!("{f}_mcf"));
        v.push(format!("{f}_monolith"));
    }
    v.extend(["breaker_on", "breaker_off", "spike_autoscale", "spike_fixed"].map(String::from));
    v.extend(LITTLE_USERS.iter().map(|u| format!("little_{u}")));
    v.extend(TABLE3_USERS.iter().map(|u| format!("table3_users_{u}")));
    for (step, _) in SAGA_STEPS {
        for mode in InjectedFailure::ALL {
            v.push(format!("chaos_saga_{step}_{}", mode.name()));
        }
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteKind {
    /// One run per axis value, merged into a table.
    Sweep,
    /// Families run under both deployments, then compared.
    Paired,
    /// Saga fault sweep, audited for all-or-nothing outcomes.
    Chaos,
}

pub struct Suite {
    pub name: &'static str,
    pub kind: SuiteKind,
    /// Column label for the varying parameter.
    pub axis: &'static str,
    /// `(axis label, scenario)` in canonical order.
    pub members: Vec<(String, Scenario)>,
}

pub fn suite(name: &str) -> Option<Suite> {
    Some(match name {
        "table3_sweep" => Suite {
            name: "table3_sweep",
            kind: SuiteKind::Sweep,
            axis: "Concurrent Users",
            members: TABLE3_USERS.iter().map(|u| (u.to_string(), table3(*u))).collect(),
        },
        "table4_suite" => Suite {
            name: "table4_suite",
            kind: SuiteKind::Paired,
            axis: "Scenario",
            members: TABLE4_FAMILIES
                .iter()
                .flat_map(|f| {
                    [DeploymentMode::Microservices, DeploymentMode::Monolith]
                        .map(|m| (f.to_string(), paired(f, m).expect("known family")))
                })
                .collect(),
        },
        "chaos_saga" => Suite {
            name: "chaos_saga",
            kind: SuiteKind::Chaos,
            axis: "Case",
            members: SAGA_STEPS
                .iter()
                .flat_map(|(step, _)| {
                    InjectedFailure::ALL.map(|m| (format!("{step}/{}", m.name()), chaos_case(step, m).expect("known step")))
                })
                .collect(),
        },
        _ => return None,
    })
}
