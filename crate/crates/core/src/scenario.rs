//! Experiment descriptions: deployment, catalog, routes, pattern parameters,
//! workload generators, fault schedule and run window. Loaded from TOML or
//! taken from the built-in set.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::control::{config_schema, AutoscalePolicy, ConfigStore, ConfigValue};
use crate::platform::{default_catalog, Catalog, DeploymentMode, DeploymentModel, EndpointSpec, ServiceKind};
use crate::rng::Distribution;
use crate::saga::SagaDefinition;
use crate::sim::SimTime;
use crate::traffic::{Route, RouteTable, RouteTarget};
use crate::platform::Criticality;

pub fn default_mix() -> BTreeMap<String, f64> {
    [("search_trip", 0.60), ("book_trip", 0.20), ("view_profile", 0.15), ("status_update", 0.05)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThinkTime {
    #[default]
    Exponential,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadSpec {
    ClosedLoop {
        users: u32,
        think_ms: f64,
        #[serde(default)]
        think: ThinkTime,
        #[serde(default = "default_mix")]
        mix: BTreeMap<String, f64>,
    },
    OpenLoop {
        rate_per_s: f64,
        #[serde(default = "default_mix")]
        mix: BTreeMap<String, f64>,
        #[serde(default)]
        deterministic: bool,
    },
    Spike {
        base_rate_per_s: f64,
        multiplier: f64,
        start_ms: f64,
        duration_ms: f64,
        #[serde(default = "default_mix")]
        mix: BTreeMap<String, f64>,
    },
    PeriodicUpdate {
        sources: u32,
        period_ms: f64,
        class: String,
    },
}

impl WorkloadSpec {
    pub fn mix(&self) -> BTreeMap<String, f64> {
        match self {
            WorkloadSpec::ClosedLoop { mix, .. } | WorkloadSpec::OpenLoop { mix, .. } | WorkloadSpec::Spike { mix, .. } => {
                mix.clone()
            }
            WorkloadSpec::PeriodicUpdate { class, .. } => [(class.clone(), 1.0)].into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    /// Client to gateway (or to the monolith).
    Entry,
    /// Service to service.
    Internal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectedFailure {
    /// Request silently dropped; the caller times out.
    Timeout,
    InstanceCrashed,
    Rejected,
    /// Business decline: answered, never retried.
    PaymentDeclined,
}

impl InjectedFailure {
    pub const ALL: [InjectedFailure; 4] =
        [InjectedFailure::Timeout, InjectedFailure::InstanceCrashed, InjectedFailure::Rejected, InjectedFailure::PaymentDeclined];

    pub fn name(self) -> &'static str {
        match self {
            InjectedFailure::Timeout => "timeout",
            InjectedFailure::InstanceCrashed => "instance_crashed",
            InjectedFailure::Rejected => "rejected",
            InjectedFailure::PaymentDeclined => "payment_declined",
        }
    }
}

/// Database selector for overload faults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum DbTarget {
    Service(ServiceKind),
    Named(DbName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DbName {
    Shared,
    All,
}

fn forever() -> f64 {
    f64::INFINITY
}

fn one_f() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FaultSpec {
    KillInstances {
        service: ServiceKind,
        count: u32,
        at_ms: f64,
        #[serde(default)]
        restart_after_ms: Option<f64>,
    },
    SlowInstances {
        service: ServiceKind,
        added_ms: f64,
        start_ms: f64,
        end_ms: f64,
    },
    NetworkDelay {
        link: Link,
        delay_ms: f64,
        start_ms: f64,
        end_ms: f64,
    },
    DbOverload {
        database: DbTarget,
        reduction: f64,
        start_ms: f64,
        end_ms: f64,
    },
    PartitionService {
        service: ServiceKind,
        start_ms: f64,
        end_ms: f64,
    },
    /// Forced failure of calls to one endpoint.
    StepFailure {
        endpoint: String,
        mode: InjectedFailure,
        #[serde(default = "one_f")]
        probability: f64,
        #[serde(default)]
        start_ms: f64,
        #[serde(default = "forever")]
        end_ms: f64,
    },
}

impl FaultSpec {
    /// `(inject, clear)` in milliseconds; clear is infinite for one-shot faults.
    pub fn window_ms(&self) -> (f64, f64) {
        match self {
            FaultSpec::KillInstances { at_ms, restart_after_ms, .. } => {
                (*at_ms, restart_after_ms.map_or(f64::INFINITY, |r| at_ms + r))
            }
            FaultSpec::SlowInstances { start_ms, end_ms, .. }
            | FaultSpec::NetworkDelay { start_ms, end_ms, .. }
            | FaultSpec::DbOverload { start_ms, end_ms, .. }
            | FaultSpec::PartitionService { start_ms, end_ms, .. }
            | FaultSpec::StepFailure { start_ms, end_ms, .. } => (*start_ms, *end_ms),
        }
    }

    pub fn is_crash(&self) -> bool {
        matches!(self, FaultSpec::KillInstances { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigUpdate {
    pub at_ms: f64,
    pub key: String,
    pub value: ConfigValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub duration_ms: f64,
    /// Defaults to 10% of the duration.
    pub warmup_ms: Option<f64>,
    pub seed: u64,
    pub report_window_ms: f64,
    /// Keep simulating after arrivals stop until requests drain, at most this long.
    pub drain_ms: f64,
    pub sample_ms: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec { duration_ms: 60_000.0, warmup_ms: None, seed: 1, report_window_ms: 10_000.0, drain_ms: 0.0, sample_ms: 100.0 }
    }
}

impl RunSpec {
    pub fn duration(&self) -> SimTime {
        ms(self.duration_ms)
    }

    pub fn warmup(&self) -> SimTime {
        ms(self.warmup_ms.unwrap_or(self.duration_ms * 0.1))
    }
}

pub fn ms(x: f64) -> SimTime {
    if x.is_infinite() {
        SimTime::MAX
    } else {
        SimTime::from_micros((x.max(0.0) * 1_000.0).round() as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RouteEntry {
    /// Endpoint name, or `saga` for the booking transaction.
    pub target: String,
    #[serde(default)]
    pub criticality: Criticality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogSection {
    /// Start from the built-in travel catalog.
    pub builtin: bool,
    /// Added, or replacing built-ins with the same name.
    pub endpoints: Vec<EndpointSpec>,
    pub service_time_scale: f64,
    pub db_query_scale: f64,
}

impl Default for CatalogSection {
    fn default() -> Self {
        CatalogSection { builtin: true, endpoints: vec![], service_time_scale: 1.0, db_query_scale: 1.0 }
    }
}

/// The on-disk scenario document.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub deployment: DeploymentModel,
    #[serde(default)]
    pub catalog: CatalogSection,
    #[serde(default)]
    pub routes: Option<BTreeMap<String, RouteEntry>>,
    #[serde(default)]
    pub saga: Option<SagaDefinition>,
    #[serde(default)]
    pub config: toml::Table,
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub config_updates: Vec<ConfigUpdate>,
    #[serde(default)]
    pub run: RunSpec,
}

/// A fully resolved, runnable experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub family: String,
    pub description: String,
    pub deployment: DeploymentModel,
    pub catalog: Catalog,
    pub routes: RouteTable,
    pub saga: SagaDefinition,
    pub config: ConfigStore,
    pub workload: WorkloadSpec,
    pub faults: Vec<FaultSpec>,
    pub config_updates: Vec<ConfigUpdate>,
    pub run: RunSpec,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub section: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: [{}] {}", self.section, self.message),
            None => write!(f, "[{}] {}", self.section, self.message),
        }
    }
}

fn diag(section: &str, message: impl Into<String>) -> Diagnostic {
    Diagnostic { line: None, section: section.to_string(), message: message.into() }
}

/// Best-effort 1-based line of a dotted section path in TOML source.
fn find_line(text: &str, section: &str) -> Option<usize> {
    let parts: Vec<&str> = section.split(['.', '[']).filter(|p| !p.is_empty()).collect();
    let header = |l: &str, s: &str| {
        let t = l.trim();
        t == format!("[{s}]") || t == format!("[[{s}]]")
    };
    // exact table header first, then walk down to the last key
    for cut in (1..=parts.len()).rev() {
        let head = parts[..cut].join(".");
        if let Some(i) = text.lines().position(|l| header(l, &head)) {
            if cut == parts.len() {
                return Some(i + 1);
            }
            let key = parts[cut];
            return text
                .lines()
                .enumerate()
                .skip(i + 1)
                .take_while(|(_, l)| !l.trim_start().starts_with('['))
                .find(|(_, l)| l.trim_start().starts_with(key))
                .map(|(j, _)| j + 1)
                .or(Some(i + 1));
        }
    }
    let key = parts.last()?;
    text.lines().position(|l| l.trim_start().starts_with(key)).map(|i| i + 1)
}

fn flatten_config(prefix: &str, t: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in t {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(inner) => flatten_config(&key, inner, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn toml_to_config(v: &toml::Value) -> Option<ConfigValue> {
    Some(match v {
        toml::Value::Boolean(b) => ConfigValue::Bool(*b),
        toml::Value::Integer(i) => ConfigValue::Int(*i),
        toml::Value::Float(x) => ConfigValue::Float(*x),
        toml::Value::String(s) => ConfigValue::Text(s.clone()),
        _ => return None,
    })
}

impl Scenario {
    /// Parse and resolve a TOML scenario. Every problem found is reported.
    pub fn from_toml(text: &str) -> Result<Scenario, Vec<Diagnostic>> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
            let msg = e.message().to_string();
            vec![Diagnostic { line, section: "document".into(), message: msg }]
        })?;
        let mut diags = Vec::new();
        let sc = Scenario::resolve(file, &mut diags);
        if let Some(sc) = &sc {
            diags.extend(sc.validate());
        }
        for d in &mut diags {
            if d.line.is_none() {
                d.line = find_line(text, &d.section);
            }
        }
        match sc {
            Some(sc) if diags.is_empty() => Ok(sc),
            _ => Err(diags),
        }
    }

    fn resolve(file: ScenarioFile, diags: &mut Vec<Diagnostic>) -> Option<Scenario> {
        let mut endpoints: Vec<EndpointSpec> =
            if file.catalog.builtin { default_catalog().iter().cloned().collect() } else { vec![] };
        for e in file.catalog.endpoints {
            match endpoints.iter_mut().find(|x| x.name == e.name) {
                Some(slot) => *slot = e,
                None => endpoints.push(e),
            }
        }
        for e in &mut endpoints {
            e.service_time = e.service_time.scaled(file.catalog.service_time_scale);
            if let Some(db) = &mut e.db {
                db.query_time = db.query_time.scaled(file.catalog.db_query_scale);
            }
        }
        let catalog = match Catalog::from_endpoints(endpoints) {
            Ok(c) => Some(c),
            Err(e) => {
                diags.push(diag("catalog", e.to_string()));
                None
            }
        };

        let routes = match file.routes {
            None => RouteTable::travel_default(),
            Some(map) => RouteTable::new(
                map.into_iter()
                    .map(|(class, r)| {
                        let target =
                            if r.target == "saga" { RouteTarget::Saga } else { RouteTarget::Endpoint(r.target) };
                        (class, Route { target, criticality: r.criticality })
                    })
                    .collect(),
            ),
        };

        let mut config = ConfigStore::default();
        if file.deployment.mode == DeploymentMode::Monolith {
            config.set("network.entry_ms", ConfigValue::Float(40.0)).expect("schema key");
            config.set("autoscale.enabled", ConfigValue::Bool(false)).expect("schema key");
        }
        let mut flat = Vec::new();
        flatten_config("", &file.config, &mut flat);
        for (k, v) in flat {
            let section = format!("config.{k}");
            match toml_to_config(&v) {
                Some(cv) => {
                    if let Err(e) = config.set(&k, cv) {
                        diags.push(diag(&section, e.to_string()));
                    }
                }
                None => diags.push(diag(&section, "unsupported value type")),
            }
        }

        let family = file.family.unwrap_or_else(|| file.name.clone());
        Some(Scenario {
            name: file.name,
            family,
            description: file.description,
            deployment: file.deployment,
            catalog: catalog?,
            routes,
            saga: file.saga.unwrap_or_else(SagaDefinition::booking),
            config,
            workload: file.workload,
            faults: file.faults,
            config_updates: file.config_updates,
            run: file.run,
        })
    }

    /// Schema-independent referential checks.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let run = &self.run;
        if !(run.duration_ms > 0.0 && run.duration_ms.is_finite()) {
            out.push(diag("run.duration_ms", "duration must be positive"));
        }
        if let Some(w) = run.warmup_ms {
            if !(0.0..run.duration_ms).contains(&w) {
                out.push(diag("run.warmup_ms", format!("warmup {w}ms must lie in [0, duration)")));
            }
        }
        if run.sample_ms <= 0.0 {
            out.push(diag("run.sample_ms", "sample interval must be positive"));
        }
        if run.drain_ms < 0.0 || run.report_window_ms < 0.0 {
            out.push(diag("run", "drain and report window must be non-negative"));
        }

        let d = &self.deployment;
        if d.capacity_per_instance == 0 || d.db_capacity == 0 {
            out.push(diag("deployment", "capacities must be positive"));
        }
        if d.restart_time_ms < 0.0 {
            out.push(diag("deployment.restart_time_ms", "restart time must be non-negative"));
        }
        if d.mode == DeploymentMode::Microservices {
            if d.count(ServiceKind::ApiGateway) == 0 {
                out.push(diag("deployment.instances", "microservices deployment needs an api_gateway instance"));
            }
            for e in self.catalog.iter() {
                if d.count(e.service) == 0 {
                    out.push(diag(
                        "deployment.instances",
                        format!("endpoint `{}` is served by `{}` which has no instances", e.name, e.service),
                    ));
                }
            }
            if self.config.bool("autoscale.enabled") {
                let (lo, hi) = (self.config.u64("autoscale.min_instances"), self.config.u64("autoscale.max_instances"));
                for (kind, n) in &d.instances {
                    let n = u64::from(*n);
                    // the gateway is not autoscaled
                    if *kind != ServiceKind::ApiGateway && (n < lo || n > hi) {
                        out.push(diag(
                            "deployment.instances",
                            format!("`{kind}` starts with {n} instances, outside the autoscale bounds [{lo}, {hi}]"),
                        ));
                    }
                }
            }
        } else if d.monolith_capacity() == 0 {
            out.push(diag("deployment.instances", "monolith pool would have zero capacity"));
        }

        for e in self.catalog.iter() {
            if let Err(err) = e.service_time.validate() {
                out.push(diag("catalog.endpoints", format!("`{}`: {err}", e.name)));
            }
            if let Some(db) = &e.db {
                if let Err(err) = db.query_time.validate() {
                    out.push(diag("catalog.endpoints", format!("`{}` db: {err}", e.name)));
                }
            }
            if e.cpu_slots == 0 {
                out.push(diag("catalog.endpoints", format!("`{}`: cpu_slots must be positive", e.name)));
            }
        }

        for (class, r) in self.routes.iter() {
            if let RouteTarget::Endpoint(ep) = &r.target {
                if !self.catalog.contains(ep) {
                    out.push(diag("routes", format!("class `{class}` routes to unknown endpoint `{ep}`")));
                }
            }
        }
        if let Err(e) = self.saga.validate() {
            out.push(diag("saga", e.to_string()));
        }
        for ep in self.saga.endpoints() {
            if !self.catalog.contains(ep) {
                out.push(diag("saga.steps", format!("unknown endpoint `{ep}`")));
            }
        }

        self.validate_workload(&mut out);
        self.validate_faults(&mut out);

        for u in &self.config_updates {
            let mut probe = self.config.clone();
            if let Err(e) = probe.set(&u.key, u.value.clone()) {
                out.push(diag("config_updates", e.to_string()));
            }
            if !(u.at_ms >= 0.0 && u.at_ms.is_finite()) {
                out.push(diag("config_updates", format!("`{}` update time must be non-negative", u.key)));
            }
        }
        if self.config.bool("autoscale.enabled") && !AutoscalePolicy::from_config(&self.config).is_valid() {
            out.push(diag("config.autoscale", "need low < high watermark and 1 <= min <= max"));
        }
        for (k, _) in config_schema() {
            if k.ends_with("_ms") && self.config.f64(k) < 0.0 {
                out.push(diag(&format!("config.{k}"), "must be non-negative"));
            }
        }
        out
    }

    fn validate_workload(&self, out: &mut Vec<Diagnostic>) {
        let mix = self.workload.mix();
        let check_rate = |out: &mut Vec<Diagnostic>, r: f64, what: &str| {
            if !(r >= 0.0 && r.is_finite()) {
                out.push(diag("workload", format!("{what} must be a non-negative number")));
            }
        };
        match &self.workload {
            WorkloadSpec::ClosedLoop { think_ms, .. } => check_rate(out, *think_ms, "think_ms"),
            WorkloadSpec::OpenLoop { rate_per_s, .. } => check_rate(out, *rate_per_s, "rate_per_s"),
            WorkloadSpec::Spike { base_rate_per_s, multiplier, start_ms, duration_ms, .. } => {
                check_rate(out, *base_rate_per_s, "base_rate_per_s");
                check_rate(out, *multiplier, "multiplier");
                check_rate(out, *start_ms, "start_ms");
                check_rate(out, *duration_ms, "duration_ms");
            }
            WorkloadSpec::PeriodicUpdate { sources, period_ms, .. } => {
                if *sources == 0 || !(*period_ms > 0.0) {
                    out.push(diag("workload", "periodic workload needs sources > 0 and period_ms > 0"));
                }
            }
        }
        let sum: f64 = mix.values().sum();
        if (sum - 1.0).abs() > 1e-6 {
            out.push(diag("workload.mix", format!("mix weights sum to {sum}, expected 1")));
        }
        for (class, w) in &mix {
            if *w < 0.0 {
                out.push(diag("workload.mix", format!("class `{class}` has a negative weight")));
            }
            if self.routes.route(class).is_err() {
                out.push(diag("workload.mix", format!("class `{class}` has no route")));
            }
        }
    }

    fn validate_faults(&self, out: &mut Vec<Diagnostic>) {
        let mcf = self.deployment.mode == DeploymentMode::Microservices;
        for (i, f) in self.faults.iter().enumerate() {
            let section = format!("faults[{i}]");
            let (inject, clear) = f.window_ms();
            if !(inject >= 0.0 && inject.is_finite()) {
                out.push(diag(&section, "inject time must be a non-negative number"));
            }
            if !f.is_crash() && clear <= inject || f.is_crash() && clear.is_finite() && clear <= inject {
                out.push(diag(&section, format!("clear time {clear}ms must be after inject time {inject}ms")));
            }
            let target = |out: &mut Vec<Diagnostic>, k: ServiceKind| {
                let served = self.catalog.iter().any(|e| e.service == k) || k == ServiceKind::ApiGateway;
                if !served || (mcf && self.deployment.count(k) == 0) {
                    out.push(diag(&section, format!("target service `{k}` does not exist in the deployment")));
                }
            };
            match f {
                FaultSpec::KillInstances { service, count, .. } => {
                    target(out, *service);
                    if mcf && *count > self.deployment.count(*service) {
                        out.push(diag(&section, format!("cannot kill {count} of {} `{service}` instances", self.deployment.count(*service))));
                    }
                    if *count == 0 {
                        out.push(diag(&section, "count must be positive"));
                    }
                }
                FaultSpec::SlowInstances { service, added_ms, .. } => {
                    target(out, *service);
                    if *added_ms < 0.0 {
                        out.push(diag(&section, "added_ms must be non-negative"));
                    }
                }
                FaultSpec::PartitionService { service, .. } => target(out, *service),
                FaultSpec::NetworkDelay { delay_ms, .. } => {
                    if *delay_ms < 0.0 {
                        out.push(diag(&section, "delay_ms must be non-negative"));
                    }
                }
                FaultSpec::DbOverload { database, reduction, .. } => {
                    if !(0.0..=1.0).contains(reduction) {
                        out.push(diag(&section, "reduction must lie in [0, 1]"));
                    }
                    if let DbTarget::Service(k) = database {
                        if !k.owns_data() {
                            out.push(diag(&section, format!("`{k}` owns no database")));
                        }
                    }
                }
                FaultSpec::StepFailure { endpoint, probability, .. } => {
                    if !self.catalog.contains(endpoint) {
                        out.push(diag(&section, format!("unknown endpoint `{endpoint}`")));
                    }
                    if !(0.0..=1.0).contains(probability) {
                        out.push(diag(&section, "probability must lie in [0, 1]"));
                    }
                }
            }
        }
    }

    pub fn mode(&self) -> DeploymentMode {
        self.deployment.mode
    }

    /// Same experiment under the other deployment.
    pub fn with_mode(&self, mode: DeploymentMode, name: &str) -> Scenario {
        let mut s = self.clone();
        s.name = name.to_string();
        s.deployment.mode = mode;
        let entry = if mode == DeploymentMode::Monolith { 40.0 } else { 30.0 };
        s.config.set("network.entry_ms", ConfigValue::Float(entry)).expect("schema key");
        if mode == DeploymentMode::Monolith {
            s.config.set("autoscale.enabled", ConfigValue::Bool(false)).expect("schema key");
        }
        s
    }

    pub fn set(&mut self, key: &str, v: ConfigValue) -> &mut Self {
        self.config.set(key, v).unwrap_or_else(|e| panic!("built-in config: {e}"));
        self
    }
}

/// Parse `250ms`, `1.5s`, `2m` or a bare millisecond count.
pub fn parse_duration(s: &str) -> Option<SimTime> {
    let s = s.trim();
    let (num, scale) = if let Some(x) = s.strip_suffix("ms") {
        (x, 1.0)
    } else if let Some(x) = s.strip_suffix("us") {
        (x, 0.001)
    } else if let Some(x) = s.strip_suffix('s') {
        (x, 1_000.0)
    } else if let Some(x) = s.strip_suffix('m') {
        (x, 60_000.0)
    } else {
        (s, 1.0)
    };
    let v: f64 = num.trim().parse().ok()?;
    (v >= 0.0 && v.is_finite()).then(|| ms(v * scale))
}

/// Exponential think time helper for closed-loop users.
pub fn think_distribution(think_ms: f64, kind: ThinkTime) -> Distribution {
    match kind {
        ThinkTime::Exponential if think_ms > 0.0 => Distribution::Exponential { mean_ms: think_ms },
        _ => Distribution::Deterministic { ms: think_ms },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "tiny"

[workload]
kind = "open_loop"
rate_per_s = 10.0

[run]
duration_ms = 1000.0
"#;

    #[test]
    fn minimal_file_resolves_with_defaults() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert_eq!(s.family, "tiny");
        assert_eq!(s.deployment.count(ServiceKind::FlightBooking), 3);
        assert_eq!(s.run.warmup(), SimTime::from_millis(100));
        assert_eq!(s.config.f64("network.entry_ms"), 30.0);
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let text = MINIMAL.replace("rate_per_s = 10.0", "rate_per_s = 10.0\nburst = 3");
        let d = Scenario::from_toml(&text).unwrap_err();
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("burst"), "{}", d[0]);
        assert!(d[0].line.is_some());
    }

    #[test]
    fn mix_weights_must_sum_to_one() {
        let text = MINIMAL.replace(
            "rate_per_s = 10.0",
            "rate_per_s = 10.0\nmix = { search_trip = 0.5, book_trip = 0.4 }",
        );
        let d = Scenario::from_toml(&text).unwrap_err();
        assert!(d.iter().any(|x| x.section == "workload.mix" && x.message.contains("0.9")), "{d:?}");
        assert_eq!(d[0].line, Some(7));
    }

    #[test]
    fn fault_on_unknown_service_is_rejected() {
        let text = format!(
            "{MINIMAL}\n[[faults]]\nkind = \"kill_instances\"\nservice = \"database\"\ncount = 1\nat_ms = 10.0\n"
        );
        let d = Scenario::from_toml(&text).unwrap_err();
        assert!(d.iter().any(|x| x.message.contains("does not exist")), "{d:?}");
        let text = format!("{MINIMAL}\n[[faults]]\nkind = \"kill_instances\"\nservice = \"teleporter\"\ncount = 1\nat_ms = 10.0\n");
        assert!(Scenario::from_toml(&text).is_err());
    }

    #[test]
    fn fault_clear_must_follow_inject() {
        let text = format!(
            "{MINIMAL}\n[[faults]]\nkind = \"partition_service\"\nservice = \"hotel_booking\"\nstart_ms = 50.0\nend_ms = 10.0\n"
        );
        let d = Scenario::from_toml(&text).unwrap_err();
        assert!(d.iter().any(|x| x.section == "faults[0]"), "{d:?}");
    }

    #[test]
    fn nested_and_dotted_config_keys() {
        let text = format!("{MINIMAL}\n[config]\n\"retry.max_attempts\" = 5\n[config.breaker]\nenabled = false\n");
        let s = Scenario::from_toml(&text).unwrap();
        assert_eq!(s.config.u64("retry.max_attempts"), 5);
        assert!(!s.config.bool("breaker.enabled"));
        let bad = format!("{MINIMAL}\n[config]\n\"breaker.colour\" = 1\n");
        assert!(Scenario::from_toml(&bad).is_err());
    }

    #[test]
    fn monolith_defaults() {
        let text = format!("{MINIMAL}\n[deployment]\nmode = \"monolith\"\n");
        let s = Scenario::from_toml(&text).unwrap();
        assert_eq!(s.config.f64("network.entry_ms"), 40.0);
        assert!(!s.config.bool("autoscale.enabled"));
    }

    #[test]
    fn durations_parse() {
        assert_eq!(parse_duration("250ms"), Some(SimTime::from_millis(250)));
        assert_eq!(parse_duration("1.5s"), Some(SimTime::from_millis(1500)));
        assert_eq!(parse_duration("2m"), Some(SimTime::from_secs(120)));
        assert_eq!(parse_duration("40"), Some(SimTime::from_millis(40)));
        assert_eq!(parse_duration("-1s"), None);
        assert_eq!(parse_duration("soon"), None);
    }
}
