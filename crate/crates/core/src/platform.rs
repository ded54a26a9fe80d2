//! Travel-platform domain model: service catalog, endpoint call graph,
//! instance pools with bounded FIFO queues, and per-service databases.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Distribution;
use crate::saga::LedgerAction;
use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceKind {
    UserManagement,
    FlightBooking,
    HotelBooking,
    PaymentGateway,
    SearchRecommendations,
    NotificationService,
    ApiGateway,
    ConfigurationManagement,
    LoadBalancer,
    Database,
}

impl ServiceKind {
    pub const ALL: [ServiceKind; 10] = [
        ServiceKind::UserManagement,
        ServiceKind::FlightBooking,
        ServiceKind::HotelBooking,
        ServiceKind::PaymentGateway,
        ServiceKind::SearchRecommendations,
        ServiceKind::NotificationService,
        ServiceKind::ApiGateway,
        ServiceKind::ConfigurationManagement,
        ServiceKind::LoadBalancer,
        ServiceKind::Database,
    ];

    /// Kinds that run as request-serving instance pools.
    pub const POOLED: [ServiceKind; 7] = [
        ServiceKind::UserManagement,
        ServiceKind::FlightBooking,
        ServiceKind::HotelBooking,
        ServiceKind::PaymentGateway,
        ServiceKind::SearchRecommendations,
        ServiceKind::NotificationService,
        ServiceKind::ApiGateway,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ServiceKind::UserManagement => "user_management",
            ServiceKind::FlightBooking => "flight_booking",
            ServiceKind::HotelBooking => "hotel_booking",
            ServiceKind::PaymentGateway => "payment_gateway",
            ServiceKind::SearchRecommendations => "search_recommendations",
            ServiceKind::NotificationService => "notification_service",
            ServiceKind::ApiGateway => "api_gateway",
            ServiceKind::ConfigurationManagement => "configuration_management",
            ServiceKind::LoadBalancer => "load_balancer",
            ServiceKind::Database => "database",
        }
    }

    pub fn from_name(s: &str) -> Option<ServiceKind> {
        ServiceKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Services that own a dedicated database in the microservices deployment.
    pub fn owns_data(self) -> bool {
        matches!(
            self,
            ServiceKind::UserManagement
                | ServiceKind::FlightBooking
                | ServiceKind::HotelBooking
                | ServiceKind::PaymentGateway
                | ServiceKind::SearchRecommendations
                | ServiceKind::NotificationService
        )
    }
}

impl fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    #[default]
    Critical,
    NonCritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CallMode {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbProfile {
    pub queries: u32,
    pub query_time: Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DownstreamCall {
    pub endpoint: String,
    #[serde(default)]
    pub mode: CallMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSpec {
    pub name: String,
    pub service: ServiceKind,
    pub service_time: Distribution,
    #[serde(default = "one")]
    pub cpu_slots: u32,
    #[serde(default)]
    pub request_bytes: u64,
    #[serde(default)]
    pub response_bytes: u64,
    #[serde(default)]
    pub db: Option<DbProfile>,
    #[serde(default)]
    pub downstream: Vec<DownstreamCall>,
    #[serde(default)]
    pub criticality: Criticality,
    /// Reservation-ledger side effect committed when the call succeeds.
    #[serde(default)]
    pub ledger: Option<LedgerAction>,
}

fn one() -> u32 {
    1
}

impl EndpointSpec {
    /// Group downstream calls into stages: consecutive `Parallel` entries share
    /// a stage, each `Sequential` entry is a stage of its own.
    pub fn stages(&self) -> Vec<Vec<&str>> {
        let mut out: Vec<Vec<&str>> = Vec::new();
        let mut prev_parallel = false;
        for d in &self.downstream {
            match d.mode {
                CallMode::Parallel if prev_parallel => {
                    out.last_mut().expect("open stage").push(d.endpoint.as_str());
                }
                CallMode::Parallel => {
                    out.push(vec![d.endpoint.as_str()]);
                    prev_parallel = true;
                }
                CallMode::Sequential => {
                    out.push(vec![d.endpoint.as_str()]);
                    prev_parallel = false;
                }
            }
        }
        out
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("endpoint `{from}` references unknown endpoint `{to}`")]
    UnknownEndpoint { from: String, to: String },
    #[error("endpoint call graph has a cycle through `{0}`")]
    Cycle(String),
    #[error("endpoint `{0}` is defined twice")]
    Duplicate(String),
    #[error("endpoint `{0}` has an invalid parameter: {1}")]
    Invalid(String, String),
}

/// All endpoints keyed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    endpoints: BTreeMap<String, EndpointSpec>,
}

impl Catalog {
    pub fn from_endpoints(list: Vec<EndpointSpec>) -> Result<Self, CatalogError> {
        let mut endpoints = BTreeMap::new();
        for e in list {
            if e.cpu_slots == 0 {
                return Err(CatalogError::Invalid(e.name.clone(), "cpu_slots must be positive".into()));
            }
            if let Err(err) = e.service_time.validate() {
                return Err(CatalogError::Invalid(e.name.clone(), err.to_string()));
            }
            if let Some(db) = &e.db {
                if let Err(err) = db.query_time.validate() {
                    return Err(CatalogError::Invalid(e.name.clone(), err.to_string()));
                }
            }
            let name = e.name.clone();
            if endpoints.insert(name.clone(), e).is_some() {
                return Err(CatalogError::Duplicate(name));
            }
        }
        let cat = Catalog { endpoints };
        cat.check_graph()?;
        Ok(cat)
    }

    fn check_graph(&self) -> Result<(), CatalogError> {
        for e in self.endpoints.values() {
            for d in &e.downstream {
                if !self.endpoints.contains_key(&d.endpoint) {
                    return Err(CatalogError::UnknownEndpoint { from: e.name.clone(), to: d.endpoint.clone() });
                }
            }
        }
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut mark: BTreeMap<&str, u8> = BTreeMap::new();
        fn visit<'a>(cat: &'a Catalog, n: &'a str, mark: &mut BTreeMap<&'a str, u8>) -> Result<(), CatalogError> {
            match mark.get(n) {
                Some(1) => return Err(CatalogError::Cycle(n.to_string())),
                Some(2) => return Ok(()),
                _ => {}
            }
            mark.insert(n, 1);
            for d in &cat.endpoints[n].downstream {
                visit(cat, &d.endpoint, mark)?;
            }
            mark.insert(n, 2);
            Ok(())
        }
        for n in self.endpoints.keys() {
            visit(self, n, &mut mark)?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&EndpointSpec> {
        self.endpoints.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.endpoints.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &EndpointSpec> {
        self.endpoints.values()
    }

    pub fn len(&self) -> usize {
        self.endpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.endpoints.is_empty()
    }
}

/// Built-in travel catalog. Times in milliseconds.
pub fn default_catalog() -> Catalog {
    let det = Distribution::deterministic_ms;
    let db = |q: u32| Some(DbProfile { queries: q, query_time: det(5.0) });
    let ep = |name: &str, service: ServiceKind, ms: f64| EndpointSpec {
        name: name.to_string(),
        service,
        service_time: det(ms),
        cpu_slots: 1,
        request_bytes: 512,
        response_bytes: 2048,
        db: None,
        downstream: vec![],
        criticality: Criticality::Critical,
        ledger: None,
    };
    use crate::saga::{LedgerAction as L, LedgerResource as R};
    let list = vec![
        EndpointSpec { db: db(1), ..ep("flight.query", ServiceKind::FlightBooking, 15.0) },
        EndpointSpec { db: db(1), ..ep("hotel.query", ServiceKind::HotelBooking, 15.0) },
        EndpointSpec {
            downstream: vec![
                DownstreamCall { endpoint: "flight.query".into(), mode: CallMode::Parallel },
                DownstreamCall { endpoint: "hotel.query".into(), mode: CallMode::Parallel },
            ],
            criticality: Criticality::NonCritical,
            response_bytes: 8192,
            ..ep("search.trip", ServiceKind::SearchRecommendations, 12.0)
        },
        EndpointSpec { db: db(1), ..ep("user.profile", ServiceKind::UserManagement, 8.0) },
        EndpointSpec {
            criticality: Criticality::NonCritical,
            request_bytes: 256,
            response_bytes: 128,
            ..ep("user.status", ServiceKind::UserManagement, 8.0)
        },
        EndpointSpec { db: db(1), ledger: Some(L::Reserve(R::Flight)), ..ep("flight.reserve", ServiceKind::FlightBooking, 15.0) },
        EndpointSpec { db: db(1), ledger: Some(L::Release(R::Flight)), ..ep("flight.cancel", ServiceKind::FlightBooking, 15.0) },
        EndpointSpec { db: db(1), ledger: Some(L::Reserve(R::Hotel)), ..ep("hotel.reserve", ServiceKind::HotelBooking, 15.0) },
        EndpointSpec { db: db(1), ledger: Some(L::Release(R::Hotel)), ..ep("hotel.cancel", ServiceKind::HotelBooking, 15.0) },
        EndpointSpec { db: db(1), ledger: Some(L::Reserve(R::Payment)), ..ep("payment.charge", ServiceKind::PaymentGateway, 20.0) },
        EndpointSpec { db: db(1), ledger: Some(L::Release(R::Payment)), ..ep("payment.refund", ServiceKind::PaymentGateway, 20.0) },
        EndpointSpec { ..ep("notification.send", ServiceKind::NotificationService, 5.0) },
    ];
    Catalog::from_endpoints(list).expect("built-in catalog is valid")
}

/// Default per-call service time in milliseconds for each business service.
pub fn default_service_ms(kind: ServiceKind) -> f64 {
    match kind {
        ServiceKind::UserManagement => 8.0,
        ServiceKind::FlightBooking | ServiceKind::HotelBooking => 15.0,
        ServiceKind::PaymentGateway => 20.0,
        ServiceKind::SearchRecommendations => 12.0,
        ServiceKind::NotificationService => 5.0,
        _ => 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceId(pub u32);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i{}", self.0)
    }
}

/// Opaque handle for a unit of work held by an instance or database.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JobId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceState {
    Starting,
    Up,
    Draining,
    Down,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlatformError {
    #[error("instance {0} is down")]
    InstanceDown(InstanceId),
    #[error("instance {0} is not up")]
    NotUp(InstanceId),
    #[error("utilization window is empty")]
    EmptyWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Accepted,
    Queued,
    Rejected,
}

/// A running copy of one service with slot capacity and a bounded FIFO queue.
#[derive(Debug, Clone)]
pub struct ServiceInstance {
    pub id: InstanceId,
    pub kind: ServiceKind,
    pub capacity: u32,
    pub queue_bound: usize,
    state: InstanceState,
    inflight: u32,
    running: BTreeMap<JobId, u32>,
    queue: VecDeque<(JobId, u32)>,
    busy_integral: u128,
    alive_integral: u128,
    last_touch: SimTime,
    pub started_at: SimTime,
}

impl ServiceInstance {
    pub fn new(id: InstanceId, kind: ServiceKind, capacity: u32, queue_bound: usize, now: SimTime, state: InstanceState) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        ServiceInstance {
            id,
            kind,
            capacity,
            queue_bound,
            state,
            inflight: 0,
            running: BTreeMap::new(),
            queue: VecDeque::new(),
            busy_integral: 0,
            alive_integral: 0,
            last_touch: now,
            started_at: now,
        }
    }

    pub fn state(&self) -> InstanceState {
        self.state
    }

    pub fn inflight(&self) -> u32 {
        self.inflight
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Load metric used by least-busy balancing.
    pub fn busyness(&self) -> u64 {
        u64::from(self.inflight) + self.queue.len() as u64
    }

    pub fn is_alive(&self) -> bool {
        matches!(self.state, InstanceState::Up | InstanceState::Draining)
    }

    pub fn is_running(&self, job: JobId) -> bool {
        self.running.contains_key(&job)
    }

    fn touch(&mut self, now: SimTime) {
        debug_assert!(now >= self.last_touch);
        let dt = u128::from((now - self.last_touch).micros());
        self.busy_integral += dt * u128::from(self.inflight);
        if self.is_alive() {
            self.alive_integral += dt * u128::from(self.capacity);
        }
        self.last_touch = now;
    }

    /// Slot-microseconds spent busy and slot-microseconds alive, up to `now`.
    pub fn integrals(&self, now: SimTime) -> (u128, u128) {
        let dt = u128::from(now.saturating_sub(self.last_touch).micros());
        let busy = self.busy_integral + dt * u128::from(self.inflight);
        let alive = self.alive_integral + if self.is_alive() { dt * u128::from(self.capacity) } else { 0 };
        (busy, alive)
    }

    pub fn set_state(&mut self, now: SimTime, state: InstanceState) {
        self.touch(now);
        self.state = state;
    }

    /// Admit a job needing `slots` slots. `Accepted` means the job now occupies
    /// slots and the caller must schedule its completion.
    pub fn admit(&mut self, now: SimTime, job: JobId, slots: u32) -> Result<Admission, PlatformError> {
        match self.state {
            InstanceState::Down => return Err(PlatformError::InstanceDown(self.id)),
            InstanceState::Starting => return Err(PlatformError::NotUp(self.id)),
            InstanceState::Up | InstanceState::Draining => {}
        }
        let slots = slots.min(self.capacity);
        if self.queue.is_empty() && self.inflight + slots <= self.capacity {
            self.touch(now);
            self.inflight += slots;
            self.running.insert(job, slots);
            Ok(Admission::Accepted)
        } else if self.queue.len() < self.queue_bound {
            self.queue.push_back((job, slots));
            Ok(Admission::Queued)
        } else {
            Ok(Admission::Rejected)
        }
    }

    /// Release the slots held by `job` and start queued work in FIFO order.
    /// Returns the jobs that started at `now`.
    pub fn complete(&mut self, now: SimTime, job: JobId) -> Vec<JobId> {
        self.touch(now);
        if let Some(slots) = self.running.remove(&job) {
            self.inflight -= slots;
        }
        self.start_queued()
    }

    fn start_queued(&mut self) -> Vec<JobId> {
        let mut started = Vec::new();
        while let Some(&(next, slots)) = self.queue.front() {
            if self.inflight + slots > self.capacity {
                break;
            }
            self.queue.pop_front();
            self.inflight += slots;
            self.running.insert(next, slots);
            started.push(next);
        }
        started
    }

    /// Remove a queued job without running it (abandoned by its caller).
    pub fn withdraw(&mut self, job: JobId) -> bool {
        if let Some(pos) = self.queue.iter().position(|(j, _)| *j == job) {
            self.queue.remove(pos);
            true
        } else {
            false
        }
    }

    /// Mark the instance down; every running and queued job fails.
    pub fn crash(&mut self, now: SimTime) -> Result<Vec<JobId>, PlatformError> {
        if !self.is_alive() {
            return Err(PlatformError::NotUp(self.id));
        }
        self.touch(now);
        let mut failed: Vec<JobId> = self.running.keys().copied().collect();
        failed.extend(self.queue.drain(..).map(|(j, _)| j));
        self.running.clear();
        self.inflight = 0;
        self.state = InstanceState::Down;
        Ok(failed)
    }

    /// Bring a down or starting instance up with empty queues.
    pub fn restart(&mut self, now: SimTime) {
        self.touch(now);
        self.state = InstanceState::Up;
    }

    /// Work-conservation check: no free slot while work waits.
    pub fn work_conserving(&self) -> bool {
        match self.queue.front() {
            Some(&(_, slots)) => self.inflight + slots > self.capacity,
            None => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DbOwner {
    Service(ServiceKind),
    Shared,
}

/// A database with concurrent query slots and an unbounded FIFO query queue.
#[derive(Debug, Clone)]
pub struct DatabaseModel {
    pub owner: DbOwner,
    pub base_capacity: u32,
    capacity: u32,
    inflight: u32,
    queue: VecDeque<JobId>,
    busy_integral: u128,
    last_touch: SimTime,
}

impl DatabaseModel {
    pub fn new(owner: DbOwner, capacity: u32) -> Self {
        assert!(capacity > 0);
        DatabaseModel {
            owner,
            base_capacity: capacity,
            capacity,
            inflight: 0,
            queue: VecDeque::new(),
            busy_integral: 0,
            last_touch: SimTime::ZERO,
        }
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn inflight(&self) -> u32 {
        self.inflight
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    fn touch(&mut self, now: SimTime) {
        let dt = u128::from(now.saturating_sub(self.last_touch).micros());
        self.busy_integral += dt * u128::from(self.inflight);
        self.last_touch = now;
    }

    pub fn busy_integral(&self, now: SimTime) -> u128 {
        self.busy_integral + u128::from(now.saturating_sub(self.last_touch).micros()) * u128::from(self.inflight)
    }

    /// Returns true if the query starts immediately.
    pub fn submit(&mut self, now: SimTime, query: JobId) -> bool {
        self.touch(now);
        if self.inflight < self.capacity && self.queue.is_empty() {
            self.inflight += 1;
            true
        } else {
            self.queue.push_back(query);
            false
        }
    }

    /// A query finished; returns queries that start now.
    pub fn finish(&mut self, now: SimTime) -> Vec<JobId> {
        self.touch(now);
        self.inflight = self.inflight.saturating_sub(1);
        self.drain_ready()
    }

    fn drain_ready(&mut self) -> Vec<JobId> {
        let mut out = Vec::new();
        while self.inflight < self.capacity {
            match self.queue.pop_front() {
                Some(q) => {
                    self.inflight += 1;
                    out.push(q);
                }
                None => break,
            }
        }
        out
    }

    /// Reduce capacity by `fraction` (0..1), keeping at least one slot.
    /// Returns queries started if capacity grew back.
    pub fn set_reduction(&mut self, now: SimTime, fraction: f64) -> Vec<JobId> {
        self.touch(now);
        let keep = (f64::from(self.base_capacity) * (1.0 - fraction.clamp(0.0, 1.0))).round() as u32;
        self.capacity = keep.max(1);
        self.drain_ready()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeploymentMode {
    Microservices,
    Monolith,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeploymentModel {
    pub mode: DeploymentMode,
    /// Initial instance count per pooled service.
    pub instances: BTreeMap<ServiceKind, u32>,
    pub capacity_per_instance: u32,
    pub queue_bound: usize,
    pub db_capacity: u32,
    pub restart_time_ms: f64,
}

impl Default for DeploymentModel {
    fn default() -> Self {
        let mut instances = BTreeMap::new();
        instances.insert(ServiceKind::UserManagement, 2);
        instances.insert(ServiceKind::FlightBooking, 3);
        instances.insert(ServiceKind::HotelBooking, 3);
        instances.insert(ServiceKind::PaymentGateway, 2);
        instances.insert(ServiceKind::SearchRecommendations, 3);
        instances.insert(ServiceKind::NotificationService, 1);
        instances.insert(ServiceKind::ApiGateway, 2);
        DeploymentModel {
            mode: DeploymentMode::Microservices,
            instances,
            capacity_per_instance: 4,
            queue_bound: 64,
            db_capacity: 8,
            restart_time_ms: 500.0,
        }
    }
}

impl DeploymentModel {
    pub fn monolith() -> Self {
        DeploymentModel { mode: DeploymentMode::Monolith, ..DeploymentModel::default() }
    }

    /// Slot capacity of the single monolith pool: the sum over all microservice pools.
    pub fn monolith_capacity(&self) -> u32 {
        self.instances.values().sum::<u32>() * self.capacity_per_instance
    }

    pub fn count(&self, kind: ServiceKind) -> u32 {
        self.instances.get(&kind).copied().unwrap_or(0)
    }
}

/// Cumulative per-kind integrals sampled on a fixed grid, used to answer
/// utilization queries for past windows.
#[derive(Debug, Clone, Default)]
pub struct UtilizationSamples {
    times: Vec<SimTime>,
    /// `[sample][kind] -> (busy, alive)` slot-microseconds.
    values: Vec<BTreeMap<ServiceKind, (u128, u128)>>,
    /// `[sample][kind] -> sum over instances of (inflight integral, alive micros)` for memory.
    alive_instance_micros: Vec<BTreeMap<ServiceKind, u128>>,
}

impl UtilizationSamples {
    pub fn record(&mut self, now: SimTime, instances: &[ServiceInstance]) {
        if self.times.last() == Some(&now) {
            return;
        }
        let mut per: BTreeMap<ServiceKind, (u128, u128)> = BTreeMap::new();
        let mut alive: BTreeMap<ServiceKind, u128> = BTreeMap::new();
        for inst in instances {
            let (b, a) = inst.integrals(now);
            let e = per.entry(inst.kind).or_default();
            e.0 += b;
            e.1 += a;
            // alive integral divided by capacity gives instance-microseconds alive
            *alive.entry(inst.kind).or_default() += a / u128::from(inst.capacity);
        }
        self.times.push(now);
        self.values.push(per);
        self.alive_instance_micros.push(alive);
    }

    pub fn times(&self) -> &[SimTime] {
        &self.times
    }

    fn index_at_or_before(&self, t: SimTime) -> Option<usize> {
        match self.times.binary_search(&t) {
            Ok(i) => Some(i),
            Err(0) => None,
            Err(i) => Some(i - 1),
        }
    }

    /// Busy and alive slot-micros for `kind` (or all kinds) over `[from, to]`,
    /// snapped to the sample grid.
    pub fn window(&self, kind: Option<ServiceKind>, from: SimTime, to: SimTime) -> Result<(u128, u128, u128), PlatformError> {
        if to <= from {
            return Err(PlatformError::EmptyWindow);
        }
        let i = self.index_at_or_before(from).ok_or(PlatformError::EmptyWindow)?;
        let j = self.index_at_or_before(to).ok_or(PlatformError::EmptyWindow)?;
        if j <= i {
            return Err(PlatformError::EmptyWindow);
        }
        let sum = |idx: usize| -> (u128, u128, u128) {
            let mut b = 0;
            let mut a = 0;
            let mut n = 0;
            for (k, v) in &self.values[idx] {
                if kind.is_none_or(|want| want == *k) {
                    b += v.0;
                    a += v.1;
                    n += self.alive_instance_micros[idx].get(k).copied().unwrap_or(0);
                }
            }
            (b, a, n)
        };
        let (b1, a1, n1) = sum(i);
        let (b2, a2, n2) = sum(j);
        Ok((b2 - b1, a2 - a1, n2 - n1))
    }

    /// `100 * busy / (capacity * window)` over instances alive in the window.
    pub fn utilization(&self, kind: Option<ServiceKind>, from: SimTime, to: SimTime) -> Result<f64, PlatformError> {
        let (busy, alive, _) = self.window(kind, from, to)?;
        if alive == 0 {
            return Ok(0.0);
        }
        Ok((100.0 * busy as f64 / alive as f64).clamp(0.0, 100.0))
    }
}

/// Ids of every instance of `kind` in `instances` (helper for tests and reports).
pub fn ids_of(instances: &[ServiceInstance], kind: ServiceKind) -> BTreeSet<InstanceId> {
    instances.iter().filter(|i| i.kind == kind).map(|i| i.id).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(cap: u32, q: usize) -> ServiceInstance {
        ServiceInstance::new(InstanceId(0), ServiceKind::FlightBooking, cap, q, SimTime::ZERO, InstanceState::Up)
    }

    #[test]
    fn admit_idle_accepts() {
        let mut i = inst(1, 16);
        assert_eq!(i.admit(SimTime::ZERO, JobId(1), 1).unwrap(), Admission::Accepted);
        assert_eq!(i.inflight(), 1);
    }

    #[test]
    fn second_arrival_queues_then_starts_on_completion() {
        // Hand trace: capacity 1, two arrivals at t=0, 10ms service each.
        // Job 1 runs [0,10), job 2 queued then runs [10,20): latency 20ms.
        let mut i = inst(1, 16);
        assert_eq!(i.admit(SimTime::ZERO, JobId(1), 1).unwrap(), Admission::Accepted);
        assert_eq!(i.admit(SimTime::ZERO, JobId(2), 1).unwrap(), Admission::Queued);
        let started = i.complete(SimTime::from_millis(10), JobId(1));
        assert_eq!(started, vec![JobId(2)]);
        i.complete(SimTime::from_millis(20), JobId(2));
        let (busy, _) = i.integrals(SimTime::from_millis(20));
        assert_eq!(busy, 20_000);
    }

    #[test]
    fn zero_queue_rejects_when_busy() {
        let mut i = inst(1, 0);
        i.admit(SimTime::ZERO, JobId(1), 1).unwrap();
        assert_eq!(i.admit(SimTime::ZERO, JobId(2), 1).unwrap(), Admission::Rejected);
    }

    #[test]
    fn down_instance_refuses() {
        let mut i = inst(1, 4);
        i.crash(SimTime::ZERO).unwrap();
        assert_eq!(i.admit(SimTime::ZERO, JobId(1), 1), Err(PlatformError::InstanceDown(InstanceId(0))));
        assert!(i.crash(SimTime::ZERO).is_err());
    }

    #[test]
    fn crash_fails_everything_held() {
        let mut i = inst(3, 8);
        for j in 0..5 {
            i.admit(SimTime::ZERO, JobId(j), 1).unwrap();
        }
        assert_eq!(i.inflight(), 3);
        assert_eq!(i.queue_len(), 2);
        let failed = i.crash(SimTime::from_millis(1)).unwrap();
        assert_eq!(failed.len(), 5);
        assert_eq!(i.inflight(), 0);
        assert_eq!(i.state(), InstanceState::Down);
    }

    #[test]
    fn fifo_start_order() {
        let mut i = inst(1, 8);
        i.admit(SimTime::ZERO, JobId(0), 1).unwrap();
        for j in 1..5 {
            assert_eq!(i.admit(SimTime::ZERO, JobId(j), 1).unwrap(), Admission::Queued);
        }
        let mut order = vec![];
        let mut cur = JobId(0);
        for t in 1..5 {
            let s = i.complete(SimTime::from_millis(t), cur);
            assert!(i.work_conserving());
            order.extend(s.iter().copied());
            cur = s[0];
        }
        assert_eq!(order, vec![JobId(1), JobId(2), JobId(3), JobId(4)]);
    }

    #[test]
    fn utilization_half_when_one_of_two_slots_busy() {
        let mut i = ServiceInstance::new(InstanceId(0), ServiceKind::UserManagement, 2, 4, SimTime::ZERO, InstanceState::Up);
        let mut s = UtilizationSamples::default();
        s.record(SimTime::ZERO, std::slice::from_ref(&i));
        i.admit(SimTime::ZERO, JobId(1), 1).unwrap();
        s.record(SimTime::from_secs(10), std::slice::from_ref(&i));
        let u = s.utilization(Some(ServiceKind::UserManagement), SimTime::ZERO, SimTime::from_secs(10)).unwrap();
        assert!((u - 50.0).abs() < 1e-9);
    }

    #[test]
    fn utilization_idle_and_saturated_bounds() {
        let mut i = ServiceInstance::new(InstanceId(0), ServiceKind::UserManagement, 1, 4, SimTime::ZERO, InstanceState::Up);
        let mut s = UtilizationSamples::default();
        s.record(SimTime::ZERO, std::slice::from_ref(&i));
        s.record(SimTime::from_secs(1), std::slice::from_ref(&i));
        i.admit(SimTime::from_secs(1), JobId(1), 1).unwrap();
        i.admit(SimTime::from_secs(1), JobId(2), 1).unwrap();
        s.record(SimTime::from_secs(2), std::slice::from_ref(&i));
        let k = Some(ServiceKind::UserManagement);
        assert_eq!(s.utilization(k, SimTime::ZERO, SimTime::from_secs(1)).unwrap(), 0.0);
        assert_eq!(s.utilization(k, SimTime::from_secs(1), SimTime::from_secs(2)).unwrap(), 100.0);
        assert_eq!(s.utilization(k, SimTime::from_secs(1), SimTime::from_secs(1)), Err(PlatformError::EmptyWindow));
    }

    #[test]
    fn catalog_rejects_cycles_and_dangling_refs() {
        let mut a = default_catalog().get("search.trip").unwrap().clone();
        a.name = "a".into();
        a.downstream = vec![DownstreamCall { endpoint: "b".into(), mode: CallMode::Sequential }];
        let mut b = a.clone();
        b.name = "b".into();
        b.downstream = vec![DownstreamCall { endpoint: "a".into(), mode: CallMode::Sequential }];
        assert!(matches!(Catalog::from_endpoints(vec![a.clone(), b]), Err(CatalogError::Cycle(_))));
        a.downstream[0].endpoint = "zzz".into();
        assert!(matches!(Catalog::from_endpoints(vec![a]), Err(CatalogError::UnknownEndpoint { .. })));
    }

    #[test]
    fn parallel_entries_group_into_one_stage() {
        let cat = default_catalog();
        let s = cat.get("search.trip").unwrap().stages();
        assert_eq!(s, vec![vec!["flight.query", "hotel.query"]]);
    }

    #[test]
    fn database_queues_past_capacity() {
        let mut db = DatabaseModel::new(DbOwner::Shared, 1);
        assert!(db.submit(SimTime::ZERO, JobId(1)));
        assert!(!db.submit(SimTime::ZERO, JobId(2)));
        assert_eq!(db.finish(SimTime::from_millis(5)), vec![JobId(2)]);
    }

    #[test]
    fn monolith_capacity_sums_pools() {
        let d = DeploymentModel::monolith();
        assert_eq!(d.monolith_capacity(), 16 * 4);
    }
}
