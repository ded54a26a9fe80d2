//! Control plane: heartbeat-driven service registry, typed runtime config
//! store, and the threshold autoscaler.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::platform::{InstanceId, ServiceKind};
use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Health {
    Healthy,
    Evicted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryEntry {
    pub instance: InstanceId,
    pub kind: ServiceKind,
    pub registered_at: SimTime,
    pub last_heartbeat: SimTime,
    pub health: Health,
    pub draining: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("instance {0} is already registered and healthy")]
    DuplicateRegistration(InstanceId),
    #[error("no healthy instance of {0}")]
    NoHealthyInstance(ServiceKind),
    #[error("instance {0} is not registered")]
    Unknown(InstanceId),
}

/// Heartbeat registry. An entry is evicted when `eviction_misses` heartbeat
/// intervals elapse after its last heartbeat.
#[derive(Debug, Clone)]
pub struct Registry {
    entries: BTreeMap<InstanceId, RegistryEntry>,
    pub heartbeat_interval: SimTime,
    pub eviction_misses: u32,
    evictions: Vec<(SimTime, InstanceId)>,
}

impl Registry {
    pub fn new(heartbeat_interval: SimTime, eviction_misses: u32) -> Self {
        Registry { entries: BTreeMap::new(), heartbeat_interval, eviction_misses, evictions: Vec::new() }
    }

    pub fn register(&mut self, id: InstanceId, kind: ServiceKind, now: SimTime) -> Result<&RegistryEntry, RegistryError> {
        if let Some(e) = self.entries.get(&id) {
            if e.health == Health::Healthy {
                return Err(RegistryError::DuplicateRegistration(id));
            }
        }
        self.entries.insert(
            id,
            RegistryEntry { instance: id, kind, registered_at: now, last_heartbeat: now, health: Health::Healthy, draining: false },
        );
        Ok(&self.entries[&id])
    }

    /// Refresh a healthy entry. Returns false when the entry is evicted or
    /// missing, in which case the instance must re-register.
    pub fn heartbeat(&mut self, id: InstanceId, at: SimTime) -> bool {
        match self.entries.get_mut(&id) {
            Some(e) if e.health == Health::Healthy => {
                e.last_heartbeat = at;
                true
            }
            _ => false,
        }
    }

    /// Time at which an entry whose last heartbeat was at `beat` is evicted.
    pub fn deadline_for(&self, beat: SimTime) -> SimTime {
        beat + self.heartbeat_interval.times(u64::from(self.eviction_misses))
    }

    /// Deadline check scheduled by the heartbeat at `beat`. Evicts when no
    /// newer heartbeat arrived. Returns true on eviction.
    pub fn check_deadline(&mut self, id: InstanceId, beat: SimTime, now: SimTime) -> bool {
        let deadline = self.deadline_for(beat);
        match self.entries.get_mut(&id) {
            Some(e) if e.health == Health::Healthy && e.last_heartbeat == beat && now >= deadline => {
                e.health = Health::Evicted;
                self.evictions.push((now, id));
                true
            }
            _ => false,
        }
    }

    pub fn set_draining(&mut self, id: InstanceId, draining: bool) {
        if let Some(e) = self.entries.get_mut(&id) {
            e.draining = draining;
        }
    }

    pub fn deregister(&mut self, id: InstanceId) {
        self.entries.remove(&id);
    }

    pub fn entry(&self, id: InstanceId) -> Option<&RegistryEntry> {
        self.entries.get(&id)
    }

    pub fn evictions(&self) -> &[(SimTime, InstanceId)] {
        &self.evictions
    }

    /// Healthy, non-draining instances of `kind` sorted by id.
    pub fn discover(&self, kind: ServiceKind) -> Result<Vec<InstanceId>, RegistryError> {
        let v: Vec<InstanceId> = self
            .entries
            .values()
            .filter(|e| e.kind == kind && e.health == Health::Healthy && !e.draining)
            .map(|e| e.instance)
            .collect();
        if v.is_empty() {
            Err(RegistryError::NoHealthyInstance(kind))
        } else {
            Ok(v)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl ConfigValue {
    fn type_name(&self) -> &'static str {
        match self {
            ConfigValue::Bool(_) => "bool",
            ConfigValue::Int(_) => "int",
            ConfigValue::Float(_) => "float",
            ConfigValue::Text(_) => "text",
        }
    }
}

impl fmt::Display for ConfigValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigValue::Bool(b) => write!(f, "{b}"),
            ConfigValue::Int(i) => write!(f, "{i}"),
            ConfigValue::Float(x) => write!(f, "{x}"),
            ConfigValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}` expects {expected}, got {got}")]
    TypeMismatch { key: String, expected: &'static str, got: &'static str },
    #[error("config key `{key}` rejects value `{value}`")]
    InvalidValue { key: String, value: String },
}

/// Every recognised key with its default. Types are fixed by the default.
pub fn config_schema() -> Vec<(&'static str, ConfigValue)> {
    use ConfigValue::*;
    vec![
        ("autoscale.cooldown_ms", Float(10_000.0)),
        ("autoscale.enabled", Bool(true)),
        ("autoscale.eval_ms", Float(1_000.0)),
        ("autoscale.high_watermark", Float(70.0)),
        ("autoscale.low_watermark", Float(30.0)),
        ("autoscale.max_instances", Int(20)),
        ("autoscale.min_instances", Int(1)),
        ("autoscale.startup_delay_ms", Float(2_000.0)),
        ("autoscale.window_ms", Float(5_000.0)),
        ("breaker.enabled", Bool(true)),
        ("breaker.failure_ratio", Float(0.5)),
        ("breaker.fast_fail_ms", Float(1.0)),
        ("breaker.half_open_probes", Int(3)),
        ("breaker.min_calls", Int(10)),
        ("breaker.open_ms", Float(5_000.0)),
        ("breaker.window", Int(20)),
        ("bulkhead.enabled", Bool(true)),
        ("bulkhead.limit", Int(256)),
        ("call.timeout_ms", Float(1_000.0)),
        ("degrade.enabled", Bool(false)),
        ("degrade.eval_ms", Float(1_000.0)),
        ("degrade.latency_ceiling_ms", Float(500.0)),
        ("degrade.shed_watermark", Float(90.0)),
        ("degrade.window_ms", Float(5_000.0)),
        ("gateway.overhead_ms", Float(1.0)),
        ("lb.ejection_ms", Float(2_000.0)),
        ("lb.policy", Text("least_busy".into())),
        ("messaging.redelivery_ms", Float(100.0)),
        ("network.entry_ms", Float(30.0)),
        ("network.internal_ms", Float(0.0)),
        ("payment.decline_rate", Float(0.0)),
        ("registry.eviction_misses", Int(2)),
        ("registry.heartbeat_ms", Float(1_000.0)),
        ("retry.backoff_ms", Float(10.0)),
        ("retry.jitter", Bool(false)),
        ("retry.max_attempts", Int(3)),
        ("retry.multiplier", Float(2.0)),
    ]
}

/// Typed key/value store with a version counter. Readers always see the
/// latest committed value.
#[derive(Debug, Clone)]
pub struct ConfigStore {
    values: BTreeMap<String, ConfigValue>,
    version: u64,
}

impl Default for ConfigStore {
    fn default() -> Self {
        ConfigStore {
            values: config_schema().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            version: 0,
        }
    }
}

fn check_value(key: &str, v: &ConfigValue) -> Result<(), ConfigError> {
    let bad = || ConfigError::InvalidValue { key: key.to_string(), value: v.to_string() };
    match (key, v) {
        ("lb.policy", ConfigValue::Text(s)) => {
            if crate::traffic::LbPolicy::parse(s).is_none() {
                return Err(bad());
            }
        }
        (_, ConfigValue::Float(x)) if !x.is_finite() || *x < 0.0 => return Err(bad()),
        (_, ConfigValue::Int(i)) if *i < 0 => return Err(bad()),
        _ => {}
    }
    if key == "breaker.failure_ratio" {
        if let ConfigValue::Float(x) = v {
            if *x > 1.0 {
                return Err(bad());
            }
        }
    }
    Ok(())
}

impl ConfigStore {
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn set(&mut self, key: &str, value: ConfigValue) -> Result<u64, ConfigError> {
        let current = self.values.get(key).ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        let value = match (current, value) {
            (ConfigValue::Float(_), ConfigValue::Int(i)) => ConfigValue::Float(i as f64),
            (c, v) if std::mem::discriminant(c) == std::mem::discriminant(&v) => v,
            (c, v) => {
                return Err(ConfigError::TypeMismatch { key: key.to_string(), expected: c.type_name(), got: v.type_name() })
            }
        };
        check_value(key, &value)?;
        self.values.insert(key.to_string(), value);
        self.version += 1;
        Ok(self.version)
    }

    pub fn get(&self, key: &str) -> Option<&ConfigValue> {
        self.values.get(key)
    }

    pub fn f64(&self, key: &str) -> f64 {
        match self.values.get(key) {
            Some(ConfigValue::Float(x)) => *x,
            Some(ConfigValue::Int(i)) => *i as f64,
            other => panic!("config key {key} is not numeric: {other:?}"),
        }
    }

    pub fn u64(&self, key: &str) -> u64 {
        match self.values.get(key) {
            Some(ConfigValue::Int(i)) => (*i).max(0) as u64,
            Some(ConfigValue::Float(x)) => x.max(0.0) as u64,
            other => panic!("config key {key} is not numeric: {other:?}"),
        }
    }

    pub fn bool(&self, key: &str) -> bool {
        match self.values.get(key) {
            Some(ConfigValue::Bool(b)) => *b,
            other => panic!("config key {key} is not bool: {other:?}"),
        }
    }

    pub fn text(&self, key: &str) -> &str {
        match self.values.get(key) {
            Some(ConfigValue::Text(s)) => s,
            other => panic!("config key {key} is not text: {other:?}"),
        }
    }

    pub fn millis(&self, key: &str) -> SimTime {
        SimTime::from_micros((self.f64(key) * 1_000.0).round() as u64)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &ConfigValue)> {
        self.values.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutoscalePolicy {
    pub high_watermark: f64,
    pub low_watermark: f64,
    pub window: SimTime,
    pub cooldown: SimTime,
    pub min_instances: u32,
    pub max_instances: u32,
    pub startup_delay: SimTime,
}

impl Default for AutoscalePolicy {
    fn default() -> Self {
        AutoscalePolicy::from_config(&ConfigStore::default())
    }
}

impl AutoscalePolicy {
    pub fn from_config(c: &ConfigStore) -> Self {
        AutoscalePolicy {
            high_watermark: c.f64("autoscale.high_watermark"),
            low_watermark: c.f64("autoscale.low_watermark"),
            window: c.millis("autoscale.window_ms"),
            cooldown: c.millis("autoscale.cooldown_ms"),
            min_instances: c.u64("autoscale.min_instances") as u32,
            max_instances: c.u64("autoscale.max_instances") as u32,
            startup_delay: c.millis("autoscale.startup_delay_ms"),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.low_watermark < self.high_watermark && self.min_instances <= self.max_instances && self.min_instances >= 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleDecision {
    ScaleOut(u32),
    ScaleIn(u32),
    Hold,
}

/// Threshold decision for one service.
///
/// Scale-out adds enough instances to bring the observed utilization back
/// to the high watermark, `ceil(current * util / high) - current`, at least
/// one. Scale-in symmetrically removes down to `ceil(current * util / low)`,
/// at least one. Both respect the cooldown since the last action and the
/// `[min, max]` bounds. A pool below `min` is topped up at once, cooldown
/// or not.
pub fn evaluate_scaling(
    policy: &AutoscalePolicy,
    current: u32,
    utilization: f64,
    now: SimTime,
    last_action: Option<SimTime>,
) -> ScaleDecision {
    if current < policy.min_instances {
        return ScaleDecision::ScaleOut(policy.min_instances - current);
    }
    let cooled = last_action.is_none_or(|t| now >= t + policy.cooldown);
    if !cooled {
        return ScaleDecision::Hold;
    }
    if utilization > policy.high_watermark && current < policy.max_instances {
        let target = (f64::from(current) * utilization / policy.high_watermark).ceil() as u32;
        let add = target.saturating_sub(current).max(1).min(policy.max_instances - current);
        ScaleDecision::ScaleOut(add)
    } else if utilization < policy.low_watermark && current > policy.min_instances {
        let target = (f64::from(current) * utilization / policy.low_watermark).ceil() as u32;
        let target = target.clamp(policy.min_instances, current - 1);
        ScaleDecision::ScaleIn(current - target)
    } else {
        ScaleDecision::Hold
    }
}
