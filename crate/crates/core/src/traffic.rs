//! Gateway routing table, load-balancing policies, and the consistent-hash ring.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::platform::{Criticality, InstanceId, ServiceKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteTarget {
    Endpoint(String),
    Saga,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Route {
    pub target: RouteTarget,
    pub criticality: Criticality,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrafficError {
    #[error("unknown request class `{0}`")]
    UnknownRequestClass(String),
    #[error("no candidate instances")]
    NoCandidates,
    #[error("instance {0} is not on the ring")]
    RemoveAbsentNode(InstanceId),
}

/// Request class -> entry point. Replaceable at runtime.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RouteTable {
    routes: BTreeMap<String, Route>,
}

impl RouteTable {
    pub fn new(routes: BTreeMap<String, Route>) -> Self {
        RouteTable { routes }
    }

    pub fn travel_default() -> Self {
        let mut routes = BTreeMap::new();
        let ep = |n: &str| RouteTarget::Endpoint(n.to_string());
        routes.insert("search_trip".into(), Route { target: ep("search.trip"), criticality: Criticality::NonCritical });
        routes.insert("book_trip".into(), Route { target: RouteTarget::Saga, criticality: Criticality::Critical });
        routes.insert("view_profile".into(), Route { target: ep("user.profile"), criticality: Criticality::Critical });
        routes.insert("status_update".into(), Route { target: ep("user.status"), criticality: Criticality::NonCritical });
        RouteTable { routes }
    }

    pub fn route(&self, class: &str) -> Result<&Route, TrafficError> {
        self.routes.get(class).ok_or_else(|| TrafficError::UnknownRequestClass(class.to_string()))
    }

    pub fn set(&mut self, class: &str, route: Route) {
        self.routes.insert(class.to_string(), route);
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.routes.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Route)> {
        self.routes.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LbPolicy {
    RoundRobin,
    LeastBusy,
    ConsistentHash,
}

impl LbPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "round_robin" => Some(LbPolicy::RoundRobin),
            "least_busy" => Some(LbPolicy::LeastBusy),
            "consistent_hash" => Some(LbPolicy::ConsistentHash),
            _ => None,
        }
    }
}

/// A healthy instance as seen at pick time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub id: InstanceId,
    /// inflight + queue length
    pub busyness: u64,
}

/// 64-bit ring position: first eight bytes (big-endian) of SHA-256.
pub fn ring_hash(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    u64::from_be_bytes(d[..8].try_into().expect("8 bytes"))
}

pub const DEFAULT_VNODES: u32 = 100;

/// Consistent-hash ring; node positions are `ring_hash("<id>#<vnode>")`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashRing {
    vnodes: u32,
    positions: BTreeMap<u64, InstanceId>,
    members: BTreeSet<InstanceId>,
}

impl HashRing {
    pub fn new(vnodes: u32) -> Self {
        assert!(vnodes > 0);
        HashRing { vnodes, positions: BTreeMap::new(), members: BTreeSet::new() }
    }

    pub fn members(&self) -> &BTreeSet<InstanceId> {
        &self.members
    }

    pub fn contains(&self, id: InstanceId) -> bool {
        self.members.contains(&id)
    }

    fn vnode_positions(&self, id: InstanceId) -> impl Iterator<Item = u64> + '_ {
        (0..self.vnodes).map(move |v| ring_hash(format!("{}#{}", id.0, v).as_bytes()))
    }

    /// Adding an existing member is a no-op.
    pub fn add(&mut self, id: InstanceId) {
        if !self.members.insert(id) {
            return;
        }
        let pos: Vec<u64> = self.vnode_positions(id).collect();
        for p in pos {
            // On a 64-bit collision the lower id keeps the slot, independent of insertion order.
            let e = self.positions.entry(p).or_insert(id);
            if id < *e {
                *e = id;
            }
        }
    }

    pub fn remove(&mut self, id: InstanceId) -> Result<(), TrafficError> {
        if !self.members.remove(&id) {
            return Err(TrafficError::RemoveAbsentNode(id));
        }
        let pos: Vec<u64> = self.vnode_positions(id).collect();
        for p in pos {
            if self.positions.get(&p) == Some(&id) {
                self.positions.remove(&p);
                // restore a colliding lower-priority member, if any
                if let Some(other) = self.members.iter().find(|m| self.vnode_positions(**m).any(|q| q == p)) {
                    self.positions.insert(p, *other);
                }
            }
        }
        Ok(())
    }

    /// First node clockwise from `hash`.
    pub fn lookup_hash(&self, hash: u64) -> Option<InstanceId> {
        self.positions
            .range(hash..)
            .next()
            .or_else(|| self.positions.iter().next())
            .map(|(_, id)| *id)
    }

    pub fn lookup(&self, key: &str) -> Option<InstanceId> {
        self.lookup_hash(ring_hash(key.as_bytes()))
    }

    /// First node clockwise from `hash` accepted by `ok`.
    pub fn lookup_filtered(&self, hash: u64, ok: impl Fn(InstanceId) -> bool) -> Option<InstanceId> {
        self.positions
            .range(hash..)
            .chain(self.positions.range(..hash))
            .map(|(_, id)| *id)
            .find(|id| ok(*id))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemapSummary {
    pub probes: usize,
    pub remapped: usize,
}

impl RemapSummary {
    pub fn fraction(&self) -> f64 {
        if self.probes == 0 {
            0.0
        } else {
            self.remapped as f64 / self.probes as f64
        }
    }
}

/// Apply a membership change and report how many probe keys changed owner.
pub fn ring_update(ring: &mut HashRing, change: RingChange, probes: &[String]) -> Result<RemapSummary, TrafficError> {
    let before: Vec<Option<InstanceId>> = probes.iter().map(|k| ring.lookup(k)).collect();
    match change {
        RingChange::Add(id) => ring.add(id),
        RingChange::Remove(id) => ring.remove(id)?,
    }
    let remapped = probes.iter().zip(&before).filter(|(k, b)| ring.lookup(k) != **b).count();
    Ok(RemapSummary { probes: probes.len(), remapped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingChange {
    Add(InstanceId),
    Remove(InstanceId),
}

/// Per-service balancing state (round-robin cursors and hash rings).
#[derive(Debug, Clone, Default)]
pub struct LoadBalancer {
    cursors: BTreeMap<ServiceKind, u64>,
    rings: BTreeMap<ServiceKind, HashRing>,
}

impl LoadBalancer {
    pub fn ring_mut(&mut self, kind: ServiceKind) -> &mut HashRing {
        self.rings.entry(kind).or_insert_with(|| HashRing::new(DEFAULT_VNODES))
    }

    pub fn ring(&self, kind: ServiceKind) -> Option<&HashRing> {
        self.rings.get(&kind)
    }

    /// Choose an instance for a request. `candidates` must be sorted by id.
    pub fn pick(
        &mut self,
        policy: LbPolicy,
        kind: ServiceKind,
        candidates: &[Candidate],
        request_key: u64,
    ) -> Result<InstanceId, TrafficError> {
        if candidates.is_empty() {
            return Err(TrafficError::NoCandidates);
        }
        match policy {
            LbPolicy::RoundRobin => {
                let c = self.cursors.entry(kind).or_insert(0);
                let id = candidates[(*c % candidates.len() as u64) as usize].id;
                *c = c.wrapping_add(1);
                Ok(id)
            }
            LbPolicy::LeastBusy => Ok(least_busy(candidates)),
            LbPolicy::ConsistentHash => {
                let ring = self.ring_mut(kind);
                for c in candidates {
                    ring.add(c.id);
                }
                let h = ring_hash(&request_key.to_be_bytes());
                ring.lookup_filtered(h, |id| candidates.iter().any(|c| c.id == id))
                    .ok_or(TrafficError::NoCandidates)
            }
        }
    }
}

/// Minimum busyness, ties to the lowest id.
pub fn least_busy(candidates: &[Candidate]) -> InstanceId {
    candidates
        .iter()
        .min_by_key(|c| (c.busyness, c.id))
        .map(|c| c.id)
        .expect("non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cands(loads: &[u64]) -> Vec<Candidate> {
        loads.iter().enumerate().map(|(i, b)| Candidate { id: InstanceId(i as u32), busyness: *b }).collect()
    }

    fn probes(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("key-{i}")).collect()
    }

    #[test]
    fn routes_resolve() {
        let t = RouteTable::travel_default();
        assert_eq!(t.route("book_trip").unwrap().target, RouteTarget::Saga);
        assert_eq!(t.route("search_trip").unwrap().target, RouteTarget::Endpoint("search.trip".into()));
        assert_eq!(t.route("teleport"), Err(TrafficError::UnknownRequestClass("teleport".into())));
    }

    #[test]
    fn least_busy_matches_brute_force() {
        let c = cands(&[3, 1, 2]);
        let brute = c.iter().enumerate().min_by_key(|(i, c)| (c.busyness, *i)).unwrap().1.id;
        assert_eq!(least_busy(&c), brute);
        assert_eq!(least_busy(&c), InstanceId(1));
        assert_eq!(least_busy(&cands(&[2, 2])), InstanceId(0));
    }

    #[test]
    fn round_robin_cycles() {
        let mut lb = LoadBalancer::default();
        let c = cands(&[0, 0, 0]);
        let picks: Vec<u32> = (0..6)
            .map(|_| lb.pick(LbPolicy::RoundRobin, ServiceKind::UserManagement, &c, 0).unwrap().0)
            .collect();
        assert_eq!(picks, vec![0, 1, 2, 0, 1, 2]);
        assert_eq!(lb.pick(LbPolicy::LeastBusy, ServiceKind::UserManagement, &[], 0), Err(TrafficError::NoCandidates));
    }

    #[test]
    fn singleton_ring_owns_everything() {
        let mut r = HashRing::new(DEFAULT_VNODES);
        let s = ring_update(&mut r, RingChange::Add(InstanceId(9)), &probes(100)).unwrap();
        assert_eq!(s.remapped, 100);
        assert!(probes(100).iter().all(|k| r.lookup(k) == Some(InstanceId(9))));
    }

    #[test]
    fn removing_one_of_four_remaps_about_a_quarter() {
        let mut r = HashRing::new(DEFAULT_VNODES);
        for i in 0..4 {
            r.add(InstanceId(i));
        }
        let keys = probes(10_000);
        let before: Vec<_> = keys.iter().map(|k| r.lookup(k).unwrap()).collect();
        let s = ring_update(&mut r, RingChange::Remove(InstanceId(2)), &keys).unwrap();
        // only keys owned by the removed node move
        for (k, b) in keys.iter().zip(&before) {
            let a = r.lookup(k).unwrap();
            assert_eq!(a != *b, *b == InstanceId(2));
        }
        assert!((s.fraction() - 0.25).abs() <= 0.05, "fraction {}", s.fraction());
    }

    #[test]
    fn add_then_remove_restores_mapping() {
        let mut r = HashRing::new(DEFAULT_VNODES);
        for i in 0..4 {
            r.add(InstanceId(i));
        }
        let keys = probes(2_000);
        let before: Vec<_> = keys.iter().map(|k| r.lookup(k)).collect();
        r.add(InstanceId(4));
        r.remove(InstanceId(4)).unwrap();
        let after: Vec<_> = keys.iter().map(|k| r.lookup(k)).collect();
        assert_eq!(before, after);
        assert_eq!(r.remove(InstanceId(4)), Err(TrafficError::RemoveAbsentNode(InstanceId(4))));
    }

    #[test]
    fn hash_pick_skips_unhealthy_and_is_stable() {
        let mut lb = LoadBalancer::default();
        let all = cands(&[0, 0, 0]);
        let k = ServiceKind::HotelBooking;
        for key in 0..200u64 {
            let a = lb.pick(LbPolicy::ConsistentHash, k, &all, key).unwrap();
            let b = lb.pick(LbPolicy::ConsistentHash, k, &all, key).unwrap();
            assert_eq!(a, b);
            let rest: Vec<_> = all.iter().copied().filter(|c| c.id != a).collect();
            let c = lb.pick(LbPolicy::ConsistentHash, k, &rest, key).unwrap();
            assert_ne!(c, a);
        }
    }
}
