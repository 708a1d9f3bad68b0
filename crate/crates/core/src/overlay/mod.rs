//! Virtual graphs: pools of pre-shared entangled links layered over a
//! physical graph, and the life cycle of every link slot in them.
//!
//! Pools are advanced lazily. A pool only catches up to the clock when
//! somebody looks at it (or when [`VirtualGraph::step_lifecycle`] sweeps
//! all of them), which is exact because slots evolve independently and
//! each slot draws from its own random stream.

mod construct;

pub use construct::{
    build_deterministic_grid, build_deterministic_ring, build_on_demand, build_recursive_virtual,
    sample_random_virtual, NeighborDistribution, NeighborSampler,
};

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{sample_batch_ready, WindowMode};
use crate::seed;
use crate::topology::{NodeId, PhysicalGraph};

pub type PoolId = u32;
pub type DemandId = u32;
pub type Time = u64;

pub const NEVER: Time = Time::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    Deterministic,
    Uniform,
    PowerLaw { alpha: f64 },
    OnDemand,
    Recursive,
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::Deterministic => "deterministic",
            Strategy::Uniform => "uniform",
            Strategy::PowerLaw { .. } => "power-law",
            Strategy::OnDemand => "on-demand",
            Strategy::Recursive => "recursive",
        }
    }
}

/// How generation is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Stepping {
    /// ready time drawn in closed form when generation starts
    #[default]
    Sampled,
    /// one Bernoulli trial per outstanding segment per step
    Stepwise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lifecycle {
    pub p0: f64,
    /// `None` freezes expiry (links never age out, no windows)
    pub t_th: Option<u64>,
    pub window: WindowMode,
    pub stepping: Stepping,
    pub regenerate: bool,
    /// after a restart, shortfalls are met by generating the whole path
    /// in one window instead of waiting on the pools again
    pub sync_retry: bool,
    /// reserved links do not age out; a waiting demand keeps what it holds
    pub hold_reserved: bool,
}

impl Default for Lifecycle {
    fn default() -> Self {
        Lifecycle {
            p0: 0.0003,
            t_th: Some(1000),
            window: WindowMode::PerSlot,
            stepping: Stepping::Sampled,
            regenerate: true,
            sync_retry: false,
            hold_reserved: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotState {
    Available {
        created_at: Time,
    },
    Reserved {
        demand: DemandId,
        created_at: Time,
    },
    Generating {
        since: Time,
        /// last step whose attempts have been simulated
        last: Time,
        /// closed-form ready time; `NEVER` in stepwise mode
        ready_at: Time,
        /// segments succeeded in the current window (stepwise)
        done: u32,
        claimed_by: Option<DemandId>,
    },
    Consumed {
        at: Time,
    },
    /// on-demand pools: nothing is generated in the background
    Idle,
}

#[derive(Debug, Clone)]
pub struct LinkSlot {
    pub state: SlotState,
    epoch: u32,
    rng: Option<SmallRng>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkOrigin {
    Physical,
    Virtual,
    /// created with the copy at this construction level
    Recursive {
        level: u32,
    },
}

#[derive(Debug, Clone)]
pub struct LinkPool {
    pub u: NodeId,
    pub v: NodeId,
    pub pair_distance: u32,
    /// maximum pair distance permitted for this pool
    pub bound: u32,
    pub origin: LinkOrigin,
    pub slots: Vec<LinkSlot>,
    advanced_to: Time,
    available: u32,
}

impl LinkPool {
    pub fn available(&self) -> u32 {
        self.available
    }

    pub fn counts(&self) -> SlotCounts {
        let mut c = SlotCounts::default();
        for s in &self.slots {
            match s.state {
                SlotState::Available { .. } => c.available += 1,
                SlotState::Reserved { .. } => c.reserved += 1,
                SlotState::Generating { .. } => c.generating += 1,
                SlotState::Consumed { .. } => c.consumed += 1,
                SlotState::Idle => c.idle += 1,
            }
        }
        c
    }

    fn recount(&mut self) {
        self.available = self
            .slots
            .iter()
            .filter(|s| matches!(s.state, SlotState::Available { .. }))
            .count() as u32;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SlotCounts {
    pub available: u32,
    pub reserved: u32,
    pub generating: u32,
    pub consumed: u32,
    pub idle: u32,
}

impl SlotCounts {
    pub fn total(&self) -> u32 {
        self.available + self.reserved + self.generating + self.consumed + self.idle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SlotHandle {
    pub pool: PoolId,
    pub slot: u32,
    epoch: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reservation {
    pub handles: Vec<SlotHandle>,
    pub shortfall: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LifecycleEventKind {
    /// expired; `voided` names the demand whose reservation was dropped
    Expired { voided: Option<DemandId> },
    /// generation finished; `reserved_for` names a claiming demand
    Created { reserved_for: Option<DemandId> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LifecycleEvent {
    pub at: Time,
    pub pool: PoolId,
    pub slot: u32,
    pub kind: LifecycleEventKind,
}

/// Where a claimed generating slot stands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimStatus {
    Pending { ready_at: Time },
    Ready(SlotHandle),
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub node: NodeId,
    pub pool: PoolId,
    pub physical: bool,
}

#[derive(Debug, Clone)]
pub struct VirtualGraph {
    physical: Arc<PhysicalGraph>,
    strategy: Strategy,
    d_th: u32,
    cap: u32,
    pools: Vec<LinkPool>,
    index: HashMap<(NodeId, NodeId), PoolId>,
    adj: Vec<Vec<Neighbor>>,
    life: Lifecycle,
    slot_seed: u64,
}

#[inline]
fn key(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl VirtualGraph {
    pub(crate) fn new(
        physical: Arc<PhysicalGraph>,
        strategy: Strategy,
        d_th: u32,
        cap: u32,
    ) -> Self {
        let n = physical.node_count();
        let mut vg = VirtualGraph {
            physical,
            strategy,
            d_th,
            cap,
            pools: Vec::new(),
            index: HashMap::new(),
            adj: vec![Vec::new(); n],
            life: Lifecycle::default(),
            slot_seed: 0,
        };
        let edges: Vec<_> = vg.physical.edges().collect();
        for (u, v) in edges {
            vg.add_pool(u, v, LinkOrigin::Physical, 1);
        }
        vg
    }

    /// Adds a pool if the pair has none yet. Returns the pool id.
    pub(crate) fn add_pool(
        &mut self,
        u: NodeId,
        v: NodeId,
        origin: LinkOrigin,
        bound: u32,
    ) -> PoolId {
        let k = key(u, v);
        if let Some(&p) = self.index.get(&k) {
            return p;
        }
        let id = self.pools.len() as PoolId;
        let idle = self.strategy == Strategy::OnDemand;
        let state = if idle {
            SlotState::Idle
        } else {
            SlotState::Available { created_at: 0 }
        };
        self.pools.push(LinkPool {
            u: k.0,
            v: k.1,
            pair_distance: self.physical.dist(u, v),
            bound,
            origin,
            slots: (0..self.cap)
                .map(|_| LinkSlot {
                    state,
                    epoch: 0,
                    rng: None,
                })
                .collect(),
            advanced_to: 0,
            available: if idle { 0 } else { self.cap },
        });
        self.index.insert(k, id);
        let physical = origin == LinkOrigin::Physical;
        for (a, b) in [(u, v), (v, u)] {
            let list = &mut self.adj[a as usize];
            let pos = list.partition_point(|x| x.node < b);
            list.insert(
                pos,
                Neighbor {
                    node: b,
                    pool: id,
                    physical,
                },
            );
        }
        id
    }

    pub fn physical(&self) -> &PhysicalGraph {
        &self.physical
    }

    pub fn physical_arc(&self) -> &Arc<PhysicalGraph> {
        &self.physical
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn d_th(&self) -> u32 {
        self.d_th
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn lifecycle(&self) -> &Lifecycle {
        &self.life
    }

    pub fn set_lifecycle(&mut self, life: Lifecycle) {
        self.life = life;
    }

    pub fn pools(&self) -> &[LinkPool] {
        &self.pools
    }

    pub fn pool(&self, id: PoolId) -> &LinkPool {
        &self.pools[id as usize]
    }

    pub fn pool_id(&self, u: NodeId, v: NodeId) -> Option<PoolId> {
        self.index.get(&key(u, v)).copied()
    }

    /// Neighbors through any pool, sorted by node id.
    pub fn neighbors(&self, u: NodeId) -> &[Neighbor] {
        &self.adj[u as usize]
    }

    /// Available (unreserved) links in the pool, as of its last advance.
    #[inline]
    pub fn available(&self, pool: PoolId) -> u32 {
        self.pools[pool as usize].available
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// Fresh copy for a new trial: every slot back to its initial state and
    /// slot random streams keyed off `seed`.
    pub fn fresh(&self, seed: u64) -> VirtualGraph {
        let mut vg = self.clone();
        vg.slot_seed = seed;
        let idle = vg.strategy == Strategy::OnDemand;
        for p in vg.pools.iter_mut() {
            p.advanced_to = 0;
            for s in p.slots.iter_mut() {
                s.state = if idle {
                    SlotState::Idle
                } else {
                    SlotState::Available { created_at: 0 }
                };
                s.epoch = 0;
                s.rng = None;
            }
            p.recount();
        }
        vg
    }

    // -----------------------------------------------------------------
    // life cycle

    /// Brings every pool up to `now`.
    pub fn step_lifecycle(&mut self, now: Time) -> Vec<LifecycleEvent> {
        let mut ev = Vec::new();
        for p in 0..self.pools.len() as PoolId {
            self.advance_pool(p, now, &mut ev);
        }
        ev
    }

    /// Brings the pools around `u` up to `now`; with `depth == 2` also the
    /// pools of `u`'s neighbors.
    pub fn advance_around(
        &mut self,
        u: NodeId,
        now: Time,
        depth: u32,
        ev: &mut Vec<LifecycleEvent>,
    ) {
        for i in 0..self.adj[u as usize].len() {
            let nb = self.adj[u as usize][i];
            self.advance_pool(nb.pool, now, ev);
            if depth >= 2 {
                for j in 0..self.adj[nb.node as usize].len() {
                    let p = self.adj[nb.node as usize][j].pool;
                    self.advance_pool(p, now, ev);
                }
            }
        }
    }

    pub fn advance_pool(&mut self, pool: PoolId, now: Time, ev: &mut Vec<LifecycleEvent>) {
        let life = self.life;
        let slot_seed = self.slot_seed;
        let p = &mut self.pools[pool as usize];
        let d = p.pair_distance;
        for (i, s) in p.slots.iter_mut().enumerate() {
            advance_slot(s, d, &life, now, pool, i as u32, slot_seed, ev);
        }
        p.advanced_to = p.advanced_to.max(now);
        p.recount();
    }

    // -----------------------------------------------------------------
    // reservations

    pub fn reserve(
        &mut self,
        u: NodeId,
        v: NodeId,
        count: u32,
        demand: DemandId,
        now: Time,
    ) -> Result<Reservation> {
        let pool = self
            .pool_id(u, v)
            .ok_or_else(|| Error::InvalidParameter(format!("no pool between {u} and {v}")))?;
        let mut ev = Vec::new();
        self.advance_pool(pool, now, &mut ev);
        Ok(self.reserve_pool(pool, count, demand))
    }

    /// Reserves up to `count` Available slots, lowest index first. The pool
    /// must already be advanced to the current step.
    pub fn reserve_pool(&mut self, pool: PoolId, count: u32, demand: DemandId) -> Reservation {
        let p = &mut self.pools[pool as usize];
        let mut handles = Vec::new();
        for (i, s) in p.slots.iter_mut().enumerate() {
            if handles.len() as u32 == count {
                break;
            }
            if let SlotState::Available { created_at } = s.state {
                s.state = SlotState::Reserved { demand, created_at };
                s.epoch += 1;
                handles.push(SlotHandle {
                    pool,
                    slot: i as u32,
                    epoch: s.epoch,
                });
            }
        }
        p.recount();
        let shortfall = count - handles.len() as u32;
        Reservation { handles, shortfall }
    }

    /// Marks up to `count` unclaimed generating slots as spoken for by
    /// `demand`; they turn into reservations for it once ready.
    pub fn claim_pool(&mut self, pool: PoolId, count: u32, demand: DemandId) -> Vec<SlotHandle> {
        let p = &mut self.pools[pool as usize];
        let mut out = Vec::new();
        for (i, s) in p.slots.iter_mut().enumerate() {
            if out.len() as u32 == count {
                break;
            }
            if let SlotState::Generating {
                claimed_by: ref mut c @ None,
                ..
            } = s.state
            {
                *c = Some(demand);
                out.push(SlotHandle {
                    pool,
                    slot: i as u32,
                    epoch: s.epoch,
                });
            }
        }
        out
    }

    /// Takes one reservation or claim in `pool` away from the lowest-ranked
    /// demand below `demand` (larger ids rank lower), reservations first.
    /// Returns the handle now owned by `demand`, whether it is a
    /// reservation, and the demand that lost it.
    pub fn preempt(
        &mut self,
        pool: PoolId,
        demand: DemandId,
    ) -> Option<(SlotHandle, bool, DemandId)> {
        let p = &mut self.pools[pool as usize];
        let mut best: Option<(DemandId, bool, usize)> = None;
        for (i, s) in p.slots.iter().enumerate() {
            let cand = match s.state {
                SlotState::Reserved { demand: d, .. } if d > demand => (d, true, i),
                SlotState::Generating {
                    claimed_by: Some(d),
                    ..
                } if d > demand => (d, false, i),
                _ => continue,
            };
            if best.is_none_or(|b| (cand.0, cand.1) > (b.0, b.1)) {
                best = Some(cand);
            }
        }
        let (victim, reserved, i) = best?;
        let s = &mut p.slots[i];
        match s.state {
            SlotState::Reserved { created_at, .. } => {
                s.state = SlotState::Reserved { demand, created_at };
                s.epoch += 1;
            }
            SlotState::Generating {
                ref mut claimed_by, ..
            } => *claimed_by = Some(demand),
            _ => unreachable!(),
        }
        let h = SlotHandle {
            pool,
            slot: i as u32,
            epoch: s.epoch,
        };
        Some((h, reserved, victim))
    }

    pub fn claim_status(&self, h: SlotHandle, demand: DemandId) -> ClaimStatus {
        let s = &self.pools[h.pool as usize].slots[h.slot as usize];
        match s.state {
            SlotState::Generating {
                claimed_by: Some(d),
                ready_at,
                ..
            } if d == demand && s.epoch == h.epoch => ClaimStatus::Pending { ready_at },
            SlotState::Reserved { demand: d, .. } if d == demand && s.epoch == h.epoch + 1 => {
                ClaimStatus::Ready(SlotHandle {
                    epoch: s.epoch,
                    ..h
                })
            }
            _ => ClaimStatus::Lost,
        }
    }

    pub fn unclaim(&mut self, h: SlotHandle, demand: DemandId) {
        let s = &mut self.pools[h.pool as usize].slots[h.slot as usize];
        if let SlotState::Generating {
            ref mut claimed_by, ..
        } = s.state
        {
            if *claimed_by == Some(demand) && s.epoch == h.epoch {
                *claimed_by = None;
            }
        }
    }

    /// Whether `h` is still a live reservation of `demand`.
    pub fn holds(&self, h: SlotHandle, demand: DemandId) -> bool {
        let s = &self.pools[h.pool as usize].slots[h.slot as usize];
        s.epoch == h.epoch
            && matches!(s.state, SlotState::Reserved { demand: d, .. } if d == demand)
    }

    pub fn created_at(&self, h: SlotHandle) -> Option<Time> {
        match self.pools[h.pool as usize].slots[h.slot as usize].state {
            SlotState::Available { created_at } | SlotState::Reserved { created_at, .. } => {
                Some(created_at)
            }
            _ => None,
        }
    }

    /// Returns a reservation to the pool; stale handles are ignored.
    pub fn release(&mut self, h: SlotHandle, demand: DemandId) {
        if !self.holds(h, demand) {
            return;
        }
        let p = &mut self.pools[h.pool as usize];
        let s = &mut p.slots[h.slot as usize];
        if let SlotState::Reserved { created_at, .. } = s.state {
            s.state = SlotState::Available { created_at };
            s.epoch += 1;
        }
        p.recount();
    }

    /// Consumes reserved links. All-or-nothing: if any handle is not a live
    /// reservation of `demand`, nothing changes. Returns each link's
    /// creation time.
    pub fn consume(
        &mut self,
        handles: &[SlotHandle],
        demand: DemandId,
        now: Time,
    ) -> Result<Vec<Time>> {
        for (i, h) in handles.iter().enumerate() {
            if !self.holds(*h, demand) {
                return Err(Error::ProtocolViolation(format!(
                    "demand {demand} does not hold slot {}:{} at step {now}",
                    h.pool, h.slot
                )));
            }
            if handles[..i].contains(h) {
                return Err(Error::ProtocolViolation("duplicate handle".into()));
            }
        }
        let mut created = Vec::with_capacity(handles.len());
        for h in handles {
            let p = &mut self.pools[h.pool as usize];
            let s = &mut p.slots[h.slot as usize];
            if let SlotState::Reserved { created_at, .. } = s.state {
                created.push(created_at);
            }
            s.state = SlotState::Consumed { at: now };
            s.epoch += 1;
            p.recount();
        }
        Ok(created)
    }

    // -----------------------------------------------------------------
    // inspection

    /// `(u, v, pair_distance, cap, available_now)` per pool.
    pub fn snapshot(&self) -> Vec<(NodeId, NodeId, u32, u32, u32)> {
        self.pools
            .iter()
            .map(|p| (p.u, p.v, p.pair_distance, self.cap, p.available))
            .collect()
    }

    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# u v pair_distance cap available_now");
        for (u, v, d, c, a) in self.snapshot() {
            let _ = writeln!(s, "{u} {v} {d} {c} {a}");
        }
        s
    }

    /// Structural and temporal invariants; pools are assumed advanced to
    /// `now`.
    pub fn check_invariants(&self, now: Time) -> Result<()> {
        for (i, p) in self.pools.iter().enumerate() {
            if p.pair_distance > p.bound {
                return Err(Error::ProtocolViolation(format!(
                    "pool {i} spans {} hops > bound {}",
                    p.pair_distance, p.bound
                )));
            }
            if p.slots.len() as u32 != self.cap || p.counts().total() != self.cap {
                return Err(Error::ProtocolViolation(format!("pool {i} lost slots")));
            }
            if let Some(t) = self.life.t_th {
                for s in &p.slots {
                    let created = match s.state {
                        SlotState::Available { created_at } => Some(created_at),
                        SlotState::Reserved { created_at, .. } if !self.life.hold_reserved => {
                            Some(created_at)
                        }
                        _ => None,
                    };
                    if let Some(created_at) = created {
                        if p.advanced_to >= now && now - created_at.min(now) > t {
                            return Err(Error::ProtocolViolation(format!(
                                "pool {i} holds a link of age {} > {t}",
                                now - created_at
                            )));
                        }
                    }
                }
            }
        }
        for (u, list) in self.adj.iter().enumerate() {
            for nb in list {
                if nb.physical != self.physical.is_adjacent(u as NodeId, nb.node) {
                    return Err(Error::ProtocolViolation("physical flag mismatch".into()));
                }
            }
        }
        Ok(())
    }
}

fn slot_rng(s: &mut LinkSlot, seed: u64, pool: PoolId, slot: u32) -> &mut SmallRng {
    s.rng.get_or_insert_with(|| {
        SmallRng::seed_from_u64(seed::derive(
            seed,
            &[seed::TAG_SLOT, pool as u64, slot as u64],
        ))
    })
}

#[allow(clippy::too_many_arguments)]
fn advance_slot(
    s: &mut LinkSlot,
    d: u32,
    life: &Lifecycle,
    now: Time,
    pool: PoolId,
    slot: u32,
    seed: u64,
    ev: &mut Vec<LifecycleEvent>,
) {
    loop {
        match s.state {
            SlotState::Idle => return,
            SlotState::Reserved { .. } if life.hold_reserved => return,
            SlotState::Available { created_at } | SlotState::Reserved { created_at, .. } => {
                let Some(t) = life.t_th else { return };
                let expiry = created_at + t + 1;
                if now < expiry {
                    return;
                }
                let voided = match s.state {
                    SlotState::Reserved { demand, .. } => Some(demand),
                    _ => None,
                };
                ev.push(LifecycleEvent {
                    at: expiry,
                    pool,
                    slot,
                    kind: LifecycleEventKind::Expired { voided },
                });
                if life.regenerate {
                    start_generating(s, d, life, expiry, pool, slot, seed);
                } else {
                    s.state = SlotState::Consumed { at: expiry };
                    s.epoch += 1;
                    return;
                }
            }
            SlotState::Consumed { at } => {
                if !life.regenerate || now < at {
                    return;
                }
                start_generating(s, d, life, at, pool, slot, seed);
            }
            SlotState::Generating {
                since,
                last,
                ready_at,
                done,
                claimed_by,
            } => {
                let ready = match life.stepping {
                    Stepping::Sampled => {
                        if ready_at > now {
                            return;
                        }
                        ready_at
                    }
                    Stepping::Stepwise => {
                        let mut done = done;
                        let mut hit = None;
                        let rng = slot_rng(s, seed, pool, slot);
                        for step in last + 1..=now {
                            if let Some(t) = life.t_th {
                                let fresh_window = match life.window {
                                    WindowMode::PerSlot => {
                                        step > since + 1 && (step - since - 1) % t == 0
                                    }
                                    WindowMode::Global => step > 1 && (step - 1) % t == 0,
                                };
                                if fresh_window {
                                    done = 0;
                                }
                            }
                            let pending = d - done;
                            for _ in 0..pending {
                                if rng.random::<f64>() < life.p0 {
                                    done += 1;
                                }
                            }
                            if done >= d {
                                hit = Some(step);
                                break;
                            }
                        }
                        match hit {
                            Some(step) => step,
                            None => {
                                s.state = SlotState::Generating {
                                    since,
                                    last: now,
                                    ready_at,
                                    done,
                                    claimed_by,
                                };
                                return;
                            }
                        }
                    }
                };
                s.state = match claimed_by {
                    Some(demand) => SlotState::Reserved {
                        demand,
                        created_at: ready,
                    },
                    None => SlotState::Available { created_at: ready },
                };
                s.epoch += 1;
                ev.push(LifecycleEvent {
                    at: ready,
                    pool,
                    slot,
                    kind: LifecycleEventKind::Created {
                        reserved_for: claimed_by,
                    },
                });
            }
        }
    }
}

fn start_generating(
    s: &mut LinkSlot,
    d: u32,
    life: &Lifecycle,
    t0: Time,
    pool: PoolId,
    slot: u32,
    seed: u64,
) {
    let ready_at = match life.stepping {
        Stepping::Sampled => {
            let rng = slot_rng(s, seed, pool, slot);
            let (g, _) = sample_batch_ready(life.p0, life.t_th, life.window, t0, &[d], rng);
            t0.saturating_add(g)
        }
        Stepping::Stepwise => NEVER,
    };
    s.state = SlotState::Generating {
        since: t0,
        last: t0,
        ready_at,
        done: 0,
        claimed_by: None,
    };
    s.epoch += 1;
}

#[cfg(test)]
mod tests;
