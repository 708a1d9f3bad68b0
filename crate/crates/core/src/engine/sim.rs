//! Event-driven execution of a batch of demands over one virtual graph.
//!
//! Time only advances to steps where some demand has something to do;
//! pools catch up lazily when touched, so skipping idle steps is exact.

use std::collections::BTreeSet;
use std::fmt;

use rand::rngs::SmallRng;

use crate::error::{Error, Result};
use crate::overlay::{
    ClaimStatus, LifecycleEvent, PoolId, SlotHandle, Strategy, Time, VirtualGraph, NEVER,
};
use crate::physics::{fidelity_unchecked, sample_batch_ready, FidelityBound};
use crate::routing::{
    next_hop, shortest_physical_path, Algorithm, Demand, RoutePath, RoutingOutcome,
};
use crate::seed;
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub algorithm: Algorithm,
    /// depolarising parameter, for link fidelities
    pub p: f64,
    pub max_steps: Time,
    /// keys the per-demand streams used for synchronised generation
    pub sync_seed: u64,
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub step: Time,
    pub demand: u32,
    pub event: &'static str,
    pub node: NodeId,
    pub detail: String,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {}",
            self.step, self.demand, self.event, self.node, self.detail
        )
    }
}

#[derive(Debug, Clone)]
struct Hold {
    pool: PoolId,
    reserved: Vec<SlotHandle>,
    claims: Vec<SlotHandle>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Discover { cur: NodeId, due: Time },
    Wait,
    Deliver { due: Time },
    Done { at: Time },
}

#[derive(Debug, Clone)]
struct Run {
    d: Demand,
    remaining: u32,
    required: u32,
    phase: Phase,
    path: RoutePath,
    holds: Vec<Hold>,
    restarted: bool,
    restarts: u32,
    rounds: u32,
    waited: Time,
    wait_since: Option<Time>,
    swaps: u64,
    links: u64,
    worst_pair: f64,
    worst_link: f64,
    last_path: RoutePath,
    last_swaps: u32,
    rng: Option<SmallRng>,
}

impl Run {
    fn new(d: Demand, cap: u32) -> Self {
        Run {
            d,
            remaining: d.requested,
            required: d.requested.min(cap),
            phase: Phase::Discover {
                cur: d.source,
                due: 0,
            },
            path: RoutePath::start(d.source),
            holds: Vec::new(),
            restarted: false,
            restarts: 0,
            rounds: 0,
            waited: 0,
            wait_since: None,
            swaps: 0,
            links: 0,
            worst_pair: 1.0,
            worst_link: 1.0,
            last_path: RoutePath::start(d.source),
            last_swaps: 0,
            rng: None,
        }
    }

    fn sync_rng(&mut self, base: u64) -> &mut SmallRng {
        let id = self.d.id as u64;
        self.rng
            .get_or_insert_with(|| seed::rng(base, &[seed::TAG_SYNC, id]))
    }

    fn outcome(&self, max_steps: Time) -> RoutingOutcome {
        let (latency, censored) = match self.phase {
            Phase::Done { at } => (at, false),
            _ => (max_steps, true),
        };
        RoutingOutcome {
            demand: self.d.id,
            path: self.last_path.clone(),
            swap_count: self.last_swaps,
            total_swaps: self.swaps,
            links_consumed: self.links,
            latency_steps: latency,
            fidelity_bound: FidelityBound {
                value: self.worst_pair,
                links_consumed: self.last_path.hops(),
                per_link_fidelity: self.worst_link,
            },
            rounds_used: self.rounds,
            restarts: self.restarts,
            censored,
        }
    }
}

/// Per-demand results plus bookkeeping the trial-level checks need.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub outcomes: Vec<RoutingOutcome>,
    /// steps each demand spent waiting for links to be generated
    pub waited: Vec<Time>,
    pub trace: Vec<TraceRecord>,
    /// links taken out of pools (synchronised generation excluded)
    pub pool_links_consumed: u64,
}

pub(crate) struct Simulation<'a> {
    vg: &'a mut VirtualGraph,
    params: SimParams,
    runs: Vec<Run>,
    queue: BTreeSet<(Time, usize)>,
    waiters: BTreeSet<usize>,
    freed: bool,
    trace: Vec<TraceRecord>,
    ev: Vec<LifecycleEvent>,
    pool_links: u64,
}

impl<'a> Simulation<'a> {
    pub(crate) fn new(vg: &'a mut VirtualGraph, demands: &[Demand], params: SimParams) -> Self {
        let mut ds = demands.to_vec();
        ds.sort_by_key(|d| d.id);
        let cap = vg.cap();
        Simulation {
            vg,
            params,
            runs: ds.into_iter().map(|d| Run::new(d, cap)).collect(),
            queue: BTreeSet::new(),
            waiters: BTreeSet::new(),
            freed: false,
            trace: Vec::new(),
            ev: Vec::new(),
            pool_links: 0,
        }
    }

    fn log(
        &mut self,
        step: Time,
        i: usize,
        event: &'static str,
        node: NodeId,
        detail: impl FnOnce() -> String,
    ) {
        if self.params.trace {
            let demand = self.runs[i].d.id;
            self.trace.push(TraceRecord {
                step,
                demand,
                event,
                node,
                detail: detail(),
            });
        }
    }

    fn schedule(&mut self, t: Time, i: usize) {
        if t <= self.params.max_steps {
            self.queue.insert((t, i));
        }
    }

    pub(crate) fn run(mut self) -> Result<SimOutput> {
        if self.vg.strategy() == Strategy::OnDemand {
            return self.run_on_demand();
        }
        for i in 0..self.runs.len() {
            self.schedule(0, i);
        }
        while let Some(&(t, i)) = self.queue.first() {
            self.queue.pop_first();
            self.process(i, t)?;
            if self.queue.first().is_none_or(|&(t2, _)| t2 > t) {
                self.fill(t)?;
            }
        }
        Ok(self.finish())
    }

    fn finish(self) -> SimOutput {
        let max = self.params.max_steps;
        SimOutput {
            outcomes: self.runs.iter().map(|r| r.outcome(max)).collect(),
            waited: self.runs.iter().map(|r| r.waited).collect(),
            trace: self.trace,
            pool_links_consumed: self.pool_links,
        }
    }

    fn process(&mut self, i: usize, t: Time) -> Result<()> {
        match self.runs[i].phase {
            Phase::Discover { due, .. } if due == t => self.discover_step(i, t),
            Phase::Wait => self.settle(i, t),
            Phase::Deliver { due } if due == t => self.finish_round(i, t),
            _ => Ok(()),
        }
    }

    /// Lets waiting demands pick up links freed during this step.
    fn fill(&mut self, t: Time) -> Result<()> {
        while self.freed {
            self.freed = false;
            let ws: Vec<usize> = self.waiters.iter().copied().collect();
            for i in ws {
                if self.runs[i].phase == Phase::Wait {
                    self.settle(i, t)?;
                }
            }
        }
        Ok(())
    }

    fn acquire(
        &mut self,
        i: usize,
        pool: PoolId,
        want: u32,
        t: Time,
    ) -> (Vec<SlotHandle>, Vec<SlotHandle>) {
        let id = self.runs[i].d.id;
        let r = self.vg.reserve_pool(pool, want, id);
        let mut reserved = r.handles;
        let mut claims = if r.shortfall > 0 {
            self.vg.claim_pool(pool, r.shortfall, id)
        } else {
            Vec::new()
        };
        if self.vg.lifecycle().hold_reserved {
            // held links never free themselves, so rank decides
            while reserved.len() + claims.len() < want as usize {
                let Some((h, is_reserved, victim)) = self.vg.preempt(pool, id) else {
                    break;
                };
                if is_reserved {
                    reserved.push(h);
                } else {
                    claims.push(h);
                }
                if let Ok(v) = self.runs.binary_search_by_key(&victim, |r| r.d.id) {
                    self.schedule(t, v);
                }
            }
        }
        (reserved, claims)
    }

    fn discover_step(&mut self, i: usize, t: Time) -> Result<()> {
        let Phase::Discover { cur, .. } = self.runs[i].phase else {
            unreachable!()
        };
        let e = self.runs[i].d.destination;
        if cur == e {
            return self.settle(i, t);
        }
        let alg = self.params.algorithm;
        self.vg
            .advance_around(cur, t, alg.lookahead(), &mut self.ev);
        self.ev.clear();
        let required = self.runs[i].required;
        let hop = next_hop(self.vg, alg, cur, e, required);
        let len = self.vg.pool(hop.pool).pair_distance;
        let (reserved, claims) = self.acquire(i, hop.pool, required, t);
        let (nr, nc) = (reserved.len(), claims.len());
        self.log(t, i, "hop", cur, || {
            format!(
                "to={} len={len} reserved={nr} claimed={nc} fallback={}",
                hop.next, hop.fallback as u8
            )
        });
        let run = &mut self.runs[i];
        run.holds.push(Hold {
            pool: hop.pool,
            reserved,
            claims,
        });
        run.path.push(hop.next, hop.pool, len);
        let due = t + len as Time;
        run.phase = Phase::Discover { cur: hop.next, due };
        self.schedule(due, i);
        Ok(())
    }

    /// Reconciles what the demand holds with the pools at step `t` and
    /// decides what happens next.
    fn settle(&mut self, i: usize, t: Time) -> Result<()> {
        let id = self.runs[i].d.id;
        let required = self.runs[i].required;
        for k in 0..self.runs[i].holds.len() {
            let pool = self.runs[i].holds[k].pool;
            self.vg.advance_pool(pool, t, &mut self.ev);
        }
        self.ev.clear();

        let lost = self.runs[i]
            .holds
            .iter()
            .any(|h| h.reserved.iter().any(|&s| !self.vg.holds(s, id)));
        if lost {
            if !self.vg.lifecycle().hold_reserved {
                return self.restart(i, t);
            }
            for h in &mut self.runs[i].holds {
                h.reserved.retain(|&s| self.vg.holds(s, id));
            }
        }
        for k in 0..self.runs[i].holds.len() {
            let claims = std::mem::take(&mut self.runs[i].holds[k].claims);
            let mut keep = Vec::new();
            for c in claims {
                match self.vg.claim_status(c, id) {
                    ClaimStatus::Ready(h) => self.runs[i].holds[k].reserved.push(h),
                    ClaimStatus::Pending { .. } => keep.push(c),
                    ClaimStatus::Lost => {}
                }
            }
            self.runs[i].holds[k].claims = keep;
            let h = &self.runs[i].holds[k];
            let unmet = required - h.reserved.len() as u32 - h.claims.len() as u32;
            if unmet > 0 {
                let pool = h.pool;
                let (r, c) = self.acquire(i, pool, unmet, t);
                let h = &mut self.runs[i].holds[k];
                h.reserved.extend(r);
                h.claims.extend(c);
            }
        }

        let complete = self.runs[i]
            .holds
            .iter()
            .all(|h| h.reserved.len() as u32 == required);
        if complete {
            return self.consume(i, t);
        }
        if self.runs[i].restarted && self.vg.lifecycle().sync_retry {
            return self.synchronise(i, t);
        }
        self.wait(i, t);
        Ok(())
    }

    fn wait(&mut self, i: usize, t: Time) {
        let life = *self.vg.lifecycle();
        let required = self.runs[i].required;
        let mut next = NEVER;
        let mut unmet = false;
        for h in &self.runs[i].holds {
            if let Some(tt) = life.t_th.filter(|_| !life.hold_reserved) {
                for &s in &h.reserved {
                    if let Some(c) = self.vg.created_at(s) {
                        next = next.min(c + tt + 1);
                    }
                }
            }
            for &c in &h.claims {
                if let ClaimStatus::Pending { ready_at } =
                    self.vg.claim_status(c, self.runs[i].d.id)
                {
                    next = next.min(if ready_at == NEVER { t + 1 } else { ready_at });
                }
            }
            unmet |= (h.reserved.len() + h.claims.len()) < required as usize;
        }
        let run = &mut self.runs[i];
        if run.phase != Phase::Wait {
            run.phase = Phase::Wait;
            run.wait_since = Some(t);
        }
        if unmet {
            self.waiters.insert(i);
        } else {
            self.waiters.remove(&i);
        }
        if next != NEVER {
            self.schedule(next.max(t + 1), i);
        }
    }

    fn end_wait(&mut self, i: usize, t: Time) {
        let run = &mut self.runs[i];
        if let Some(s) = run.wait_since.take() {
            run.waited += t - s;
        }
        self.waiters.remove(&i);
    }

    fn release_all(&mut self, i: usize) {
        let id = self.runs[i].d.id;
        let holds = std::mem::take(&mut self.runs[i].holds);
        for h in holds {
            for s in h.reserved {
                self.vg.release(s, id);
            }
            for c in h.claims {
                self.vg.unclaim(c, id);
            }
        }
        self.freed = true;
    }

    fn restart(&mut self, i: usize, t: Time) -> Result<()> {
        self.end_wait(i, t);
        self.release_all(i);
        let s = self.runs[i].d.source;
        self.log(t, i, "restart", s, || "reservation expired".into());
        let run = &mut self.runs[i];
        run.restarted = true;
        run.restarts += 1;
        run.path = RoutePath::start(s);
        run.phase = Phase::Discover { cur: s, due: t };
        self.discover_step(i, t)
    }

    fn consume(&mut self, i: usize, t: Time) -> Result<()> {
        self.end_wait(i, t);
        let id = self.runs[i].d.id;
        let required = self.runs[i].required as usize;
        let hops = self.runs[i].holds.len();
        let mut pair_f = vec![1.0f64; required];
        let mut worst_link = 1.0f64;
        for k in 0..hops {
            let handles = std::mem::take(&mut self.runs[i].holds[k].reserved);
            let created = self.vg.consume(&handles, id, t)?;
            self.pool_links += created.len() as u64;
            for (c, born) in created.into_iter().enumerate() {
                let f = fidelity_unchecked(self.params.p, t - born);
                pair_f[c] *= f;
                worst_link = worst_link.min(f);
            }
        }
        self.runs[i].holds.clear();
        self.freed = true;
        let worst_pair = pair_f.iter().copied().fold(1.0, f64::min);
        self.deliver(i, t, worst_pair, worst_link, t);
        Ok(())
    }

    /// Releases everything and generates dedicated links for the whole
    /// path, all inside one window.
    fn synchronise(&mut self, i: usize, t: Time) -> Result<()> {
        self.release_all(i);
        let life = *self.vg.lifecycle();
        let required = self.runs[i].required as usize;
        let lens = self.runs[i].path.hop_lengths.clone();
        let segs: Vec<u32> = lens
            .iter()
            .flat_map(|&d| std::iter::repeat_n(d, required))
            .collect();
        let base = self.params.sync_seed;
        let (g, ready) = sample_batch_ready(
            life.p0,
            life.t_th,
            life.window,
            t,
            &segs,
            self.runs[i].sync_rng(base),
        );
        let done = t.saturating_add(g);
        let mut pair_f = vec![1.0f64; required];
        let mut worst_link = 1.0f64;
        for (k, r) in ready.iter().enumerate() {
            let f = fidelity_unchecked(self.params.p, g - r);
            pair_f[k % required] *= f;
            worst_link = worst_link.min(f);
        }
        let worst_pair = pair_f.iter().copied().fold(1.0, f64::min);
        let s = self.runs[i].d.source;
        self.log(t, i, "sync", s, || {
            format!("segments={} ready_in={g}", segs.len())
        });
        if self.runs[i].wait_since.is_none() {
            self.runs[i].wait_since = Some(t);
        }
        self.deliver(i, t, worst_pair, worst_link, done);
        Ok(())
    }

    /// Books the round's links and sends swap notifications back.
    fn deliver(&mut self, i: usize, t: Time, worst_pair: f64, worst_link: f64, ready: Time) {
        self.end_wait(i, ready.max(t));
        let run = &mut self.runs[i];
        let hops = run.path.hops() as u64;
        let req = run.required as u64;
        run.links += hops * req;
        run.swaps += hops.saturating_sub(1) * req;
        run.worst_pair = run.worst_pair.min(worst_pair);
        run.worst_link = run.worst_link.min(worst_link);
        let due = ready.saturating_add(run.path.physical_length());
        run.phase = Phase::Deliver { due };
        let e = run.d.destination;
        self.log(ready, i, "swap", e, || format!("notify_until={due}"));
        self.schedule(due, i);
    }

    fn finish_round(&mut self, i: usize, t: Time) -> Result<()> {
        let cap = self.vg.cap();
        let run = &mut self.runs[i];
        run.remaining -= run.required;
        run.rounds += 1;
        run.last_swaps = run.path.hops().saturating_sub(1) as u32;
        run.last_path = std::mem::take(&mut run.path);
        let s = run.d.source;
        if run.remaining == 0 {
            run.phase = Phase::Done { at: t };
            self.log(t, i, "done", s, String::new);
            return Ok(());
        }
        run.required = run.remaining.min(cap);
        run.restarted = false;
        run.path = RoutePath::start(s);
        run.phase = Phase::Discover { cur: s, due: t };
        self.discover_step(i, t)
    }

    // ------------------------------------------------------------------
    // on-demand model

    fn run_on_demand(mut self) -> Result<SimOutput> {
        let life = *self.vg.lifecycle();
        let cap = self.vg.cap();
        for i in 0..self.runs.len() {
            let d = self.runs[i].d;
            let path = shortest_physical_path(self.vg, d.source, d.destination);
            if path.hops() == 0 {
                return Err(Error::RoutingFailure(format!(
                    "no path for demand {}",
                    d.id
                )));
            }
            let mut t: Time = 0;
            while self.runs[i].remaining > 0 && t <= self.params.max_steps {
                let required = self.runs[i].remaining.min(cap);
                self.runs[i].required = required;
                self.runs[i].path = path.clone();
                let l = path.physical_length();
                let segs: Vec<u32> = path
                    .hop_lengths
                    .iter()
                    .flat_map(|&h| std::iter::repeat_n(h, required as usize))
                    .collect();
                let base = self.params.sync_seed;
                let start = t + l;
                let (g, ready) = sample_batch_ready(
                    life.p0,
                    life.t_th,
                    life.window,
                    start,
                    &segs,
                    self.runs[i].sync_rng(base),
                );
                let mut pair_f = vec![1.0f64; required as usize];
                let mut worst_link = 1.0f64;
                for (k, r) in ready.iter().enumerate() {
                    let f = fidelity_unchecked(self.params.p, g - r);
                    pair_f[k % required as usize] *= f;
                    worst_link = worst_link.min(f);
                }
                let run = &mut self.runs[i];
                let hops = path.hops() as u64;
                run.links += hops * required as u64;
                run.swaps += hops.saturating_sub(1) * required as u64;
                run.worst_pair = run
                    .worst_pair
                    .min(pair_f.iter().copied().fold(1.0, f64::min));
                run.worst_link = run.worst_link.min(worst_link);
                run.waited = run.waited.saturating_add(g);
                run.rounds += 1;
                run.remaining -= required;
                t = start.saturating_add(g).saturating_add(l);
            }
            let run = &mut self.runs[i];
            run.last_swaps = path.hops().saturating_sub(1) as u32;
            run.last_path = path;
            if run.remaining == 0 && t <= self.params.max_steps {
                run.phase = Phase::Done { at: t };
            }
        }
        Ok(self.finish())
    }
}
