//! Link latency and upload-bandwidth sharing.
//!
//! Every node owns one upload pipe. Concurrent outgoing transfers share it
//! equally (fluid processor sharing); the receiver's download side is not
//! modeled. Sharing is tracked with a per-sender virtual clock: while `k`
//! transfers are active each of them is served at `bandwidth / k`, so a
//! transfer of `s` bits started at virtual time `v` finishes when the
//! virtual clock reaches `v + s`. Only the earliest finish of a sender needs
//! a scheduled wake-up, which keeps the cost per transfer logarithmic.
//!
//! Each directed link carries two FIFO lanes, one for control traffic and
//! one for bulk payloads, and each lane has at most one message on the wire
//! at a time. Messages queued on the same lane are therefore sent back to
//! back in order, while different links (and the two lanes of one link)
//! progress concurrently.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};
use std::path::PathBuf;

use bitvec::vec::BitVec;
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{Graph, NodeId};

/// Link profile section of the configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    /// Upload bandwidth per node in bits/s (median when `bandwidth_log_sigma > 0`).
    pub bandwidth_bps: f64,
    /// Log-normal shape for per-node bandwidth; 0 gives a constant.
    pub bandwidth_log_sigma: f64,
    /// Constant one-way propagation delay per directed link.
    pub latency_s: f64,
    /// Uniform range replacing `latency_s` when set.
    pub latency_range_s: Option<[f64; 2]>,
    /// Bandwidth samples (bits/s, one per line) drawn uniformly per node.
    pub bandwidth_file: Option<PathBuf>,
    /// Latency samples (seconds, one per line) drawn uniformly per link.
    pub latency_file: Option<PathBuf>,
    pub tx_size_bytes: f64,
    pub per_tx_verify_s: f64,
    pub control_msg_bytes: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            bandwidth_bps: 50e6,
            bandwidth_log_sigma: 0.0,
            latency_s: 0.1,
            latency_range_s: None,
            bandwidth_file: None,
            latency_file: None,
            tx_size_bytes: 500.0,
            per_tx_verify_s: 0.25e-3,
            control_msg_bytes: 100.0,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_bps > 0.0) {
            return Err(Error::config("link.bandwidth_bps", "must be positive"));
        }
        if !(self.bandwidth_log_sigma >= 0.0) || !self.bandwidth_log_sigma.is_finite() {
            return Err(Error::config("link.bandwidth_log_sigma", "must be finite and >= 0"));
        }
        if !(self.latency_s >= 0.0) || !self.latency_s.is_finite() {
            return Err(Error::config("link.latency_s", "must be finite and >= 0"));
        }
        if let Some([lo, hi]) = self.latency_range_s {
            if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::config("link.latency_range_s", "need 0 <= lo <= hi"));
            }
        }
        if !(self.tx_size_bytes > 0.0) {
            return Err(Error::config("link.tx_size_bytes", "must be positive"));
        }
        if !(self.per_tx_verify_s >= 0.0) {
            return Err(Error::config("link.per_tx_verify_s", "must be >= 0"));
        }
        if !(self.control_msg_bytes >= 0.0) {
            return Err(Error::config("link.control_msg_bytes", "must be >= 0"));
        }
        Ok(())
    }

    pub fn mean_latency(&self) -> f64 {
        match self.latency_range_s {
            Some([lo, hi]) => 0.5 * (lo + hi),
            None => self.latency_s,
        }
    }

    /// Transactions in a payload of `bytes`.
    pub fn tx_count(&self, bytes: f64) -> u64 {
        (bytes / self.tx_size_bytes).ceil().max(0.0) as u64
    }
}

/// Seconds needed to verify `tx_count` transactions.
pub fn verification_delay(tx_count: u64, per_tx_s: f64) -> f64 {
    tx_count as f64 * per_tx_s
}

fn read_samples(path: &PathBuf, field: &str) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let samples: Vec<f64> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| Error::config(field, format!("{}: {e}", path.display())))
        })
        .collect::<Result<_>>()?;
    if samples.is_empty() || samples.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::config(field, "needs non-empty, finite, non-negative samples"));
    }
    Ok(samples)
}

/// Bandwidth and latency realized for one topology.
#[derive(Clone, Debug)]
pub struct LinkProfile {
    /// Upload bits/s per node.
    pub bandwidth: Vec<f64>,
    /// One-way delay per directed slot of the graph.
    pub latency: Vec<f64>,
}

impl LinkProfile {
    pub fn sample<R: Rng>(config: &LinkConfig, graph: &Graph, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let n = graph.node_count();
        let bandwidth = if let Some(path) = &config.bandwidth_file {
            let s = read_samples(path, "link.bandwidth_file")?;
            if s.iter().any(|&b| b <= 0.0) {
                return Err(Error::config("link.bandwidth_file", "bandwidth must be positive"));
            }
            (0..n).map(|_| s[rng.random_range(0..s.len())]).collect()
        } else if config.bandwidth_log_sigma > 0.0 {
            let dist = LogNormal::new(config.bandwidth_bps.ln(), config.bandwidth_log_sigma)
                .map_err(|e| Error::config("link.bandwidth_log_sigma", e.to_string()))?;
            (0..n).map(|_| dist.sample(rng)).collect()
        } else {
            vec![config.bandwidth_bps; n]
        };
        let slots = graph.slot_count();
        let latency = if let Some(path) = &config.latency_file {
            let s = read_samples(path, "link.latency_file")?;
            (0..slots).map(|_| s[rng.random_range(0..s.len())]).collect()
        } else if let Some([lo, hi]) = config.latency_range_s {
            if hi > lo {
                (0..slots).map(|_| rng.random_range(lo..hi)).collect()
            } else {
                vec![lo; slots]
            }
        } else {
            vec![config.latency_s; slots]
        };
        Ok(LinkProfile { bandwidth, latency })
    }

    pub fn uniform(graph: &Graph, bandwidth_bps: f64, latency_s: f64) -> Self {
        LinkProfile {
            bandwidth: vec![bandwidth_bps; graph.node_count()],
            latency: vec![latency_s; graph.slot_count()],
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct VirtualFinish(f64);

impl PartialEq for VirtualFinish {
    fn eq(&self, other: &Self) -> bool {
        self.0.total_cmp(&other.0) == Ordering::Equal
    }
}
impl Eq for VirtualFinish {}
impl PartialOrd for VirtualFinish {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for VirtualFinish {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Relative clock tolerance for treating a transfer as finished.
const TIME_SLACK: f64 = 1e-12;

/// Fair-share upload pipe of one sender.
#[derive(Clone, Debug)]
pub struct FluidUplink<K> {
    bandwidth: f64,
    vtime: f64,
    updated: f64,
    live: usize,
    seq: u64,
    heap: BinaryHeap<Reverse<(VirtualFinish, u64, K)>>,
}

impl<K: Copy + Ord> FluidUplink<K> {
    pub fn new(bandwidth: f64) -> Self {
        assert!(bandwidth > 0.0, "bandwidth must be positive");
        FluidUplink {
            bandwidth,
            vtime: 0.0,
            updated: 0.0,
            live: 0,
            seq: 0,
            heap: BinaryHeap::new(),
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Transfers currently sharing the pipe.
    pub fn active(&self) -> usize {
        self.live
    }

    fn advance(&mut self, now: f64) {
        let dt = now - self.updated;
        if self.live > 0 && dt > 0.0 && self.bandwidth.is_finite() {
            self.vtime += dt * self.bandwidth / self.live as f64;
        }
        self.updated = now;
    }

    fn reset_if_idle(&mut self) {
        if self.live == 0 {
            self.heap.clear();
            self.vtime = 0.0;
        }
    }

    /// Starts a transfer of `bits` identified by `key`.
    pub fn start(&mut self, now: f64, bits: f64, key: K) {
        self.advance(now);
        let seq = self.seq;
        self.seq += 1;
        self.heap
            .push(Reverse((VirtualFinish(self.vtime + bits.max(0.0)), seq, key)));
        self.live += 1;
    }

    /// Drops one active transfer whose heap entry `is_live` will now reject.
    pub fn release(&mut self, now: f64) {
        self.advance(now);
        self.live = self.live.saturating_sub(1);
        self.reset_if_idle();
    }

    fn purge(&mut self, is_live: &impl Fn(&K) -> bool) {
        while let Some(Reverse((_, _, key))) = self.heap.peek() {
            if is_live(key) {
                break;
            }
            self.heap.pop();
        }
    }

    /// Absolute time of the next completion under the current sharing.
    pub fn next_completion(&mut self, is_live: impl Fn(&K) -> bool) -> Option<f64> {
        self.purge(&is_live);
        let Reverse((VirtualFinish(vf), _, _)) = self.heap.peek()?;
        if !self.bandwidth.is_finite() {
            return Some(self.updated);
        }
        let remaining = (vf - self.vtime).max(0.0);
        Some(self.updated + remaining * self.live as f64 / self.bandwidth)
    }

    /// Removes every transfer finished by `now`, in finish order.
    pub fn complete_due(&mut self, now: f64, is_live: impl Fn(&K) -> bool, out: &mut Vec<K>) {
        self.advance(now);
        // Judged in time, not bits: at large clock values the rounding of
        // `now - updated` alone exceeds any fixed bit tolerance.
        let slack = TIME_SLACK * now.abs().max(1.0);
        loop {
            self.purge(&is_live);
            let Some(Reverse((VirtualFinish(vf), _, key))) = self.heap.peek().copied() else {
                break;
            };
            let left_s = (vf - self.vtime) * self.live as f64 / self.bandwidth;
            if self.bandwidth.is_finite() && left_s > slack {
                break;
            }
            self.heap.pop();
            self.live -= 1;
            out.push(key);
        }
        self.reset_if_idle();
    }
}

/// Traffic class of a message on a link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Lane {
    Control = 0,
    Bulk = 1,
}

/// A message handed to the receiver at `at`.
#[derive(Clone, Debug)]
pub struct Delivery<M> {
    pub at: f64,
    pub from: NodeId,
    pub to: NodeId,
    pub msg: M,
}

/// Request to (re)schedule a sender's wake-up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WakeUp {
    pub node: NodeId,
    pub at: f64,
    pub version: u32,
}

#[derive(Clone, Debug)]
struct LaneState<M> {
    queue: VecDeque<(M, f64)>,
    busy: bool,
    token: u32,
}

impl<M> Default for LaneState<M> {
    fn default() -> Self {
        LaneState {
            queue: VecDeque::new(),
            busy: false,
            token: 0,
        }
    }
}

/// Per-run network state: topology, link profile, open links and all
/// uplinks with their lanes.
pub struct Network<M> {
    graph: Graph,
    profile: LinkProfile,
    open: BitVec,
    uplinks: Vec<FluidUplink<(u32, u32)>>,
    versions: Vec<u32>,
    lanes: Vec<LaneState<M>>,
    scratch: Vec<(u32, u32)>,
    bits_sent: f64,
    bits_delivered: f64,
    messages_sent: u64,
}

impl<M> Network<M> {
    pub fn new(graph: Graph, profile: LinkProfile) -> Self {
        assert_eq!(profile.bandwidth.len(), graph.node_count());
        assert_eq!(profile.latency.len(), graph.slot_count());
        let slots = graph.slot_count();
        let uplinks = profile.bandwidth.iter().map(|&b| FluidUplink::new(b)).collect();
        let mut lanes = Vec::with_capacity(slots * 2);
        lanes.resize_with(slots * 2, LaneState::default);
        Network {
            open: BitVec::repeat(true, slots),
            uplinks,
            versions: vec![0; graph.node_count()],
            lanes,
            graph,
            profile,
            scratch: Vec::new(),
            bits_sent: 0.0,
            bits_delivered: 0.0,
            messages_sent: 0,
        }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn profile(&self) -> &LinkProfile {
        &self.profile
    }

    pub fn bandwidth(&self, node: NodeId) -> f64 {
        self.profile.bandwidth[node as usize]
    }

    pub fn latency(&self, from: NodeId, to: NodeId) -> Option<f64> {
        self.graph.slot(from, to).map(|s| self.profile.latency[s])
    }

    pub fn is_open(&self, from: NodeId, to: NodeId) -> bool {
        self.graph.slot(from, to).is_some_and(|s| self.open[s])
    }

    /// Neighbors still connected to `node`.
    pub fn open_neighbors(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.graph
            .slots(node)
            .filter(|&s| self.open[s])
            .map(|s| self.graph.slot_target(s))
    }

    /// Total bits whose transmission has started and finished, respectively.
    pub fn bits_sent(&self) -> f64 {
        self.bits_sent
    }

    pub fn bits_delivered(&self) -> f64 {
        self.bits_delivered
    }

    pub fn messages_sent(&self) -> u64 {
        self.messages_sent
    }

    /// Active transfers on a sender's uplink.
    pub fn active_transfers(&self, node: NodeId) -> usize {
        self.uplinks[node as usize].active()
    }

    fn wake(&mut self, node: NodeId) -> Option<WakeUp> {
        let lanes = &self.lanes;
        let at = self.uplinks[node as usize]
            .next_completion(|&(lane, token)| lanes[lane as usize].token == token)?;
        let v = &mut self.versions[node as usize];
        *v = v.wrapping_add(1);
        Some(WakeUp {
            node,
            at,
            version: *v,
        })
    }

    /// Queues `msg` of `bits` from `from` to `to`. Returns a wake-up to
    /// schedule when the sender's next completion moved. Messages on closed
    /// or missing links are dropped.
    pub fn begin_transfer(
        &mut self,
        now: f64,
        from: NodeId,
        to: NodeId,
        lane: Lane,
        msg: M,
        bits: f64,
    ) -> Option<WakeUp> {
        let slot = self.graph.slot(from, to)?;
        if !self.open[slot] {
            return None;
        }
        let idx = slot * 2 + lane as usize;
        let state = &mut self.lanes[idx];
        state.queue.push_back((msg, bits));
        self.messages_sent += 1;
        if state.busy {
            return None;
        }
        state.busy = true;
        let token = state.token;
        self.bits_sent += bits;
        self.uplinks[from as usize].start(now, bits, (idx as u32, token));
        self.wake(from)
    }

    /// Handles a sender wake-up: finishes due transfers, starts the next
    /// message on each freed lane and returns the new wake-up, if any.
    pub fn on_wake(
        &mut self,
        now: f64,
        node: NodeId,
        version: u32,
        deliveries: &mut Vec<Delivery<M>>,
    ) -> Option<WakeUp> {
        if self.versions[node as usize] != version {
            return None;
        }
        let mut done = std::mem::take(&mut self.scratch);
        done.clear();
        {
            let lanes = &self.lanes;
            self.uplinks[node as usize].complete_due(
                now,
                |&(lane, token)| lanes[lane as usize].token == token,
                &mut done,
            );
        }
        for &(idx, _) in &done {
            let slot = idx as usize / 2;
            let to = self.graph.slot_target(slot);
            let latency = self.profile.latency[slot];
            let state = &mut self.lanes[idx as usize];
            let (msg, bits) = state.queue.pop_front().expect("busy lane has a head");
            self.bits_delivered += bits;
            deliveries.push(Delivery {
                at: now + latency,
                from: node,
                to,
                msg,
            });
            if let Some(&(_, next_bits)) = state.queue.front() {
                let token = state.token;
                self.bits_sent += next_bits;
                self.uplinks[node as usize].start(now, next_bits, (idx, token));
            } else {
                state.busy = false;
            }
        }
        self.scratch = done;
        self.wake(node)
    }

    /// Closes the link between `a` and `b` in both directions, dropping
    /// queued and in-flight messages. Returns wake-ups for both senders.
    pub fn disconnect(&mut self, now: f64, a: NodeId, b: NodeId) -> [Option<WakeUp>; 2] {
        let mut out = [None, None];
        for (i, (from, to)) in [(a, b), (b, a)].into_iter().enumerate() {
            let Some(slot) = self.graph.slot(from, to) else {
                continue;
            };
            if !self.open[slot] {
                continue;
            }
            self.open.set(slot, false);
            let mut released = false;
            for lane in 0..2 {
                let state = &mut self.lanes[slot * 2 + lane];
                if state.busy {
                    state.busy = false;
                    state.token = state.token.wrapping_add(1);
                    self.uplinks[from as usize].release(now);
                    released = true;
                }
                state.queue.clear();
            }
            if released {
                out[i] = self.wake(from);
            }
        }
        out
    }
}
