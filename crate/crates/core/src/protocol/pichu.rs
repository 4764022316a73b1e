//! Header invitations with pipelined, per-chunk verified forwarding.
//!
//! A node pipelines at most one block at a time. Invitations for other
//! blocks wait in a queue and are re-checked against the longest chain
//! when the current block finishes. Chunks arrive in order from a single
//! source; the neighbors that announced the same header are kept as
//! failover candidates.

use smallvec::SmallVec;

use crate::chain::BlockId;
use crate::engine::{Job, Msg, Payload, World};
use crate::error::Result;
use crate::sim::{EventQueue, SimTime};
use crate::topology::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    VerifyingHeader,
    Streaming,
    /// Stalled: chunk `received` was asked from every neighbor.
    Probing,
}

#[derive(Clone, Debug)]
pub(crate) struct Reception {
    block: BlockId,
    generation: u32,
    /// Neighbors that announced this header (failover candidates).
    connections: SmallVec<[NodeId; 6]>,
    source: NodeId,
    /// Next chunk index expected from the source.
    received: u32,
    /// Chunks `0..verified` are verified and forwardable.
    verified: u32,
    /// Bumped on failover so verifications of dropped chunks are ignored.
    epoch: u32,
    /// Downstream nodes with the first index they asked for.
    requesters: SmallVec<[(NodeId, u32); 6]>,
    /// Neighbors waiting for one specific chunk after a stall.
    probe_waiters: SmallVec<[(NodeId, u32); 2]>,
    phase: Phase,
    deadline: f64,
    timer_armed: bool,
    forward_header: bool,
}

#[derive(Clone, Debug)]
struct Queued {
    block: BlockId,
    inviters: SmallVec<[NodeId; 4]>,
}

pub(crate) struct PichuState {
    current: Vec<Option<Reception>>,
    queued: Vec<Vec<Queued>>,
    /// Blocks a node rejected for invalid transactions and can prove so.
    proofs: Vec<SmallVec<[BlockId; 1]>>,
    next_generation: u32,
}

impl PichuState {
    pub fn new(nodes: usize) -> Self {
        PichuState {
            current: vec![None; nodes],
            queued: vec![Vec::new(); nodes],
            proofs: vec![SmallVec::new(); nodes],
            next_generation: 0,
        }
    }

    fn current(&mut self, node: NodeId, block: BlockId) -> Option<&mut Reception> {
        self.current[node as usize]
            .as_mut()
            .filter(|r| r.block == block)
    }

    /// Block currently pipelined by `node`.
    pub fn current_block(&self, node: NodeId) -> Option<BlockId> {
        self.current[node as usize].as_ref().map(|r| r.block)
    }
}

impl World {
    pub(crate) fn pichu_on_mined(
        &mut self,
        q: &mut EventQueue<Payload>,
        miner: NodeId,
        block: BlockId,
    ) -> Result<()> {
        let targets: SmallVec<[NodeId; 16]> = self.net.open_neighbors(miner).collect();
        for to in targets {
            self.send(q, miner, to, Msg::HeaderInv(block))?;
        }
        Ok(())
    }

    pub(crate) fn pichu_on_header(
        &mut self,
        q: &mut EventQueue<Payload>,
        node: NodeId,
        from: NodeId,
        block: BlockId,
    ) -> Result<()> {
        if self.chain.holds(node, block) || self.chain.is_blacklisted(node, block) {
            return Ok(());
        }
        if let Some(cur) = self.pichu.current[node as usize].as_mut() {
            if cur.block == block {
                if !cur.connections.contains(&from) {
                    cur.connections.push(from);
                }
            } else {
                let queue = &mut self.pichu.queued[node as usize];
                match queue.iter_mut().find(|e| e.block == block) {
                    Some(e) if !e.inviters.contains(&from) => e.inviters.push(from),
                    Some(_) => {}
                    None => queue.push(Queued {
                        block,
                        inviters: SmallVec::from_slice(&[from]),
                    }),
                }
            }
            return Ok(());
        }
        self.pichu_try_adopt(q, node, block, SmallVec::from_slice(&[from]), true)
            .map(|_| ())
    }

    /// Makes `block` (or its oldest missing ancestor) the current block if it
    /// would extend the node's longest chain.
    fn pichu_try_adopt(
        &mut self,
        q: &mut EventQueue<Payload>,
        node: NodeId,
        block: BlockId,
        inviters: SmallVec<[NodeId; 4]>,
        forward_header: bool,
    ) -> Result<bool> {
        let rec = self.chain.block(block);
        if !rec.header_valid {
            self.counters.invalid_headers += 1;
            return Ok(false);
        }
        if self.chain.holds(node, block)
            || self.chain.is_blacklisted(node, block)
            || rec.height <= self.chain.tip_height(node)
        {
            return Ok(false);
        }
        let missing = self
            .chain
            .first_missing_ancestor(node, block)
            .expect("block is not held");
        let mut cur = block;
        loop {
            if self.chain.is_blacklisted(node, cur) {
                self.chain.blacklist(node, block);
                return Ok(false);
            }
            if cur == missing {
                break;
            }
            cur = self.chain.block(cur).parent.expect("missing ancestor is below");
        }
        if missing != block {
            // fetch the gap first; inviters of a block hold its ancestors
            self.pichu.queued[node as usize].insert(
                0,
                Queued {
                    block,
                    inviters: inviters.clone(),
                },
            );
            self.pichu_start(q, node, missing, inviters, false)?;
        } else {
            self.pichu_start(q, node, block, inviters, forward_header)?;
        }
        Ok(true)
    }

    fn pichu_start(
        &mut self,
        q: &mut EventQueue<Payload>,
        node: NodeId,
        block: BlockId,
        inviters: SmallVec<[NodeId; 4]>,
        forward_header: bool,
    ) -> Result<()> {
        let generation = self.pichu.next_generation;
        self.pichu.next_generation = generation.wrapping_add(1);
        let source = inviters
            .iter()
            .copied()
            .find(|&n| self.net.is_open(node, n))
            .unwrap_or(inviters[0]);
        self.pichu.current[node as usize] = Some(Reception {
            block,
            generation,
            source,
            connections: inviters.into_iter().collect(),
            received: 0,
            verified: 0,
            epoch: 0,
            requesters: SmallVec::new(),
            probe_waiters: SmallVec::new(),
            phase: Phase::VerifyingHeader,
            deadline: f64::INFINITY,
            timer_armed: false,
            forward_header,
        });
        let delay = self.costs.header_verify_s;
        self.schedule_job(q, node, delay, Job::Header { block, generation })
    }

    pub(crate) fn pichu_on_header_verified(
        &mut self,
        q: &mut EventQueue<Payload>,
        node: NodeId,
        block: BlockId,
        generation: u32,
    ) -> Result<()> {
        let Some(cur) = self.pichu.current(node, block) else {
            return Ok(());
        };
        if cur.generation != generation {
            return Ok(());
        }
        cur.phase = Phase::Streaming;
        let source = cur.source;
        if cur.forward_header {
            let connections = cur.connections.clone();
            let targets: SmallVec<[NodeId; 16]> = self
                .net
                .open_neighbors(node)
                .filter(|n| !connections.contains(n))
                .collect();
            for to in targets {
                self.send(q, node, to, Msg::HeaderInv(block))?;
            }
        }
        if self.chain.block(block).chunk_count() == 0 {
            return self.pichu_complete(q, node);
        }
        self.pichu_request(q, node, source, 0, true)
    }

    /// Expected worst gap between chunks from `source`, before scaling.
    fn pichu_timeout(&self, source: NodeId, node: NodeId) -> f64 {
        let bw = self.net.bandwidth(source);
        let degree = self.net.graph().degree(source) as f64;
        let interval = degree * self.costs.chunk_wire_bits / bw + self.costs.chunk_verify_s;
        let latency = self.net.latency(source, node).unwrap_or(0.0);
        self.cfg.pichu.chunk_timeout_multiplier * interval + 2.0 * latency
    }

    fn pichu_request(
        &mut self,
        q: &mut EventQueue<Payload>,
        node: NodeId,
        source: NodeId,
        start: u32,
        first: bool,
    ) -> Result<()> {
        let mut wait = self.pichu_timeout(source, node);
        if first {
            wait *= self.cfg.pichu.first_chunk_timeout_factor;
        }
        let block = {
            let cur = self.pichu.current[node as usize].as_mut().expect("active");
            cur.deadline = q.now().secs() + wait;
            cur.block
        };
        self.send(q, node, source, Msg::ChunkReq { block, start })?;
        self.pichu_arm_timer(q, node)
    }

    fn pichu_arm_timer(&mut self, q: &mut EventQueue<Payload>, node: NodeId) -> Result<()> {
        let cur = self.pichu.current[node as usize].as_mut().expect("active");
        if cur.timer_armed || !cur.deadline.is_finite() {
            return Ok(());
        }
        cur.timer_armed = true;
        let at = cur.deadline.max(q.now().secs());
        q.push(
            SimTime::from_secs(at),
            node,
            Payload::Timer {
                generation: cur.generation,
            },
        )?;
        Ok(())
    }

    pub(crate) fn pichu_on_timer(
        &mut self,
        q: &mut EventQueue<Payload>,
        node: NodeId,
        generation: u32,
    ) -> Result<()> {
        let now = q.now().secs();
        let Some(cur) = self.pichu.current[node as usize].as_mut() else {
            return Ok(());
        };
        if cur.generation != generation {
            return Ok(());
        }
        cur.timer_armed = false;
        if now < cur.deadline {
            return self.pichu_arm_timer(q, node);
        }
        match cur.phase {
            Phase::VerifyingHeader => Ok(()),
            Phase::Streaming => {
                self.counters.stall_timeouts += 1;
                self.pichu_probe(q, node)
            }
            Phase::Probing => self.pichu_give_up(q, node),
        }
    }

    /// Asks every other neighbor for the missing chunk.
    fn pichu_probe(&mut self, q: &mut EventQueue<Payload>, node: NodeId) -> Result<()> {
        let (block, index, source) = {
            let cur = self.pichu.current[node as usize].as_mut().expect("active");
            cur.phase = Phase::Probing;
            (cur.block, cur.received, cur.source)
        };
        let second = 2.0 * self.pichu_timeout(source, node);
        let targets: SmallVec<[NodeId; 16]> = self
            .net
            .open_neighbors(node)
            .filter(|&n| n != source)
            .collect();
        for to in targets {
            self.send(q, node, to, Msg::ChunkProbe { block, index })?;
        }
        let cur = self.pichu.current[node as usize].as_mut().expect("active");
        cur.deadline = q.now().secs() + second;
        self.pichu_arm_timer(q, node)
    }

    /// Nobody supplied the missing chunk: the miner is presumed dead.
    fn pichu_give_up(&mut self, q: &mut EventQueue<Payload>, node: NodeId) -> Result<()> {
        let block = self.pichu.current_block(node).expect("active");
        self.counters.presumed_dead += 1;
        if self.cfg.pichu.partial_block_tolerant {
            self.counters.partial_accepts += 1;
            self.chain.accept_block(node, block);
        } else {
            self.chain.blacklist(node, block);
        }
        self.pichu_finish(q, node)
    }

    pub(crate) fn pichu_on_chunk_request(
        &mut self,
        q: &mut EventQueue<Payload>,
        node: NodeId,
        from: NodeId,
        block: BlockId,
        start: u32,
    ) -> Result<()> {
        let chunks = self.chain.block(block).chunk_count();
        if self.chain.holds(node, block) && !self.chain.is_blacklisted(node, block) {
            for index in start..chunks {
                self.send_chunk(q, node, from, block, index)?;
            }
            return Ok(());
        }
        if let Some(cur) = self.pichu.current(node, block) {
            let upto = cur.verified;
            match cur.requesters.iter_mut().find(|(n, _)| *n == from) {
                Some(entry) => entry.1 = start,
                None => cur.requesters.push((from, start)),
            }
            for index in start..upto {
                self.send_chunk(q, node, from, block, index)?;
            }
            return Ok(());
        }
        if self.pichu.proofs[node as usize].contains(&block) {
            self.send_proof(q, node, from, block)?;
        }
        Ok(())
    }

    pub(crate) fn pichu_on_probe(
        &mut self,
        q: &mut EventQueue<Payload>,
        node: NodeId,
        from: NodeId,
        block: BlockId,
        index: u32,
    ) -> Result<()> {
        if index >= self.chain.block(block).chunk_count() {
            return Ok(());
        }
        if self.chain.holds(node, block) && !self.chain.is_blacklisted(node, block) {
            return self.send_chunk(q, node, from, block, index);
        }
        if let Some(cur) = self.pichu.current(node, block) {
            if cur.verified > index {
                return self.send_chunk(q, node, from, block, index);
            }
            if !cur.probe_waiters.contains(&(from, index)) {
                cur.probe_waiters.push((from, index));
            }
            // our own source is asking for what it owes us: it has stalled
            if from == cur.source && cur.phase == Phase::Streaming && cur.received <= index {
                return self.pichu_failover(q, node);
            }
        }
        Ok(())
    }

    fn send_chunk(
        &mut self,
        q: &mut EventQueue<Payload>,
        from: NodeId,
        to: NodeId,
        block: BlockId,
        index: u32,
    ) -> Result<()> {
        self.send_data(
            q,
            from,
            to,
            Msg::Chunk {
                block,
                index,
                tampered: false,
            },
        )
    }

    fn send_proof(
        &mut self,
        q: &mut EventQueue<Payload>,
        from: NodeId,
        to: NodeId,
        block: BlockId,
    ) -> Result<()> {
        let Some(index) = self
            .chain
            .block(block)
            .chunk_flags
            .iter()
            .position(|f| !f.transactions_valid)
        else {
            return Ok(());
        };
        self.counters.proof_forwards += 1;
        self.send_chunk(q, from, to, block, index as u32)
    }

    fn is_proof(&self, block: BlockId, index: u32, tampered: bool) -> bool {
        let flags = self.chain.block(block).chunk_flags[index as usize];
        !tampered && flags.signature_valid && !flags.transactions_valid
    }

    #[allow(clippy::too_many_arguments)]
    fn pichu_accept_chunk(
        &mut self,
        q: &mut EventQueue<Payload>,
        node: NodeId,
        from: NodeId,
        block: BlockId,
        index: u32,
        tampered: bool,
        epoch: u32,
    ) -> Result<()> {
        let delay = self.costs.chunk_verify_s;
        self.schedule_job(
            q,
            node,
            delay,
            Job::Chunk {
                block,
                index,
                epoch,
                from,
                tampered,
            },
        )
    }

    pub(crate) fn pichu_on_chunk(
        &mut self,
        q: &mut EventQueue<Payload>,
        node: NodeId,
        from: NodeId,
        block: BlockId,
        index: u32,
        tampered: bool,
    ) -> Result<()> {
        let now = q.now().secs();
        let proof = self.is_proof(block, index, tampered);
        let Some(cur) = self.pichu.current(node, block) else {
            self.counters.duplicate_chunks += 1;
            return Ok(());
        };
        if cur.phase == Phase::VerifyingHeader {
            self.counters.duplicate_chunks += 1;
            return Ok(());
        }
        let epoch = cur.epoch;
        if from == cur.source {
            if index == cur.received {
                cur.received += 1;
                cur.phase = Phase::Streaming;
                let source = cur.source;
                let wait = self.pichu_timeout(source, node);
                let cur = self.pichu.current(node, block).expect("active");
                cur.deadline = now + wait;
                self.pichu_arm_timer(q, node)?;
                return self.pichu_accept_chunk(q, node, from, block, index, tampered, epoch);
            }
            if index < cur.received {
                self.counters.duplicate_chunks += 1;
                return Ok(());
            }
            if proof {
                return self.pichu_accept_chunk(q, node, from, block, index, tampered, epoch);
            }
            // skipped ahead: the source broke the in-order contract
            self.counters.protocol_violations += 1;
            self.disconnect(q, node, from)?;
            return self.pichu_failover(q, node);
        }
        if cur.phase == Phase::Probing && index == cur.received {
            let old = cur.source;
            cur.source = from;
            cur.received += 1;
            cur.phase = Phase::Streaming;
            let next = cur.received;
            self.counters.probe_switches += 1;
            self.disconnect(q, node, old)?;
            self.pichu_accept_chunk(q, node, from, block, index, tampered, epoch)?;
            if next < self.chain.block(block).chunk_count() {
                self.pichu_request(q, node, from, next, false)?;
            }
            return Ok(());
        }
        if proof {
            return self.pichu_accept_chunk(q, node, from, block, index, tampered, epoch);
        }
        self.counters.duplicate_chunks += 1;
        Ok(())
    }

    /// Switches to the best remaining announcer after the source failed.
    fn pichu_failover(&mut self, q: &mut EventQueue<Payload>, node: NodeId) -> Result<()> {
        self.counters.failovers += 1;
        let (candidates, verified, source) = {
            let cur = self.pichu.current[node as usize].as_mut().expect("active");
            cur.epoch += 1;
            cur.received = cur.verified;
            (cur.connections.clone(), cur.verified, cur.source)
        };
        let wire = self.costs.chunk_wire_bits;
        let best = candidates
            .iter()
            .copied()
            .filter(|&c| c != source && self.net.is_open(node, c))
            .map(|c| {
                let cost = self.net.latency(c, node).unwrap_or(f64::INFINITY)
                    + wire / self.net.bandwidth(c);
                (cost, c)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, c)| c);
        match best {
            Some(c) => {
                let cur = self.pichu.current[node as usize].as_mut().expect("active");
                cur.source = c;
                cur.phase = Phase::Streaming;
                self.pichu_request(q, node, c, verified, true)
            }
            None => self.pichu_probe(q, node),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn pichu_on_chunk_verified(
        &mut self,
        q: &mut EventQueue<Payload>,
        node: NodeId,
        from: NodeId,
        block: BlockId,
        index: u32,
        epoch: u32,
        tampered: bool,
    ) -> Result<()> {
        let flags = self.chain.block(block).chunk_flags[index as usize];
        let proof = self.is_proof(block, index, tampered);
        let Some(cur) = self.pichu.current(node, block) else {
            return Ok(());
        };
        if !proof && epoch != cur.epoch {
            return Ok(());
        }
        if tampered || !flags.signature_valid {
            self.counters.tampered_detected += 1;
            let was_source = from == cur.source;
            self.disconnect(q, node, from)?;
            if was_source {
                self.pichu_failover(q, node)?;
            }
            return Ok(());
        }
        if !flags.transactions_valid {
            // signed by the miner yet invalid: pass the evidence on once
            let requesters: SmallVec<[NodeId; 6]> = cur.requesters.iter().map(|r| r.0).collect();
            for to in requesters {
                self.counters.proof_forwards += 1;
                self.send_chunk(q, node, to, block, index)?;
            }
            self.counters.invalid_blocks_discarded += 1;
            self.chain.blacklist(node, block);
            self.pichu.proofs[node as usize].push(block);
            return self.pichu_finish(q, node);
        }
        if index != cur.verified {
            return Ok(());
        }
        cur.verified += 1;
        let mut targets: SmallVec<[NodeId; 8]> = cur
            .requesters
            .iter()
            .filter(|r| r.1 <= index)
            .map(|r| r.0)
            .collect();
        cur.probe_waiters.retain(|&mut (n, i)| {
            if i == index {
                targets.push(n);
                false
            } else {
                true
            }
        });
        let done = cur.verified == self.chain.block(block).chunk_count();
        for to in targets {
            self.send_chunk(q, node, to, block, index)?;
        }
        if done {
            self.pichu_complete(q, node)?;
        }
        Ok(())
    }

    fn pichu_complete(&mut self, q: &mut EventQueue<Payload>, node: NodeId) -> Result<()> {
        let block = self.pichu.current_block(node).expect("active");
        let now = q.now().secs();
        self.complete_block(node, block, now);
        self.pichu_finish(q, node)
    }

    /// Drops the current block and starts the next queued one that still
    /// extends the longest chain.
    fn pichu_finish(&mut self, q: &mut EventQueue<Payload>, node: NodeId) -> Result<()> {
        self.pichu.current[node as usize] = None;
        while !self.pichu.queued[node as usize].is_empty() {
            let next = self.pichu.queued[node as usize].remove(0);
            if self.pichu_try_adopt(q, node, next.block, next.inviters, true)? {
                break;
            }
        }
        Ok(())
    }
}
