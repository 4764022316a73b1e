//! Per-run simulation state and event dispatch shared by both protocols.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{apply_behavior, assign_behaviors, Behavior, Outbound};
use crate::chain::{next_mining_event, Accepted, BlockId, BlockLayout, ChainState, MiningSchedule};
use crate::config::{Protocol, SimConfig};
use crate::error::Result;
use crate::net::{verification_delay, Delivery, Lane, LinkProfile, Network, WakeUp};
use crate::protocol::pichu::PichuState;
use crate::protocol::traditional::TraditionalState;
use crate::sim::{Event, EventKind, EventQueue, Handler, SimTime};
use crate::topology::{generate_topology, Graph, NodeId};

/// Per-chunk signature and index framing, in bits.
pub const CHUNK_METADATA_BITS: f64 = 520.0;

/// Independent random streams derived from the run seed.
pub(crate) mod stream {
    pub const TOPOLOGY: u64 = 0;
    pub const LINKS: u64 = 1;
    pub const MINING: u64 = 2;
    pub const ADVERSARY_SELECTION: u64 = 3;
    pub const ADVERSARY_ACTIONS: u64 = 4;
    pub const RADIUS: u64 = 5;
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Msg {
    BlockInv(BlockId),
    BlockReq(BlockId),
    BlockPayload { block: BlockId, tampered: bool },
    HeaderInv(BlockId),
    ChunkReq { block: BlockId, start: u32 },
    Chunk { block: BlockId, index: u32, tampered: bool },
    ChunkProbe { block: BlockId, index: u32 },
}

#[derive(Clone, Copy, Debug)]
pub enum Job {
    Block { block: BlockId, from: NodeId, tampered: bool },
    Header { block: BlockId, generation: u32 },
    Chunk {
        block: BlockId,
        index: u32,
        epoch: u32,
        from: NodeId,
        tampered: bool,
    },
}

#[derive(Clone, Copy, Debug)]
pub enum Payload {
    Mine,
    Wake { version: u32 },
    Deliver { from: NodeId, msg: Msg },
    Verified(Job),
    DelayedSend { to: NodeId, msg: Msg },
    Timer { generation: u32 },
}

impl EventKind for Payload {
    fn kind(&self) -> &'static str {
        match self {
            Payload::Mine => "mine",
            Payload::Wake { .. } => "wake",
            Payload::Deliver { msg, .. } => match msg {
                Msg::BlockInv(_) => "block_inv",
                Msg::BlockReq(_) => "block_req",
                Msg::BlockPayload { .. } => "block_payload",
                Msg::HeaderInv(_) => "header_inv",
                Msg::ChunkReq { .. } => "chunk_req",
                Msg::Chunk { .. } => "chunk",
                Msg::ChunkProbe { .. } => "chunk_probe",
            },
            Payload::Verified(_) => "verified",
            Payload::DelayedSend { .. } => "delayed_send",
            Payload::Timer { .. } => "timer",
        }
    }
}

/// Message and protocol counters reported per run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub messages_sent: u64,
    pub bits_sent: f64,
    pub bits_delivered: f64,
    pub invitations: u64,
    pub requests: u64,
    pub payload_transfers: u64,
    pub header_invitations: u64,
    pub chunk_requests: u64,
    pub chunk_transfers: u64,
    pub dropped_on_closed_link: u64,
    pub duplicate_chunks: u64,
    pub invalid_headers: u64,
    pub invalid_blocks_discarded: u64,
    pub tampered_detected: u64,
    pub protocol_violations: u64,
    pub disconnections: u64,
    pub failovers: u64,
    pub stall_timeouts: u64,
    pub probes_sent: u64,
    pub probe_switches: u64,
    pub presumed_dead: u64,
    pub partial_accepts: u64,
    pub proof_forwards: u64,
    pub blacklist_rejections: u64,
}

/// Sizes and delays derived once from the configuration.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Costs {
    pub control_bits: f64,
    pub header_bits: f64,
    pub payload_bits: f64,
    pub chunk_wire_bits: f64,
    pub block_verify_s: f64,
    pub chunk_verify_s: f64,
    pub header_verify_s: f64,
}

pub struct World {
    pub(crate) cfg: SimConfig,
    pub(crate) layout: BlockLayout,
    pub(crate) costs: Costs,
    pub(crate) net: Network<Msg>,
    pub(crate) chain: ChainState,
    pub(crate) roles: Vec<Option<Behavior>>,
    pub(crate) cpu_free: Vec<f64>,
    pub(crate) schedule: MiningSchedule,
    pub(crate) mining_rng: ChaCha8Rng,
    pub(crate) action_rng: ChaCha8Rng,
    pub(crate) mined: u64,
    /// Per block, completion instants of honest nodes in time order.
    pub(crate) completions: Vec<Vec<f64>>,
    pub(crate) counters: Counters,
    pub(crate) trad: TraditionalState,
    pub(crate) pichu: PichuState,
    deliveries: Vec<Delivery<Msg>>,
}

impl World {
    /// Builds the topology, link profile and adversary roles for `cfg`.
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let graph = build_graph(&cfg)?;
        let profile = LinkProfile::sample(&cfg.link, &graph, &mut rng_for(cfg.seed, stream::LINKS))?;
        Ok(Self::with_network(cfg, graph, profile))
    }

    /// Uses a prepared graph and link profile instead of sampling them.
    pub fn with_network(cfg: SimConfig, graph: Graph, profile: LinkProfile) -> Self {
        let n = graph.node_count();
        let layout = BlockLayout {
            size_bytes: cfg.block.size_bytes,
            header_bytes: cfg.block.header_bytes,
            chunk_bytes: cfg.pichu.chunk_bytes,
            tx_size_bytes: cfg.link.tx_size_bytes,
        };
        let per_tx = cfg.link.per_tx_verify_s;
        let costs = Costs {
            control_bits: cfg.link.control_msg_bytes * 8.0,
            header_bits: cfg.block.header_bytes as f64 * 8.0,
            payload_bits: cfg.block.size_bytes as f64 * 8.0,
            chunk_wire_bits: cfg.pichu.chunk_bytes as f64 * 8.0 + CHUNK_METADATA_BITS,
            block_verify_s: verification_delay(layout.tx_count(), per_tx),
            chunk_verify_s: verification_delay(layout.chunk_tx_count(), per_tx),
            header_verify_s: cfg.pichu.header_verify_s,
        };
        let roles = assign_behaviors(
            &cfg.adversaries,
            n,
            &mut rng_for(cfg.seed, stream::ADVERSARY_SELECTION),
        );
        World {
            schedule: MiningSchedule {
                block_interval_s: cfg.mining.block_interval_s,
                miner_sequence: cfg.mining.miner_sequence.clone(),
            },
            mining_rng: rng_for(cfg.seed, stream::MINING),
            action_rng: rng_for(cfg.seed, stream::ADVERSARY_ACTIONS),
            layout,
            costs,
            net: Network::new(graph, profile),
            chain: ChainState::new(n),
            roles,
            cpu_free: vec![0.0; n],
            mined: 0,
            completions: vec![Vec::new()],
            counters: Counters::default(),
            trad: TraditionalState::new(n),
            pichu: PichuState::new(n),
            deliveries: Vec::new(),
            cfg,
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn graph(&self) -> &Graph {
        self.net.graph()
    }

    pub fn chain(&self) -> &ChainState {
        &self.chain
    }

    pub fn node_count(&self) -> usize {
        self.chain.node_count()
    }

    pub fn is_honest(&self, node: NodeId) -> bool {
        self.roles[node as usize].is_none()
    }

    pub fn behavior(&self, node: NodeId) -> Option<&Behavior> {
        self.roles[node as usize].as_ref()
    }

    pub fn honest_nodes(&self) -> Vec<NodeId> {
        (0..self.node_count() as NodeId).filter(|&n| self.is_honest(n)).collect()
    }

    pub fn completions(&self, block: BlockId) -> &[f64] {
        &self.completions[block as usize]
    }

    pub fn counters(&self) -> Counters {
        let mut c = self.counters.clone();
        c.messages_sent = self.net.messages_sent();
        c.bits_sent = self.net.bits_sent();
        c.bits_delivered = self.net.bits_delivered();
        c.blacklist_rejections = self.chain.blacklist_rejections();
        c
    }

    /// Queues the first mining event.
    pub fn seed_events(&mut self, queue: &mut EventQueue<Payload>) -> Result<()> {
        if self.cfg.mining.blocks_to_mine > 0 {
            self.schedule_mining(queue, 0.0)?;
        }
        Ok(())
    }

    fn schedule_mining(&mut self, queue: &mut EventQueue<Payload>, now: f64) -> Result<()> {
        let n = self.node_count();
        let (mut at, miner) =
            next_mining_event(&mut self.mining_rng, &self.schedule, now, n, self.mined)?;
        if let Some(&t) = self.cfg.mining.mine_times.get(self.mined as usize) {
            at = t.max(now);
        }
        queue.push(SimTime::from_secs(at), miner, Payload::Mine)?;
        Ok(())
    }

    fn on_mine(&mut self, q: &mut EventQueue<Payload>, miner: NodeId, now: f64) -> Result<()> {
        let invalid_chunk = match self.roles[miner as usize] {
            Some(Behavior::InvalidTxMiner { invalid_chunk }) => Some(invalid_chunk.unwrap_or(u32::MAX)),
            _ => None,
        };
        let block = self.chain.mine_block(miner, now, &self.layout, invalid_chunk);
        self.completions.push(Vec::new());
        self.record_completion(miner, block, now);
        self.mined += 1;
        match self.cfg.protocol {
            Protocol::Traditional => self.trad_announce(q, miner, block, None)?,
            Protocol::Pichu => self.pichu_on_mined(q, miner, block)?,
        }
        if self.mined < self.cfg.mining.blocks_to_mine {
            self.schedule_mining(q, now)?;
        }
        Ok(())
    }

    pub(crate) fn record_completion(&mut self, node: NodeId, block: BlockId, now: f64) {
        if self.is_honest(node) {
            self.completions[block as usize].push(now);
        }
    }

    /// Stores a fully received block and records its completion.
    pub(crate) fn complete_block(&mut self, node: NodeId, block: BlockId, now: f64) -> Accepted {
        let outcome = self.chain.accept_block(node, block);
        if !matches!(outcome, Accepted::Blacklisted | Accepted::Duplicate) {
            self.record_completion(node, block, now);
        }
        outcome
    }

    fn push_wake(&mut self, q: &mut EventQueue<Payload>, wake: Option<WakeUp>) -> Result<()> {
        if let Some(w) = wake {
            q.push(
                SimTime::from_secs(w.at),
                w.node,
                Payload::Wake { version: w.version },
            )?;
        }
        Ok(())
    }

    fn wire(&self, msg: &Msg) -> (Lane, f64) {
        let c = &self.costs;
        match msg {
            Msg::BlockInv(_) | Msg::BlockReq(_) | Msg::ChunkReq { .. } | Msg::ChunkProbe { .. } => {
                (Lane::Control, c.control_bits)
            }
            Msg::HeaderInv(_) => (Lane::Control, c.header_bits),
            Msg::BlockPayload { .. } => (Lane::Bulk, c.payload_bits),
            Msg::Chunk { .. } => (Lane::Bulk, c.chunk_wire_bits),
        }
    }

    /// Puts `msg` on the link `from -> to` now.
    pub(crate) fn send(
        &mut self,
        q: &mut EventQueue<Payload>,
        from: NodeId,
        to: NodeId,
        msg: Msg,
    ) -> Result<()> {
        let (lane, bits) = self.wire(&msg);
        match msg {
            Msg::BlockInv(_) => self.counters.invitations += 1,
            Msg::BlockReq(_) => self.counters.requests += 1,
            Msg::BlockPayload { .. } => self.counters.payload_transfers += 1,
            Msg::HeaderInv(_) => self.counters.header_invitations += 1,
            Msg::ChunkReq { .. } => self.counters.chunk_requests += 1,
            Msg::Chunk { .. } => self.counters.chunk_transfers += 1,
            Msg::ChunkProbe { .. } => self.counters.probes_sent += 1,
        }
        let now = q.now().secs();
        let wake = self.net.begin_transfer(now, from, to, lane, msg, bits);
        self.push_wake(q, wake)
    }

    /// Sends block data after the sender's behavior had its say.
    pub(crate) fn send_data(
        &mut self,
        q: &mut EventQueue<Payload>,
        from: NodeId,
        to: NodeId,
        msg: Msg,
    ) -> Result<()> {
        let (block, chunk) = match msg {
            Msg::BlockPayload { block, .. } => (block, None),
            Msg::Chunk { block, index, .. } => (block, Some(index)),
            _ => unreachable!("only block data is subject to behaviors"),
        };
        let own = self.chain.block(block).miner == from;
        let outbound = apply_behavior(
            self.roles[from as usize].as_ref(),
            own,
            chunk,
            &mut self.action_rng,
        );
        let Outbound::Send { tampered, delay_s } = outbound else {
            return Ok(());
        };
        let msg = match msg {
            Msg::BlockPayload { block, tampered: t } => Msg::BlockPayload {
                block,
                tampered: t || tampered,
            },
            Msg::Chunk {
                block,
                index,
                tampered: t,
            } => Msg::Chunk {
                block,
                index,
                tampered: t || tampered,
            },
            other => other,
        };
        if delay_s > 0.0 {
            q.push_after(delay_s, from, Payload::DelayedSend { to, msg })?;
            Ok(())
        } else {
            self.send(q, from, to, msg)
        }
    }

    pub(crate) fn disconnect(&mut self, q: &mut EventQueue<Payload>, a: NodeId, b: NodeId) -> Result<()> {
        if !self.net.is_open(a, b) {
            return Ok(());
        }
        self.counters.disconnections += 1;
        let now = q.now().secs();
        for wake in self.net.disconnect(now, a, b) {
            self.push_wake(q, wake)?;
        }
        Ok(())
    }

    /// Runs `job` on the node's serial CPU after `delay` seconds of work.
    pub(crate) fn schedule_job(
        &mut self,
        q: &mut EventQueue<Payload>,
        node: NodeId,
        delay: f64,
        job: Job,
    ) -> Result<()> {
        let now = q.now().secs();
        let start = self.cpu_free[node as usize].max(now);
        let done = start + delay;
        self.cpu_free[node as usize] = done;
        q.push(SimTime::from_secs(done), node, Payload::Verified(job))?;
        Ok(())
    }
}

impl Handler<Payload> for World {
    fn handle(&mut self, event: Event<Payload>, q: &mut EventQueue<Payload>) -> Result<()> {
        let now = event.time.secs();
        let node = event.target;
        match event.payload {
            Payload::Mine => self.on_mine(q, node, now),
            Payload::Wake { version } => {
                let mut out = std::mem::take(&mut self.deliveries);
                let wake = self.net.on_wake(now, node, version, &mut out);
                for d in out.drain(..) {
                    q.push(
                        SimTime::from_secs(d.at),
                        d.to,
                        Payload::Deliver {
                            from: d.from,
                            msg: d.msg,
                        },
                    )?;
                }
                self.deliveries = out;
                self.push_wake(q, wake)
            }
            Payload::Deliver { from, msg } => {
                if !self.net.is_open(from, node) {
                    self.counters.dropped_on_closed_link += 1;
                    return Ok(());
                }
                match msg {
                    Msg::BlockInv(b) => self.trad_on_invitation(q, node, from, b),
                    Msg::BlockReq(b) => self.trad_on_request(q, node, from, b),
                    Msg::BlockPayload { block, tampered } => {
                        self.trad_on_payload(q, node, from, block, tampered)
                    }
                    Msg::HeaderInv(b) => self.pichu_on_header(q, node, from, b),
                    Msg::ChunkReq { block, start } => {
                        self.pichu_on_chunk_request(q, node, from, block, start)
                    }
                    Msg::Chunk {
                        block,
                        index,
                        tampered,
                    } => self.pichu_on_chunk(q, node, from, block, index, tampered),
                    Msg::ChunkProbe { block, index } => {
                        self.pichu_on_probe(q, node, from, block, index)
                    }
                }
            }
            Payload::Verified(job) => match job {
                Job::Block {
                    block,
                    from,
                    tampered,
                } => self.trad_on_verified(q, node, from, block, tampered),
                Job::Header { block, generation } => {
                    self.pichu_on_header_verified(q, node, block, generation)
                }
                Job::Chunk {
                    block,
                    index,
                    epoch,
                    from,
                    tampered,
                } => self.pichu_on_chunk_verified(q, node, from, block, index, epoch, tampered),
            },
            Payload::DelayedSend { to, msg } => self.send(q, node, to, msg),
            Payload::Timer { generation } => self.pichu_on_timer(q, node, generation),
        }
    }
}

pub fn build_graph(cfg: &SimConfig) -> Result<Graph> {
    let spec = cfg.topology.degree_spec()?;
    generate_topology(
        cfg.topology.nodes,
        spec,
        &mut rng_for(cfg.seed, stream::TOPOLOGY),
    )
}
