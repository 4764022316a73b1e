//! Mining, per-node chain views and fork accounting.

use bitvec::vec::BitVec;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::NodeId;

pub type BlockId = u32;

pub const GENESIS: BlockId = 0;

/// Validity of one chunk as produced by its miner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkFlags {
    pub signature_valid: bool,
    pub transactions_valid: bool,
}

impl ChunkFlags {
    pub const VALID: ChunkFlags = ChunkFlags {
        signature_valid: true,
        transactions_valid: true,
    };

    pub fn is_valid(self) -> bool {
        self.signature_valid && self.transactions_valid
    }
}

/// Sizes shared by every block of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockLayout {
    /// Whole block (header + body) in bytes.
    pub size_bytes: u64,
    pub header_bytes: u64,
    /// Chunk payload in bytes.
    pub chunk_bytes: u64,
    pub tx_size_bytes: f64,
}

impl BlockLayout {
    pub fn body_bytes(&self) -> u64 {
        self.size_bytes.saturating_sub(self.header_bytes)
    }

    pub fn chunk_count(&self) -> u32 {
        self.body_bytes().div_ceil(self.chunk_bytes) as u32
    }

    pub fn tx_count(&self) -> u64 {
        (self.body_bytes() as f64 / self.tx_size_bytes).ceil() as u64
    }

    /// Transactions carried by one full chunk.
    pub fn chunk_tx_count(&self) -> u64 {
        (self.chunk_bytes.min(self.body_bytes()) as f64 / self.tx_size_bytes).ceil() as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub id: BlockId,
    pub parent: Option<BlockId>,
    pub height: u64,
    pub miner: NodeId,
    pub mined_at: f64,
    pub size_bytes: u64,
    pub header_bytes: u64,
    pub body_bytes: u64,
    pub tx_count: u64,
    /// Consensus predicate on the header.
    pub header_valid: bool,
    pub chunk_flags: Vec<ChunkFlags>,
}

impl BlockRecord {
    fn genesis() -> Self {
        BlockRecord {
            id: GENESIS,
            parent: None,
            height: 0,
            miner: NodeId::MAX,
            mined_at: 0.0,
            size_bytes: 0,
            header_bytes: 0,
            body_bytes: 0,
            tx_count: 0,
            header_valid: true,
            chunk_flags: Vec::new(),
        }
    }

    pub fn chunk_count(&self) -> u32 {
        self.chunk_flags.len() as u32
    }

    pub fn is_valid(&self) -> bool {
        self.header_valid && self.chunk_flags.iter().all(|c| c.is_valid())
    }

    pub fn transactions_valid(&self, chunk: u32) -> bool {
        self.chunk_flags[chunk as usize].transactions_valid
    }
}

/// Network-wide mining clock.
#[derive(Clone, Debug, PartialEq)]
pub struct MiningSchedule {
    /// Mean seconds between blocks.
    pub block_interval_s: f64,
    /// Overrides uniform miner choice when non-empty (cycled).
    pub miner_sequence: Vec<NodeId>,
}

/// Time and miner of the next block: exponential inter-arrival with the
/// configured mean, miner uniform over `node_count` nodes unless a
/// sequence is configured.
pub fn next_mining_event<R: Rng>(
    rng: &mut R,
    schedule: &MiningSchedule,
    now: f64,
    node_count: usize,
    mined_so_far: u64,
) -> Result<(f64, NodeId)> {
    let rate = 1.0 / schedule.block_interval_s;
    let exp = Exp::new(rate).map_err(|e| Error::config("mining.block_interval_s", e.to_string()))?;
    let mut gap = exp.sample(rng);
    while gap <= 0.0 {
        gap = exp.sample(rng);
    }
    let miner = if schedule.miner_sequence.is_empty() {
        rng.random_range(0..node_count as NodeId)
    } else {
        let seq = &schedule.miner_sequence;
        seq[(mined_so_far % seq.len() as u64) as usize]
    };
    Ok((now + gap, miner))
}

/// What `accept_block` did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Accepted {
    /// Stored and became (or led to) the new tip.
    NewTip,
    /// Stored on a side branch or at equal height.
    Stored,
    /// Stored, but an ancestor is still missing.
    Orphaned,
    Duplicate,
    Blacklisted,
}

/// A node's local chain view.
#[derive(Clone, Debug, Default)]
pub struct ChainView {
    pub tip: BlockId,
    blacklist: Vec<BlockId>,
    orphans: Vec<BlockId>,
}

impl ChainView {
    pub fn is_blacklisted(&self, block: BlockId) -> bool {
        self.blacklist.contains(&block)
    }

    pub fn blacklist(&self) -> &[BlockId] {
        &self.blacklist
    }
}

/// Every mined block plus each node's view of them.
#[derive(Clone, Debug)]
pub struct ChainState {
    blocks: Vec<BlockRecord>,
    /// Per block: nodes that hold it fully.
    holders: Vec<BitVec>,
    /// Per block: nodes holding it together with all ancestors.
    linked: Vec<BitVec>,
    views: Vec<ChainView>,
    blacklist_rejections: u64,
}

impl ChainState {
    pub fn new(node_count: usize) -> Self {
        ChainState {
            blocks: vec![BlockRecord::genesis()],
            holders: vec![BitVec::repeat(true, node_count)],
            linked: vec![BitVec::repeat(true, node_count)],
            views: vec![ChainView::default(); node_count],
            blacklist_rejections: 0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.views.len()
    }

    pub fn block(&self, id: BlockId) -> &BlockRecord {
        &self.blocks[id as usize]
    }

    pub fn blocks(&self) -> &[BlockRecord] {
        &self.blocks
    }

    pub fn view(&self, node: NodeId) -> &ChainView {
        &self.views[node as usize]
    }

    pub fn tip(&self, node: NodeId) -> BlockId {
        self.views[node as usize].tip
    }

    pub fn tip_height(&self, node: NodeId) -> u64 {
        self.blocks[self.tip(node) as usize].height
    }

    pub fn holds(&self, node: NodeId, block: BlockId) -> bool {
        self.holders[block as usize][node as usize]
    }

    pub fn is_blacklisted(&self, node: NodeId, block: BlockId) -> bool {
        self.views[node as usize].is_blacklisted(block)
    }

    pub fn blacklist_rejections(&self) -> u64 {
        self.blacklist_rejections
    }

    /// Oldest ancestor of `block` (inclusive) that `node` does not hold,
    /// looking through held orphans down to the node's linked chain.
    pub fn first_missing_ancestor(&self, node: NodeId, block: BlockId) -> Option<BlockId> {
        let mut missing = None;
        let mut cur = Some(block);
        while let Some(b) = cur {
            if self.linked[b as usize][node as usize] {
                break;
            }
            if !self.holds(node, b) {
                missing = Some(b);
            }
            cur = self.blocks[b as usize].parent;
        }
        missing
    }

    /// Creates a block on the miner's tip; the miner holds it immediately.
    pub fn mine_block(
        &mut self,
        miner: NodeId,
        now: f64,
        layout: &BlockLayout,
        invalid_tx_chunk: Option<u32>,
    ) -> BlockId {
        let parent = self.tip(miner);
        let id = self.blocks.len() as BlockId;
        let chunks = layout.chunk_count();
        let mut chunk_flags = vec![ChunkFlags::VALID; chunks as usize];
        if let Some(bad) = invalid_tx_chunk {
            if chunks > 0 {
                chunk_flags[bad.min(chunks - 1) as usize].transactions_valid = false;
            }
        }
        self.blocks.push(BlockRecord {
            id,
            parent: Some(parent),
            height: self.blocks[parent as usize].height + 1,
            miner,
            mined_at: now,
            size_bytes: layout.size_bytes,
            header_bytes: layout.header_bytes,
            body_bytes: layout.body_bytes(),
            tx_count: layout.tx_count(),
            header_valid: true,
            chunk_flags,
        });
        let n = self.node_count();
        self.holders.push(BitVec::repeat(false, n));
        self.linked.push(BitVec::repeat(false, n));
        let accepted = self.accept_block(miner, id);
        debug_assert_eq!(accepted, Accepted::NewTip);
        id
    }

    /// Stores a fully received block at `node` and applies the longest-chain
    /// rule: the tip moves only to a strictly higher linked block, so the
    /// first block to arrive wins ties.
    pub fn accept_block(&mut self, node: NodeId, block: BlockId) -> Accepted {
        let n = node as usize;
        if self.views[n].is_blacklisted(block) {
            self.blacklist_rejections += 1;
            return Accepted::Blacklisted;
        }
        if self.holders[block as usize][n] {
            return Accepted::Duplicate;
        }
        self.holders[block as usize].set(n, true);
        let parent = self.blocks[block as usize].parent.expect("genesis is pre-held");
        if !self.linked[parent as usize][n] {
            self.views[n].orphans.push(block);
            return Accepted::Orphaned;
        }
        let old_tip = self.views[n].tip;
        self.link(n, block);
        // adopt orphans whose ancestry is now complete
        loop {
            let orphans = &self.views[n].orphans;
            let Some(pos) = orphans.iter().position(|&o| {
                let p = self.blocks[o as usize].parent.unwrap();
                self.linked[p as usize][n]
            }) else {
                break;
            };
            let o = self.views[n].orphans.swap_remove(pos);
            self.link(n, o);
        }
        if self.views[n].tip != old_tip {
            Accepted::NewTip
        } else {
            Accepted::Stored
        }
    }

    fn link(&mut self, n: usize, block: BlockId) {
        self.linked[block as usize].set(n, true);
        let tip = self.views[n].tip;
        if self.blocks[block as usize].height > self.blocks[tip as usize].height {
            self.views[n].tip = block;
        }
    }

    /// Adds `block` to the node's blacklist. Returns false if already listed.
    pub fn blacklist(&mut self, node: NodeId, block: BlockId) -> bool {
        let view = &mut self.views[node as usize];
        if view.is_blacklisted(block) {
            return false;
        }
        view.blacklist.push(block);
        debug_assert_ne!(view.tip, block, "a blacklisted header became a tip");
        true
    }

    /// Blocks from genesis (exclusive) to `tip` (inclusive).
    pub fn ancestry(&self, tip: BlockId) -> Vec<BlockId> {
        let mut out = Vec::new();
        let mut cur = tip;
        while cur != GENESIS {
            out.push(cur);
            cur = self.blocks[cur as usize].parent.unwrap();
        }
        out.reverse();
        out
    }

    /// Tip agreed at the end of a run: highest tip among the given nodes,
    /// then the tip held by most of them, then the earliest mined.
    pub fn consensus_tip(&self, nodes: impl Iterator<Item = NodeId>) -> BlockId {
        let mut counts: Vec<(BlockId, usize)> = Vec::new();
        for node in nodes {
            let tip = self.tip(node);
            match counts.iter_mut().find(|(b, _)| *b == tip) {
                Some((_, c)) => *c += 1,
                None => counts.push((tip, 1)),
            }
        }
        counts
            .into_iter()
            .max_by(|a, b| {
                let ha = self.blocks[a.0 as usize].height;
                let hb = self.blocks[b.0 as usize].height;
                ha.cmp(&hb).then(a.1.cmp(&b.1)).then(b.0.cmp(&a.0))
            })
            .map(|(b, _)| b)
            .unwrap_or(GENESIS)
    }

    /// Fork statistics against the consensus view of `nodes`. Blocks that
    /// any of `nodes` blacklisted are counted separately, not as stale.
    pub fn fork_stats(&self, nodes: &[NodeId]) -> ForkStats {
        let tip = self.consensus_tip(nodes.iter().copied());
        let main = self.ancestry(tip);
        let mut on_main = vec![false; self.blocks.len()];
        for &b in &main {
            on_main[b as usize] = true;
        }
        let mut blacklisted = vec![false; self.blocks.len()];
        for &node in nodes {
            for &b in self.view(node).blacklist() {
                blacklisted[b as usize] = true;
            }
        }
        let mined = self.blocks.len() as u64 - 1;
        let blacklisted_blocks = (1..self.blocks.len()).filter(|&b| blacklisted[b]).count() as u64;
        let stale = (1..self.blocks.len())
            .filter(|&b| !on_main[b] && !blacklisted[b])
            .count() as u64;
        ForkStats {
            blocks_mined: mined,
            main_chain_length: main.len() as u64,
            stale_blocks: stale,
            blacklisted_blocks,
            fork_rate_percent: fork_rate(stale, main.len() as u64),
            blacklist_rejections: self.blacklist_rejections,
            consensus_tip: tip,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForkStats {
    pub blocks_mined: u64,
    /// Main chain blocks, genesis excluded.
    pub main_chain_length: u64,
    pub stale_blocks: u64,
    pub blacklisted_blocks: u64,
    pub fork_rate_percent: Option<f64>,
    pub blacklist_rejections: u64,
    pub consensus_tip: BlockId,
}

/// `100 * stale / main`; undefined without main-chain blocks. May exceed 100.
pub fn fork_rate(stale: u64, main_chain: u64) -> Option<f64> {
    (main_chain > 0).then(|| 100.0 * stale as f64 / main_chain as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout() -> BlockLayout {
        BlockLayout {
            size_bytes: 1_000_000,
            header_bytes: 512,
            chunk_bytes: 131_072,
            tx_size_bytes: 500.0,
        }
    }

    #[test]
    fn mining_interval_mean_and_support() {
        let schedule = MiningSchedule {
            block_interval_s: 600.0,
            miner_sequence: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut now = 0.0;
        let mut sum = 0.0;
        let draws = 100_000;
        for i in 0..draws {
            let (t, miner) = next_mining_event(&mut rng, &schedule, now, 50, i).unwrap();
            assert!(t > now);
            assert!(miner < 50);
            sum += t - now;
            now = t;
        }
        let mean = sum / draws as f64;
        assert!((594.0..=606.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn mining_is_reproducible() {
        let schedule = MiningSchedule {
            block_interval_s: 10.0,
            miner_sequence: vec![],
        };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..20)
                .map(|i| next_mining_event(&mut rng, &schedule, 0.0, 100, i).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn miner_sequence_cycles() {
        let schedule = MiningSchedule {
            block_interval_s: 1.0,
            miner_sequence: vec![4, 2],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let miners: Vec<_> = (0..4)
            .map(|i| next_mining_event(&mut rng, &schedule, 0.0, 10, i).unwrap().1)
            .collect();
        assert_eq!(miners, vec![4, 2, 4, 2]);
    }

    #[test]
    fn first_block_is_height_one() {
        let mut chain = ChainState::new(3);
        let b = chain.mine_block(1, 5.0, &layout(), None);
        let rec = chain.block(b);
        assert_eq!(rec.height, 1);
        assert_eq!(rec.parent, Some(GENESIS));
        assert_eq!(rec.chunk_count(), 8);
        assert_eq!(rec.tx_count, 1999);
        assert_eq!(chain.tip(1), b);
        assert_eq!(chain.tip(0), GENESIS);
    }

    #[test]
    fn concurrent_miners_fork() {
        let mut chain = ChainState::new(4);
        let a = chain.mine_block(0, 1.0, &layout(), None);
        let b = chain.mine_block(3, 1.05, &layout(), None);
        assert_eq!(chain.block(a).parent, chain.block(b).parent);
        for node in [1, 2] {
            chain.accept_block(node, a);
            assert_eq!(chain.accept_block(node, b), Accepted::Stored);
        }
        let stats = chain.fork_stats(&[0, 1, 2, 3]);
        assert_eq!(stats.main_chain_length, 1);
        assert_eq!(stats.stale_blocks, 1);
        assert_eq!(stats.consensus_tip, a);
        assert_eq!(stats.fork_rate_percent, Some(100.0));
    }

    #[test]
    fn invalid_miner_flags_a_chunk() {
        let mut chain = ChainState::new(2);
        let b = chain.mine_block(0, 0.0, &layout(), Some(u32::MAX));
        let rec = chain.block(b);
        assert!(!rec.is_valid());
        assert!(!rec.transactions_valid(7));
        assert!(rec.chunk_flags[..7].iter().all(|c| c.is_valid()));
    }

    #[test]
    fn longest_chain_and_first_arrival() {
        let mut chain = ChainState::new(3);
        let a = chain.mine_block(0, 0.0, &layout(), None);
        let b = chain.mine_block(1, 0.0, &layout(), None);
        assert_eq!(chain.accept_block(2, a), Accepted::NewTip);
        assert_eq!(chain.accept_block(2, b), Accepted::Stored);
        assert_eq!(chain.tip(2), a);
        assert_eq!(chain.accept_block(2, a), Accepted::Duplicate);
    }

    #[test]
    fn blacklisted_header_is_rejected() {
        let mut chain = ChainState::new(2);
        let a = chain.mine_block(0, 0.0, &layout(), None);
        assert!(chain.blacklist(1, a));
        assert!(!chain.blacklist(1, a));
        assert_eq!(chain.accept_block(1, a), Accepted::Blacklisted);
        assert_eq!(chain.tip(1), GENESIS);
        assert_eq!(chain.blacklist_rejections(), 1);
    }

    #[test]
    fn orphans_link_when_parent_arrives() {
        let mut chain = ChainState::new(2);
        let a = chain.mine_block(0, 0.0, &layout(), None);
        let b = chain.mine_block(0, 1.0, &layout(), None);
        assert_eq!(chain.accept_block(1, b), Accepted::Orphaned);
        assert_eq!(chain.tip(1), GENESIS);
        assert_eq!(chain.first_missing_ancestor(1, b), Some(a));
        assert_eq!(chain.accept_block(1, a), Accepted::NewTip);
        assert_eq!(chain.tip(1), b);
    }

    #[test]
    fn fork_rate_definition() {
        assert_eq!(fork_rate(0, 100), Some(0.0));
        assert_eq!(fork_rate(55, 100), Some(55.0));
        assert_eq!(fork_rate(150, 100), Some(150.0));
        assert_eq!(fork_rate(3, 0), None);
    }

    #[test]
    fn heights_increase_along_parents() {
        let mut chain = ChainState::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..50 {
            let miner = rng.random_range(0..3);
            let b = chain.mine_block(miner, i as f64, &layout(), None);
            for node in 0..3 {
                if rng.random_bool(0.7) {
                    chain.accept_block(node, b);
                }
            }
        }
        for rec in &chain.blocks()[1..] {
            let parent = chain.block(rec.parent.unwrap());
            assert_eq!(rec.height, parent.height + 1);
        }
    }
}
