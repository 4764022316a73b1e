//! Whole-block gossip: invitation, request, payload, verify, forward.

use smallvec::SmallVec;

use crate::chain::{Accepted, BlockId};
use crate::engine::{Job, Msg, Payload, World};
use crate::error::Result;
use crate::sim::EventQueue;
use crate::topology::NodeId;

#[derive(Clone, Debug)]
pub(crate) struct Fetch {
    block: BlockId,
    source: NodeId,
    /// Other inviters, in arrival order.
    alternates: SmallVec<[NodeId; 4]>,
}

pub(crate) struct TraditionalState {
    fetches: Vec<SmallVec<[Fetch; 1]>>,
}

impl TraditionalState {
    pub fn new(nodes: usize) -> Self {
        TraditionalState {
            fetches: vec![SmallVec::new(); nodes],
        }
    }

    fn find(&mut self, node: NodeId, block: BlockId) -> Option<&mut Fetch> {
        self.fetches[node as usize].iter_mut().find(|f| f.block == block)
    }

    fn remove(&mut self, node: NodeId, block: BlockId) -> Option<Fetch> {
        let list = &mut self.fetches[node as usize];
        let pos = list.iter().position(|f| f.block == block)?;
        Some(list.remove(pos))
    }
}

impl World {
    /// Invites every open neighbor except `skip` to fetch `block`.
    pub(crate) fn trad_announce(
        &mut self,
        q: &mut EventQueue<Payload>,
        node: NodeId,
        block: BlockId,
        skip: Option<NodeId>,
    ) -> Result<()> {
        let targets: SmallVec<[NodeId; 16]> = self
            .net
            .open_neighbors(node)
            .filter(|&n| Some(n) != skip)
            .collect();
        for to in targets {
            self.send(q, node, to, Msg::BlockInv(block))?;
        }
        Ok(())
    }

    pub(crate) fn trad_on_invitation(
        &mut self,
        q: &mut EventQueue<Payload>,
        node: NodeId,
        from: NodeId,
        block: BlockId,
    ) -> Result<()> {
        if self.chain.holds(node, block) || self.chain.is_blacklisted(node, block) {
            return Ok(());
        }
        if let Some(fetch) = self.trad.find(node, block) {
            if fetch.source != from && !fetch.alternates.contains(&from) {
                fetch.alternates.push(from);
            }
            return Ok(());
        }
        self.trad.fetches[node as usize].push(Fetch {
            block,
            source: from,
            alternates: SmallVec::new(),
        });
        self.send(q, node, from, Msg::BlockReq(block))
    }

    pub(crate) fn trad_on_request(
        &mut self,
        q: &mut EventQueue<Payload>,
        node: NodeId,
        from: NodeId,
        block: BlockId,
    ) -> Result<()> {
        if !self.chain.holds(node, block) {
            return Ok(());
        }
        self.send_data(
            q,
            node,
            from,
            Msg::BlockPayload {
                block,
                tampered: false,
            },
        )
    }

    pub(crate) fn trad_on_payload(
        &mut self,
        q: &mut EventQueue<Payload>,
        node: NodeId,
        from: NodeId,
        block: BlockId,
        tampered: bool,
    ) -> Result<()> {
        if self.chain.holds(node, block) {
            return Ok(());
        }
        let delay = self.costs.block_verify_s;
        self.schedule_job(
            q,
            node,
            delay,
            Job::Block {
                block,
                from,
                tampered,
            },
        )
    }

    pub(crate) fn trad_on_verified(
        &mut self,
        q: &mut EventQueue<Payload>,
        node: NodeId,
        from: NodeId,
        block: BlockId,
        tampered: bool,
    ) -> Result<()> {
        if self.chain.holds(node, block) {
            return Ok(());
        }
        let now = q.now().secs();
        if tampered {
            self.counters.tampered_detected += 1;
            self.disconnect(q, node, from)?;
            // retry with the next inviter still connected
            let next = self.trad.find(node, block).and_then(|fetch| {
                while !fetch.alternates.is_empty() {
                    let alt = fetch.alternates.remove(0);
                    if self.net.is_open(node, alt) {
                        fetch.source = alt;
                        return Some(alt);
                    }
                }
                None
            });
            match next {
                Some(alt) => {
                    self.counters.failovers += 1;
                    self.send(q, node, alt, Msg::BlockReq(block))?;
                }
                None => {
                    self.trad.remove(node, block);
                }
            }
            return Ok(());
        }
        self.trad.remove(node, block);
        if !self.chain.block(block).is_valid() {
            self.counters.invalid_blocks_discarded += 1;
            self.chain.blacklist(node, block);
            return Ok(());
        }
        match self.complete_block(node, block, now) {
            Accepted::Blacklisted | Accepted::Duplicate => Ok(()),
            _ => self.trad_announce(q, node, block, Some(from)),
        }
    }
}
