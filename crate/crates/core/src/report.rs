//! Run reports and their serialization.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::adversary::Finding;
use crate::analytics::measure_broadcast;
use crate::chain::{BlockId, ForkStats};
use crate::config::SimConfig;
use crate::engine::{Counters, World};
use crate::error::Result;
use crate::sim::RunStats;
use crate::topology::RadiusEstimate;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologySummary {
    pub nodes: usize,
    pub edges: usize,
    pub mean_degree: f64,
    pub max_degree: usize,
    pub radius: u32,
    pub radius_exact: bool,
    pub radius_sources: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub id: BlockId,
    pub parent: BlockId,
    pub height: u64,
    pub miner: u32,
    pub mined_at_s: f64,
    pub chunk_count: u32,
    pub on_main_chain: bool,
    pub honest_nodes: usize,
    pub completed: usize,
    pub completion_fraction: f64,
    pub complete: bool,
    pub blacklisted_by: usize,
    pub p50_s: Option<f64>,
    pub p90_s: Option<f64>,
    /// Time until the last honest node completed.
    pub broadcast_s: Option<f64>,
}

/// Averages over complete main-chain blocks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BroadcastStats {
    pub complete_blocks: usize,
    pub mean_s: Option<f64>,
    pub mean_p50_s: Option<f64>,
    pub mean_p90_s: Option<f64>,
    pub max_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: SimConfig,
    pub topology: TopologySummary,
    pub model_prediction_s: f64,
    pub blocks: Vec<BlockSummary>,
    pub main_chain: Vec<BlockId>,
    pub fork: ForkStats,
    pub broadcast: BroadcastStats,
    pub counters: Counters,
    pub findings: Vec<Finding>,
    pub events: u64,
    pub clock_s: f64,
    pub horizon_reached: bool,
    /// Host time spent; kept out of serialized output so reports of equal
    /// runs are byte-identical.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl RunReport {
    pub(crate) fn build(
        world: &World,
        radius: RadiusEstimate,
        model_prediction_s: f64,
        stats: RunStats,
        wall_clock_s: f64,
    ) -> Self {
        let graph = world.graph();
        let chain = world.chain();
        let honest = world.honest_nodes();
        let fork = chain.fork_stats(&honest);
        let main_chain = chain.ancestry(fork.consensus_tip);
        let mut on_main = vec![false; chain.blocks().len()];
        for &b in &main_chain {
            on_main[b as usize] = true;
        }
        let mut blacklisted_by = vec![0usize; chain.blocks().len()];
        for &n in &honest {
            for &b in chain.view(n).blacklist() {
                blacklisted_by[b as usize] += 1;
            }
        }
        let blocks: Vec<BlockSummary> = chain.blocks()[1..]
            .iter()
            .map(|rec| {
                let s = measure_broadcast(rec.mined_at, world.completions(rec.id), honest.len());
                BlockSummary {
                    id: rec.id,
                    parent: rec.parent.unwrap_or(0),
                    height: rec.height,
                    miner: rec.miner,
                    mined_at_s: rec.mined_at,
                    chunk_count: rec.chunk_count(),
                    on_main_chain: on_main[rec.id as usize],
                    honest_nodes: s.honest_nodes,
                    completed: s.completed,
                    completion_fraction: s.completion_fraction,
                    complete: s.complete,
                    blacklisted_by: blacklisted_by[rec.id as usize],
                    p50_s: s.p50_s,
                    p90_s: s.p90_s,
                    broadcast_s: s.max_s,
                }
            })
            .collect();
        let done: Vec<&BlockSummary> = blocks
            .iter()
            .filter(|b| b.on_main_chain && b.complete)
            .collect();
        let mean = |f: fn(&BlockSummary) -> Option<f64>| -> Option<f64> {
            let vals: Vec<f64> = done.iter().filter_map(|b| f(b)).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let broadcast = BroadcastStats {
            complete_blocks: done.len(),
            mean_s: mean(|b| b.broadcast_s),
            mean_p50_s: mean(|b| b.p50_s),
            mean_p90_s: mean(|b| b.p90_s),
            max_s: done
                .iter()
                .filter_map(|b| b.broadcast_s)
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v)))),
        };
        RunReport {
            config: world.config().clone(),
            topology: TopologySummary {
                nodes: graph.node_count(),
                edges: graph.edge_count(),
                mean_degree: graph.mean_degree(),
                max_degree: graph.max_degree(),
                radius: radius.radius,
                radius_exact: radius.exact,
                radius_sources: radius.sources,
            },
            model_prediction_s,
            blocks,
            main_chain,
            fork,
            broadcast,
            counters: world.counters(),
            findings: Vec::new(),
            events: stats.events,
            clock_s: stats.clock.secs(),
            horizon_reached: stats.horizon_reached,
            wall_clock_s,
        }
    }

    pub fn block(&self, id: BlockId) -> Option<&BlockSummary> {
        id.checked_sub(1).and_then(|i| self.blocks.get(i as usize))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One CSV row per block.
    pub fn write_blocks_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for b in &self.blocks {
            w.serialize(b)?;
        }
        w.flush()?;
        Ok(())
    }
}
