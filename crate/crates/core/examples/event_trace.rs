//! NDJSON event trace of a two-node pipelined broadcast, followed by the
//! block summary. Every line is one processed event.

use blockcast::experiment::run_traced;
use blockcast::SimConfig;

fn main() -> blockcast::Result<()> {
    let mut cfg = SimConfig::default();
    cfg.topology.nodes = 2;
    cfg.topology.degree_min = 3;
    cfg.topology.degree_max = 3;
    cfg.link.bandwidth_bps = 8e6;
    cfg.block.size_bytes = 1_000_000;
    cfg.mining.mine_times = vec![0.0];
    cfg.mining.miner_sequence = vec![0];

    let mut out = std::io::stdout().lock();
    let report = run_traced(&cfg, &mut out)?;
    let b = &report.blocks[0];
    eprintln!(
        "{} events; block of {} chunks reached the peer after {:.6} s",
        report.events,
        b.chunk_count,
        b.broadcast_s.unwrap_or(f64::NAN)
    );
    Ok(())
}
