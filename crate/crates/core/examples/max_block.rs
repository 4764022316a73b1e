//! Largest block size that keeps the fork rate under 100 % at several
//! mining intervals, found by doubling and bisection.

use blockcast::experiment::SearchOptions;
use blockcast::{max_block_search, Protocol, SimConfig};

fn main() -> blockcast::Result<()> {
    let opts = SearchOptions {
        start_bytes: 16 * 1024,
        rel_tolerance: 0.1,
        ..SearchOptions::default()
    };
    println!("1024 nodes at 1 Mbps, 16 blocks per probe");
    for interval in [60.0, 150.0, 600.0] {
        let mut line = format!("interval {interval:>5} s:");
        for (protocol, degree) in [(Protocol::Traditional, (8, 12)), (Protocol::Pichu, (5, 5))] {
            let mut cfg = SimConfig::default();
            cfg.protocol = protocol;
            cfg.topology.nodes = 1024;
            (cfg.topology.degree_min, cfg.topology.degree_max) = degree;
            cfg.link.bandwidth_bps = 1e6;
            cfg.mining.block_interval_s = interval;
            cfg.mining.blocks_to_mine = 16;
            let r = max_block_search(&cfg, &opts)?;
            let kib = r.max_block_bytes.map_or("none".into(), |b| format!("{} KiB", b / 1024));
            line += &format!("  {} {kib} ({} probes)", protocol.name(), r.probes.len());
        }
        println!("{line}");
    }
    Ok(())
}
