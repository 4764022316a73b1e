//! Fork percentage against block size at a fixed ten-minute interval.
//!
//! ```text
//! cargo run --release --example fork_rate -- [nodes] [blocks]
//! ```

use blockcast::{run_experiment, Protocol, SimConfig};

fn main() -> blockcast::Result<()> {
    let mut args = std::env::args().skip(1);
    let nodes: usize = args.next().map_or(4096, |s| s.parse().expect("nodes"));
    let blocks: u64 = args.next().map_or(100, |s| s.parse().expect("blocks"));

    println!("{nodes} nodes, {blocks} blocks per cell, 600 s interval");
    println!("{:>5} {:>14} {:>10} {:>14} {:>10}", "MiB", "trad fork %", "trad s", "pichu fork %", "pichu s");
    for mib in [4u64, 16, 64] {
        let mut row = Vec::new();
        for (protocol, degree) in [(Protocol::Traditional, (8, 12)), (Protocol::Pichu, (5, 5))] {
            let mut cfg = SimConfig::default();
            cfg.protocol = protocol;
            cfg.topology.nodes = nodes;
            (cfg.topology.degree_min, cfg.topology.degree_max) = degree;
            cfg.block.size_bytes = mib << 20;
            cfg.mining.blocks_to_mine = blocks;
            let r = run_experiment(&cfg)?;
            row.push((r.fork.fork_rate_percent.unwrap_or(f64::NAN), r.broadcast.mean_s.unwrap_or(f64::NAN)));
        }
        println!("{mib:>5} {:>14.2} {:>10.1} {:>14.2} {:>10.1}", row[0].0, row[0].1, row[1].0, row[1].1);
    }
    Ok(())
}
