//! Whole-block gossip against pipelined chunk forwarding on one network.
//!
//! ```text
//! cargo run --release --example compare_protocols -- [nodes] [block MiB]
//! ```

use blockcast::{run_experiment, Protocol, SimConfig};

fn main() -> blockcast::Result<()> {
    let mut args = std::env::args().skip(1);
    let nodes: usize = args.next().map_or(4096, |s| s.parse().expect("nodes"));
    let mib: u64 = args.next().map_or(16, |s| s.parse().expect("block MiB"));

    let mut cfg = SimConfig::default();
    cfg.topology.nodes = nodes;
    cfg.block.size_bytes = mib << 20;

    println!("{nodes} nodes, {mib} MiB block, {} Mbps", cfg.link.bandwidth_bps / 1e6);
    println!("{:<12} {:>7} {:>10} {:>10} {:>10} {:>10}", "protocol", "degree", "p50 s", "p90 s", "last s", "model s");
    let mut last = Vec::new();
    for (protocol, degree) in [(Protocol::Traditional, (8, 12)), (Protocol::Pichu, (5, 5))] {
        cfg.protocol = protocol;
        cfg.topology.degree_min = degree.0;
        cfg.topology.degree_max = degree.1;
        let r = run_experiment(&cfg)?;
        let b = &r.blocks[0];
        println!(
            "{:<12} {:>7} {:>10.2} {:>10.2} {:>10.2} {:>10.2}",
            protocol.name(),
            format!("{}-{}", degree.0, degree.1),
            b.p50_s.unwrap_or(f64::NAN),
            b.p90_s.unwrap_or(f64::NAN),
            b.broadcast_s.unwrap_or(f64::NAN),
            r.model_prediction_s,
        );
        last.push(b.broadcast_s.unwrap_or(f64::NAN));
    }
    println!("speedup {:.2}x", last[0] / last[1]);
    Ok(())
}
