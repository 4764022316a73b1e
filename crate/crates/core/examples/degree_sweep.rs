//! Pipelined broadcast time against node degree. Fewer neighbors means
//! more hops but a shorter per-hop send queue, and the queue dominates
//! once blocks are large.

use blockcast::{run_experiment, Protocol, SimConfig};

fn main() -> blockcast::Result<()> {
    let mut cfg = SimConfig::default();
    cfg.protocol = Protocol::Pichu;
    cfg.topology.nodes = 4096;
    cfg.block.size_bytes = 64 << 20;
    println!("4096 nodes, 64 MiB block");
    println!("{:>6} {:>7} {:>10}", "degree", "radius", "last s");
    for degree in [3, 4, 5, 6, 8, 10, 15, 20, 25] {
        cfg.topology.degree_min = degree;
        cfg.topology.degree_max = degree;
        let r = run_experiment(&cfg)?;
        println!(
            "{degree:>6} {:>7} {:>10.2}",
            r.topology.radius,
            r.broadcast.mean_s.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
