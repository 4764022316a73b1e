//! Closed-form delay models next to simulated broadcast times, and the
//! chunk size at which per-hop transmission hides behind latency.

use blockcast::analytics::{
    optimal_chunk_size, pichu_chunk_term, pichu_header_term, predict_pichu, predict_traditional,
    relative_error, MetadataTerm,
};
use blockcast::experiment::model_for;
use blockcast::{run_experiment, Protocol, SimConfig};

fn main() -> blockcast::Result<()> {
    println!(
        "{:>6} {:>5} {:<12} {:>10} {:>10} {:>8}",
        "nodes", "MiB", "protocol", "sim s", "model s", "rel err"
    );
    for nodes in [256, 1024, 4096] {
        for mib in [1u64, 8, 64] {
            for protocol in [Protocol::Traditional, Protocol::Pichu] {
                let mut cfg = SimConfig::default();
                cfg.protocol = protocol;
                cfg.topology.nodes = nodes;
                (cfg.topology.degree_min, cfg.topology.degree_max) = match protocol {
                    Protocol::Traditional => (8, 12),
                    Protocol::Pichu => (5, 5),
                };
                cfg.block.size_bytes = mib << 20;
                let p = model_for(&cfg)?;
                let model = match protocol {
                    Protocol::Traditional => predict_traditional(&p),
                    Protocol::Pichu => predict_pichu(&p, MetadataTerm::PerChunk),
                };
                let sim = run_experiment(&cfg)?.blocks[0].broadcast_s.unwrap_or(f64::NAN);
                println!(
                    "{nodes:>6} {mib:>5} {:<12} {sim:>10.2} {model:>10.2} {:>8.3}",
                    protocol.name(),
                    relative_error(sim, model)
                );
            }
        }
    }

    let mut cfg = SimConfig::default();
    cfg.topology.nodes = 65536;
    cfg.topology.degree_min = 5;
    cfg.topology.degree_max = 5;
    cfg.block.size_bytes = 64 << 20;
    let p = model_for(&cfg)?;
    println!("\n65536 nodes, 64 MiB, radius {}:", p.radius);
    println!("  header flood   {:.2} s", pichu_header_term(&p));
    println!("  chunk stream   {:.2} s", pichu_chunk_term(&p, MetadataTerm::PerChunk));
    println!("  printed form   {:.2} s", predict_pichu(&p, MetadataTerm::Literal));
    let body = cfg.block.size_bytes - cfg.block.header_bytes;
    let best = optimal_chunk_size(p.latency_s, p.header_verify_s, p.bandwidth_bps, p.degree, body);
    println!("  chunk size hiding behind latency: {} KiB", best / 1024);
    Ok(())
}
