//! Reference network profiles under whole-block gossip, compared with
//! their published broadcast times and fork rates.
//!
//! ```text
//! cargo run --release --example calibration -- [blocks]
//! ```

use blockcast::experiment::{calibrate, calibration_profile, CALIBRATION_PROFILES};

fn main() -> blockcast::Result<()> {
    let blocks: u64 = std::env::args().nth(1).map_or(200, |s| s.parse().expect("blocks"));
    for name in CALIBRATION_PROFILES {
        let mut p = calibration_profile(name).expect("known profile");
        p.config.mining.blocks_to_mine = blocks;
        let c = &p.config;
        println!(
            "{name}: {} nodes, {} B blocks every {} s, median uplink {} Mbps",
            c.topology.nodes,
            c.block.size_bytes,
            c.mining.block_interval_s,
            c.link.bandwidth_bps / 1e6
        );
        let r = calibrate(&p)?;
        println!(
            "  broadcast {:.2} s (reference {:.2}), fork {:.2}% (reference {:.2}%) over {} blocks",
            r.simulated_broadcast_s.unwrap_or(f64::NAN),
            r.reference_broadcast_s,
            r.simulated_fork_percent.unwrap_or(f64::NAN),
            r.reference_fork_percent,
            r.blocks
        );
    }
    Ok(())
}
