//! Each malicious behavior on a 256-node network, with the postconditions
//! the run must satisfy.

use blockcast::adversary::{assert_scenario, AdversaryConfig, Behavior, NodeSelector, Scenario};
use blockcast::{run_experiment, SimConfig};

fn base() -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.topology.nodes = 256;
    cfg.topology.degree_min = 5;
    cfg.topology.degree_max = 5;
    cfg.mining.blocks_to_mine = 3;
    cfg.mining.mine_times = vec![0.0, 300.0, 600.0];
    cfg.mining.miner_sequence = vec![7, 8, 9];
    cfg
}

fn with(behavior: Behavior, node: u32) -> SimConfig {
    let mut cfg = base();
    cfg.adversaries = vec![AdversaryConfig {
        nodes: NodeSelector::Ids(vec![node]),
        behavior,
    }];
    cfg
}

fn main() -> blockcast::Result<()> {
    let baseline = run_experiment(&base())?;
    let baseline_s = baseline.broadcast.max_s.unwrap_or(0.0);
    let cases = [
        (
            "tampering relay",
            with(Behavior::TamperForwarder { probability: 1.0 }, 100),
            Scenario::Tamper,
        ),
        (
            "invalid transactions",
            with(Behavior::InvalidTxMiner { invalid_chunk: Some(5) }, 7),
            Scenario::InvalidTx { blocks: vec![1] },
        ),
        (
            "miner dies at chunk 3",
            with(Behavior::DyingMiner { die_at_chunk: 3 }, 7),
            Scenario::DyingMiner { blocks: vec![1] },
        ),
        (
            "5 s delaying relay",
            with(Behavior::DelayForwarder { delay_s: 5.0 }, 100),
            Scenario::Delay { baseline_s, bound_s: 15.0 },
        ),
    ];
    for (name, cfg, scenario) in cases {
        let report = run_experiment(&cfg)?;
        let c = &report.counters;
        println!(
            "{name}: tampered {} failovers {} stalls {} presumed dead {} proofs {}",
            c.tampered_detected, c.failovers, c.stall_timeouts, c.presumed_dead, c.proof_forwards
        );
        for f in assert_scenario(&report, &scenario) {
            println!("  [{}] {}: {}", if f.passed { "ok" } else { "FAILED" }, f.check, f.detail);
        }
    }
    Ok(())
}
