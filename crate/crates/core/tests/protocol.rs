//! End-to-end protocol behavior on small networks.

use blockcast::adversary::{
    assert_scenario, AdversaryConfig, Behavior, Finding, NodeSelector, Scenario,
};
use blockcast::engine::build_graph;
use blockcast::{run_experiment, Protocol, RunReport, SimConfig};
use common::{first_chunk_timeout, pichu_two_node_expected, small_net, two_nodes};
use proptest::prelude::*;

mod common;

fn only_block(report: &RunReport) -> f64 {
    assert_eq!(report.blocks.len(), 1);
    report.blocks[0].broadcast_s.expect("block completes")
}

#[test]
fn traditional_two_node_trace() {
    let report = run_experiment(&two_nodes(Protocol::Traditional)).unwrap();
    // invite 0.1 s, request 0.1 s, 8e6 bits at 8 Mbps plus 0.1 s.
    assert!((only_block(&report) - 1.3).abs() <= 1e-3);
}

#[test]
fn pichu_two_node_trace() {
    let cfg = two_nodes(Protocol::Pichu);
    let report = run_experiment(&cfg).unwrap();
    let want = pichu_two_node_expected(&cfg);
    assert!((only_block(&report) - want).abs() <= 1e-3, "{want}");
    assert!((want - 1.350608).abs() < 1e-9);
}

#[test]
fn single_node_network_completes_trivially() {
    for protocol in [Protocol::Traditional, Protocol::Pichu] {
        let mut cfg = SimConfig::default();
        cfg.protocol = protocol;
        cfg.topology.nodes = 1;
        cfg.topology.degree_min = 3;
        cfg.topology.degree_max = 3;
        cfg.mining.blocks_to_mine = 3;
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.blocks.len(), 3);
        assert_eq!(report.fork.stale_blocks, 0);
        for b in &report.blocks {
            assert_eq!(b.broadcast_s, Some(0.0));
        }
    }
}

#[test]
fn pipelining_beats_whole_block_relay_on_a_path() {
    let mut cfg = SimConfig::default();
    cfg.topology.nodes = 64;
    cfg.topology.degree_min = 4;
    cfg.topology.degree_max = 4;
    cfg.block.size_bytes = 8 << 20;
    cfg.mining.blocks_to_mine = 2;
    cfg.protocol = Protocol::Traditional;
    let trad = run_experiment(&cfg).unwrap();
    cfg.protocol = Protocol::Pichu;
    let pichu = run_experiment(&cfg).unwrap();
    assert!(pichu.broadcast.mean_s.unwrap() * 3.0 < trad.broadcast.mean_s.unwrap());
}

fn all_passed(findings: &[Finding]) -> bool {
    !findings.is_empty() && findings.iter().all(|f| f.passed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn same_seed_same_report(
        seed in any::<u64>(),
        nodes in 8usize..80,
        pichu in any::<bool>(),
        mib in 1u64..4,
        blocks in 1u64..4,
    ) {
        let mut cfg = SimConfig::default();
        cfg.seed = seed;
        cfg.protocol = if pichu { Protocol::Pichu } else { Protocol::Traditional };
        cfg.topology.nodes = nodes;
        cfg.topology.degree_min = 3;
        cfg.topology.degree_max = 6;
        cfg.link.bandwidth_log_sigma = 0.4;
        cfg.link.latency_range_s = Some([0.02, 0.2]);
        cfg.block.size_bytes = mib << 20;
        cfg.mining.block_interval_s = 5.0;
        cfg.mining.blocks_to_mine = blocks;
        let a = run_experiment(&cfg).unwrap().to_json().unwrap();
        let b = run_experiment(&cfg).unwrap().to_json().unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn single_tamperer_cannot_stop_delivery(
        seed in any::<u64>(),
        who in 0u32..256,
        pichu in any::<bool>(),
    ) {
        let mut cfg = small_net(seed);
        if !pichu {
            cfg.protocol = Protocol::Traditional;
        }
        prop_assume!(build_graph(&cfg).unwrap().is_biconnected());
        cfg.mining.miner_sequence = (0..256).filter(|&n| n != who).take(3).collect();
        cfg.adversaries = vec![AdversaryConfig {
            nodes: NodeSelector::Ids(vec![who]),
            behavior: Behavior::TamperForwarder { probability: 1.0 },
        }];
        let report = run_experiment(&cfg).unwrap();
        let findings = assert_scenario(&report, &Scenario::Tamper);
        prop_assert!(all_passed(&findings), "{:?}", findings);
        prop_assert_eq!(report.main_chain.len(), 3);
    }

    #[test]
    fn invalid_transactions_never_reach_the_chain(
        seed in any::<u64>(),
        miner in 0u32..256,
        chunk in prop::option::of(0u32..8),
    ) {
        let mut cfg = small_net(seed);
        let others: Vec<u32> = (0..256).filter(|&n| n != miner).take(2).collect();
        cfg.mining.miner_sequence = vec![miner, others[0], others[1]];
        cfg.adversaries = vec![AdversaryConfig {
            nodes: NodeSelector::Ids(vec![miner]),
            behavior: Behavior::InvalidTxMiner { invalid_chunk: chunk },
        }];
        let report = run_experiment(&cfg).unwrap();
        let findings = assert_scenario(&report, &Scenario::InvalidTx { blocks: vec![1] });
        prop_assert!(all_passed(&findings), "{:?}", findings);
        prop_assert_eq!(report.block(1).unwrap().completed, 0);
    }

    #[test]
    fn dying_miner_block_is_abandoned(
        seed in any::<u64>(),
        miner in 0u32..256,
        die_at in 0u32..8,
    ) {
        let mut cfg = small_net(seed);
        let others: Vec<u32> = (0..256).filter(|&n| n != miner).take(2).collect();
        cfg.mining.miner_sequence = vec![miner, others[0], others[1]];
        cfg.adversaries = vec![AdversaryConfig {
            nodes: NodeSelector::Ids(vec![miner]),
            behavior: Behavior::DyingMiner { die_at_chunk: die_at },
        }];
        let report = run_experiment(&cfg).unwrap();
        let findings = assert_scenario(&report, &Scenario::DyingMiner { blocks: vec![1] });
        prop_assert!(all_passed(&findings), "{:?}", findings);
        let rest = assert_scenario(&report, &Scenario::Honest);
        prop_assert!(all_passed(&rest), "{:?}", rest);
    }

    #[test]
    fn delayer_inflation_is_bounded(seed in any::<u64>(), pick in 0usize..5) {
        let delay = 5.0;
        let mut cfg = small_net(seed);
        cfg.mining.miner_sequence = vec![0];
        let baseline = run_experiment(&cfg).unwrap().broadcast.max_s.unwrap();
        let graph = build_graph(&cfg).unwrap();
        let delayer = graph.neighbors(0)[pick % graph.degree(0)];
        cfg.adversaries = vec![AdversaryConfig {
            nodes: NodeSelector::Ids(vec![delayer]),
            behavior: Behavior::DelayForwarder { delay_s: delay },
        }];
        let report = run_experiment(&cfg).unwrap();
        let findings = assert_scenario(&report, &Scenario::Delay {
            baseline_s: baseline,
            bound_s: delay + first_chunk_timeout(&cfg, graph.degree(delayer)),
        });
        prop_assert!(all_passed(&findings), "{:?}", findings);
    }
}
