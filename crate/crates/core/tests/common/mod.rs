//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use blockcast::engine::CHUNK_METADATA_BITS;
use blockcast::net::{verification_delay, Delivery, Lane, LinkProfile, Network, WakeUp};
use blockcast::topology::Graph;
use blockcast::{Protocol, SimConfig};

#[derive(Clone, Debug)]
pub struct Transfer {
    pub start: f64,
    pub bits: f64,
}

/// Piecewise-linear integration of equal sharing: between consecutive
/// arrivals and departures every active transfer drains at `bw / n`.
pub fn oracle(bw: f64, latency: f64, transfers: &[Transfer]) -> Vec<f64> {
    let n = transfers.len();
    let mut remaining: Vec<f64> = transfers.iter().map(|t| t.bits).collect();
    let mut done = vec![f64::NAN; n];
    let mut active: Vec<usize> = Vec::new();
    let mut pending: Vec<usize> = (0..n).collect();
    pending.sort_by(|&a, &b| transfers[a].start.total_cmp(&transfers[b].start));
    let mut pending = pending.into_iter().peekable();
    let mut t = 0.0;
    loop {
        if active.is_empty() {
            match pending.next() {
                Some(i) => {
                    t = transfers[i].start;
                    active.push(i);
                }
                None => break,
            }
            continue;
        }
        let rate = bw / active.len() as f64;
        let (k, finish) = active
            .iter()
            .enumerate()
            .map(|(k, &i)| (k, t + remaining[i] / rate))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let next_start = pending.peek().map(|&i| transfers[i].start);
        let until = match next_start {
            Some(s) if s < finish => s,
            _ => finish,
        };
        for &i in &active {
            remaining[i] -= rate * (until - t);
        }
        t = until;
        if until == finish {
            let i = active.swap_remove(k);
            done[i] = t + latency;
        } else {
            active.push(pending.next().unwrap());
        }
    }
    done
}

/// Runs the transfers from the hub of a star, one leaf per transfer, and
/// returns each delivery time.
pub fn simulate(bw: f64, latency: f64, transfers: &[Transfer]) -> Vec<f64> {
    let n = transfers.len() as u32;
    let edges: Vec<_> = (1..=n).map(|i| (0, i)).collect();
    let g = Graph::from_edges(n as usize + 1, &edges).unwrap();
    let profile = LinkProfile::uniform(&g, bw, latency);
    let mut net: Network<usize> = Network::new(g, profile);
    let mut order: Vec<usize> = (0..transfers.len()).collect();
    order.sort_by(|&a, &b| transfers[a].start.total_cmp(&transfers[b].start));
    let mut starts = order.into_iter().peekable();
    let mut wake: Option<WakeUp> = None;
    let mut out: Vec<Delivery<usize>> = Vec::new();
    loop {
        let next_start = starts.peek().map(|&i| transfers[i].start);
        let start_first = match (next_start, wake) {
            (Some(s), Some(w)) => s < w.at,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if start_first {
            let i = starts.next().unwrap();
            let s = transfers[i].start;
            let bits = transfers[i].bits;
            if let Some(w) = net.begin_transfer(s, 0, i as u32 + 1, Lane::Bulk, i, bits) {
                wake = Some(w);
            }
        } else if let Some(w) = wake {
            wake = net.on_wake(w.at, w.node, w.version, &mut out);
        } else {
            break;
        }
    }
    let mut done = vec![f64::NAN; transfers.len()];
    for d in out {
        done[d.msg] = d.at;
    }
    done
}

/// Two connected nodes, node 0 mines one 1 MB block at t = 0 over an
/// 8 Mbps, 0.1 s link with free control messages and no verification.
pub fn two_nodes(protocol: Protocol) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.protocol = protocol;
    cfg.topology.nodes = 2;
    cfg.topology.degree_min = 3;
    cfg.topology.degree_max = 3;
    cfg.link.bandwidth_bps = 8e6;
    cfg.link.latency_s = 0.1;
    cfg.link.per_tx_verify_s = 0.0;
    cfg.link.control_msg_bytes = 0.0;
    cfg.block.size_bytes = 1_000_000;
    cfg.mining.blocks_to_mine = 1;
    cfg.mining.miner_sequence = vec![0];
    cfg.mining.mine_times = vec![0.0];
    cfg
}

/// Hand trace of the pipelined two-node case: header out and verified,
/// chunk request back, then every padded chunk back to back.
pub fn pichu_two_node_expected(cfg: &SimConfig) -> f64 {
    let bw = cfg.link.bandwidth_bps;
    let lat = cfg.link.latency_s;
    let header_bits = cfg.block.header_bytes as f64 * 8.0;
    let body = (cfg.block.size_bytes - cfg.block.header_bytes) as f64;
    let chunks = (body / cfg.pichu.chunk_bytes as f64).ceil();
    let chunk_wire = cfg.pichu.chunk_bytes as f64 * 8.0 + CHUNK_METADATA_BITS;
    let header_leg = header_bits / bw + lat + cfg.pichu.header_verify_s;
    let request_leg = lat;
    let stream_leg = chunks * chunk_wire / bw + lat;
    header_leg + request_leg + stream_leg
}

/// 256 nodes of degree 5 mining three well separated blocks.
pub fn small_net(seed: u64) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.seed = seed;
    cfg.protocol = Protocol::Pichu;
    cfg.topology.nodes = 256;
    cfg.topology.degree_min = 5;
    cfg.topology.degree_max = 5;
    cfg.mining.blocks_to_mine = 3;
    cfg.mining.mine_times = vec![0.0, 300.0, 600.0];
    cfg
}

/// Failover deadline a node sets when requesting the first chunk from a
/// source of the given degree.
pub fn first_chunk_timeout(cfg: &SimConfig, degree: usize) -> f64 {
    let chunk_wire = cfg.pichu.chunk_bytes as f64 * 8.0 + CHUNK_METADATA_BITS;
    let verify = verification_delay(
        cfg.link.tx_count(cfg.pichu.chunk_bytes as f64),
        cfg.link.per_tx_verify_s,
    );
    let gap = degree as f64 * chunk_wire / cfg.link.bandwidth_bps + verify;
    (cfg.pichu.chunk_timeout_multiplier * gap + 2.0 * cfg.link.latency_s)
        * cfg.pichu.first_chunk_timeout_factor
}
