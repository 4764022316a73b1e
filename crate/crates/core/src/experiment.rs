//! Experiment runners: single runs, grids, max-block search, calibration.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analytics::{predict_pichu, predict_traditional, relative_error, MetadataTerm, ModelParams};
use crate::config::{Protocol, SimConfig};
use crate::engine::{build_graph, rng_for, stream, Payload, World};
use crate::error::{Error, Result};
use crate::net::{verification_delay, LinkProfile};
use crate::report::RunReport;
use crate::sim::{run_until_idle, EventQueue, RunLimits, TraceWriter};
use crate::topology::{radius, Graph};

/// Model inputs matching a configuration and its realized topology.
pub fn model_params(cfg: &SimConfig, graph: &Graph, radius_hops: u32) -> ModelParams {
    let block_bits = cfg.block.size_bytes as f64 * 8.0;
    let header_bits = cfg.block.header_bytes as f64 * 8.0;
    let chunk_bits = cfg.pichu.chunk_bytes as f64 * 8.0;
    let body_bytes = (cfg.block.size_bytes - cfg.block.header_bytes) as f64;
    ModelParams {
        radius: radius_hops as f64,
        degree: graph.mean_degree(),
        block_bits,
        header_bits,
        chunk_bits,
        chunk_count: ModelParams::chunks_for(block_bits, header_bits, chunk_bits),
        bandwidth_bps: cfg.link.bandwidth_bps,
        latency_s: cfg.link.mean_latency(),
        verify_s: verification_delay(cfg.link.tx_count(body_bytes), cfg.link.per_tx_verify_s),
        header_verify_s: cfg.pichu.header_verify_s,
    }
}

/// Model inputs for `cfg`, building its topology and radius estimate.
pub fn model_for(cfg: &SimConfig) -> Result<ModelParams> {
    cfg.validate()?;
    let graph = build_graph(cfg)?;
    let r = radius(
        &graph,
        cfg.topology.exact_radius_threshold,
        cfg.topology.radius_samples,
        &mut rng_for(cfg.seed, stream::RADIUS),
    )?;
    Ok(model_params(cfg, &graph, r.radius))
}

pub fn predict(cfg: &SimConfig, params: &ModelParams) -> f64 {
    match cfg.protocol {
        Protocol::Traditional => predict_traditional(params),
        Protocol::Pichu => predict_pichu(params, MetadataTerm::PerChunk),
    }
}

/// Builds the network for `cfg`, mines and broadcasts until idle.
pub fn run_experiment(cfg: &SimConfig) -> Result<RunReport> {
    run_inner(cfg, None)
}

/// As [`run_experiment`], also writing an NDJSON event trace.
pub fn run_traced(cfg: &SimConfig, trace: &mut dyn Write) -> Result<RunReport> {
    let mut writer = TraceWriter::new(trace);
    run_inner(cfg, Some(&mut writer))
}

fn run_inner(cfg: &SimConfig, trace: Option<&mut TraceWriter<'_>>) -> Result<RunReport> {
    let started = Instant::now();
    cfg.validate()?;
    let graph = build_graph(cfg)?;
    let profile = LinkProfile::sample(&cfg.link, &graph, &mut rng_for(cfg.seed, stream::LINKS))?;
    let r = radius(
        &graph,
        cfg.topology.exact_radius_threshold,
        cfg.topology.radius_samples,
        &mut rng_for(cfg.seed, stream::RADIUS),
    )?;
    let prediction = predict(cfg, &model_params(cfg, &graph, r.radius));
    let mut world = World::with_network(cfg.clone(), graph, profile);
    let mut queue = EventQueue::<Payload>::new();
    world.seed_events(&mut queue)?;
    let limits = RunLimits {
        max_events: cfg.limits.max_events,
        horizon: cfg.limits.horizon_s,
    };
    let stats = run_until_idle(&mut queue, &mut world, limits, trace)?;
    Ok(RunReport::build(
        &world,
        r,
        prediction,
        stats,
        started.elapsed().as_secs_f64(),
    ))
}

/// Axes of a sweep; an empty axis keeps the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub protocols: Vec<Protocol>,
    pub nodes: Vec<usize>,
    pub block_bytes: Vec<u64>,
    /// `[min, max]` degree ranges.
    pub degrees: Vec<[usize; 2]>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub base: SimConfig,
    pub grid: Grid,
    /// Worker threads; cells are independent.
    pub threads: usize,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Every configuration of the grid, in a fixed order.
    pub fn cells(&self) -> Vec<SimConfig> {
        fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
            if values.is_empty() {
                vec![base]
            } else {
                values.to_vec()
            }
        }
        let b = &self.base;
        let mut out = Vec::new();
        for protocol in axis(&self.grid.protocols, b.protocol) {
            for nodes in axis(&self.grid.nodes, b.topology.nodes) {
                for bytes in axis(&self.grid.block_bytes, b.block.size_bytes) {
                    for degree in axis(
                        &self.grid.degrees,
                        [b.topology.degree_min, b.topology.degree_max],
                    ) {
                        for seed in axis(&self.grid.seeds, b.seed) {
                            let mut cfg = b.clone();
                            cfg.protocol = protocol;
                            cfg.topology.nodes = nodes;
                            cfg.block.size_bytes = bytes;
                            cfg.topology.degree_min = degree[0];
                            cfg.topology.degree_max = degree[1];
                            cfg.seed = seed;
                            out.push(cfg);
                        }
                    }
                }
            }
        }
        out
    }
}

/// One line of the sweep table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub protocol: Protocol,
    pub nodes: usize,
    pub block_bytes: u64,
    pub degree: String,
    pub seed: u64,
    pub broadcast_s_p50: Option<f64>,
    pub broadcast_s_p90: Option<f64>,
    pub broadcast_s_max: Option<f64>,
    pub fork_rate_percent: Option<f64>,
    pub model_prediction_s: f64,
    pub relative_error: Option<f64>,
}

impl SweepRow {
    pub fn from_report(report: &RunReport) -> Self {
        let cfg = &report.config;
        let t = &cfg.topology;
        let degree = if t.degree_min == t.degree_max {
            t.degree_min.to_string()
        } else {
            format!("{}-{}", t.degree_min, t.degree_max)
        };
        let max = report.broadcast.mean_s;
        SweepRow {
            protocol: cfg.protocol,
            nodes: t.nodes,
            block_bytes: cfg.block.size_bytes,
            degree,
            seed: cfg.seed,
            broadcast_s_p50: report.broadcast.mean_p50_s,
            broadcast_s_p90: report.broadcast.mean_p90_s,
            broadcast_s_max: max,
            fork_rate_percent: report.fork.fork_rate_percent,
            model_prediction_s: report.model_prediction_s,
            relative_error: max.map(|m| relative_error(m, report.model_prediction_s)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: usize,
    pub protocol: Protocol,
    pub nodes: usize,
    pub block_bytes: u64,
    pub seed: u64,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<CellFailure>,
}

impl SweepOutcome {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every grid cell; failing cells are itemized and skipped.
pub fn sweep(spec: &SweepSpec) -> SweepOutcome {
    let cells = spec.cells();
    let results = run_cells(&cells, spec.threads.max(1), |cfg| {
        run_experiment(cfg).map(|r| SweepRow::from_report(&r))
    });
    let mut outcome = SweepOutcome::default();
    for (i, (cfg, result)) in cells.iter().zip(results).enumerate() {
        match result {
            Ok(row) => outcome.rows.push(row),
            Err(e) => outcome.failures.push(CellFailure {
                cell: i,
                protocol: cfg.protocol,
                nodes: cfg.topology.nodes,
                block_bytes: cfg.block.size_bytes,
                seed: cfg.seed,
                kind: e.kind().to_string(),
                message: e.to_string(),
            }),
        }
    }
    outcome
}

/// Applies `f` to every config on up to `threads` workers, keeping order.
pub fn run_cells<T: Send>(
    cells: &[SimConfig],
    threads: usize,
    f: impl Fn(&SimConfig) -> Result<T> + Sync,
) -> Vec<Result<T>> {
    if threads <= 1 || cells.len() <= 1 {
        return cells.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads.min(cells.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let r = f(&cells[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every cell ran"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchOptions {
    /// Fork rate (percent) at which a block size is considered unusable.
    pub threshold_percent: f64,
    pub start_bytes: u64,
    pub ceiling_bytes: u64,
    /// Bisection stops when `(hi - lo) / lo` falls below this.
    pub rel_tolerance: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            threshold_percent: 100.0,
            start_bytes: 64 * 1024,
            ceiling_bytes: 1 << 30,
            rel_tolerance: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub block_bytes: u64,
    pub fork_rate_percent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxBlockResult {
    /// Largest probed size with fork rate under the threshold.
    pub max_block_bytes: Option<u64>,
    /// The threshold was never reached below the ceiling.
    pub ceiling_reached: bool,
    pub probes: Vec<Probe>,
}

/// Doubling then bisection on block size for the largest size whose fork
/// rate stays below the threshold.
pub fn max_block_search(base: &SimConfig, opts: &SearchOptions) -> Result<MaxBlockResult> {
    if opts.start_bytes <= base.block.header_bytes || opts.ceiling_bytes < opts.start_bytes {
        return Err(Error::config(
            "search.start_bytes",
            "need header_bytes < start_bytes <= ceiling_bytes",
        ));
    }
    let mut probes = Vec::new();
    let ok = |bytes: u64, probes: &mut Vec<Probe>| -> Result<bool> {
        let mut cfg = base.clone();
        cfg.block.size_bytes = bytes;
        let report = run_experiment(&cfg)?;
        let rate = report.fork.fork_rate_percent;
        probes.push(Probe {
            block_bytes: bytes,
            fork_rate_percent: rate,
        });
        Ok(rate.is_some_and(|r| r < opts.threshold_percent))
    };
    let mut lo = None;
    let mut size = opts.start_bytes;
    let hi = loop {
        if !ok(size, &mut probes)? {
            break size;
        }
        lo = Some(size);
        if size == opts.ceiling_bytes {
            return Ok(MaxBlockResult {
                max_block_bytes: lo,
                ceiling_reached: true,
                probes,
            });
        }
        size = size.saturating_mul(2).min(opts.ceiling_bytes);
    };
    let Some(mut lo) = lo else {
        return Ok(MaxBlockResult {
            max_block_bytes: None,
            ceiling_reached: false,
            probes,
        });
    };
    let mut hi = hi;
    while (hi - lo) as f64 / lo as f64 > opts.rel_tolerance && hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid, &mut probes)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MaxBlockResult {
        max_block_bytes: Some(lo),
        ceiling_reached: false,
        probes,
    })
}

/// A reference network with its published broadcast time and fork rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    pub name: String,
    pub config: SimConfig,
    pub reference_broadcast_s: f64,
    pub reference_fork_percent: f64,
}

pub const CALIBRATION_PROFILES: [&str; 3] = ["bitcoin", "litecoin", "dogecoin"];

/// Traditional-gossip profiles of three public networks. Bandwidth and
/// latency are stand-ins for measured country distributions: log-normal
/// upload bandwidth around the given median and uniform link latency.
pub fn calibration_profile(name: &str) -> Option<CalibrationProfile> {
    let (nodes, interval, size, bw, lat, broadcast, fork) = match name {
        "bitcoin" => (6000, 600.0, 534_000, 33e6, [0.02, 0.2], 9.55, 0.55),
        "litecoin" => (800, 150.0, 6_110, 20e6, [0.02, 0.15], 1.04, 0.40),
        "dogecoin" => (600, 60.0, 8_000, 20e6, [0.02, 0.15], 1.07, 0.70),
        _ => return None,
    };
    let mut cfg = SimConfig::default();
    cfg.protocol = Protocol::Traditional;
    cfg.topology.nodes = nodes;
    cfg.topology.degree_min = 8;
    cfg.topology.degree_max = 12;
    cfg.block.size_bytes = size;
    cfg.block.header_bytes = 80;
    cfg.link.bandwidth_bps = bw;
    cfg.link.bandwidth_log_sigma = 0.5;
    cfg.link.latency_range_s = Some(lat);
    cfg.mining.block_interval_s = interval;
    cfg.mining.blocks_to_mine = 1000;
    Some(CalibrationProfile {
        name: name.to_string(),
        config: cfg,
        reference_broadcast_s: broadcast,
        reference_fork_percent: fork,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub name: String,
    pub reference_broadcast_s: f64,
    pub simulated_broadcast_s: Option<f64>,
    pub reference_fork_percent: f64,
    pub simulated_fork_percent: Option<f64>,
    pub blocks: u64,
}

pub fn calibrate(profile: &CalibrationProfile) -> Result<CalibrationResult> {
    let report = run_experiment(&profile.config)?;
    Ok(CalibrationResult {
        name: profile.name.clone(),
        reference_broadcast_s: profile.reference_broadcast_s,
        simulated_broadcast_s: report.broadcast.mean_s,
        reference_fork_percent: profile.reference_fork_percent,
        simulated_fork_percent: report.fork.fork_rate_percent,
        blocks: report.fork.blocks_mined,
    })
}
