//! Closed-form broadcast delay models and broadcast measurement.

use serde::{Deserialize, Serialize};

use crate::engine::CHUNK_METADATA_BITS;

/// Inputs of the delay models. Sizes are in bits, times in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Network radius in hops.
    pub radius: f64,
    /// Average node degree.
    pub degree: f64,
    /// Whole block, header included.
    pub block_bits: f64,
    pub header_bits: f64,
    pub chunk_bits: f64,
    pub chunk_count: u64,
    pub bandwidth_bps: f64,
    pub latency_s: f64,
    /// Full-block verification.
    pub verify_s: f64,
    /// Header-only verification.
    pub header_verify_s: f64,
}

impl ModelParams {
    /// Chunk count for a block of `block_bits` with `header_bits` of header.
    pub fn chunks_for(block_bits: f64, header_bits: f64, chunk_bits: f64) -> u64 {
        ((block_bits - header_bits).max(0.0) / chunk_bits).ceil() as u64
    }
}

/// How the per-chunk metadata enters the chunk-streaming term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetadataTerm {
    /// `N_c * (L_C + 520)`: every chunk carries 520 bits of framing.
    #[default]
    PerChunk,
    /// `(N_c + 520) * L_C`, kept for comparison with the printed form.
    Literal,
}

/// Store-and-forward delay: every hop pays transmission to all neighbors,
/// propagation and full verification.
pub fn predict_traditional(p: &ModelParams) -> f64 {
    p.radius * (p.degree * p.block_bits / p.bandwidth_bps + p.latency_s + p.verify_s)
}

/// Header flood across the radius.
pub fn pichu_header_term(p: &ModelParams) -> f64 {
    p.radius * (p.degree * p.header_bits / p.bandwidth_bps + p.latency_s + p.header_verify_s)
}

/// Streaming all chunks out of one node to its neighbors.
pub fn pichu_chunk_term(p: &ModelParams, term: MetadataTerm) -> f64 {
    let n = p.chunk_count as f64;
    let bits = match term {
        MetadataTerm::PerChunk => n * (p.chunk_bits + CHUNK_METADATA_BITS),
        MetadataTerm::Literal => (n + CHUNK_METADATA_BITS) * p.chunk_bits,
    };
    p.degree * bits / p.bandwidth_bps
}

pub fn predict_pichu(p: &ModelParams, term: MetadataTerm) -> f64 {
    if p.chunk_count == 0 {
        return pichu_header_term(p);
    }
    pichu_header_term(p) + pichu_chunk_term(p, term)
}

/// Largest chunk payload (bytes) whose transmission to `degree` neighbors
/// still hides behind propagation plus processing, clamped to
/// `[1, body_bytes]`.
pub fn optimal_chunk_size(
    latency_s: f64,
    proc_overhead_s: f64,
    bandwidth_bps: f64,
    degree: f64,
    body_bytes: u64,
) -> u64 {
    let bound_bits = (latency_s + proc_overhead_s) * bandwidth_bps / degree;
    let bytes = (bound_bits / 8.0).floor();
    let bytes = if bytes.is_finite() { bytes as u64 } else { u64::MAX };
    bytes.clamp(1, body_bytes.max(1))
}

/// Broadcast of one block as seen by the honest nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BroadcastSample {
    pub honest_nodes: usize,
    pub completed: usize,
    pub completion_fraction: f64,
    pub complete: bool,
    /// Time from mining until the given share of honest nodes completed.
    pub p50_s: Option<f64>,
    pub p90_s: Option<f64>,
    /// Until every honest node completed; `None` while incomplete.
    pub max_s: Option<f64>,
}

/// Summarizes completion instants (sorted ascending) of one block.
pub fn measure_broadcast(mined_at: f64, completions: &[f64], honest_nodes: usize) -> BroadcastSample {
    debug_assert!(completions.windows(2).all(|w| w[0] <= w[1]));
    let completed = completions.len();
    let at = |share: f64| -> Option<f64> {
        let need = ((share * honest_nodes as f64).ceil() as usize).max(1);
        completions.get(need - 1).map(|t| t - mined_at)
    };
    let fraction = if honest_nodes == 0 {
        0.0
    } else {
        completed as f64 / honest_nodes as f64
    };
    let complete = honest_nodes > 0 && completed >= honest_nodes;
    BroadcastSample {
        honest_nodes,
        completed,
        completion_fraction: fraction,
        complete,
        p50_s: at(0.5),
        p90_s: at(0.9),
        max_s: if complete { at(1.0) } else { None },
    }
}

/// `|sim - model| / model`.
pub fn relative_error(sim: f64, model: f64) -> f64 {
    (sim - model).abs() / model
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    pub simulated_s: f64,
    pub predicted_s: f64,
    pub relative_error: f64,
}

/// Pairs simulated and predicted values cell by cell.
pub fn compare<'a>(cells: impl IntoIterator<Item = (&'a str, f64, f64)>) -> Vec<Comparison> {
    cells
        .into_iter()
        .map(|(label, sim, model)| Comparison {
            label: label.to_string(),
            simulated_s: sim,
            predicted_s: model,
            relative_error: relative_error(sim, model),
        })
        .collect()
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}
