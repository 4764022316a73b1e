//! Experiment description, loaded from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::AdversaryConfig;
use crate::error::{Error, Result};
use crate::net::LinkConfig;
use crate::sim::DEFAULT_EVENT_CAP;
use crate::topology::{DegreeSpec, NodeId, DEFAULT_EXACT_RADIUS_THRESHOLD, DEFAULT_RADIUS_SAMPLES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Traditional,
    Pichu,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Traditional => "traditional",
            Protocol::Pichu => "pichu",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "traditional" => Ok(Protocol::Traditional),
            "pichu" => Ok(Protocol::Pichu),
            other => Err(Error::config("protocol", format!("unknown protocol {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub nodes: usize,
    pub degree_min: usize,
    pub degree_max: usize,
    pub exact_radius_threshold: usize,
    pub radius_samples: usize,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            nodes: 1024,
            degree_min: 8,
            degree_max: 12,
            exact_radius_threshold: DEFAULT_EXACT_RADIUS_THRESHOLD,
            radius_samples: DEFAULT_RADIUS_SAMPLES,
        }
    }
}

impl TopologyConfig {
    pub fn degree_spec(&self) -> Result<DegreeSpec> {
        DegreeSpec::new(self.degree_min, self.degree_max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockConfig {
    /// Whole block, header included.
    pub size_bytes: u64,
    pub header_bytes: u64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig {
            size_bytes: 1 << 20,
            header_bytes: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PichuConfig {
    pub chunk_bytes: u64,
    /// Header-only consensus check.
    pub header_verify_s: f64,
    /// Stall timeout in units of the expected chunk inter-arrival time.
    pub chunk_timeout_multiplier: f64,
    /// Extra allowance for the first chunk, in units of the stall timeout.
    pub first_chunk_timeout_factor: f64,
    pub partial_block_tolerant: bool,
}

impl Default for PichuConfig {
    fn default() -> Self {
        PichuConfig {
            chunk_bytes: 128 * 1024,
            header_verify_s: 1e-3,
            chunk_timeout_multiplier: 4.0,
            first_chunk_timeout_factor: 10.0,
            partial_block_tolerant: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningConfig {
    pub block_interval_s: f64,
    pub blocks_to_mine: u64,
    /// Miners to use in order (cycled); uniform choice when empty.
    pub miner_sequence: Vec<NodeId>,
    /// Absolute mining instants replacing the random clock when non-empty.
    pub mine_times: Vec<f64>,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            block_interval_s: 600.0,
            blocks_to_mine: 1,
            miner_sequence: Vec::new(),
            mine_times: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub max_events: u64,
    pub horizon_s: Option<f64>,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        LimitsConfig {
            max_events: DEFAULT_EVENT_CAP,
            horizon_s: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub format: Format,
    pub trace: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub protocol: Protocol,
    pub topology: TopologyConfig,
    pub link: LinkConfig,
    pub block: BlockConfig,
    pub pichu: PichuConfig,
    pub mining: MiningConfig,
    pub adversaries: Vec<AdversaryConfig>,
    pub limits: LimitsConfig,
    pub output: OutputConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            protocol: Protocol::Pichu,
            topology: TopologyConfig::default(),
            link: LinkConfig::default(),
            block: BlockConfig::default(),
            pichu: PichuConfig::default(),
            mining: MiningConfig::default(),
            adversaries: Vec::new(),
            limits: LimitsConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.topology;
        if t.nodes == 0 {
            return Err(Error::config("topology.nodes", "must be at least 1"));
        }
        if t.nodes > NodeId::MAX as usize {
            return Err(Error::config("topology.nodes", "too many nodes"));
        }
        t.degree_spec()?;
        if t.nodes > 1 && t.nodes - 1 >= t.degree_min && t.degree_max >= t.nodes {
            return Err(Error::config(
                "topology.degree_max",
                format!("{} nodes cannot have degree {}", t.nodes, t.degree_max),
            ));
        }
        if t.radius_samples == 0 {
            return Err(Error::config("topology.radius_samples", "must be positive"));
        }
        self.link.validate()?;
        let b = &self.block;
        if b.header_bytes == 0 {
            return Err(Error::config("block.header_bytes", "must be positive"));
        }
        if b.size_bytes < b.header_bytes {
            return Err(Error::config("block.size_bytes", "smaller than the header"));
        }
        let p = &self.pichu;
        if p.chunk_bytes == 0 {
            return Err(Error::config("pichu.chunk_bytes", "must be positive"));
        }
        if (b.size_bytes - b.header_bytes).div_ceil(p.chunk_bytes) > u16::MAX as u64 {
            return Err(Error::config("pichu.chunk_bytes", "chunk count must fit in 16 bits"));
        }
        if !(p.header_verify_s >= 0.0 && p.header_verify_s.is_finite()) {
            return Err(Error::config("pichu.header_verify_s", "must be finite and >= 0"));
        }
        if !(p.chunk_timeout_multiplier > 0.0 && p.chunk_timeout_multiplier.is_finite()) {
            return Err(Error::config("pichu.chunk_timeout_multiplier", "must be positive"));
        }
        if !(p.first_chunk_timeout_factor >= 1.0 && p.first_chunk_timeout_factor.is_finite()) {
            return Err(Error::config("pichu.first_chunk_timeout_factor", "must be >= 1"));
        }
        let m = &self.mining;
        if !(m.block_interval_s > 0.0 && m.block_interval_s.is_finite()) {
            return Err(Error::config("mining.block_interval_s", "must be positive"));
        }
        if m.miner_sequence.iter().any(|&n| n as usize >= t.nodes) {
            return Err(Error::config("mining.miner_sequence", "node id out of range"));
        }
        if !m.mine_times.is_empty() {
            if m.mine_times.len() as u64 != m.blocks_to_mine {
                return Err(Error::config("mining.mine_times", "length must equal blocks_to_mine"));
            }
            if m.mine_times.iter().any(|t| !(t.is_finite() && *t >= 0.0))
                || m.mine_times.windows(2).any(|w| w[1] < w[0])
            {
                return Err(Error::config("mining.mine_times", "must be finite, >= 0 and sorted"));
            }
        }
        for (i, adv) in self.adversaries.iter().enumerate() {
            adv.validate(t.nodes)
                .map_err(|e| match e {
                    Error::Config { field, message } => {
                        Error::config(format!("adversaries[{i}].{field}"), message)
                    }
                    other => other,
                })?;
        }
        if self.limits.max_events == 0 {
            return Err(Error::config("limits.max_events", "must be positive"));
        }
        Ok(())
    }
}
