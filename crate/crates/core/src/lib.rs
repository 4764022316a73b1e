//! Discrete-event simulation of block broadcast in large peer-to-peer
//! blockchain networks.
//!
//! Two dissemination protocols are modeled: classic whole-block gossip
//! (invite, request, send, verify, forward) and header invitations followed
//! by pipelined chunk forwarding, where every verified chunk is relayed
//! before the rest of the block arrives. Runs report per-block broadcast
//! times, fork statistics and traffic counters, and can be checked against
//! closed-form delay models in [`analytics`].
//!
//! ```no_run
//! use blockcast::{run_experiment, Protocol, SimConfig};
//!
//! let mut cfg = SimConfig::default();
//! cfg.protocol = Protocol::Pichu;
//! cfg.topology.nodes = 1024;
//! cfg.topology.degree_min = 5;
//! cfg.topology.degree_max = 5;
//! let report = run_experiment(&cfg).unwrap();
//! println!("{:?}", report.broadcast.mean_s);
//! ```

pub mod adversary;
pub mod analytics;
pub mod chain;
pub mod config;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod net;
pub mod protocol;
pub mod report;
pub mod sim;
pub mod topology;

pub use config::{Protocol, SimConfig};
pub use error::{Error, Result};
pub use experiment::{max_block_search, run_experiment, sweep};
pub use report::RunReport;
