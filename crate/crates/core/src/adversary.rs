//! Malicious node behaviors and post-run scenario checks.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::BlockId;
use crate::error::{Error, Result};
use crate::topology::NodeId;

/// Which nodes carry a behavior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSelector {
    Ids(Vec<NodeId>),
    /// Random subset of this share of all nodes (rounded, at least one).
    Fraction(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Behavior {
    /// Corrupts the signature of forwarded chunks (and relayed blocks).
    TamperForwarder { probability: f64 },
    /// Mines blocks with one chunk of invalid transactions; the last chunk
    /// when no index is given.
    InvalidTxMiner {
        #[serde(default)]
        invalid_chunk: Option<u32>,
    },
    /// Holds every forwarded chunk or block for `delay_s` before sending.
    DelayForwarder { delay_s: f64 },
    /// Sends only chunks `0..die_at_chunk` of its own blocks.
    DyingMiner { die_at_chunk: u32 },
}

impl Behavior {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Behavior::TamperForwarder { probability } if !(0.0..=1.0).contains(&probability) => {
                Err(Error::config("behavior.probability", "must lie in [0, 1]"))
            }
            Behavior::DelayForwarder { delay_s } if !(delay_s >= 0.0 && delay_s.is_finite()) => {
                Err(Error::config("behavior.delay_s", "must be finite and >= 0"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    pub nodes: NodeSelector,
    pub behavior: Behavior,
}

impl AdversaryConfig {
    pub fn validate(&self, node_count: usize) -> Result<()> {
        match &self.nodes {
            NodeSelector::Ids(ids) => {
                if ids.iter().any(|&n| n as usize >= node_count) {
                    return Err(Error::config("nodes.ids", "node id out of range"));
                }
            }
            NodeSelector::Fraction(f) => {
                if !(*f > 0.0 && *f <= 1.0) {
                    return Err(Error::config("nodes.fraction", "must lie in (0, 1]"));
                }
            }
        }
        self.behavior.validate()
    }
}

/// Assigns behaviors to nodes. Later entries override earlier ones.
pub fn assign_behaviors<R: Rng>(
    configs: &[AdversaryConfig],
    node_count: usize,
    rng: &mut R,
) -> Vec<Option<Behavior>> {
    let mut roles = vec![None; node_count];
    for cfg in configs {
        let chosen: Vec<usize> = match &cfg.nodes {
            NodeSelector::Ids(ids) => ids.iter().map(|&n| n as usize).collect(),
            NodeSelector::Fraction(f) => {
                let k = ((f * node_count as f64).round() as usize).clamp(1, node_count);
                let mut picked = sample(rng, node_count, k).into_vec();
                picked.sort_unstable();
                picked
            }
        };
        for n in chosen {
            roles[n] = Some(cfg.behavior);
        }
    }
    roles
}

/// Outbound chunk after a node's behavior is applied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outbound {
    Send { tampered: bool, delay_s: f64 },
    Suppress,
}

/// Applies `behavior` to a chunk (or whole block, `chunk = None`) of
/// `block` that `node` is about to send. `own` marks blocks the node mined.
pub fn apply_behavior<R: Rng>(
    behavior: Option<&Behavior>,
    own: bool,
    chunk: Option<u32>,
    rng: &mut R,
) -> Outbound {
    let honest = Outbound::Send {
        tampered: false,
        delay_s: 0.0,
    };
    let Some(behavior) = behavior else {
        return honest;
    };
    match *behavior {
        Behavior::TamperForwarder { probability } if !own => Outbound::Send {
            tampered: probability >= 1.0 || (probability > 0.0 && rng.random_bool(probability)),
            delay_s: 0.0,
        },
        Behavior::DelayForwarder { delay_s } if !own => Outbound::Send {
            tampered: false,
            delay_s,
        },
        Behavior::DyingMiner { die_at_chunk } if own => match chunk {
            Some(i) if i < die_at_chunk => honest,
            _ => Outbound::Suppress,
        },
        _ => honest,
    }
}

/// Expected outcome of an adversarial run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum Scenario {
    /// No adversaries: every honest node completes every main-chain block.
    Honest,
    /// Tampering relays: every honest node still completes every block.
    Tamper,
    /// The listed blocks carry invalid transactions: they must be
    /// blacklisted by every honest node and stay out of the main chain.
    InvalidTx { blocks: Vec<BlockId> },
    /// The miner of these blocks died mid-broadcast: no honest node
    /// completes them and all blacklist them.
    DyingMiner { blocks: Vec<BlockId> },
    /// Delaying relays: broadcast time stays within `baseline_s + bound_s`.
    Delay { baseline_s: f64, bound_s: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

impl Finding {
    fn new(check: &str, passed: bool, detail: String) -> Self {
        Finding {
            check: check.to_string(),
            passed,
            detail,
        }
    }
}

/// Checks the postconditions of `scenario` on a finished run.
pub fn assert_scenario(report: &crate::report::RunReport, scenario: &Scenario) -> Vec<Finding> {
    let mut out = Vec::new();
    let main: Vec<BlockId> = report.main_chain.clone();
    match scenario {
        Scenario::Honest | Scenario::Tamper => {
            let incomplete: Vec<BlockId> = main
                .iter()
                .filter(|&&b| !report.block(b).is_some_and(|s| s.complete))
                .copied()
                .collect();
            out.push(Finding::new(
                "honest_completion",
                incomplete.is_empty(),
                format!("{} of {} main-chain blocks incomplete", incomplete.len(), main.len()),
            ));
        }
        Scenario::InvalidTx { blocks } | Scenario::DyingMiner { blocks } => {
            for &b in blocks {
                let Some(s) = report.block(b) else {
                    out.push(Finding::new("block_exists", false, format!("block {b} missing")));
                    continue;
                };
                out.push(Finding::new(
                    "excluded_from_main_chain",
                    !main.contains(&b),
                    format!("block {b}"),
                ));
                out.push(Finding::new(
                    "blacklisted_everywhere",
                    s.blacklisted_by == s.honest_nodes,
                    format!("block {b}: {} of {} honest nodes", s.blacklisted_by, s.honest_nodes),
                ));
                if matches!(scenario, Scenario::DyingMiner { .. }) {
                    out.push(Finding::new(
                        "no_completion",
                        s.completed == 0,
                        format!("block {b}: {} honest completions", s.completed),
                    ));
                }
            }
        }
        Scenario::Delay {
            baseline_s,
            bound_s,
        } => {
            let worst = main
                .iter()
                .filter_map(|&b| report.block(b).and_then(|s| s.broadcast_s))
                .fold(0.0f64, f64::max);
            let all = main.iter().all(|&b| report.block(b).is_some_and(|s| s.complete));
            out.push(Finding::new("delay_completion", all, format!("{} blocks", main.len())));
            out.push(Finding::new(
                "delay_inflation",
                worst - baseline_s <= *bound_s,
                format!("inflation {:.6} s, bound {:.6} s", worst - baseline_s, bound_s),
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn honest_nodes_send_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            apply_behavior(None, false, Some(3), &mut rng),
            Outbound::Send {
                tampered: false,
                delay_s: 0.0
            }
        );
    }

    #[test]
    fn tamperer_flips_relayed_chunks_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = Behavior::TamperForwarder { probability: 1.0 };
        assert!(matches!(
            apply_behavior(Some(&b), false, Some(0), &mut rng),
            Outbound::Send { tampered: true, .. }
        ));
        assert!(matches!(
            apply_behavior(Some(&b), true, Some(0), &mut rng),
            Outbound::Send { tampered: false, .. }
        ));
    }

    #[test]
    fn tamper_probability_is_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = Behavior::TamperForwarder { probability: 0.3 };
        let hits = (0..20_000)
            .filter(|_| {
                matches!(
                    apply_behavior(Some(&b), false, Some(0), &mut rng),
                    Outbound::Send { tampered: true, .. }
                )
            })
            .count();
        assert!((5700..6300).contains(&hits), "{hits}");
    }

    #[test]
    fn dying_miner_stops_at_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = Behavior::DyingMiner { die_at_chunk: 2 };
        let sent: Vec<bool> = (0..4)
            .map(|i| apply_behavior(Some(&b), true, Some(i), &mut rng) != Outbound::Suppress)
            .collect();
        assert_eq!(sent, vec![true, true, false, false]);
        assert_eq!(apply_behavior(Some(&b), true, None, &mut rng), Outbound::Suppress);
        assert!(apply_behavior(Some(&b), false, Some(9), &mut rng) != Outbound::Suppress);
    }

    #[test]
    fn delayer_adds_delay_to_relays() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = Behavior::DelayForwarder { delay_s: 5.0 };
        assert_eq!(
            apply_behavior(Some(&b), false, Some(1), &mut rng),
            Outbound::Send {
                tampered: false,
                delay_s: 5.0
            }
        );
    }

    #[test]
    fn selectors_pick_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfgs = vec![
            AdversaryConfig {
                nodes: NodeSelector::Fraction(0.1),
                behavior: Behavior::DelayForwarder { delay_s: 1.0 },
            },
            AdversaryConfig {
                nodes: NodeSelector::Ids(vec![7]),
                behavior: Behavior::DyingMiner { die_at_chunk: 1 },
            },
        ];
        let roles = assign_behaviors(&cfgs, 100, &mut rng);
        let delayers = roles
            .iter()
            .filter(|r| matches!(r, Some(Behavior::DelayForwarder { .. })))
            .count();
        assert!((9..=10).contains(&delayers));
        assert_eq!(roles[7], Some(Behavior::DyingMiner { die_at_chunk: 1 }));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let cfg = AdversaryConfig {
            nodes: NodeSelector::Ids(vec![200]),
            behavior: Behavior::TamperForwarder { probability: 0.5 },
        };
        assert!(cfg.validate(100).is_err());
        assert!(Behavior::TamperForwarder { probability: 1.5 }.validate().is_err());
        assert!(Behavior::DelayForwarder { delay_s: -1.0 }.validate().is_err());
    }
}
