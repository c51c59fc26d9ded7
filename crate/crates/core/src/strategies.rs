//! Behaviour-update rules applied between iterations.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::BehaviorState;
use crate::geometry::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Everyone defects.
    Def,
    /// Everyone cooperates.
    Coop,
    /// Tit-for-tat: cooperate next iteration iff fitness improved.
    Tft,
    /// Win-stay, lose-shift.
    Wsls,
    /// Everyone cooperates and targets the energy-minimising relay radius
    /// (central-sink only).
    Minimal,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Def,
        Strategy::Coop,
        Strategy::Tft,
        Strategy::Wsls,
        Strategy::Minimal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Def => "DEF",
            Strategy::Coop => "COOP",
            Strategy::Tft => "TFT",
            Strategy::Wsls => "WSLS",
            Strategy::Minimal => "MINIMAL",
        }
    }

    /// Whether behaviour is fixed for the whole run.
    pub fn is_constant(&self) -> bool {
        matches!(self, Strategy::Def | Strategy::Coop | Strategy::Minimal)
    }

    /// Behaviour flag every node starts iteration 0 with.
    pub fn initial_flag(&self) -> bool {
        matches!(self, Strategy::Coop | Strategy::Minimal)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "def" => Ok(Strategy::Def),
            "coop" => Ok(Strategy::Coop),
            "tft" => Ok(Strategy::Tft),
            "wsls" => Ok(Strategy::Wsls),
            "minimal" => Ok(Strategy::Minimal),
            other => Err(format!(
                "unknown strategy '{other}' (expected def|coop|tft|wsls|minimal)"
            )),
        }
    }
}

/// What happens when a node's improvement is exactly zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieRules {
    /// TFT cooperates on a zero improvement (default: defects).
    pub tft_cooperates: bool,
    /// WSLS shifts on a zero improvement (default: stays).
    pub wsls_shifts: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyRule {
    pub kind: Strategy,
    pub ties: TieRules,
}

impl StrategyRule {
    pub fn new(kind: Strategy) -> Self {
        StrategyRule {
            kind,
            ties: TieRules::default(),
        }
    }

    pub fn with_ties(kind: Strategy, ties: TieRules) -> Self {
        StrategyRule { kind, ties }
    }

    /// Next flag for a single node.
    pub fn next_flag(&self, cooperating: bool, improvement: f64) -> bool {
        match self.kind {
            Strategy::Def => false,
            Strategy::Coop | Strategy::Minimal => true,
            Strategy::Tft => improvement > 0.0 || (improvement == 0.0 && self.ties.tft_cooperates),
            Strategy::Wsls => {
                let shift = improvement < 0.0 || (improvement == 0.0 && self.ties.wsls_shifts);
                cooperating != shift
            }
        }
    }
}

/// Maps per-node fitness improvements to next-iteration behaviour.
///
/// `improvement` must have one entry per node.
pub fn update_behavior(
    rule: &StrategyRule,
    current: &BehaviorState,
    improvement: &[f64],
) -> BehaviorState {
    assert_eq!(current.len(), improvement.len(), "one improvement per node");
    current
        .flags()
        .iter()
        .zip(improvement)
        .map(|(&flag, &delta)| rule.next_flag(flag, delta))
        .collect()
}

/// How the single seed cooperator is chosen after iteration 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Placement {
    RandomNode,
    /// The node whose distance from the centre is closest to the radius.
    AtRadius(f64),
}

/// Flags one node as cooperator. Ties in `AtRadius` go to the lower id.
pub fn introduce_initial_cooperator<G: Rng + ?Sized>(
    behaviors: &BehaviorState,
    placement: Placement,
    topology: &Topology,
    rng: &mut G,
) -> BehaviorState {
    let m = topology.len();
    let chosen = match placement {
        Placement::RandomNode => rng.random_range(0..m),
        Placement::AtRadius(target) => topology
            .nodes
            .iter()
            .enumerate()
            .map(|(id, p)| ((p.radius() - target).abs(), id))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id)
            .expect("topology has at least one node"),
    };
    let mut next = behaviors.clone();
    next.set(chosen, true);
    next
}
