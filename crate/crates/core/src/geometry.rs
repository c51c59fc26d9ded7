//! Node placement and relay-eligibility geometry.
//!
//! Nodes live in a disk of radius `R` centred at the origin. In the
//! central-sink architecture the sink sits at the origin and is not part of
//! the node list.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::BehaviorState;
use crate::error::ConfigError;

/// A point in the plane, in disk units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const ORIGIN: Position = Position { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    /// Distance from the disk centre.
    pub fn radius(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn scaled(&self, factor: f64) -> Position {
        Position::new(self.x * factor, self.y * factor)
    }
}

/// Euclidean distance.
pub fn distance(a: Position, b: Position) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    /// Peer-to-peer traffic between uniformly chosen node pairs.
    AdHoc,
    /// Every node sends to a sink at the disk centre.
    CentralSink,
}

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::AdHoc => "adhoc",
            Architecture::CentralSink => "central",
        }
    }
}

/// Receiving end of a transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    Node(usize),
    Sink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub radius: f64,
    pub architecture: Architecture,
    pub nodes: Vec<Position>,
    pub sink: Option<Position>,
}

impl Topology {
    /// Builds a topology from explicit positions. The sink is placed at the
    /// origin for [`Architecture::CentralSink`].
    pub fn from_positions(
        radius: f64,
        architecture: Architecture,
        nodes: Vec<Position>,
    ) -> Result<Self, ConfigError> {
        check_size(nodes.len(), radius, architecture)?;
        let sink = match architecture {
            Architecture::AdHoc => None,
            Architecture::CentralSink => Some(Position::ORIGIN),
        };
        Ok(Topology {
            radius,
            architecture,
            nodes,
            sink,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Position of a transmission endpoint.
    ///
    /// Panics if `Endpoint::Sink` is requested on an ad hoc topology.
    pub fn position(&self, endpoint: Endpoint) -> Position {
        match endpoint {
            Endpoint::Node(id) => self.nodes[id],
            Endpoint::Sink => self.sink.expect("ad hoc topology has no sink"),
        }
    }

    pub fn node_radii(&self) -> Vec<f64> {
        self.nodes.iter().map(Position::radius).collect()
    }
}

fn check_size(m: usize, radius: f64, architecture: Architecture) -> Result<(), ConfigError> {
    let min = match architecture {
        Architecture::AdHoc => 2,
        Architecture::CentralSink => 1,
    };
    if m < min {
        return Err(ConfigError::invalid(
            "m",
            format!(
                "{} architecture needs at least {min} nodes, got {m}",
                architecture.name()
            ),
        ));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(ConfigError::invalid(
            "radius",
            format!("must be positive, got {radius}"),
        ));
    }
    Ok(())
}

/// Places `m` nodes uniformly over the disk of radius `radius`.
///
/// Radius is drawn as `R * sqrt(u)` so that density is uniform in area.
pub fn sample_topology<G: Rng + ?Sized>(
    m: usize,
    radius: f64,
    architecture: Architecture,
    rng: &mut G,
) -> Result<Topology, ConfigError> {
    check_size(m, radius, architecture)?;
    let nodes = (0..m)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let theta = 2.0 * PI * rng.random::<f64>();
            Position::new(r * theta.cos(), r * theta.sin())
        })
        .collect();
    Topology::from_positions(radius, architecture, nodes)
}

/// Shape of the region in which cooperators may relay a transmission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelayRegionParams {
    /// Request-to-relay radius as a fraction of the tx-rx distance.
    pub nu: f64,
    /// Path-loss exponent.
    pub path_loss_exp: f64,
}

impl RelayRegionParams {
    pub fn new(nu: f64, path_loss_exp: f64) -> Result<Self, ConfigError> {
        if !(0.0..=1.0).contains(&nu) {
            return Err(ConfigError::invalid(
                "nu",
                format!("must lie in [0, 1], got {nu}"),
            ));
        }
        if !(path_loss_exp > 0.0 && path_loss_exp.is_finite()) {
            return Err(ConfigError::invalid(
                "alpha",
                format!("path-loss exponent must be positive, got {path_loss_exp}"),
            ));
        }
        if !(2.0..=4.0).contains(&path_loss_exp) {
            log::info!("path-loss exponent {path_loss_exp} is outside the usual range [2, 4]");
        }
        Ok(RelayRegionParams { nu, path_loss_exp })
    }
}

/// Geometric part of relay eligibility: `c` lies within `nu * d_ab` of the
/// transmitter and no farther from the receiver than the transmitter is.
#[inline]
pub fn in_relay_region(tx: Position, rx: Position, c: Position, nu: f64) -> bool {
    let d_ab = distance(tx, rx);
    distance(tx, c) <= nu * d_ab && distance(c, rx) <= d_ab
}

/// Cooperators that may relay `tx -> rx`, nearest to the receiver first
/// (ties by ascending id).
pub fn eligible_relays(
    topology: &Topology,
    behaviors: &BehaviorState,
    tx: usize,
    rx: Endpoint,
    params: &RelayRegionParams,
) -> Vec<usize> {
    let a = topology.nodes[tx];
    let b = topology.position(rx);
    let mut relays: Vec<(f64, usize)> = topology
        .nodes
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != tx && Endpoint::Node(c) != rx && behaviors.is_cooperator(c))
        .filter(|&(_, &pos)| in_relay_region(a, b, pos, params.nu))
        .map(|(c, &pos)| (distance(pos, b), c))
        .collect();
    relays.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    relays.into_iter().map(|(_, c)| c).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_coop(m: usize) -> BehaviorState {
        BehaviorState::uniform(m, true)
    }

    #[test]
    fn distance_basics() {
        assert_eq!(distance(Position::ORIGIN, Position::ORIGIN), 0.0);
        assert_eq!(
            distance(Position::new(0.0, 0.0), Position::new(3.0, 4.0)),
            5.0
        );
        let a = Position::new(0.3, -0.7);
        let b = Position::new(-0.1, 0.25);
        assert_eq!(distance(a, b), distance(b, a));
    }

    #[test]
    fn rejects_undersized_topologies() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_topology(0, 1.0, Architecture::AdHoc, &mut rng).is_err());
        assert!(sample_topology(1, 1.0, Architecture::AdHoc, &mut rng).is_err());
        assert!(sample_topology(1, 1.0, Architecture::CentralSink, &mut rng).is_ok());
        assert!(sample_topology(5, 0.0, Architecture::AdHoc, &mut rng).is_err());
        assert!(sample_topology(5, -1.0, Architecture::AdHoc, &mut rng).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_inside_disk() {
        let a = sample_topology(
            30,
            1.0,
            Architecture::AdHoc,
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        let b = sample_topology(
            30,
            1.0,
            Architecture::AdHoc,
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        assert!(a.sink.is_none());
        assert!(a.nodes.iter().all(|p| p.radius() <= 1.0));

        let c = sample_topology(
            7,
            2.5,
            Architecture::CentralSink,
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        assert_eq!(c.sink, Some(Position::ORIGIN));
        assert_eq!(c.len(), 7);
        assert!(c.nodes.iter().all(|p| p.radius() <= 2.5));
    }

    #[test]
    fn mean_radius_matches_uniform_disk() {
        // E[r] = 2R/3 for area-uniform placement.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let topo = sample_topology(100_000, 1.0, Architecture::AdHoc, &mut rng).unwrap();
        let mean = topo.node_radii().iter().sum::<f64>() / topo.len() as f64;
        assert!(
            (mean - 2.0 / 3.0).abs() / (2.0 / 3.0) < 0.01,
            "mean radius {mean}"
        );
    }

    #[test]
    fn relay_inside_nu_disk_is_eligible() {
        let topo = Topology::from_positions(
            1.0,
            Architecture::AdHoc,
            vec![
                Position::new(0.0, 0.0),
                Position::new(1.0, 0.0),
                Position::new(0.2, 0.0),
            ],
        )
        .unwrap();
        let params = RelayRegionParams::new(0.39, 4.0).unwrap();
        assert_eq!(
            eligible_relays(&topo, &all_coop(3), 0, Endpoint::Node(1), &params),
            vec![2]
        );

        let mut far = topo.clone();
        far.nodes[2] = Position::new(0.5, 0.0);
        assert!(eligible_relays(&far, &all_coop(3), 0, Endpoint::Node(1), &params).is_empty());
    }

    #[test]
    fn defectors_never_relay() {
        let topo = Topology::from_positions(
            1.0,
            Architecture::AdHoc,
            vec![
                Position::new(0.0, 0.0),
                Position::new(1.0, 0.0),
                Position::new(0.2, 0.0),
            ],
        )
        .unwrap();
        let params = RelayRegionParams::new(0.39, 4.0).unwrap();
        let defectors = BehaviorState::uniform(3, false);
        assert!(eligible_relays(&topo, &defectors, 0, Endpoint::Node(1), &params).is_empty());
    }

    #[test]
    fn equidistant_relays_order_by_id() {
        let topo = Topology::from_positions(
            1.0,
            Architecture::AdHoc,
            vec![
                Position::new(0.0, 0.0),
                Position::new(1.0, 0.0),
                Position::new(0.1, 0.1),
                Position::new(0.1, -0.1),
                Position::new(0.05, 0.0),
            ],
        )
        .unwrap();
        let params = RelayRegionParams::new(0.39, 4.0).unwrap();
        assert_eq!(
            eligible_relays(&topo, &all_coop(5), 0, Endpoint::Node(1), &params),
            vec![2, 3, 4]
        );
    }

    #[test]
    fn sink_receiver_uses_centre() {
        let topo = Topology::from_positions(
            1.0,
            Architecture::CentralSink,
            vec![
                Position::new(0.9, 0.0),
                Position::new(0.7, 0.0),
                Position::new(0.3, 0.0),
            ],
        )
        .unwrap();
        let params = RelayRegionParams::new(0.39, 4.0).unwrap();
        // d_AB = 0.9, nu-disk 0.351: node 1 (0.2 away) qualifies, node 2 (0.6 away) does not.
        assert_eq!(
            eligible_relays(&topo, &all_coop(3), 0, Endpoint::Sink, &params),
            vec![1]
        );
    }

    #[test]
    fn params_validation() {
        assert!(RelayRegionParams::new(-0.1, 4.0).is_err());
        assert!(RelayRegionParams::new(1.1, 4.0).is_err());
        assert!(RelayRegionParams::new(0.5, 0.0).is_err());
        assert!(RelayRegionParams::new(0.5, 5.0).is_ok());
        assert!(RelayRegionParams::new(0.0, 2.0).is_ok());
    }
}
