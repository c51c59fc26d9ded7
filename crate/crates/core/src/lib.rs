//! Evolutionary cooperative relaying in wireless networks.
//!
//! Nodes in a random disk topology transmit to each other (ad hoc) or to a
//! central sink, optionally through a cooperating relay. Each node tracks a
//! fitness built from the energy it loses, and between iterations a simple
//! strategy rule (tit-for-tat, win-stay lose-shift, or a fixed behaviour)
//! decides whether it cooperates next. The [`dense`] module covers the
//! analytical limit of a dense central-sink network.

pub mod cli;
pub mod config;
pub mod dense;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod strategies;

pub use config::{Protocol, Scale, SimConfig, Traffic};
pub use engine::{run_simulation, run_simulation_with_workers, BehaviorState, SimulationResult};
pub use error::{ConfigError, DenseError};
pub use geometry::{Architecture, Endpoint, Position, Topology};
pub use strategies::{Placement, Strategy};
