//! Two-timescale simulation: slots inside iterations, iterations inside
//! replications over independent random topologies.
//!
//! Each slot activates one transmitter/receiver pair. If a cooperator sits
//! in the relay region the transmission is assisted, the transmitter spends
//! less and the chosen relay pays for the second hop. Fitness only ever
//! decreases: an unassisted transmitter loses the saving it could have had,
//! a relay loses what it spends relaying. Between iterations the strategy
//! rule maps each node's fitness improvement to its next behaviour.

use std::iter::FromIterator;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Protocol, SimConfig, Traffic};
use crate::dense;
use crate::error::ConfigError;
use crate::geometry::{
    distance, in_relay_region, sample_topology, Architecture, Endpoint, Position, Topology,
};
use crate::strategies::{introduce_initial_cooperator, update_behavior, Strategy};

/// Environment variable capping replication workers.
pub const WORKERS_ENV: &str = "COOPNET_WORKERS";

/// Per-node cooperator flags.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BehaviorState {
    flags: Vec<bool>,
}

impl BehaviorState {
    pub fn uniform(m: usize, cooperate: bool) -> Self {
        BehaviorState {
            flags: vec![cooperate; m],
        }
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    #[inline]
    pub fn is_cooperator(&self, node: usize) -> bool {
        self.flags[node]
    }

    pub fn set(&mut self, node: usize, cooperate: bool) {
        self.flags[node] = cooperate;
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn cooperator_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn cooperator_ids(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }
}

impl FromIterator<bool> for BehaviorState {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        BehaviorState {
            flags: iter.into_iter().collect(),
        }
    }
}

impl From<Vec<bool>> for BehaviorState {
    fn from(flags: Vec<bool>) -> Self {
        BehaviorState { flags }
    }
}

/// Running fitness per node plus the per-iteration accumulations used by
/// the strategy rules. Starts at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessLedger {
    fitness: Vec<f64>,
    current: Vec<f64>,
    previous: Vec<f64>,
    completed: usize,
}

impl FitnessLedger {
    pub fn new(m: usize) -> Self {
        FitnessLedger {
            fitness: vec![0.0; m],
            current: vec![0.0; m],
            previous: vec![0.0; m],
            completed: 0,
        }
    }

    #[inline]
    pub fn apply(&mut self, node: usize, delta: f64) {
        debug_assert!(delta <= 0.0);
        self.fitness[node] += delta;
        self.current[node] += delta;
    }

    pub fn fitness(&self) -> &[f64] {
        &self.fitness
    }

    /// Fitness change accumulated so far in the running iteration.
    pub fn current_change(&self) -> &[f64] {
        &self.current
    }

    /// Fitness change over the last completed iteration.
    pub fn previous_change(&self) -> &[f64] {
        &self.previous
    }

    /// Number of iterations closed with [`FitnessLedger::close_iteration`].
    pub fn completed_iterations(&self) -> usize {
        self.completed
    }

    /// Ends the running iteration and returns its per-node fitness change.
    /// Running fitness carries over unchanged into the next iteration.
    pub fn close_iteration(&mut self) -> Vec<f64> {
        let m = self.current.len();
        let change = std::mem::replace(&mut self.current, vec![0.0; m]);
        self.previous.clone_from(&change);
        self.completed += 1;
        change
    }
}

/// Second difference of fitness: this iteration's change minus the last
/// one. Positive means the node lost less than before.
pub fn improvement(current: &[f64], previous: &[f64]) -> Vec<f64> {
    current.iter().zip(previous).map(|(c, p)| c - p).collect()
}

/// One transmission event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub tx: usize,
    pub rx: Endpoint,
    pub relay: Option<usize>,
    pub tx_energy: f64,
    pub relay_energy: f64,
    pub assisted: bool,
    /// Fitness change booked to the transmitter.
    pub tx_fitness_delta: f64,
}

/// Per-node indicator bits for a slot: transmitting, assisted by a
/// cooperator, inside the relay region of the active link, cooperating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IndicatorSet {
    pub tx_flag: bool,
    pub has_coop_neighbor: bool,
    pub in_range_of_active: bool,
    pub is_cooperator: bool,
}

/// Draws the active pair for a slot.
pub fn pick_pair<G: Rng + ?Sized>(topology: &Topology, rng: &mut G) -> (usize, Endpoint) {
    let m = topology.len();
    match topology.architecture {
        Architecture::AdHoc => {
            let tx = rng.random_range(0..m);
            let mut rx = rng.random_range(0..m - 1);
            if rx >= tx {
                rx += 1;
            }
            (tx, Endpoint::Node(rx))
        }
        Architecture::CentralSink => (rng.random_range(0..m), Endpoint::Sink),
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    id: u32,
    /// Distance to the transmitter, for protocol 1 selection.
    to_tx: f64,
    tx_cost: f64,
    relay_cost: f64,
}

#[derive(Debug, Clone)]
struct MinimalRoute {
    relay: Option<usize>,
    tx_cost: f64,
    relay_cost: f64,
}

/// A topology with every per-pair quantity the slot loop needs
/// precomputed: direct cost and the geometric relay candidates sorted by
/// distance to the receiver.
#[derive(Debug, Clone)]
pub struct Network {
    topology: Topology,
    nu: f64,
    path_loss_exp: f64,
    protocol: Protocol,
    direct_cost: Vec<f64>,
    offsets: Vec<usize>,
    candidates: Vec<Candidate>,
    minimal: Option<Vec<MinimalRoute>>,
}

impl Network {
    pub fn new(topology: Topology, config: &SimConfig) -> Result<Self, ConfigError> {
        let region = config.region()?;
        let alpha = region.path_loss_exp;
        let m = topology.len();
        let receivers: Vec<Endpoint> = match topology.architecture {
            Architecture::AdHoc => (0..m).map(Endpoint::Node).collect(),
            Architecture::CentralSink => vec![Endpoint::Sink],
        };
        let mut direct_cost = Vec::with_capacity(m * receivers.len());
        let mut offsets = Vec::with_capacity(m * receivers.len() + 1);
        let mut candidates = Vec::new();
        offsets.push(0);
        for tx in 0..m {
            let a = topology.nodes[tx];
            for &rx in &receivers {
                if rx == Endpoint::Node(tx) {
                    direct_cost.push(0.0);
                    offsets.push(candidates.len());
                    continue;
                }
                let b = topology.position(rx);
                direct_cost.push(distance(a, b).powf(alpha));
                let mut found: Vec<(f64, Candidate)> = (0..m)
                    .filter(|&c| c != tx && Endpoint::Node(c) != rx)
                    .filter(|&c| in_relay_region(a, b, topology.nodes[c], region.nu))
                    .map(|c| {
                        let p = topology.nodes[c];
                        let to_tx = distance(a, p);
                        let to_rx = distance(p, b);
                        let cand = Candidate {
                            id: c as u32,
                            to_tx,
                            tx_cost: to_tx.powf(alpha),
                            relay_cost: to_rx.powf(alpha),
                        };
                        (to_rx, cand)
                    })
                    .collect();
                found.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.id.cmp(&y.1.id)));
                candidates.extend(found.into_iter().map(|(_, c)| c));
                offsets.push(candidates.len());
            }
        }
        let minimal =
            (config.strategy == Strategy::Minimal).then(|| minimal_routes(&topology, alpha));
        Ok(Network {
            topology,
            nu: region.nu,
            path_loss_exp: alpha,
            protocol: config.protocol,
            direct_cost,
            offsets,
            candidates,
            minimal,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    #[inline]
    fn pair_index(&self, tx: usize, rx: Endpoint) -> usize {
        match rx {
            Endpoint::Node(j) => tx * self.topology.len() + j,
            Endpoint::Sink => tx,
        }
    }

    #[inline]
    fn candidates(&self, index: usize) -> &[Candidate] {
        &self.candidates[self.offsets[index]..self.offsets[index + 1]]
    }

    /// Direct-transmission energy `d_AB^alpha`.
    pub fn direct_cost(&self, tx: usize, rx: Endpoint) -> f64 {
        self.direct_cost[self.pair_index(tx, rx)]
    }

    /// Cooperators eligible for `tx -> rx`, nearest to the receiver first.
    pub fn eligible_relays(
        &self,
        behaviors: &BehaviorState,
        tx: usize,
        rx: Endpoint,
    ) -> Vec<usize> {
        self.candidates(self.pair_index(tx, rx))
            .iter()
            .map(|c| c.id as usize)
            .filter(|&c| behaviors.is_cooperator(c))
            .collect()
    }

    fn select(
        &self,
        behaviors: &BehaviorState,
        tx: usize,
        rx: Endpoint,
    ) -> Option<(usize, f64, f64)> {
        if let Some(routes) = &self.minimal {
            let route = &routes[tx];
            return route.relay.map(|c| (c, route.tx_cost, route.relay_cost));
        }
        let cands = self.candidates(self.pair_index(tx, rx));
        let direct = self.direct_cost(tx, rx);
        match self.protocol {
            Protocol::P2 => cands
                .iter()
                .find(|c| behaviors.is_cooperator(c.id as usize))
                .map(|c| {
                    (
                        c.id as usize,
                        self.nu.powf(self.path_loss_exp) * direct,
                        c.relay_cost,
                    )
                }),
            Protocol::P1 => cands
                .iter()
                .filter(|c| behaviors.is_cooperator(c.id as usize))
                .min_by(|x, y| x.to_tx.total_cmp(&y.to_tx).then(x.id.cmp(&y.id)))
                .map(|c| (c.id as usize, c.tx_cost, c.relay_cost)),
        }
    }

    /// Runs one slot: picks the relay, books energies and fitness changes.
    pub fn run_slot(&self, state: &mut NodeState, pair: (usize, Endpoint)) -> SlotOutcome {
        let (tx, rx) = pair;
        let direct = self.direct_cost(tx, rx);
        let selected = self.select(&state.behaviors, tx, rx);
        let outcome = match selected {
            Some((relay, tx_energy, relay_energy)) => SlotOutcome {
                tx,
                rx,
                relay: Some(relay),
                tx_energy,
                relay_energy,
                assisted: true,
                tx_fitness_delta: 0.0,
            },
            None => SlotOutcome {
                tx,
                rx,
                relay: None,
                tx_energy: direct,
                relay_energy: 0.0,
                assisted: false,
                tx_fitness_delta: -(1.0 - self.nu.powf(self.path_loss_exp)) * direct,
            },
        };
        state.ledger.apply(tx, outcome.tx_fitness_delta);
        state.energy[tx] += outcome.tx_energy;
        if let Some(relay) = outcome.relay {
            state.ledger.apply(relay, -outcome.relay_energy);
            state.energy[relay] += outcome.relay_energy;
        }
        outcome
    }

    /// Indicator bits of `node` for a slot that produced `outcome`.
    pub fn indicators(
        &self,
        behaviors: &BehaviorState,
        outcome: &SlotOutcome,
        node: usize,
    ) -> IndicatorSet {
        let a = self.topology.nodes[outcome.tx];
        let b = self.topology.position(outcome.rx);
        let is_endpoint = node == outcome.tx || Endpoint::Node(node) == outcome.rx;
        IndicatorSet {
            tx_flag: node == outcome.tx,
            has_coop_neighbor: node == outcome.tx && outcome.assisted,
            in_range_of_active: !is_endpoint
                && in_relay_region(a, b, self.topology.nodes[node], self.nu),
            is_cooperator: behaviors.is_cooperator(node),
        }
    }
}

/// Relay choice for MINIMAL routing: the node nearest to the point at
/// `y*(1)` of the way from the sink to the transmitter, or direct
/// transmission if relaying would cost more.
fn minimal_routes(topology: &Topology, alpha: f64) -> Vec<MinimalRoute> {
    let (y_unit, _) = dense::q_min(1.0, alpha).expect("alpha > 1 checked by config validation");
    let sink = topology.sink.unwrap_or(Position::ORIGIN);
    (0..topology.len())
        .map(|tx| {
            let a = topology.nodes[tx];
            let target = Position::new(
                sink.x + (a.x - sink.x) * y_unit,
                sink.y + (a.y - sink.y) * y_unit,
            );
            let direct = distance(a, sink).powf(alpha);
            let nearest = topology
                .nodes
                .iter()
                .enumerate()
                .filter(|&(c, _)| c != tx)
                .map(|(c, &p)| (distance(p, target), c))
                .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            let route = nearest.map(|(_, c)| {
                let p = topology.nodes[c];
                (c, distance(a, p).powf(alpha), distance(p, sink).powf(alpha))
            });
            match route {
                Some((c, tx_cost, relay_cost)) if tx_cost + relay_cost <= direct => MinimalRoute {
                    relay: Some(c),
                    tx_cost,
                    relay_cost,
                },
                _ => MinimalRoute {
                    relay: None,
                    tx_cost: direct,
                    relay_cost: 0.0,
                },
            }
        })
        .collect()
}

/// Mutable per-replication state.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub behaviors: BehaviorState,
    pub ledger: FitnessLedger,
    /// Energy consumed so far, per node.
    pub energy: Vec<f64>,
}

impl NodeState {
    pub fn new(behaviors: BehaviorState) -> Self {
        let m = behaviors.len();
        NodeState {
            behaviors,
            ledger: FitnessLedger::new(m),
            energy: vec![0.0; m],
        }
    }
}

/// Runs `slots` slots and closes the iteration, returning each node's
/// fitness change over it. `observe` sees every slot outcome.
pub fn run_iteration<G, F>(
    network: &Network,
    state: &mut NodeState,
    slots: usize,
    rng: &mut G,
    mut observe: F,
) -> Vec<f64>
where
    G: Rng + ?Sized,
    F: FnMut(&SlotOutcome),
{
    for _ in 0..slots {
        let pair = pick_pair(network.topology(), rng);
        let outcome = network.run_slot(state, pair);
        observe(&outcome);
    }
    state.ledger.close_iteration()
}

const STREAM_TOPOLOGY: u64 = 1;
const STREAM_PAIRS: u64 = 2;
const STREAM_SEED_COOPERATOR: u64 = 3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent random stream for `(seed, stream, replication, iteration)`.
/// The pair stream does not depend on the strategy, so every strategy sees
/// the same traffic at a given seed.
pub fn stream_rng(seed: u64, stream: u64, replication: u64, iteration: u64) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    for part in [stream, replication, iteration] {
        h = splitmix(h ^ part);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Topology used by replication `replication` of a run with `config`.
pub fn replication_topology(
    config: &SimConfig,
    replication: usize,
) -> Result<Topology, ConfigError> {
    let mut rng = stream_rng(config.seed, STREAM_TOPOLOGY, replication as u64, 0);
    sample_topology(config.m, config.radius, config.architecture, &mut rng)
}

fn pair_rng(config: &SimConfig, replication: usize, iteration: usize) -> ChaCha8Rng {
    let iteration = match config.traffic {
        Traffic::Repeated => 0,
        Traffic::Fresh => iteration as u64,
    };
    stream_rng(config.seed, STREAM_PAIRS, replication as u64, iteration)
}

/// Pair sequence seen during `iteration` of `replication`.
pub fn pair_sequence(
    config: &SimConfig,
    replication: usize,
    iteration: usize,
) -> Result<Vec<(usize, Endpoint)>, ConfigError> {
    let topology = replication_topology(config, replication)?;
    let mut rng = pair_rng(config, replication, iteration);
    Ok((0..config.slots)
        .map(|_| pick_pair(&topology, &mut rng))
        .collect())
}

/// What one replication contributes to a [`SimulationResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    /// Node distances from the disk centre.
    pub radii: Vec<f64>,
    /// Energy consumed per node per iteration.
    pub energy: Vec<f64>,
    /// Cooperators active during each iteration.
    pub coop_counts: Vec<u32>,
}

/// Runs one replication, calling `observe(iteration, outcome)` per slot.
pub fn run_replication<F>(
    config: &SimConfig,
    replication: usize,
    mut observe: F,
) -> Result<ReplicationSummary, ConfigError>
where
    F: FnMut(usize, &SlotOutcome),
{
    config.validate()?;
    let topology = replication_topology(config, replication)?;
    let network = Network::new(topology, config)?;
    let rule = config.rule();
    let m = config.m;
    let mut state = NodeState::new(BehaviorState::uniform(m, config.strategy.initial_flag()));
    let mut coop_counts = Vec::with_capacity(config.iterations);
    let mut last_change: Option<Vec<f64>> = None;

    for n in 0..config.iterations {
        coop_counts.push(state.behaviors.cooperator_count() as u32);
        let mut rng = pair_rng(config, replication, n);
        let change = run_iteration(&network, &mut state, config.slots, &mut rng, |o| {
            observe(n, o)
        });
        state.behaviors = match &last_change {
            None if matches!(config.strategy, Strategy::Tft | Strategy::Wsls) => {
                let mut seed_rng =
                    stream_rng(config.seed, STREAM_SEED_COOPERATOR, replication as u64, 0);
                introduce_initial_cooperator(
                    &state.behaviors,
                    config.placement,
                    network.topology(),
                    &mut seed_rng,
                )
            }
            None => state.behaviors.clone(),
            Some(prev) => update_behavior(&rule, &state.behaviors, &improvement(&change, prev)),
        };
        last_change = Some(change);
    }

    let iterations = config.iterations as f64;
    Ok(ReplicationSummary {
        radii: network.topology().node_radii(),
        energy: state.energy.iter().map(|e| e / iterations).collect(),
        coop_counts,
    })
}

/// Averaged outcome of all replications of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub config: SimConfig,
    pub replications: Vec<ReplicationSummary>,
}

impl SimulationResult {
    /// `(radius, energy)` for every node of every replication, in
    /// replication order.
    pub fn node_samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.replications
            .iter()
            .flat_map(|r| r.radii.iter().copied().zip(r.energy.iter().copied()))
    }

    /// Mean per-node energy per iteration.
    pub fn mean_energy(&self) -> f64 {
        let (sum, count) = self
            .node_samples()
            .fold((0.0, 0usize), |(s, c), (_, e)| (s + e, c + 1));
        sum / count as f64
    }

    /// Population standard deviation of per-node energy across nodes and
    /// replications.
    pub fn std_energy(&self) -> f64 {
        let mean = self.mean_energy();
        let (sum, count) = self.node_samples().fold((0.0, 0usize), |(s, c), (_, e)| {
            (s + (e - mean).powi(2), c + 1)
        });
        (sum / count as f64).sqrt()
    }

    /// Per-node energy, averaged over replications for each node id.
    pub fn mean_energy_by_node(&self) -> Vec<f64> {
        let m = self.config.m;
        let mut acc = vec![0.0; m];
        for rep in &self.replications {
            for (a, e) in acc.iter_mut().zip(&rep.energy) {
                *a += e;
            }
        }
        let reps = self.replications.len() as f64;
        acc.into_iter().map(|a| a / reps).collect()
    }

    /// Mean energy of nodes falling in each of `bins` equal-width radius
    /// bins over `[0, R]`, as `(bin centre, mean)`. Empty bins give NaN.
    pub fn radial_profile(&self, bins: usize) -> Vec<(f64, f64)> {
        let radius = self.config.radius;
        let width = radius / bins as f64;
        let mut sums = vec![0.0; bins];
        let mut counts = vec![0usize; bins];
        for (r, e) in self.node_samples() {
            let b = ((r / width) as usize).min(bins - 1);
            sums[b] += e;
            counts[b] += 1;
        }
        (0..bins)
            .map(|b| {
                let centre = (b as f64 + 0.5) * width;
                let mean = if counts[b] == 0 {
                    f64::NAN
                } else {
                    sums[b] / counts[b] as f64
                };
                (centre, mean)
            })
            .collect()
    }

    /// Cooperator fraction per iteration, averaged over replications.
    pub fn coop_fraction_series(&self) -> Vec<f64> {
        let m = self.config.m as f64;
        let reps = self.replications.len() as f64;
        (0..self.config.iterations)
            .map(|n| {
                self.replications
                    .iter()
                    .map(|r| r.coop_counts[n] as f64)
                    .sum::<f64>()
                    / (m * reps)
            })
            .collect()
    }

    /// Cooperator fraction in the final iteration of each replication.
    pub fn final_fractions(&self) -> Vec<f64> {
        let m = self.config.m as f64;
        self.replications
            .iter()
            .map(|r| *r.coop_counts.last().unwrap_or(&0) as f64 / m)
            .collect()
    }

    pub fn median_final_fraction(&self) -> f64 {
        median(&self.final_fractions())
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Worker count from `COOPNET_WORKERS`, else the machine's parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

pub fn run_simulation(config: &SimConfig) -> Result<SimulationResult, ConfigError> {
    run_simulation_with_workers(config, default_workers())
}

/// Runs all replications on up to `workers` threads. The result does not
/// depend on `workers`.
pub fn run_simulation_with_workers(
    config: &SimConfig,
    workers: usize,
) -> Result<SimulationResult, ConfigError> {
    config.validate()?;
    let run = || -> Result<Vec<ReplicationSummary>, ConfigError> {
        (0..config.replications)
            .into_par_iter()
            .map(|rep| run_replication(config, rep, |_, _| {}))
            .collect()
    };
    let replications = if workers <= 1 {
        (0..config.replications)
            .map(|rep| run_replication(config, rep, |_, _| {}))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| ConfigError::Combination(format!("cannot start worker pool: {e}")))?
            .install(run)?
    };
    Ok(SimulationResult {
        config: config.clone(),
        replications,
    })
}
