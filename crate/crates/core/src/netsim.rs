//! Communication substrate: topologies, per-hop latency and flooding.
//!
//! Every gradient is flooded from its producer. A node accepts the first copy
//! of a gradient it sees and relays it to all neighbours except the one it came
//! from; later copies are dropped. On a connected graph this delivers every
//! gradient to every node exactly once.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::ledger::GradientId;
use crate::rng::{stream, stream_rng};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("topology needs at least one node")]
    NoNodes,
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    OutOfRange(usize, usize, usize),
    #[error("graph is disconnected: node {unreachable} cannot be reached from node {from}")]
    Disconnected { from: usize, unreachable: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TopologyKind {
    FullyConnected,
    Ring,
    Custom,
}

impl TopologyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TopologyKind::FullyConnected => "fully_connected",
            TopologyKind::Ring => "ring",
            TopologyKind::Custom => "custom",
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Undirected communication graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    kind: TopologyKind,
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbours: Vec<Vec<usize>>,
}

impl Topology {
    pub fn fully_connected(n: usize) -> Result<Self, TopologyError> {
        let edges = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        Self::build(TopologyKind::FullyConnected, n, edges)
    }

    /// Cycle `0-1-...-(n-1)-0`; a single edge for `n = 2` and no edges for `n = 1`.
    pub fn ring(n: usize) -> Result<Self, TopologyError> {
        let edges = match n {
            0 | 1 => Vec::new(),
            2 => vec![(0, 1)],
            _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        };
        Self::build(TopologyKind::Ring, n, edges)
    }

    pub fn custom(n: usize, edges: Vec<(usize, usize)>) -> Result<Self, TopologyError> {
        Self::build(TopologyKind::Custom, n, edges)
    }

    fn build(kind: TopologyKind, n: usize, edges: Vec<(usize, usize)>) -> Result<Self, TopologyError> {
        validate_topology(n, &edges)?;
        let mut neighbours = vec![Vec::new(); n];
        for &(a, b) in &edges {
            neighbours[a].push(b);
            neighbours[b].push(a);
        }
        neighbours.iter_mut().for_each(|v| v.sort_unstable());
        Ok(Self { kind, n, edges, neighbours })
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbours(&self, node: usize) -> &[usize] {
        &self.neighbours[node]
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        validate_topology(self.n, &self.edges)
    }
}

/// Checks node count, self-loops, duplicate edges and connectivity.
pub fn validate_topology(n: usize, edges: &[(usize, usize)]) -> Result<(), TopologyError> {
    if n == 0 {
        return Err(TopologyError::NoNodes);
    }
    let mut seen = HashSet::with_capacity(edges.len());
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a >= n || b >= n {
            return Err(TopologyError::OutOfRange(a, b, n));
        }
        if a == b {
            return Err(TopologyError::SelfLoop(a));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(TopologyError::DuplicateEdge(a, b));
        }
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut reached = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    reached[0] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !reached[v] {
                reached[v] = true;
                queue.push_back(v);
            }
        }
    }
    match reached.iter().position(|r| !r) {
        Some(unreachable) => Err(TopologyError::Disconnected { from: 0, unreachable }),
        None => Ok(()),
    }
}

/// Strictly positive delay distribution in simulated time units; used for
/// per-hop latency and for gradient computation times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayDistribution {
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
    Exponential { mean: f64 },
}

impl DelayDistribution {
    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            DelayDistribution::Constant(c) => c > 0.0 && c.is_finite(),
            DelayDistribution::Uniform { lo, hi } => lo > 0.0 && hi >= lo && hi.is_finite(),
            DelayDistribution::Exponential { mean } => mean > 0.0 && mean.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("delay parameters must be positive and finite: {self:?}"))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DelayDistribution::Constant(c) => c,
            DelayDistribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            DelayDistribution::Exponential { mean } => mean,
        }
    }

    /// Always strictly positive.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            DelayDistribution::Constant(c) => c,
            DelayDistribution::Uniform { lo, hi } => {
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            }
            DelayDistribution::Exponential { mean } => {
                let exp = Exp::new(1.0 / mean).expect("validated rate");
                loop {
                    let x: f64 = exp.sample(rng);
                    if x > 0.0 {
                        break x;
                    }
                }
            }
        }
    }
}

pub type LatencyModel = DelayDistribution;

/// A gradient as it travels over the network.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPacket {
    pub id: GradientId,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct InFlightMessage {
    pub packet: Arc<GradientPacket>,
    pub from: usize,
    pub to: usize,
    pub sent_at: f64,
    pub deliver_at: f64,
    /// Global send sequence number, the final tie-breaker between deliveries.
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reception {
    Accept,
    Duplicate,
}

/// Flooding network state: latency stream, send counter and per-node dedup sets.
#[derive(Debug, Clone)]
pub struct Network {
    topology: Topology,
    latency: LatencyModel,
    rng: ChaCha8Rng,
    seen: Vec<BTreeSet<GradientId>>,
    next_seq: u64,
    accepted: u64,
    duplicates: u64,
}

impl Network {
    pub fn new(topology: Topology, latency: LatencyModel, seed: u64) -> Self {
        let n = topology.n();
        Self {
            topology,
            latency,
            rng: stream_rng(seed, &[stream::NETWORK]),
            seen: vec![BTreeSet::new(); n],
            next_seq: 0,
            accepted: 0,
            duplicates: 0,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    fn send(&mut self, packet: &Arc<GradientPacket>, from: usize, to: usize, now: f64) -> InFlightMessage {
        let deliver_at = now + self.latency.sample(&mut self.rng);
        debug_assert!(deliver_at > now);
        let seq = self.next_seq;
        self.next_seq += 1;
        InFlightMessage { packet: Arc::clone(packet), from, to, sent_at: now, deliver_at, seq }
    }

    /// Origin marks the gradient as seen and sends one copy to each neighbour.
    pub fn disseminate(&mut self, origin: usize, packet: Arc<GradientPacket>, now: f64) -> Vec<InFlightMessage> {
        self.seen[origin].insert(packet.id);
        let targets = self.topology.neighbours(origin).to_vec();
        targets.into_iter().map(|to| self.send(&packet, origin, to, now)).collect()
    }

    /// First copy is accepted and relayed to every neighbour but the sender;
    /// any later copy is a duplicate and goes nowhere.
    pub fn on_receive(&mut self, node: usize, msg: &InFlightMessage) -> (Reception, Vec<InFlightMessage>) {
        debug_assert_eq!(msg.to, node);
        if !self.seen[node].insert(msg.packet.id) {
            self.duplicates += 1;
            return (Reception::Duplicate, Vec::new());
        }
        self.accepted += 1;
        let now = msg.deliver_at;
        let targets: Vec<usize> =
            self.topology.neighbours(node).iter().copied().filter(|&k| k != msg.from).collect();
        let relays = targets.into_iter().map(|to| self.send(&msg.packet, node, to, now)).collect();
        (Reception::Accept, relays)
    }

    pub fn has_seen(&self, node: usize, gid: &GradientId) -> bool {
        self.seen[node].contains(gid)
    }

    pub fn seen(&self, node: usize) -> &BTreeSet<GradientId> {
        &self.seen[node]
    }

    /// Accepted copies over the whole run, origin copies excluded.
    pub fn accepted_count(&self) -> u64 {
        self.accepted
    }

    pub fn duplicate_count(&self) -> u64 {
        self.duplicates
    }

    pub fn messages_sent(&self) -> u64 {
        self.next_seq
    }
}
