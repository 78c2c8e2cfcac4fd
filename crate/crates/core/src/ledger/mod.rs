//! Gradient-set bookkeeping and staleness measurement.
//!
//! A model is identified with the set of gradient identities it has applied
//! since the shared initial point. When model `i` at step `t` applies a gradient
//! produced by model `j` at step `s`, the staleness of that application is the
//! symmetric difference between `i`'s set and the set `j` held when it computed
//! the gradient. The loose variant additionally folds in, recursively, the
//! staleness against the producer snapshots of every gradient `j` had that `i`
//! lacks.
//!
//! Two independent implementations live here: [`StalenessLedger`] maintains
//! dense bitsets incrementally during a run, while [`tight_staleness`] and
//! [`loose_staleness`] work on ordered sets from scratch and back the
//! brute-force replay in [`oracle`].

mod bitset;
pub mod eventlog;
pub mod oracle;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

pub use bitset::DenseSet;
pub use eventlog::{EventLog, LogEvent};

/// Identity of one computed gradient: who produced it and at which local step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GradientId {
    pub producer: usize,
    pub step: u64,
}

impl GradientId {
    pub fn new(producer: usize, step: u64) -> Self {
        Self { producer, step }
    }
}

impl fmt::Display for GradientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g[{}@{}]", self.producer, self.step)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("protocol violation: node {applier} already applied {gid}")]
    DuplicateApplication { applier: usize, gid: GradientId },
    #[error("gradient {0} was computed twice")]
    DuplicateGradient(GradientId),
    #[error("gradient {0} applied before it was computed")]
    UnknownGradient(GradientId),
    #[error("node {node} is at step {expected}, event claims step {got}")]
    StepMismatch { node: usize, expected: u64, got: u64 },
    #[error("no causal snapshot for {0}")]
    MissingSnapshot(GradientId),
    #[error("ledger holds no application records")]
    Empty,
}

/// Ordered set of gradient identities; iteration follows canonical id order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GradientSet(BTreeSet<GradientId>);

impl GradientSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, gid: &GradientId) -> bool {
        self.0.contains(gid)
    }

    pub fn insert(&mut self, gid: GradientId) -> bool {
        self.0.insert(gid)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &GradientId> {
        self.0.iter()
    }

    pub fn is_superset(&self, other: &GradientSet) -> bool {
        self.0.is_superset(&other.0)
    }

    fn difference<'a>(&'a self, other: &'a GradientSet) -> impl Iterator<Item = &'a GradientId> + 'a {
        self.0.difference(&other.0)
    }

    fn extend_from(&mut self, other: &GradientSet) -> bool {
        let before = self.0.len();
        self.0.extend(other.0.iter().copied());
        self.0.len() > before
    }
}

impl FromIterator<GradientId> for GradientSet {
    fn from_iter<I: IntoIterator<Item = GradientId>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// For each computed gradient, the producer's gradient set at computation time.
pub type CausalSnapshot = HashMap<GradientId, GradientSet>;

/// `(a \ b) ∪ (b \ a)`
pub fn tight_staleness(a: &GradientSet, b: &GradientSet) -> GradientSet {
    GradientSet(a.0.symmetric_difference(&b.0).copied().collect())
}

/// Loose staleness between an applier set and a producer set.
///
/// Evaluated by plain fixed-point iteration: every snapshot reachable through
/// gradients missing from `i_set` starts at its own symmetric difference with
/// `i_set`, and each pass unions in the current value of every snapshot it
/// depends on, until no set grows.
pub fn loose_staleness(
    snapshots: &CausalSnapshot,
    i_set: &GradientSet,
    j_set: &GradientSet,
) -> Result<GradientSet, LedgerError> {
    let snap = |g: &GradientId| snapshots.get(g).ok_or(LedgerError::MissingSnapshot(*g));

    // Gradients whose snapshots the recursion reaches.
    let mut reachable: BTreeSet<GradientId> = j_set.difference(i_set).copied().collect();
    let mut frontier: Vec<GradientId> = reachable.iter().copied().collect();
    while let Some(g) = frontier.pop() {
        for h in snap(&g)?.difference(i_set) {
            if reachable.insert(*h) {
                frontier.push(*h);
            }
        }
    }

    let mut values: HashMap<GradientId, GradientSet> = HashMap::with_capacity(reachable.len());
    for g in &reachable {
        values.insert(*g, tight_staleness(i_set, snap(g)?));
    }
    loop {
        let mut grew = false;
        for g in &reachable {
            let deps: Vec<GradientId> = snap(g)?.difference(i_set).copied().collect();
            for h in deps {
                let add = values[&h].clone();
                grew |= values.get_mut(g).expect("reachable").extend_from(&add);
            }
        }
        if !grew {
            break;
        }
    }

    let mut result = tight_staleness(i_set, j_set);
    for g in j_set.difference(i_set) {
        result.extend_from(&values[g]);
    }
    Ok(result)
}

/// Staleness of one application event: node `applier` at step `applier_step`
/// applying the gradient computed by `producer` at `producer_step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StalenessRecord {
    pub applier: usize,
    pub applier_step: u64,
    pub producer: usize,
    pub producer_step: u64,
    pub tight_size: usize,
    pub loose_size: usize,
}

impl StalenessRecord {
    pub fn gid(&self) -> GradientId {
        GradientId::new(self.producer, self.producer_step)
    }
}

/// Worst-node average and global maximum of per-application staleness.
#[derive(Debug, Clone, PartialEq)]
pub struct StalenessSummary {
    pub s_avg: f64,
    pub s_max: usize,
    pub shat_avg: f64,
    pub shat_max: usize,
    /// Applications per node; node `i` has records at steps `0..applications[i]`.
    pub applications: Vec<u64>,
}

impl StalenessSummary {
    /// Largest per-node step counter `T = max_i (applications_i − 1)`.
    pub fn max_step(&self) -> u64 {
        self.applications.iter().copied().max().unwrap_or(0).saturating_sub(1)
    }

    /// Summarizes an arbitrary record list (any order).
    pub fn from_records(records: &[StalenessRecord]) -> Result<Self, LedgerError> {
        if records.is_empty() {
            return Err(LedgerError::Empty);
        }
        let n = records.iter().map(|r| r.applier).max().unwrap_or(0) + 1;
        let mut tight = vec![0u64; n];
        let mut loose = vec![0u64; n];
        let mut count = vec![0u64; n];
        let (mut s_max, mut shat_max) = (0, 0);
        for r in records {
            tight[r.applier] += r.tight_size as u64;
            loose[r.applier] += r.loose_size as u64;
            count[r.applier] += 1;
            s_max = s_max.max(r.tight_size);
            shat_max = shat_max.max(r.loose_size);
        }
        let worst = |sums: &[u64]| {
            sums.iter()
                .zip(&count)
                .filter(|(_, &c)| c > 0)
                .map(|(&s, &c)| s as f64 / c as f64)
                .fold(0.0, f64::max)
        };
        Ok(Self { s_avg: worst(&tight), s_max, shat_avg: worst(&loose), shat_max, applications: count })
    }
}

/// Incremental staleness ledger backed by dense bitsets.
///
/// Gradients get dense indices in registration order. A gradient's snapshot can
/// only contain gradients registered before it, so snapshot bitsets stay short.
#[derive(Debug, Clone, Default)]
pub struct StalenessLedger {
    index: HashMap<GradientId, usize>,
    ids: Vec<GradientId>,
    snapshots: Vec<DenseSet>,
    sets: Vec<DenseSet>,
    steps: Vec<u64>,
    records: Vec<StalenessRecord>,
}

impl StalenessLedger {
    pub fn new(nodes: usize) -> Self {
        Self { sets: vec![DenseSet::new(); nodes], steps: vec![0; nodes], ..Self::default() }
    }

    fn ensure_node(&mut self, node: usize) {
        if node >= self.sets.len() {
            self.sets.resize(node + 1, DenseSet::new());
            self.steps.resize(node + 1, 0);
        }
    }

    pub fn nodes(&self) -> usize {
        self.sets.len()
    }

    pub fn step(&self, node: usize) -> u64 {
        self.steps.get(node).copied().unwrap_or(0)
    }

    pub fn gradient_count(&self) -> usize {
        self.ids.len()
    }

    pub fn dense_index(&self, gid: &GradientId) -> Option<usize> {
        self.index.get(gid).copied()
    }

    pub fn gradient_id(&self, idx: usize) -> GradientId {
        self.ids[idx]
    }

    /// Registers `gid` as computed by its producer right now: the snapshot is
    /// the producer's current set, and `gid.step` must equal its step counter.
    pub fn register_gradient(&mut self, gid: GradientId) -> Result<usize, LedgerError> {
        self.ensure_node(gid.producer);
        let expected = self.steps[gid.producer];
        if gid.step != expected {
            return Err(LedgerError::StepMismatch { node: gid.producer, expected, got: gid.step });
        }
        let snapshot = self.sets[gid.producer].clone();
        self.register_with_snapshot(gid, snapshot)
    }

    /// Registers `gid` with an explicit snapshot, for producers whose model is
    /// not tracked by this ledger (parameter-server workers).
    pub fn register_with_snapshot(&mut self, gid: GradientId, snapshot: DenseSet) -> Result<usize, LedgerError> {
        if self.index.contains_key(&gid) {
            return Err(LedgerError::DuplicateGradient(gid));
        }
        let idx = self.ids.len();
        self.index.insert(gid, idx);
        self.ids.push(gid);
        self.snapshots.push(snapshot);
        Ok(idx)
    }

    /// Current gradient set of `node` as a bitset over dense indices.
    pub fn dense_set(&self, node: usize) -> &DenseSet {
        &self.sets[node]
    }

    pub fn dense_snapshot(&self, idx: usize) -> &DenseSet {
        &self.snapshots[idx]
    }

    /// Node `applier`, currently at `applier_step`, applies `gid`. Staleness is
    /// measured against the applier's set before insertion.
    pub fn record_application(
        &mut self,
        applier: usize,
        applier_step: u64,
        gid: GradientId,
    ) -> Result<StalenessRecord, LedgerError> {
        let idx = *self.index.get(&gid).ok_or(LedgerError::UnknownGradient(gid))?;
        self.ensure_node(applier);
        let expected = self.steps[applier];
        if applier_step != expected {
            return Err(LedgerError::StepMismatch { node: applier, expected, got: applier_step });
        }
        if self.sets[applier].contains(idx) {
            return Err(LedgerError::DuplicateApplication { applier, gid });
        }
        let current = &self.sets[applier];
        let producer_set = &self.snapshots[idx];
        let tight_size = current.symmetric_difference_len(producer_set);
        let loose_size = self.loose_set(current, producer_set).len();
        let record = StalenessRecord {
            applier,
            applier_step,
            producer: gid.producer,
            producer_step: gid.step,
            tight_size,
            loose_size,
        };
        self.sets[applier].insert(idx);
        self.steps[applier] += 1;
        self.records.push(record);
        Ok(record)
    }

    /// Loose staleness by memoized traversal: every snapshot reachable through a
    /// gradient absent from `current` is visited once and its symmetric
    /// difference with `current` is unioned into the result.
    fn loose_set(&self, current: &DenseSet, producer_set: &DenseSet) -> DenseSet {
        let mut result = DenseSet::new();
        result.union_symmetric_difference(current, producer_set);
        let mut visited = DenseSet::new();
        let mut stack: Vec<usize> = producer_set.difference(current).collect();
        for &g in &stack {
            visited.insert(g);
        }
        while let Some(g) = stack.pop() {
            let snap = &self.snapshots[g];
            result.union_symmetric_difference(current, snap);
            for h in snap.difference(current) {
                if visited.insert(h) {
                    stack.push(h);
                }
            }
        }
        result
    }

    pub fn records(&self) -> &[StalenessRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<StalenessRecord> {
        self.records
    }

    pub fn summarize(&self) -> Result<StalenessSummary, LedgerError> {
        let mut summary = StalenessSummary::from_records(&self.records)?;
        summary.applications.resize(self.sets.len(), 0);
        Ok(summary)
    }

    /// Materialized gradient set of `node`.
    pub fn gradient_set(&self, node: usize) -> GradientSet {
        self.sets[node].iter().map(|i| self.ids[i]).collect()
    }

    /// Materialized producer snapshot of `gid`.
    pub fn snapshot(&self, gid: &GradientId) -> Option<GradientSet> {
        self.index.get(gid).map(|&i| self.snapshots[i].iter().map(|k| self.ids[k]).collect())
    }

    /// Replays an event log through the incremental path.
    pub fn replay(log: &EventLog) -> Result<Self, LedgerError> {
        let mut ledger = Self::new(log.node_count());
        for ev in log.events() {
            match *ev {
                LogEvent::Compute { node, step } => {
                    ledger.register_gradient(GradientId::new(node, step))?;
                }
                LogEvent::Apply { node, step, producer, pstep } => {
                    ledger.record_application(node, step, GradientId::new(producer, pstep))?;
                }
            }
        }
        Ok(ledger)
    }
}
