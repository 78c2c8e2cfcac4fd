//! Discrete-event execution of the DASGD worker loop, plus two baselines:
//! lock-step mini-batch SGD and a parameter-server ASGD emulation.
//!
//! Each worker repeats: if a received gradient is waiting, apply it (one per
//! iteration, zero simulated time); otherwise, if samples remain, spend one
//! compute-time draw producing a gradient, apply it locally and flood it.
//! Gradient computation blocks the worker, so deliveries that arrive mid-compute
//! wait in its inbox. A run ends when every budget is spent and every message
//! has been drained, which doubles as the final synchronization point.
//!
//! Simultaneous events are ordered by (time, deliveries before compute
//! completions, node id, scheduling sequence number).

pub mod analysis;
mod baselines;
mod dasgd;

use std::sync::Arc;

use thiserror::Error;

use crate::ledger::{EventLog, GradientId, GradientSet, LedgerError, LogEvent, StalenessRecord, StalenessSummary};
use crate::netsim::{DelayDistribution, LatencyModel, Topology, TopologyError};
use crate::objective::{ObjectiveError, ObjectiveSpec, ParamVector};

pub use analysis::{DescentReport, FinalAgreement};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("diverged: non-finite parameters at node {node}, step {step}, time {time} (eta = {eta})")]
    Diverged { eta: f64, node: usize, step: u64, time: f64 },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Which algorithm produced a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Dasgd,
    Sync,
    CentralizedAsgd,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Dasgd => "dasgd",
            Mode::Sync => "sync",
            Mode::CentralizedAsgd => "centralized_asgd",
        }
    }
}

/// Gradient computation time: one base distribution scaled per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputeTimeModel {
    pub base: DelayDistribution,
    /// Multiplier per node; empty means 1.0 everywhere.
    pub node_scale: Vec<f64>,
}

impl ComputeTimeModel {
    pub fn uniform_nodes(base: DelayDistribution) -> Self {
        Self { base, node_scale: Vec::new() }
    }

    pub fn scale(&self, node: usize) -> f64 {
        self.node_scale.get(node).copied().unwrap_or(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub topology: Topology,
    pub objective: Arc<ObjectiveSpec>,
    pub x0: ParamVector,
    pub eta: f64,
    /// Gradients each worker computes before it stops sampling.
    pub samples_per_node: u64,
    pub compute_time: ComputeTimeModel,
    pub latency: LatencyModel,
    pub seed: u64,
}

impl SimConfig {
    pub fn n(&self) -> usize {
        self.topology.n()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.topology.validate()?;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(SimError::InvalidConfig(format!("eta must be positive and finite, got {}", self.eta)));
        }
        if self.samples_per_node == 0 {
            return Err(SimError::InvalidConfig("samples_per_node must be >= 1".into()));
        }
        if self.x0.dim() != self.objective.dim() {
            return Err(SimError::InvalidConfig(format!(
                "x0 has dimension {}, objective has {}",
                self.x0.dim(),
                self.objective.dim()
            )));
        }
        self.compute_time.base.validate().map_err(SimError::InvalidConfig)?;
        self.latency.validate().map_err(SimError::InvalidConfig)?;
        if !self.compute_time.node_scale.is_empty() {
            if self.compute_time.node_scale.len() != self.n() {
                return Err(SimError::InvalidConfig(format!(
                    "node_scale has {} entries for {} nodes",
                    self.compute_time.node_scale.len(),
                    self.n()
                )));
            }
            if self.compute_time.node_scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                return Err(SimError::InvalidConfig("node_scale entries must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEventKind {
    Compute,
    Apply,
    Send,
    Deliver,
    Duplicate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    pub time: f64,
    pub node: usize,
    pub kind: TraceEventKind,
    pub gid: GradientId,
    /// Node's local step when the event happened.
    pub step: u64,
    /// Destination of a send, or sender of a delivery.
    pub peer: Option<usize>,
}

/// Instrumentation at one application: the model is sampled before the update,
/// so `loss` is `f(x^t)` and `grad_norm_sq` is `‖∇f(x^t)‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApplySample {
    pub time: f64,
    pub node: usize,
    pub step: u64,
    pub gid: GradientId,
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub tight: usize,
    pub loose: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub mode: Mode,
    pub n: usize,
    pub eta: f64,
    pub seed: u64,
    pub x0: ParamVector,
    pub events: Vec<TraceEvent>,
    pub samples: Vec<ApplySample>,
    pub records: Vec<StalenessRecord>,
    pub summary: Option<StalenessSummary>,
    /// Every computed gradient, in computation order.
    pub gradients: Vec<(GradientId, Vec<f64>)>,
    pub final_models: Vec<ParamVector>,
    pub final_sets: Vec<GradientSet>,
    /// Parameter-server mode only: server updates between fetch and apply, per record.
    pub delays: Vec<u64>,
    pub end_time: f64,
}

impl RunTrace {
    pub fn gradients_computed(&self) -> usize {
        self.gradients.len()
    }

    /// Gradients produced per unit of simulated time.
    pub fn throughput(&self) -> f64 {
        if self.end_time > 0.0 {
            self.gradients.len() as f64 / self.end_time
        } else {
            0.0
        }
    }

    /// Compute/apply history in the ledger's line format (DASGD traces only).
    pub fn event_log(&self) -> Option<EventLog> {
        if self.mode != Mode::Dasgd {
            return None;
        }
        let events = self
            .events
            .iter()
            .filter_map(|e| match e.kind {
                TraceEventKind::Compute => Some(LogEvent::Compute { node: e.node, step: e.step }),
                TraceEventKind::Apply => Some(LogEvent::Apply {
                    node: e.node,
                    step: e.step,
                    producer: e.gid.producer,
                    pstep: e.gid.step,
                }),
                _ => None,
            })
            .collect();
        Some(EventLog::new(events))
    }

    /// Per-node running average `Ψ_T = (1/(T+1)) Σ_{t≤T} ‖∇f(x^t)‖²`, indexed by `T`.
    pub fn psi_series(&self) -> Vec<Vec<f64>> {
        let nodes = self.samples.iter().map(|s| s.node + 1).max().unwrap_or(0);
        let mut per_node: Vec<Vec<(u64, f64)>> = vec![Vec::new(); nodes];
        for s in &self.samples {
            per_node[s.node].push((s.step, s.grad_norm_sq));
        }
        per_node
            .into_iter()
            .map(|mut v| {
                v.sort_by_key(|&(t, _)| t);
                let mut acc = 0.0;
                v.iter()
                    .enumerate()
                    .map(|(k, &(_, g))| {
                        acc += g;
                        acc / (k + 1) as f64
                    })
                    .collect()
            })
            .collect()
    }

    /// Largest final `Ψ_T` over nodes.
    pub fn final_psi(&self) -> f64 {
        self.psi_series().iter().filter_map(|s| s.last().copied()).fold(0.0, f64::max)
    }
}

/// Runs the decentralized asynchronous protocol.
pub fn run(config: &SimConfig) -> Result<RunTrace, SimError> {
    config.validate()?;
    dasgd::Simulation::new(config).run()
}

/// Lock-step mini-batch SGD: every round all nodes compute on the same model,
/// the gradients are averaged and applied once. A round lasts as long as its
/// slowest node.
pub fn run_sync_baseline(config: &SimConfig) -> Result<RunTrace, SimError> {
    config.validate()?;
    baselines::run_sync(config)
}

/// Parameter-server ASGD: workers fetch the server model, compute, and send the
/// gradient back; the server applies in arrival order and replies with its
/// current model. Each record's delay counts server updates since the fetch.
pub fn run_centralized_asgd(config: &SimConfig) -> Result<RunTrace, SimError> {
    config.validate()?;
    baselines::run_centralized(config)
}

pub fn run_mode(mode: Mode, config: &SimConfig) -> Result<RunTrace, SimError> {
    match mode {
        Mode::Dasgd => run(config),
        Mode::Sync => run_sync_baseline(config),
        Mode::CentralizedAsgd => run_centralized_asgd(config),
    }
}

/// Applies `x ← x − η g`, reporting divergence instead of storing non-finite values.
pub(crate) fn descend(
    x: &ParamVector,
    eta: f64,
    g: &[f64],
    node: usize,
    step: u64,
    time: f64,
) -> Result<ParamVector, SimError> {
    x.descend(eta, g).map_err(|_| SimError::Diverged { eta, node, step, time })
}

/// Loss and squared gradient norm at `x`; overflow counts as divergence.
pub(crate) fn instrument(
    objective: &ObjectiveSpec,
    x: &ParamVector,
    eta: f64,
    node: usize,
    step: u64,
    time: f64,
) -> Result<(f64, f64), SimError> {
    let diverged = |_| SimError::Diverged { eta, node, step, time };
    let loss = objective.loss(x).map_err(diverged)?;
    let grad = objective.full_gradient(x).map_err(diverged)?;
    let gn = crate::linalg::norm_sq(&grad);
    if !gn.is_finite() {
        return Err(SimError::Diverged { eta, node, step, time });
    }
    Ok((loss, gn))
}
