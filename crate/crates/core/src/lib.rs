//! Deterministic simulator and analysis toolkit for decentralized asynchronous
//! SGD (DASGD).
//!
//! Every worker runs the same loop: apply a gradient received from a peer if one
//! is waiting, otherwise compute a fresh stochastic gradient, apply it locally and
//! flood it to the network. Because all models start from the same point and use
//! one fixed learning rate, the set of gradient identities a model has applied
//! determines it completely, and model dissimilarity can be measured exactly as
//! the symmetric difference of two such sets.
//!
//! Layout:
//! - [`objective`]: stochastic objectives, their gradients and smoothness constants.
//! - [`ledger`]: gradient-set bookkeeping and tight/loose staleness.
//! - [`netsim`]: topologies, latency models and flooding with deduplication.
//! - [`engine`]: the discrete-event simulation plus synchronous and
//!   parameter-server baselines.
//! - [`theory`]: stepsize rules, convergence-rate bounds and topology predictions.

pub mod engine;
pub mod ledger;
pub mod linalg;
pub mod netsim;
pub mod objective;
pub mod rng;
pub mod theory;

pub use engine::{ComputeTimeModel, Mode, RunTrace, SimConfig, SimError};
pub use ledger::{GradientId, GradientSet, StalenessLedger, StalenessRecord, StalenessSummary};
pub use netsim::{LatencyModel, Topology, TopologyKind};
pub use objective::{ObjectiveSpec, ParamVector, SmoothnessConstants};
