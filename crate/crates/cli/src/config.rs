//! Experiment configuration: a TOML document with one table per concern.
//! Every field has a default, and an empty file describes the quadratic demo.
//!
//! ```toml
//! [run]
//! mode = "dasgd"            # dasgd | sync | centralized_asgd
//! seed = 1
//! replicas = 1
//! samples_per_node = 500
//! # eta = 0.05              # omitted: chosen from a pilot run's staleness
//! pilot_fraction = 0.1      # pilot length as a share of samples_per_node
//! stride = 1                # write every stride-th step to trace.csv
//!
//! [topology]
//! kind = "fully_connected"  # fully_connected | ring | custom
//! n = 4
//! # edges = [[0, 1], [1, 2]]  (custom only)
//!
//! [objective]
//! kind = "quadratic"        # quadratic | logistic
//! dim = 10
//!
//! [compute_time]
//! dist = "constant"         # constant (value) | uniform (lo, hi) | exponential (mean)
//! value = 1.0
//!
//! [latency]
//! dist = "constant"
//! value = 0.01
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use dasgd_core::engine::{ComputeTimeModel, Mode, SimConfig};
use dasgd_core::netsim::{DelayDistribution, Topology};
use dasgd_core::objective::dataset::read_csv;
use dasgd_core::objective::{ObjectiveSpec, ParamVector};
use dasgd_core::objective::Logistic;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Dasgd,
    Sync,
    CentralizedAsgd,
}

impl From<ModeName> for Mode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Dasgd => Mode::Dasgd,
            ModeName::Sync => Mode::Sync,
            ModeName::CentralizedAsgd => Mode::CentralizedAsgd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub mode: ModeName,
    pub seed: u64,
    pub replicas: u32,
    pub samples_per_node: u64,
    pub eta: Option<f64>,
    /// Share of the budget the stepsize pilot runs for when `eta` is omitted.
    pub pilot_fraction: f64,
    pub stride: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { mode: ModeName::Dasgd, seed: 1, replicas: 1, samples_per_node: 500, eta: None, pilot_fraction: 0.1, stride: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyName {
    FullyConnected,
    Ring,
    Custom,
}

impl fmt::Display for TopologyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyName::FullyConnected => "fully_connected",
            TopologyName::Ring => "ring",
            TopologyName::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    pub kind: TopologyName,
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

impl Default for TopologySection {
    fn default() -> Self {
        Self { kind: TopologyName::FullyConnected, n: 4, edges: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveName {
    Quadratic,
    Logistic,
}

/// Quadratic fields: `dim`, `min_eig`, `max_eig`, `offset_scale`, `noise_sigma`.
/// Logistic fields: `dim`, `rows`, `separation`, `ridge`, or `data` (CSV path).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveSection {
    pub kind: ObjectiveName,
    pub seed: u64,
    pub dim: usize,
    pub min_eig: f64,
    pub max_eig: f64,
    pub offset_scale: f64,
    pub noise_sigma: f64,
    pub rows: usize,
    pub separation: f64,
    pub ridge: f64,
    pub data: Option<PathBuf>,
    /// Starting point; zeros when empty.
    pub x0: Vec<f64>,
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        Self {
            kind: ObjectiveName::Quadratic,
            seed: 7,
            dim: 10,
            min_eig: 0.02,
            max_eig: 0.2,
            offset_scale: 0.5,
            noise_sigma: 0.0,
            rows: 500,
            separation: 2.0,
            ridge: 1e-3,
            data: None,
            x0: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistName {
    Constant,
    Uniform,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySection {
    pub dist: DistName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    /// Per-node multipliers; compute time only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub node_scale: Vec<f64>,
}

impl DelaySection {
    pub fn constant(value: f64) -> Self {
        Self { dist: DistName::Constant, value: Some(value), lo: None, hi: None, mean: None, node_scale: Vec::new() }
    }

    pub fn exponential(mean: f64) -> Self {
        Self { dist: DistName::Exponential, value: None, lo: None, hi: None, mean: Some(mean), node_scale: Vec::new() }
    }

    fn to_distribution(&self, section: &str) -> Result<DelayDistribution> {
        let need = |v: Option<f64>, field: &str| v.ok_or_else(|| anyhow!("{section}.{field}: required for dist = {:?}", self.dist));
        let d = match self.dist {
            DistName::Constant => DelayDistribution::Constant(need(self.value, "value")?),
            DistName::Uniform => DelayDistribution::Uniform { lo: need(self.lo, "lo")?, hi: need(self.hi, "hi")? },
            DistName::Exponential => DelayDistribution::Exponential { mean: need(self.mean, "mean")? },
        };
        d.validate().map_err(|e| anyhow!("{section}: {e}"))?;
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub topology: TopologySection,
    pub objective: ObjectiveSection,
    pub compute_time: DelaySection,
    pub latency: DelaySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run: RunSection::default(),
            topology: TopologySection::default(),
            objective: ObjectiveSection::default(),
            compute_time: DelaySection::constant(1.0),
            latency: DelaySection::constant(0.01),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, as lowercase hex.
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Field-level checks that do not need the objective to be built.
    pub fn check(&self) -> Result<()> {
        if self.run.replicas == 0 {
            bail!("run.replicas: must be >= 1");
        }
        if self.run.samples_per_node == 0 {
            bail!("run.samples_per_node: must be >= 1");
        }
        if self.run.stride == 0 {
            bail!("run.stride: must be >= 1");
        }
        if let Some(eta) = self.run.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                bail!("run.eta: must be positive and finite, got {eta}");
            }
        }
        if !(self.run.pilot_fraction > 0.0 && self.run.pilot_fraction <= 1.0) {
            bail!("run.pilot_fraction: must be in (0, 1], got {}", self.run.pilot_fraction);
        }
        if self.topology.n == 0 {
            bail!("topology.n: must be >= 1");
        }
        if self.topology.kind != TopologyName::Custom && !self.topology.edges.is_empty() {
            bail!("topology.edges: only allowed with kind = \"custom\"");
        }
        if self.objective.dim == 0 {
            bail!("objective.dim: must be >= 1");
        }
        if !self.objective.x0.is_empty() && self.objective.x0.len() != self.objective.dim {
            bail!("objective.x0: has {} entries, objective.dim is {}", self.objective.x0.len(), self.objective.dim);
        }
        if !(self.objective.noise_sigma >= 0.0 && self.objective.noise_sigma.is_finite()) {
            bail!("objective.noise_sigma: must be >= 0");
        }
        if !self.latency.node_scale.is_empty() {
            bail!("latency.node_scale: only compute_time takes per-node scales");
        }
        self.compute_time.to_distribution("compute_time")?;
        self.latency.to_distribution("latency")?;
        if !self.compute_time.node_scale.is_empty() && self.compute_time.node_scale.len() != self.topology.n {
            bail!(
                "compute_time.node_scale: has {} entries for topology.n = {}",
                self.compute_time.node_scale.len(),
                self.topology.n
            );
        }
        Ok(())
    }

    pub fn mode(&self) -> Mode {
        self.run.mode.into()
    }

    pub fn build_topology(&self) -> Result<Topology> {
        let t = &self.topology;
        let topo = match t.kind {
            TopologyName::FullyConnected => Topology::fully_connected(t.n),
            TopologyName::Ring => Topology::ring(t.n),
            TopologyName::Custom => Topology::custom(t.n, t.edges.iter().map(|e| (e[0], e[1])).collect()),
        };
        topo.map_err(|e| anyhow!("topology: {e}"))
    }

    pub fn build_objective(&self) -> Result<ObjectiveSpec> {
        let o = &self.objective;
        let spec = match (o.kind, &o.data) {
            (ObjectiveName::Quadratic, _) => {
                ObjectiveSpec::synthetic_quadratic(o.dim, o.min_eig, o.max_eig, o.offset_scale, o.noise_sigma, o.seed)
            }
            (ObjectiveName::Logistic, None) => {
                ObjectiveSpec::synthetic_logistic(o.rows, o.dim, o.separation, o.ridge, o.seed)
            }
            (ObjectiveName::Logistic, Some(path)) => {
                let file = std::fs::File::open(path)
                    .with_context(|| format!("objective.data: cannot open {}", path.display()))?;
                let ds = read_csv(file).map_err(|e| anyhow!("objective.data: {e}"))?;
                if ds.features.cols() != o.dim {
                    bail!("objective.data: has {} feature columns, objective.dim is {}", ds.features.cols(), o.dim);
                }
                Logistic::new(ds.features, ds.labels, o.ridge).map(ObjectiveSpec::Logistic)
            }
        };
        spec.map_err(|e| anyhow!("objective: {e}"))
    }

    pub fn x0(&self) -> Result<ParamVector> {
        if self.objective.x0.is_empty() {
            Ok(ParamVector::zeros(self.objective.dim))
        } else {
            ParamVector::new(self.objective.x0.clone()).map_err(|e| anyhow!("objective.x0: {e}"))
        }
    }

    /// Engine configuration for one replica with a resolved stepsize.
    pub fn sim_config(&self, objective: Arc<ObjectiveSpec>, eta: f64, seed: u64) -> Result<SimConfig> {
        let mut compute = ComputeTimeModel::uniform_nodes(self.compute_time.to_distribution("compute_time")?);
        compute.node_scale = self.compute_time.node_scale.clone();
        Ok(SimConfig {
            topology: self.build_topology()?,
            objective,
            x0: self.x0()?,
            eta,
            samples_per_node: self.run.samples_per_node,
            compute_time: compute,
            latency: self.latency.to_distribution("latency")?,
            seed,
        })
    }
}
