//! `sweep`: one run directory per (axis value, replica) plus an aggregated `sweep.csv`.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{anyhow, Result};

use crate::config::{ExperimentConfig, TopologyName};
use crate::output::fmt_sig;
use crate::run::{execute_all, Job, JobResult, PreparedObjective};
use crate::{input_error, DivergenceError, InputError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    N,
    Topology,
    Eta,
    Sigma,
}

impl std::str::FromStr for Axis {
    type Err = InputError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "n" => Ok(Axis::N),
            "topology" => Ok(Axis::Topology),
            "eta" => Ok(Axis::Eta),
            "sigma" => Ok(Axis::Sigma),
            other => Err(InputError(format!("--axis: expected n | topology | eta | sigma, got `{other}`"))),
        }
    }
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::N => "n",
            Axis::Topology => "topology",
            Axis::Eta => "eta",
            Axis::Sigma => "sigma",
        }
    }

    /// Copy of `base` with this axis set to `value`.
    pub fn apply(&self, base: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let bad = |what: &str| input_error(anyhow!("--values: `{value}` is not a valid {what} for axis {}", self.name()));
        let mut cfg = base.clone();
        match self {
            Axis::N => cfg.topology.n = value.parse().map_err(|_| bad("node count"))?,
            Axis::Topology => {
                cfg.topology.kind = match value {
                    "fully_connected" => TopologyName::FullyConnected,
                    "ring" => TopologyName::Ring,
                    _ => return Err(bad("topology (fully_connected | ring)")),
                }
            }
            Axis::Eta => cfg.run.eta = Some(value.parse().map_err(|_| bad("stepsize"))?),
            Axis::Sigma => cfg.objective.noise_sigma = value.parse().map_err(|_| bad("noise level"))?,
        }
        cfg.check().map_err(input_error)?;
        Ok(cfg)
    }
}

/// Aggregate over the replicas of one axis value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: String,
    pub completed: usize,
    pub diverged: usize,
    pub mean_final_psi: f64,
    pub std_final_psi: f64,
    pub mean_s_avg: f64,
    pub std_s_avg: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64 } else { 0.0 };
    (mean, var.sqrt())
}

pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
    pub divergences: Vec<DivergenceError>,
}

pub fn sweep_command(base: &ExperimentConfig, axis: Axis, values: &[String], out: &Path) -> Result<SweepOutcome> {
    if values.is_empty() {
        return Err(InputError("--values: at least one value is required".into()).into());
    }
    let configs = values.iter().map(|v| axis.apply(base, v)).collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out)?;
    let mut objectives: HashMap<String, PreparedObjective> = HashMap::new();
    let mut jobs = Vec::new();
    for (value, cfg) in values.iter().zip(&configs) {
        let key = toml::to_string(&cfg.objective)?;
        let objective = match objectives.get(&key) {
            Some(o) => o.clone(),
            None => {
                let o = PreparedObjective::build(cfg)?;
                objectives.insert(key, o.clone());
                o
            }
        };
        for k in 0..cfg.run.replicas {
            let point = format!("{}={value}", axis.name());
            jobs.push(Job {
                config: cfg.clone(),
                objective: objective.clone(),
                replica: k,
                run_id: format!("{point}/replica-{k}"),
                dir: out.join(&point).join(format!("replica-{k}")),
            });
        }
    }
    let results = execute_all(&jobs)?;
    let mut by_value: HashMap<&str, (Vec<JobResult>, usize)> = HashMap::new();
    let mut divergences = Vec::new();
    for (job, res) in jobs.iter().zip(results) {
        let value = &values[configs.iter().position(|c| c == &job.config).expect("job config is listed")];
        let entry = by_value.entry(value.as_str()).or_default();
        match res {
            Ok(r) => entry.0.push(r),
            Err(e) => {
                divergences.push(e.downcast::<DivergenceError>()?);
                entry.1 += 1;
            }
        }
    }
    let mut points = Vec::new();
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    w.write_record([
        "axis",
        "value",
        "replicas",
        "completed",
        "diverged",
        "mean_final_psi",
        "std_final_psi",
        "mean_s_avg",
        "std_s_avg",
    ])?;
    for value in values {
        let (done, diverged) = by_value.remove(value.as_str()).unwrap_or_default();
        let psi: Vec<f64> = done.iter().map(|r| r.final_psi).collect();
        let s: Vec<f64> = done.iter().map(|r| r.s_avg).collect();
        let (mean_final_psi, std_final_psi) = mean_std(&psi);
        let (mean_s_avg, std_s_avg) = mean_std(&s);
        let fmt = |v: f64| if v.is_nan() { String::new() } else { fmt_sig(v) };
        w.write_record([
            axis.name().to_string(),
            value.clone(),
            (done.len() + diverged).to_string(),
            done.len().to_string(),
            diverged.to_string(),
            fmt(mean_final_psi),
            fmt(std_final_psi),
            fmt(mean_s_avg),
            fmt(std_s_avg),
        ])?;
        points.push(SweepPoint {
            value: value.clone(),
            completed: done.len(),
            diverged,
            mean_final_psi,
            std_final_psi,
            mean_s_avg,
            std_s_avg,
        });
    }
    w.flush()?;
    Ok(SweepOutcome { points, divergences })
}
