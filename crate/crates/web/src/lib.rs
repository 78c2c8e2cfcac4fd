//! Browser bindings for the simulator. Each export takes plain numbers or text
//! and returns a JSON string; errors come back as `{"error": "..."}` so the
//! page can show them inline.
//!
//! - [`simulate`]: run DASGD on the demo quadratic and report staleness, the
//!   topology prediction and the `Ψ_T` curve against its bound.
//! - [`bounds`]: stepsize rules, both rate bounds over `T` and iterations to ε.
//! - [`check_event_log`]: incremental vs brute-force staleness on a pasted log.

use std::sync::Arc;

use dasgd_core::engine::{self, ComputeTimeModel, SimConfig};
use dasgd_core::ledger::oracle::{check_log, Equivalence};
use dasgd_core::ledger::EventLog;
use dasgd_core::netsim::{DelayDistribution, Topology};
use dasgd_core::objective::{ObjectiveSpec, ParamVector};
use dasgd_core::theory::{
    iterations_to_epsilon, predict_topology_staleness, rate_bound, stepsize_bound_loose, stepsize_bound_tight,
    BoundInputs, RateKind, StalenessPrediction,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Longest run the page may request, in gradients per node.
const MAX_SAMPLES: u32 = 2000;
const MAX_NODES: u32 = 32;
/// Points kept per plotted curve.
const CURVE_POINTS: usize = 200;
const DIM: usize = 10;

#[derive(Serialize)]
struct ErrorReply {
    error: String,
}

fn reply<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v),
        Err(error) => serde_json::to_string(&ErrorReply { error }),
    }
    .expect("plain data serializes")
}

/// Evenly spaced indices into a series of length `len`, always keeping the last.
fn thin(len: usize) -> Vec<usize> {
    if len <= CURVE_POINTS {
        return (0..len).collect();
    }
    let mut idx: Vec<usize> = (0..CURVE_POINTS).map(|k| k * (len - 1) / (CURVE_POINTS - 1)).collect();
    idx.dedup();
    idx
}

#[derive(Serialize)]
pub struct Simulation {
    pub eta: f64,
    pub s_avg: f64,
    pub s_max: usize,
    pub shat_avg: f64,
    pub shat_max: usize,
    pub predicted_s_avg: Option<f64>,
    pub predicted_s_max: Option<f64>,
    pub end_time: f64,
    pub throughput: f64,
    /// `(T, worst-node Ψ_T, bound at T)`.
    pub psi: Vec<(u64, f64, f64)>,
    /// Count of applications per tight staleness size.
    pub histogram: Vec<u64>,
}

fn topology(kind: &str, n: usize) -> Result<Topology, String> {
    match kind {
        "fully_connected" => Topology::fully_connected(n),
        "ring" => Topology::ring(n),
        other => return Err(format!("unknown topology `{other}`")),
    }
    .map_err(|e| e.to_string())
}

/// Runs the demo quadratic (d = 10, σ = 0) with η at the tight stepsize bound
/// for the staleness this configuration produces.
pub fn run_simulation(
    kind: &str,
    n: u32,
    latency: f64,
    exponential_compute: bool,
    samples: u32,
    seed: u64,
) -> Result<Simulation, String> {
    if n == 0 || n > MAX_NODES {
        return Err(format!("n must be between 1 and {MAX_NODES}"));
    }
    if samples == 0 || samples > MAX_SAMPLES {
        return Err(format!("samples per node must be between 1 and {MAX_SAMPLES}"));
    }
    if !(latency > 0.0 && latency.is_finite()) {
        return Err("latency must be positive".into());
    }
    let objective = Arc::new(
        ObjectiveSpec::synthetic_quadratic(DIM, 0.02, 0.2, 0.5, 0.0, 7).map_err(|e| e.to_string())?,
    );
    let compute = if exponential_compute {
        DelayDistribution::Exponential { mean: 1.0 }
    } else {
        DelayDistribution::Constant(1.0)
    };
    let mut cfg = SimConfig {
        topology: topology(kind, n as usize)?,
        objective: Arc::clone(&objective),
        x0: ParamVector::zeros(DIM),
        // the event schedule does not depend on eta, so a tiny one measures staleness safely
        eta: 1e-12,
        samples_per_node: samples as u64,
        compute_time: ComputeTimeModel::uniform_nodes(compute),
        latency: DelayDistribution::Constant(latency),
        seed,
    };
    let pilot = engine::run(&cfg).map_err(|e| e.to_string())?;
    let s = pilot.summary.clone().ok_or("run produced no staleness summary")?;
    let l = objective.lipschitz_constant().map_err(|e| e.to_string())?;
    cfg.eta = stepsize_bound_tight(l, s.s_avg);
    let trace = engine::run(&cfg).map_err(|e| e.to_string())?;

    let mut q_sq = trace.samples.iter().map(|x| x.grad_norm_sq).fold(0.0, f64::max);
    for x in &trace.final_models {
        q_sq = q_sq.max(dasgd_core::linalg::norm_sq(&objective.full_gradient(x).map_err(|e| e.to_string())?));
    }
    let r0 = objective.loss(&cfg.x0).map_err(|e| e.to_string())? - objective.optimal_value().map_err(|e| e.to_string())?;
    let inputs = BoundInputs {
        l,
        sigma: 0.0,
        q: Some(q_sq.sqrt()),
        s_avg: s.s_avg,
        s_max: s.s_max as f64,
        shat_avg: s.shat_avg,
        shat_max: s.shat_max as f64,
        r0,
        eta: cfg.eta,
    };
    let series = trace.psi_series();
    let len = series.iter().map(Vec::len).max().unwrap_or(0);
    let psi = thin(len)
        .into_iter()
        .map(|t| {
            let worst = series.iter().filter_map(|v| v.get(t)).copied().fold(0.0, f64::max);
            let bound = rate_bound(&inputs, t as u64, RateKind::WithQ).unwrap_or(f64::NAN);
            (t as u64, worst, bound)
        })
        .collect();
    let mut histogram = vec![0u64; s.s_max + 1];
    for r in &trace.records {
        histogram[r.tight_size] += 1;
    }
    let (predicted_s_avg, predicted_s_max) = match predict_topology_staleness(cfg.topology.kind(), n as usize) {
        StalenessPrediction::Predicted { s_avg, s_max } => (Some(s_avg), Some(s_max)),
        StalenessPrediction::NoPrediction => (None, None),
    };
    Ok(Simulation {
        eta: cfg.eta,
        s_avg: s.s_avg,
        s_max: s.s_max,
        shat_avg: s.shat_avg,
        shat_max: s.shat_max,
        predicted_s_avg,
        predicted_s_max,
        end_time: trace.end_time,
        throughput: trace.throughput(),
        psi,
        histogram,
    })
}

#[derive(Serialize)]
pub struct Bounds {
    pub stepsize_tight: f64,
    pub stepsize_loose: f64,
    /// `(T, with-Q bound, no-Q bound)`; `null` where the stepsize rules it out.
    pub curve: Vec<(u64, Option<f64>, Option<f64>)>,
    pub iterations_with_q: Result<u64, String>,
    pub iterations_no_q: Result<u64, String>,
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_bounds(
    l: f64,
    sigma: f64,
    q: f64,
    s_avg: f64,
    s_max: f64,
    shat_avg: f64,
    shat_max: f64,
    r0: f64,
    eta: f64,
    epsilon: f64,
    horizon: u32,
) -> Result<Bounds, String> {
    let inputs = BoundInputs { l, sigma, q: Some(q), s_avg, s_max, shat_avg, shat_max, r0, eta };
    inputs.validate().map_err(|e| e.to_string())?;
    if horizon == 0 {
        return Err("horizon must be at least 1".into());
    }
    let curve = thin(horizon as usize)
        .into_iter()
        .map(|t| {
            let t = t as u64;
            (t, rate_bound(&inputs, t, RateKind::WithQ).ok(), rate_bound(&inputs, t, RateKind::NoQ).ok())
        })
        .collect();
    let iterations = |kind| iterations_to_epsilon(&inputs, epsilon, kind).map_err(|e| e.to_string());
    Ok(Bounds {
        stepsize_tight: stepsize_bound_tight(l, s_avg),
        stepsize_loose: stepsize_bound_loose(l, shat_avg, shat_max),
        curve,
        iterations_with_q: iterations(RateKind::WithQ),
        iterations_no_q: iterations(RateKind::NoQ),
    })
}

#[derive(Serialize)]
pub struct LogCheck {
    pub equivalent: bool,
    pub applications: usize,
    pub message: String,
}

pub fn check_log_text(text: &str) -> Result<LogCheck, String> {
    let log: EventLog = text.parse().map_err(|e| format!("{e}"))?;
    let applications = log.apply_count();
    let (equivalent, message) = match check_log(&log) {
        Ok(Equivalence::Equivalent { events }) => (true, format!("equivalent ({events} events)")),
        Ok(Equivalence::Mismatch { index, incremental, brute_force }) => {
            (false, format!("mismatch at application {index}: {incremental:?} vs {brute_force:?}"))
        }
        Ok(Equivalence::LengthMismatch { incremental, brute_force }) => {
            (false, format!("record counts differ: {incremental} vs {brute_force}"))
        }
        Err(e) => (false, e.to_string()),
    };
    Ok(LogCheck { equivalent, applications, message })
}

#[wasm_bindgen]
pub fn simulate(topology: &str, n: u32, latency: f64, exponential_compute: bool, samples: u32, seed: u32) -> String {
    reply(run_simulation(topology, n, latency, exponential_compute, samples, seed as u64))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn bounds(
    l: f64,
    sigma: f64,
    q: f64,
    s_avg: f64,
    s_max: f64,
    shat_avg: f64,
    shat_max: f64,
    r0: f64,
    eta: f64,
    epsilon: f64,
    horizon: u32,
) -> String {
    reply(evaluate_bounds(l, sigma, q, s_avg, s_max, shat_avg, shat_max, r0, eta, epsilon, horizon))
}

#[wasm_bindgen]
pub fn check_event_log(text: &str) -> String {
    reply(check_log_text(text))
}
