//! Post-run checks computed from a finished trace: final agreement between
//! nodes, canonical model reconstruction, and the per-event descent inequality.

use std::collections::{BTreeMap, HashMap};

use super::{instrument, ApplySample, Mode, RunTrace, SimError, TraceEvent, TraceEventKind};
use crate::ledger::{tight_staleness, EventLog, GradientId, GradientSet, LogEvent, StalenessLedger};
use crate::linalg::{norm, norm_sq, sub};
use crate::objective::{ObjectiveSpec, ParamVector};
use crate::rng::gradient_seed;

/// How closely the nodes of a DASGD run agree after the final drain.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalAgreement {
    /// Every node ended with the same gradient set.
    pub identical_sets: bool,
    /// Every node applied exactly the run-wide number of computed gradients.
    pub step_accounting: bool,
    pub max_pairwise_distance: f64,
    pub max_norm: f64,
    /// `x⁰ − η Σ G` summed in canonical gradient order is bit-identical across nodes.
    pub reconstructions_identical: bool,
}

impl FinalAgreement {
    /// Online models within `rel_tol·(1 + max‖x‖)` of each other.
    pub fn within(&self, rel_tol: f64) -> bool {
        self.max_pairwise_distance <= rel_tol * (1.0 + self.max_norm)
    }

    pub fn holds(&self) -> bool {
        self.identical_sets && self.step_accounting && self.reconstructions_identical && self.within(1e-9)
    }
}

fn gradient_table(trace: &RunTrace) -> HashMap<GradientId, &[f64]> {
    trace.gradients.iter().map(|(gid, v)| (*gid, v.as_slice())).collect()
}

/// `x⁰ − η Σ_{g ∈ set} g`, accumulating the sum in canonical gradient order.
pub fn reconstruct_model(trace: &RunTrace, set: &GradientSet) -> Result<Vec<f64>, SimError> {
    let table = gradient_table(trace);
    let mut sum = vec![0.0; trace.x0.dim()];
    for gid in set.iter() {
        let g = table
            .get(gid)
            .ok_or_else(|| SimError::InvalidConfig(format!("trace has no vector for {gid}")))?;
        for (s, v) in sum.iter_mut().zip(g.iter()) {
            *s += v;
        }
    }
    Ok(trace.x0.as_slice().iter().zip(&sum).map(|(x, s)| x - trace.eta * s).collect())
}

pub fn final_agreement(trace: &RunTrace) -> Result<FinalAgreement, SimError> {
    let total = trace.gradients.len() as u64;
    let identical_sets = trace.final_sets.windows(2).all(|w| w[0] == w[1]);
    let step_accounting = match &trace.summary {
        Some(s) => trace.mode != Mode::Dasgd || s.applications.iter().all(|&a| a == total),
        None => true,
    };
    let mut max_pairwise_distance: f64 = 0.0;
    for (a, xa) in trace.final_models.iter().enumerate() {
        for xb in &trace.final_models[a + 1..] {
            max_pairwise_distance = max_pairwise_distance.max(norm(&sub(xa.as_slice(), xb.as_slice())));
        }
    }
    let max_norm = trace.final_models.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let rebuilt = trace.final_sets.iter().map(|s| reconstruct_model(trace, s)).collect::<Result<Vec<_>, _>>()?;
    let reconstructions_identical = rebuilt.windows(2).all(|w| {
        w[0].iter().zip(&w[1]).all(|(a, b)| a.to_bits() == b.to_bits())
    });
    Ok(FinalAgreement { identical_sets, step_accounting, max_pairwise_distance, max_norm, reconstructions_identical })
}

/// Outcome of checking `f(x^{t+1}) ≤ f(x^t) − (η/2)‖∇f(x^t)‖² + (ηL²/2)‖Δ‖²` at
/// every application, with `Δ = η Σ_{g∈S} |g|` over the tight staleness set `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentReport {
    pub checked: usize,
    pub violations: usize,
    /// Smallest `rhs − lhs` seen (negative means a violation).
    pub worst_margin: f64,
    /// Index into the apply sequence of the first violation.
    pub first_violation: Option<usize>,
    /// The independent model replay reproduced the trace's final models exactly.
    pub replay_matches: bool,
}

impl DescentReport {
    pub fn holds(&self) -> bool {
        self.violations == 0 && self.replay_matches
    }
}

/// Replays a DASGD trace with ordered sets and plain vector arithmetic, checking
/// the descent inequality at each application. Only meaningful without gradient
/// noise; `l` is the smoothness constant.
pub fn descent_lemma_check(trace: &RunTrace, objective: &ObjectiveSpec, l: f64) -> Result<DescentReport, SimError> {
    let log = trace
        .event_log()
        .ok_or_else(|| SimError::InvalidConfig("descent check needs a DASGD trace".into()))?;
    let table = gradient_table(trace);
    let eta = trace.eta;
    let mut sets: BTreeMap<usize, GradientSet> = BTreeMap::new();
    let mut snapshots: HashMap<GradientId, GradientSet> = HashMap::new();
    let mut models: Vec<Vec<f64>> = vec![trace.x0.as_slice().to_vec(); trace.n];
    let mut report =
        DescentReport { checked: 0, violations: 0, worst_margin: f64::INFINITY, first_violation: None, replay_matches: false };

    for ev in log.events() {
        match *ev {
            LogEvent::Compute { node, step } => {
                snapshots.insert(GradientId::new(node, step), sets.entry(node).or_default().clone());
            }
            LogEvent::Apply { node, producer, pstep, .. } => {
                let gid = GradientId::new(producer, pstep);
                let current = sets.entry(node).or_default();
                let snap = snapshots.get(&gid).ok_or_else(|| SimError::InvalidConfig(format!("no snapshot for {gid}")))?;
                let stale = tight_staleness(current, snap);
                let mut delta = vec![0.0; models[node].len()];
                for s in stale.iter() {
                    for (d, v) in delta.iter_mut().zip(table[s].iter()) {
                        *d += eta * v.abs();
                    }
                }
                let x = &models[node];
                let g = table[&gid];
                let next: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - eta * gi).collect();
                let xt = ParamVector::new(x.clone())?;
                let xn = ParamVector::new(next.clone())?;
                let f0 = objective.loss(&xt)?;
                let f1 = objective.loss(&xn)?;
                let grad_sq = norm_sq(&objective.full_gradient(&xt)?);
                let rhs = f0 - 0.5 * eta * grad_sq + 0.5 * eta * l * l * norm_sq(&delta);
                // float slack relative to the magnitudes involved
                let slack = 1e-12 * (1.0 + f0.abs() + f1.abs());
                let margin = rhs - f1;
                report.worst_margin = report.worst_margin.min(margin);
                if margin < -slack {
                    report.violations += 1;
                    report.first_violation.get_or_insert(report.checked);
                }
                report.checked += 1;
                current.insert(gid);
                models[node] = next;
            }
        }
    }
    report.replay_matches = models.len() == trace.final_models.len()
        && models.iter().zip(&trace.final_models).all(|(a, b)| a.as_slice() == b.as_slice());
    Ok(report)
}

/// Position (1-based count of applications) at which a node's running `Ψ_T`
/// first drops to `target`, maximized over nodes; `None` if some node never does.
pub fn iterations_to_psi(trace: &RunTrace, target: f64) -> Option<u64> {
    let mut worst = 0;
    for series in trace.psi_series() {
        let k = series.iter().position(|&p| p <= target)?;
        worst = worst.max(k as u64 + 1);
    }
    Some(worst)
}

/// Rebuilds a DASGD trace from its compute/apply log alone: gradients are
/// recomputed from each producer's model at compute time with the run's seed
/// derivation, models are advanced application by application, and staleness
/// is re-measured. Event times are unknown and recorded as 0.
pub fn rebuild_from_log(
    log: &EventLog,
    objective: &ObjectiveSpec,
    x0: &ParamVector,
    eta: f64,
    seed: u64,
    n: usize,
) -> Result<RunTrace, SimError> {
    let mut ledger = StalenessLedger::new(n);
    let mut models = vec![x0.clone(); n];
    let mut table: HashMap<GradientId, Vec<f64>> = HashMap::new();
    let mut trace = RunTrace {
        mode: Mode::Dasgd,
        n,
        eta,
        seed,
        x0: x0.clone(),
        events: Vec::with_capacity(log.len()),
        samples: Vec::new(),
        records: Vec::new(),
        summary: None,
        gradients: Vec::new(),
        final_models: Vec::new(),
        final_sets: Vec::new(),
        delays: Vec::new(),
        end_time: 0.0,
    };
    let out_of_range = |node: usize| SimError::InvalidConfig(format!("log names node {node} but the run has {n}"));
    for ev in log.events() {
        match *ev {
            LogEvent::Compute { node, step } => {
                let x = models.get(node).ok_or_else(|| out_of_range(node))?;
                let gid = GradientId::new(node, step);
                ledger.register_gradient(gid)?;
                let g = objective.stochastic_gradient(x, gradient_seed(seed, node, step))?;
                trace.gradients.push((gid, g.clone()));
                table.insert(gid, g);
                trace.events.push(TraceEvent { time: 0.0, node, kind: TraceEventKind::Compute, gid, step, peer: None });
            }
            LogEvent::Apply { node, step, producer, pstep } => {
                if node >= n {
                    return Err(out_of_range(node));
                }
                let gid = GradientId::new(producer, pstep);
                let record = ledger.record_application(node, step, gid)?;
                let (loss, grad_norm_sq) = instrument(objective, &models[node], eta, node, step, 0.0)?;
                models[node] = super::descend(&models[node], eta, &table[&gid], node, step, 0.0)?;
                trace.events.push(TraceEvent { time: 0.0, node, kind: TraceEventKind::Apply, gid, step, peer: None });
                trace.samples.push(ApplySample {
                    time: 0.0,
                    node,
                    step,
                    gid,
                    loss,
                    grad_norm_sq,
                    tight: record.tight_size,
                    loose: record.loose_size,
                });
                trace.records.push(record);
            }
        }
    }
    trace.summary = Some(ledger.summarize()?);
    trace.final_sets = (0..n).map(|i| ledger.gradient_set(i)).collect();
    trace.final_models = models;
    Ok(trace)
}
