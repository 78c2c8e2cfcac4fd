//! Comparison of a run against the stepsize rules and rate bounds, shared by
//! `summary.txt` and the `verify` command.

use dasgd_core::engine::RunTrace;
use dasgd_core::ledger::StalenessSummary;
use dasgd_core::objective::ObjectiveSpec;
use dasgd_core::theory::{
    rate_bound, stepsize_bound_loose, stepsize_bound_tight, BoundInputs, RateKind,
};

/// Constants of one run, measured or computed rather than assumed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConstants {
    pub l: f64,
    pub sigma: f64,
    /// Largest full-gradient norm seen along the trajectory.
    pub q: f64,
    /// `f(x⁰) − f*`.
    pub r0: f64,
    pub f_star: f64,
}

impl RunConstants {
    pub fn measure(objective: &ObjectiveSpec, f_star: f64, trace: &RunTrace) -> anyhow::Result<Self> {
        let l = objective.lipschitz_constant()?;
        let r0 = (objective.loss(&trace.x0)? - f_star).max(0.0);
        let mut q_sq = trace.samples.iter().map(|s| s.grad_norm_sq).fold(0.0, f64::max);
        for x in &trace.final_models {
            let g = objective.full_gradient(x)?;
            q_sq = q_sq.max(dasgd_core::linalg::norm_sq(&g));
        }
        Ok(Self { l, sigma: objective.variance_bound(), q: q_sq.sqrt(), r0, f_star })
    }
}

/// Staleness statistics with zeros for traces that have none (lock-step runs).
pub fn staleness_or_zero(trace: &RunTrace) -> StalenessSummary {
    trace.summary.clone().unwrap_or(StalenessSummary {
        s_avg: 0.0,
        s_max: 0,
        shat_avg: 0.0,
        shat_max: 0,
        applications: vec![trace.samples.len() as u64],
    })
}

pub fn bound_inputs(c: &RunConstants, s: &StalenessSummary, eta: f64) -> BoundInputs {
    BoundInputs {
        l: c.l,
        sigma: c.sigma,
        q: Some(c.q),
        s_avg: s.s_avg,
        s_max: s.s_max as f64,
        shat_avg: s.shat_avg,
        shat_max: s.shat_max as f64,
        r0: c.r0,
        eta,
    }
}

/// Which bound the configured stepsize makes applicable, preferring the one
/// with `Q`. A bound that is identically zero (no staleness and no noise, so
/// every term vanishes) makes no claim about a run and is not applicable.
pub fn applicable_bound(c: &RunConstants, s: &StalenessSummary, eta: f64) -> Option<RateKind> {
    let inputs = bound_inputs(c, s, eta);
    [RateKind::WithQ, RateKind::NoQ].into_iter().find(|&k| rate_bound(&inputs, 0, k).is_ok_and(|b| b > 0.0))
}

/// Why no bound applies, for reports.
pub fn no_bound_reason(c: &RunConstants, s: &StalenessSummary) -> &'static str {
    if s.s_avg == 0.0 && s.shat_avg == 0.0 && c.sigma == 0.0 {
        "both bounds are identically zero without staleness or noise"
    } else {
        "eta exceeds both stepsize bounds"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundComparison {
    pub kind: Option<RateKind>,
    pub checked: usize,
    pub violations: usize,
    /// Largest measured `Ψ_T / bound(T)`.
    pub worst_ratio: f64,
    pub final_psi: f64,
    pub final_bound: Option<f64>,
}

impl BoundComparison {
    pub fn holds(&self) -> bool {
        self.kind.is_some() && self.violations == 0
    }
}

/// Compares every node's running `Ψ_T` with the applicable bound at every `T`.
pub fn compare_with_bound(psi: &[Vec<f64>], c: &RunConstants, s: &StalenessSummary, eta: f64) -> BoundComparison {
    let kind = applicable_bound(c, s, eta);
    let inputs = bound_inputs(c, s, eta);
    let final_psi = psi.iter().filter_map(|v| v.last().copied()).fold(0.0, f64::max);
    let mut out = BoundComparison { kind, checked: 0, violations: 0, worst_ratio: 0.0, final_psi, final_bound: None };
    let Some(kind) = kind else { return out };
    let longest = psi.iter().map(Vec::len).max().unwrap_or(0);
    let bounds: Vec<f64> =
        (0..longest).map(|t| rate_bound(&inputs, t as u64, kind).expect("precondition checked")).collect();
    out.final_bound = bounds.last().copied();
    for series in psi {
        for (t, &p) in series.iter().enumerate() {
            out.checked += 1;
            out.worst_ratio = out.worst_ratio.max(p / bounds[t]);
            if p > bounds[t] {
                out.violations += 1;
            }
        }
    }
    out
}

pub fn kind_name(kind: RateKind) -> &'static str {
    match kind {
        RateKind::WithQ => "with_q",
        RateKind::NoQ => "no_q",
    }
}

pub fn stepsize_bounds(l: f64, s: &StalenessSummary) -> (f64, f64) {
    (stepsize_bound_tight(l, s.s_avg), stepsize_bound_loose(l, s.shat_avg, s.shat_max as f64))
}
