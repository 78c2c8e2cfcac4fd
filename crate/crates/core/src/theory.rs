//! Stepsize rules, pre-asymptotic convergence bounds and topology staleness
//! predictions, written as plain evaluatable formulas.
//!
//! Notation: `Ψ_T = (1/(T+1)) Σ_{t≤T} ‖∇f(x^t)‖²`, `r0 = f(x⁰) − f*`.

use thiserror::Error;

use crate::netsim::TopologyKind;

/// Relative slack when comparing a configured stepsize against its bound, so a
/// stepsize computed as exactly the bound is not rejected over rounding.
const STEPSIZE_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("invalid bound input: {0}")]
    InvalidInput(String),
    #[error("stepsize precondition violated: eta = {eta} > 1/(4·L·S_avg) = {bound}")]
    TightStepsize { eta: f64, bound: f64 },
    #[error("stepsize precondition violated: eta = {eta} > 1/(4·L·sqrt(Shat_avg·Shat_max)) = {bound}")]
    LooseStepsize { eta: f64, bound: f64 },
    #[error("the bound with the gradient-norm constant needs Q")]
    MissingQ,
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
}

/// Inputs to the rate bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub l: f64,
    pub sigma: f64,
    pub q: Option<f64>,
    pub s_avg: f64,
    pub s_max: f64,
    pub shat_avg: f64,
    pub shat_max: f64,
    pub r0: f64,
    pub eta: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<(), BoundError> {
        let fields = [
            ("L", self.l),
            ("sigma", self.sigma),
            ("S_avg", self.s_avg),
            ("S_max", self.s_max),
            ("Shat_avg", self.shat_avg),
            ("Shat_max", self.shat_max),
            ("r0", self.r0),
            ("eta", self.eta),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(BoundError::InvalidInput(format!("{name} is not finite")));
            }
        }
        if self.l < 1.0 {
            return Err(BoundError::InvalidInput(format!("L must be >= 1, got {}", self.l)));
        }
        if self.sigma < 0.0 || self.r0 < 0.0 || self.s_avg < 0.0 || self.shat_avg < 0.0 {
            return Err(BoundError::InvalidInput("sigma, r0 and staleness averages must be >= 0".into()));
        }
        if self.eta.is_nan() || self.eta <= 0.0 {
            return Err(BoundError::InvalidInput(format!("eta must be positive, got {}", self.eta)));
        }
        if self.s_max < self.s_avg || self.shat_max < self.shat_avg {
            return Err(BoundError::InvalidInput("maximum staleness below its average".into()));
        }
        if let Some(q) = self.q {
            if !(q >= 0.0 && q.is_finite()) {
                return Err(BoundError::InvalidInput(format!("Q must be finite and >= 0, got {q}")));
            }
        }
        Ok(())
    }
}

/// `1/(4·L·S_avg)`; with no staleness this is the sequential `1/(4L)`.
pub fn stepsize_bound_tight(l: f64, s_avg: f64) -> f64 {
    if s_avg > 0.0 {
        1.0 / (4.0 * l * s_avg)
    } else {
        1.0 / (4.0 * l)
    }
}

/// `1/(4·L·√(Ŝ_avg·Ŝ_max))`; with no staleness this is `1/(4L)`.
pub fn stepsize_bound_loose(l: f64, shat_avg: f64, shat_max: f64) -> f64 {
    let g = (shat_avg * shat_max).sqrt();
    if g > 0.0 {
        1.0 / (4.0 * l * g)
    } else {
        1.0 / (4.0 * l)
    }
}

fn within(eta: f64, bound: f64) -> bool {
    eta <= bound * (1.0 + STEPSIZE_SLACK)
}

/// Bound on `Ψ_T` using the gradient-norm bound `Q`; requires `η ≤ 1/(4·L·S_avg)`.
pub fn rate_bound_with_q(inputs: &BoundInputs, t: u64) -> Result<f64, BoundError> {
    inputs.validate()?;
    let q = inputs.q.ok_or(BoundError::MissingQ)?;
    let bound = stepsize_bound_tight(inputs.l, inputs.s_avg);
    if !within(inputs.eta, bound) {
        return Err(BoundError::TightStepsize { eta: inputs.eta, bound });
    }
    let BoundInputs { l, sigma, s_avg, r0, .. } = *inputs;
    let tp1 = t as f64 + 1.0;
    let noise = 2.0 * (3.0 * l * sigma * sigma * r0 / tp1).sqrt();
    let drift = 2.0 * (l * l * s_avg * s_avg * q * q).cbrt() * (r0 / tp1).powf(2.0 / 3.0);
    let stale = 4.0 * l * r0 * s_avg / tp1;
    Ok(noise + drift + stale)
}

/// Bound on `Ψ_T` without `Q`; requires `η ≤ 1/(4·L·√(Ŝ_avg·Ŝ_max))`.
pub fn rate_bound_no_q(inputs: &BoundInputs, t: u64) -> Result<f64, BoundError> {
    inputs.validate()?;
    let bound = stepsize_bound_loose(inputs.l, inputs.shat_avg, inputs.shat_max);
    if !within(inputs.eta, bound) {
        return Err(BoundError::LooseStepsize { eta: inputs.eta, bound });
    }
    let BoundInputs { l, sigma, shat_avg, shat_max, r0, .. } = *inputs;
    let tp1 = t as f64 + 1.0;
    let noise = 2.0 * (14.0 * l * sigma * sigma * r0 / (3.0 * tp1)).sqrt();
    let stale = 4.0 * l * r0 * (shat_avg * shat_max).sqrt() / tp1;
    Ok(noise + stale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    WithQ,
    NoQ,
}

pub fn rate_bound(inputs: &BoundInputs, t: u64, kind: RateKind) -> Result<f64, BoundError> {
    match kind {
        RateKind::WithQ => rate_bound_with_q(inputs, t),
        RateKind::NoQ => rate_bound_no_q(inputs, t),
    }
}

/// Smallest `T` whose bound is at most `epsilon`: exponential search for an
/// upper bracket, then bisection (the bound is decreasing in `T`).
pub fn iterations_to_epsilon(inputs: &BoundInputs, epsilon: f64, kind: RateKind) -> Result<u64, BoundError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(BoundError::BadEpsilon(epsilon));
    }
    let ok = |t: u64| rate_bound(inputs, t, kind).map(|b| b <= epsilon);
    if ok(0)? {
        return Ok(0);
    }
    let mut hi: u64 = 1;
    while !ok(hi)? {
        if hi >= u64::MAX / 4 {
            return Ok(u64::MAX);
        }
        hi *= 2;
    }
    let mut lo = hi / 2; // ok(lo) is false
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Predicted `(S_avg, S_max)` for a topology under equal compute times and
/// small latency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StalenessPrediction {
    Predicted { s_avg: f64, s_max: f64 },
    NoPrediction,
}

pub fn predict_topology_staleness(kind: TopologyKind, n: usize) -> StalenessPrediction {
    let n = n as f64;
    match kind {
        TopologyKind::FullyConnected => StalenessPrediction::Predicted { s_avg: (n + 1.0) / 2.0, s_max: n },
        TopologyKind::Ring => StalenessPrediction::Predicted { s_avg: (n * n + 1.0) / 2.0, s_max: n * n },
        TopologyKind::Custom => StalenessPrediction::NoPrediction,
    }
}
