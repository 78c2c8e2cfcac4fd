use dasgd_core::theory::{
    iterations_to_epsilon, rate_bound_no_q, rate_bound_with_q, stepsize_bound_loose, stepsize_bound_tight, BoundInputs,
    RateKind,
};
use proptest::prelude::*;

/// Inputs with `eta` set to the smaller of the two stepsize bounds, so both
/// rate evaluators accept them.
fn inputs_strategy() -> impl Strategy<Value = BoundInputs> {
    (1.0f64..20.0, 0.0f64..3.0, 0.0f64..5.0, 0.0f64..10.0, 1.0f64..3.0, 0.0f64..5.0, 1.0f64..3.0, 1e-3f64..10.0)
        .prop_map(|(l, sigma, q, s_avg, s_ratio, shat_extra, shat_ratio, r0)| {
            let s_max = s_avg * s_ratio;
            let shat_avg = s_avg + shat_extra;
            let shat_max = shat_avg * shat_ratio;
            let eta = stepsize_bound_tight(l, s_avg).min(stepsize_bound_loose(l, shat_avg, shat_max));
            BoundInputs { l, sigma, q: Some(q), s_avg, s_max, shat_avg, shat_max, r0, eta }
        })
}

fn with_eta(mut inp: BoundInputs) -> BoundInputs {
    inp.eta = stepsize_bound_tight(inp.l, inp.s_avg).min(stepsize_bound_loose(inp.l, inp.shat_avg, inp.shat_max));
    inp
}

proptest! {
    #[test]
    fn bounds_are_positive_and_decreasing(inp in inputs_strategy(), t in 0u64..1_000_000) {
        for f in [rate_bound_with_q, rate_bound_no_q] {
            let a = f(&inp, t).unwrap();
            let b = f(&inp, t + 1).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!(b < a || a == 0.0);
        }
    }

    #[test]
    fn iterations_shrink_as_epsilon_grows(inp in inputs_strategy(), eps in 1e-3f64..1.0, factor in 1.0f64..10.0) {
        for kind in [RateKind::WithQ, RateKind::NoQ] {
            let tight = iterations_to_epsilon(&inp, eps, kind).unwrap();
            let loose = iterations_to_epsilon(&inp, eps * factor, kind).unwrap();
            prop_assert!(loose <= tight);
        }
    }

    #[test]
    fn iterations_grow_with_every_constant(inp in inputs_strategy(), eps in 1e-2f64..1.0, bump in 1.0f64..3.0) {
        let grown = [
            BoundInputs { sigma: inp.sigma * bump, ..inp },
            BoundInputs { q: inp.q.map(|q| q * bump), ..inp },
            BoundInputs { r0: inp.r0 * bump, ..inp },
            with_eta(BoundInputs { l: inp.l * bump, ..inp }),
            with_eta(BoundInputs { s_avg: inp.s_avg * bump, s_max: inp.s_max * bump, ..inp }),
            with_eta(BoundInputs { shat_avg: inp.shat_avg * bump, shat_max: inp.shat_max * bump, ..inp }),
        ];
        for kind in [RateKind::WithQ, RateKind::NoQ] {
            let base = iterations_to_epsilon(&inp, eps, kind).unwrap();
            for g in &grown {
                prop_assert!(iterations_to_epsilon(g, eps, kind).unwrap() >= base);
            }
        }
    }

    #[test]
    fn iteration_count_is_the_first_crossing(inp in inputs_strategy(), eps in 1e-3f64..1.0) {
        let t = iterations_to_epsilon(&inp, eps, RateKind::NoQ).unwrap();
        prop_assert!(rate_bound_no_q(&inp, t).unwrap() <= eps);
        if t > 0 {
            prop_assert!(rate_bound_no_q(&inp, t - 1).unwrap() > eps);
        }
    }

    #[test]
    fn loose_stepsize_never_exceeds_tight(l in 1.0f64..10.0, s in 0.1f64..20.0, extra_avg in 0.0f64..5.0, extra_max in 0.0f64..5.0) {
        prop_assert!(stepsize_bound_loose(l, s + extra_avg, s + extra_avg + extra_max) <= stepsize_bound_tight(l, s) * (1.0 + 1e-15));
    }
}

#[test]
fn batch_shaped_substitution() {
    // with Ŝ_max = n and Ŝ_avg = n/2 the staleness term is 4·L·r0·n/√2/(T+1)
    let n = 8.0;
    let inp = BoundInputs {
        l: 1.0,
        sigma: 0.0,
        q: None,
        s_avg: 0.0,
        s_max: 0.0,
        shat_avg: n / 2.0,
        shat_max: n,
        r0: 1.0,
        eta: stepsize_bound_loose(1.0, n / 2.0, n),
    };
    for t in [0u64, 9, 99] {
        let b = rate_bound_no_q(&inp, t).unwrap();
        assert!((b - 4.0 * n / 2f64.sqrt() / (t as f64 + 1.0)).abs() < 1e-12);
    }
}
