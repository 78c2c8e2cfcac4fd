use dasgd_web::{check_event_log, check_log_text, evaluate_bounds, run_simulation, simulate};

#[test]
fn single_node_has_no_staleness() {
    let s = run_simulation("fully_connected", 1, 0.01, false, 100, 1).unwrap();
    assert_eq!((s.s_avg, s.s_max), (0.0, 0));
    assert_eq!(s.eta, 0.25);
    assert_eq!(s.histogram, vec![100]);
}

#[test]
fn simulation_reports_consistent_staleness() {
    let s = run_simulation("ring", 5, 0.3, true, 150, 4).unwrap();
    let applications: u64 = s.histogram.iter().sum();
    assert_eq!(applications, 5 * 5 * 150);
    assert_eq!(s.histogram.len(), s.s_max + 1);
    assert!(s.histogram[s.s_max] > 0);
    assert!(s.shat_avg >= s.s_avg);
    assert!((s.eta - 1.0 / (4.0 * s.s_avg)).abs() < 1e-15, "L = 1 for the demo quadratic");
    assert_eq!(s.predicted_s_avg, Some(13.0));
    // thinned curve still ends at the final step and stays under its bound
    assert_eq!(s.psi.last().unwrap().0, 5 * 150 - 1);
    assert!(s.psi.iter().all(|&(_, psi, bound)| psi <= bound));
}

#[test]
fn simulation_rejects_bad_input_as_json() {
    for reply in [
        simulate("star", 4, 0.1, false, 10, 1),
        simulate("ring", 0, 0.1, false, 10, 1),
        simulate("ring", 4, 0.0, false, 10, 1),
        simulate("ring", 4, 0.1, false, 100_000, 1),
    ] {
        let v: serde_json::Value = serde_json::from_str(&reply).unwrap();
        assert!(v["error"].is_string(), "{reply}");
    }
    let v: serde_json::Value = serde_json::from_str(&simulate("ring", 3, 0.1, false, 20, 1)).unwrap();
    assert!(v["s_avg"].is_number());
}

/// With σ = 0 and Q = 0 only `4·L·r0·S_avg/(T+1)` remains, so T* = ceil(4·L·r0·S_avg/ε) − 1.
#[test]
fn iterations_match_closed_form_without_noise() {
    let (l, r0, s_avg, eps) = (2.0, 3.0, 2.5, 0.01);
    let b = evaluate_bounds(l, 0.0, 0.0, s_avg, 4.0, s_avg, 4.0, r0, 0.01, eps, 100).unwrap();
    let expected = (4.0 * l * r0 * s_avg / eps).ceil() as u64 - 1;
    assert_eq!(b.iterations_with_q, Ok(expected));
    assert_eq!(b.stepsize_tight, 1.0 / (4.0 * l * s_avg));
    assert_eq!(b.stepsize_loose, 1.0 / (4.0 * l * (s_avg * 4.0f64).sqrt()));
    assert_eq!(b.curve.len(), 100);
    for w in b.curve.windows(2) {
        assert!(w[1].1.unwrap() < w[0].1.unwrap());
    }
}

#[test]
fn bound_curves_drop_out_above_their_stepsize() {
    // tight bound 0.1, loose bound 1/(4·√(2.5·4)) ≈ 0.079
    let b = evaluate_bounds(1.0, 0.5, 1.0, 2.5, 4.0, 2.5, 4.0, 1.0, 0.09, 0.01, 50).unwrap();
    assert!(b.curve.iter().all(|&(_, with_q, no_q)| with_q.is_some() && no_q.is_none()));
    assert!(b.iterations_no_q.is_err());
    assert!(evaluate_bounds(0.5, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.1, 0.1, 10).is_err(), "L below 1");
    assert!(evaluate_bounds(1.0, 0.0, 0.0, 3.0, 2.0, 3.0, 3.0, 1.0, 0.01, 0.1, 10).is_err(), "S_max < S_avg");
}

#[test]
fn event_log_checks() {
    let ok = check_log_text("COMPUTE 0 0\nAPPLY 0 0 0 0\nCOMPUTE 1 0\nAPPLY 1 0 1 0\nAPPLY 0 1 1 0\nAPPLY 1 1 0 0\n").unwrap();
    assert!(ok.equivalent);
    assert_eq!(ok.applications, 4);
    assert_eq!(ok.message, "equivalent (4 events)");

    let dup = check_log_text("COMPUTE 0 0\nAPPLY 0 0 0 0\nAPPLY 1 0 0 0\nAPPLY 1 1 0 0\n").unwrap();
    assert!(!dup.equivalent);
    assert!(dup.message.starts_with("protocol violation"));

    let v: serde_json::Value = serde_json::from_str(&check_event_log("COMPUTE 0\n")).unwrap();
    assert_eq!(v["error"], "line 1: COMPUTE takes 2 fields: node step");
}
