use std::time::Instant;

use dasgd_core::ledger::eventlog::random_event_log;
use dasgd_core::ledger::oracle::{check_log, Equivalence};
use dasgd_core::ledger::{
    loose_staleness, tight_staleness, CausalSnapshot, EventLog, GradientId, GradientSet, LedgerError, StalenessLedger,
};
use dasgd_core::linalg::norm;
use dasgd_core::objective::ParamVector;
use dasgd_core::rng::stream_rng;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

#[test]
fn thousand_random_logs_agree_with_brute_force() {
    let start = Instant::now();
    let mut events = 0;
    for seed in 0..1000u64 {
        let n = 1 + (seed % 5) as usize;
        let log = random_event_log(seed, n, 50);
        match check_log(&log).unwrap() {
            Equivalence::Equivalent { events: e } => events += e,
            other => panic!("seed {seed}: {other:?}"),
        }
    }
    assert!(events > 10_000);
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn log_text_round_trips_through_the_ledger() {
    let log = random_event_log(77, 4, 20);
    let reparsed: EventLog = log.to_string().parse().unwrap();
    assert_eq!(reparsed, log);
    let a = StalenessLedger::replay(&log).unwrap().into_records();
    let b = StalenessLedger::replay(&reparsed).unwrap().into_records();
    assert_eq!(a, b);
}

#[test]
fn deleting_an_apply_breaks_replay() {
    let text = "COMPUTE 0 0\nAPPLY 0 0 0 0\nCOMPUTE 1 0\nAPPLY 1 0 1 0\nAPPLY 1 1 0 0\nAPPLY 0 1 1 0\nCOMPUTE 0 2\nAPPLY 0 2 0 2\n";
    let log: EventLog = text.parse().unwrap();
    assert!(matches!(check_log(&log).unwrap(), Equivalence::Equivalent { events: 5 }));
    let corrupted: EventLog = text.replace("APPLY 0 1 1 0\n", "").parse().unwrap();
    assert!(matches!(check_log(&corrupted), Err(LedgerError::StepMismatch { node: 0, .. })));
}

fn gid_strategy() -> impl Strategy<Value = GradientId> {
    (0usize..4, 0u64..12).prop_map(|(p, s)| GradientId::new(p, s))
}

fn set_strategy() -> impl Strategy<Value = GradientSet> {
    prop::collection::btree_set(gid_strategy(), 0..20).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #[test]
    fn tight_staleness_is_symmetric(a in set_strategy(), b in set_strategy()) {
        prop_assert_eq!(tight_staleness(&a, &b), tight_staleness(&b, &a));
        prop_assert!(tight_staleness(&a, &a).is_empty());
    }

    #[test]
    fn loose_contains_tight_on_random_logs(seed in any::<u64>(), n in 1usize..5, steps in 1u64..30) {
        let log = random_event_log(seed, n, steps);
        let records = StalenessLedger::replay(&log).unwrap().into_records();
        for r in &records {
            prop_assert!(r.loose_size >= r.tight_size);
            if r.producer == r.applier && r.producer_step == r.applier_step {
                prop_assert_eq!(r.tight_size, 0);
            }
        }
    }

    #[test]
    fn loose_set_contains_tight_set(current in set_strategy(), snapshot in set_strategy(), extra in set_strategy()) {
        // every gradient outside `current` gets a snapshot; unknown ones are empty
        let mut snaps = CausalSnapshot::new();
        for g in snapshot.iter().chain(extra.iter()) {
            snaps.entry(*g).or_insert_with(|| extra.iter().filter(|h| *h < g).copied().collect());
        }
        let tight = tight_staleness(&current, &snapshot);
        let loose = loose_staleness(&snaps, &current, &snapshot).unwrap();
        prop_assert!(loose.is_superset(&tight));
    }
}

#[test]
fn application_order_does_not_change_the_model() {
    let mut rng = stream_rng(2024, &[1]);
    let d = 16;
    let grads: Vec<Vec<f64>> = (0..100).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let eta = 0.01;
    let apply_all = |order: &[usize]| {
        let mut x = ParamVector::zeros(d);
        for &k in order {
            x = x.descend(eta, &grads[k]).unwrap();
        }
        x
    };
    let canonical: Vec<usize> = (0..100).collect();
    let reference = apply_all(&canonical);
    let mut order = canonical.clone();
    for _ in 0..50 {
        order.shuffle(&mut rng);
        let x = apply_all(&order);
        let diff: Vec<f64> = x.as_slice().iter().zip(reference.as_slice()).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) <= 1e-10 * reference.norm().max(1.0));
        // the canonical-order re-summation is independent of the order of arrival
        let mut sorted = order.clone();
        sorted.sort_unstable();
        let rebuilt = apply_all(&sorted);
        assert!(rebuilt.as_slice().iter().zip(reference.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
