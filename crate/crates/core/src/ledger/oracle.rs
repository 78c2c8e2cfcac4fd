//! Brute-force staleness replay: recomputes every record of an event log from
//! scratch with ordered-set algebra, sharing no state with the incremental ledger.

use std::collections::BTreeMap;

use super::{
    loose_staleness, tight_staleness, CausalSnapshot, EventLog, GradientId, GradientSet, LedgerError, LogEvent,
    StalenessLedger, StalenessRecord,
};

pub fn replay_brute_force(log: &EventLog) -> Result<Vec<StalenessRecord>, LedgerError> {
    let mut sets: BTreeMap<usize, GradientSet> = BTreeMap::new();
    let mut snapshots = CausalSnapshot::new();
    let mut records = Vec::new();
    for ev in log.events() {
        match *ev {
            LogEvent::Compute { node, step } => {
                let current = sets.entry(node).or_default();
                let gid = GradientId::new(node, step);
                if current.len() as u64 != step {
                    return Err(LedgerError::StepMismatch { node, expected: current.len() as u64, got: step });
                }
                if snapshots.contains_key(&gid) {
                    return Err(LedgerError::DuplicateGradient(gid));
                }
                snapshots.insert(gid, current.clone());
            }
            LogEvent::Apply { node, step, producer, pstep } => {
                let gid = GradientId::new(producer, pstep);
                let producer_set = snapshots.get(&gid).ok_or(LedgerError::UnknownGradient(gid))?;
                let current = sets.entry(node).or_default();
                if current.len() as u64 != step {
                    return Err(LedgerError::StepMismatch { node, expected: current.len() as u64, got: step });
                }
                if current.contains(&gid) {
                    return Err(LedgerError::DuplicateApplication { applier: node, gid });
                }
                let tight = tight_staleness(current, producer_set);
                let loose = loose_staleness(&snapshots, current, producer_set)?;
                records.push(StalenessRecord {
                    applier: node,
                    applier_step: step,
                    producer,
                    producer_step: pstep,
                    tight_size: tight.len(),
                    loose_size: loose.len(),
                });
                sets.get_mut(&node).expect("entry exists").insert(gid);
            }
        }
    }
    Ok(records)
}

/// Outcome of comparing incremental and brute-force staleness on one log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Equivalence {
    Equivalent { events: usize },
    Mismatch { index: usize, incremental: StalenessRecord, brute_force: StalenessRecord },
    LengthMismatch { incremental: usize, brute_force: usize },
}

/// Compares two record streams event by event.
pub fn compare_records(incremental: &[StalenessRecord], brute_force: &[StalenessRecord]) -> Equivalence {
    for (index, (a, b)) in incremental.iter().zip(brute_force).enumerate() {
        if a != b {
            return Equivalence::Mismatch { index, incremental: *a, brute_force: *b };
        }
    }
    if incremental.len() != brute_force.len() {
        return Equivalence::LengthMismatch { incremental: incremental.len(), brute_force: brute_force.len() };
    }
    Equivalence::Equivalent { events: incremental.len() }
}

/// Replays `log` through both paths and diffs the results.
pub fn check_log(log: &EventLog) -> Result<Equivalence, LedgerError> {
    let incremental = StalenessLedger::replay(log)?.into_records();
    let brute = replay_brute_force(log)?;
    Ok(compare_records(&incremental, &brute))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::eventlog::random_event_log;

    #[test]
    fn empty_log_is_equivalent() {
        assert_eq!(check_log(&EventLog::default()).unwrap(), Equivalence::Equivalent { events: 0 });
    }

    #[test]
    fn duplicate_apply_is_protocol_violation() {
        let log: EventLog = "COMPUTE 0 0\nAPPLY 0 0 0 0\nAPPLY 1 0 0 0\nAPPLY 1 1 0 0\n".parse().unwrap();
        assert!(matches!(check_log(&log), Err(LedgerError::DuplicateApplication { applier: 1, .. })));
        assert!(matches!(replay_brute_force(&log), Err(LedgerError::DuplicateApplication { .. })));
    }

    #[test]
    fn small_random_logs_agree() {
        for seed in 0..50 {
            let log = random_event_log(seed, 3, 10);
            assert!(matches!(check_log(&log).unwrap(), Equivalence::Equivalent { .. }), "seed {seed}");
        }
    }

    #[test]
    fn mismatch_is_located() {
        let a = StalenessRecord { applier: 0, applier_step: 0, producer: 0, producer_step: 0, tight_size: 0, loose_size: 0 };
        let b = StalenessRecord { tight_size: 1, ..a };
        assert!(matches!(compare_records(&[a, a], &[a, b]), Equivalence::Mismatch { index: 1, .. }));
        assert!(matches!(compare_records(&[a], &[a, a]), Equivalence::LengthMismatch { .. }));
    }
}
