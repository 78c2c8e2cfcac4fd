//! `verify` re-derives a run directory's claims from its own files; `oracle`
//! cross-checks incremental staleness against brute force on an event log.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use dasgd_core::engine::{self, analysis, Mode, RunTrace};
use dasgd_core::ledger::oracle::{check_log, Equivalence};
use dasgd_core::ledger::{EventLog, StalenessLedger, StalenessRecord};
use dasgd_core::objective::ParamVector;

use crate::output::{self, Manifest};
use crate::report::{compare_with_bound, kind_name, no_bound_reason, staleness_or_zero, RunConstants};
use crate::run::PreparedObjective;
use crate::{input_error, CheckFailed, InputError};

pub const REQUIRED_FILES: [&str; 5] =
    ["manifest.txt", "events.log", "staleness.csv", "final_models.csv", "trace.csv"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn line(name: &'static str, ok: bool, detail: String) -> CheckLine {
    CheckLine { name, status: if ok { Status::Pass } else { Status::Fail }, detail }
}

fn skipped(name: &'static str, detail: &str) -> CheckLine {
    CheckLine { name, status: Status::Skipped, detail: detail.into() }
}

fn read_staleness_csv(path: &Path) -> Result<Vec<StalenessRecord>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    anyhow::ensure!(header == output::STALENESS_COLUMNS, "{}: unexpected header {header:?}", path.display());
    r.deserialize::<(usize, u64, usize, u64, usize, usize)>()
        .map(|row| {
            let (applier, applier_step, producer, producer_step, tight_size, loose_size) = row?;
            Ok(StalenessRecord { applier, applier_step, producer, producer_step, tight_size, loose_size })
        })
        .collect()
}

/// Everything `verify` reads from a run directory.
struct RunFiles {
    manifest: Manifest,
    log: EventLog,
    staleness: Vec<StalenessRecord>,
    final_models: Vec<Vec<f64>>,
}

impl RunFiles {
    fn load(dir: &Path) -> Result<Self> {
        for name in REQUIRED_FILES {
            if !dir.join(name).is_file() {
                return Err(InputError(format!("{}: missing {name}", dir.display())).into());
            }
        }
        let manifest = Manifest::read(&dir.join("manifest.txt")).map_err(input_error)?;
        let text = fs::read_to_string(dir.join("events.log"))?;
        let log: EventLog =
            text.parse().map_err(|e| input_error(anyhow::anyhow!("events.log: {e}")))?;
        let staleness = read_staleness_csv(&dir.join("staleness.csv")).map_err(input_error)?;
        let final_models = output::read_final_models(&dir.join("final_models.csv")).map_err(input_error)?;
        output::read_trace_csv(&dir.join("trace.csv")).map_err(input_error)?;
        Ok(Self { manifest, log, staleness, final_models })
    }
}

fn bits_equal(a: &[ParamVector], b: &[Vec<f64>]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.dim() == y.len() && x.as_slice().iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
        })
}

fn agreement_check(rebuilt: &Result<RunTrace, String>, files: &RunFiles) -> CheckLine {
    let name = "final_agreement";
    let trace = match rebuilt {
        Ok(t) => t,
        Err(e) => return line(name, false, format!("event log does not replay: {e}")),
    };
    match analysis::final_agreement(trace) {
        Ok(a) => {
            let matches_file = bits_equal(&trace.final_models, &files.final_models);
            line(
                name,
                a.holds() && matches_file,
                format!(
                    "identical sets {}, step accounting {}, reconstructions bit-identical {}, \
                     max pairwise distance {:e}, replay matches final_models.csv {}",
                    a.identical_sets, a.step_accounting, a.reconstructions_identical, a.max_pairwise_distance, matches_file
                ),
            )
        }
        Err(e) => line(name, false, e.to_string()),
    }
}

fn oracle_check(files: &RunFiles) -> CheckLine {
    let name = "staleness_oracle";
    match check_log(&files.log) {
        Ok(Equivalence::Equivalent { events }) => {
            let incremental = StalenessLedger::replay(&files.log).map(StalenessLedger::into_records);
            match incremental {
                Ok(recs) if recs == files.staleness => {
                    line(name, true, format!("equivalent ({events} events), staleness.csv matches"))
                }
                Ok(recs) => line(
                    name,
                    false,
                    format!("equivalent ({events} events) but staleness.csv differs ({} rows vs {})", files.staleness.len(), recs.len()),
                ),
                Err(e) => line(name, false, e.to_string()),
            }
        }
        Ok(other) => line(name, false, format!("{other:?}")),
        Err(e) => line(name, false, e.to_string()),
    }
}

/// Re-derives the four checks for the run in `dir`, prints one line each and
/// fails with [`CheckFailed`] if any check fails.
pub fn verify_command(dir: &Path) -> Result<Vec<CheckLine>> {
    let files = RunFiles::load(dir)?;
    let cfg = &files.manifest.config;
    let objective = PreparedObjective::build(cfg)?;
    let x0: ParamVector = cfg.x0().map_err(input_error)?;
    let (eta, seed, n) = (files.manifest.eta, files.manifest.seed, cfg.topology.n);
    let mut lines = Vec::new();

    // Lock-step and server runs have no peer log; re-simulate them from the manifest instead.
    let trace: Result<RunTrace, String> = if cfg.mode() == Mode::Dasgd {
        analysis::rebuild_from_log(&files.log, &objective.spec, &x0, eta, seed, n).map_err(|e| e.to_string())
    } else {
        let sim = cfg.sim_config(Arc::clone(&objective.spec), eta, seed).map_err(input_error)?;
        engine::run_mode(cfg.mode(), &sim).map_err(|e| e.to_string())
    };

    if cfg.mode() == Mode::Dasgd {
        lines.push(agreement_check(&trace, &files));
        lines.push(oracle_check(&files));
    } else {
        lines.push(skipped("final_agreement", "no peer-to-peer log for this mode"));
        lines.push(skipped("staleness_oracle", "no peer-to-peer log for this mode"));
    }

    let l = objective.spec.lipschitz_constant()?;
    match &trace {
        Ok(t) => {
            let c = RunConstants::measure(&objective.spec, objective.f_star, t)?;
            let s = staleness_or_zero(t);
            let cmp = compare_with_bound(&t.psi_series(), &c, &s, eta);
            lines.push(match cmp.kind {
                None => skipped("rate_bound", no_bound_reason(&c, &s)),
                Some(kind) => line(
                    "rate_bound",
                    cmp.holds(),
                    format!(
                        "{} bound, {} of {} values above it, worst psi/bound {:.4}",
                        kind_name(kind),
                        cmp.violations,
                        cmp.checked,
                        cmp.worst_ratio
                    ),
                ),
            });
        }
        Err(e) => lines.push(line("rate_bound", false, format!("cannot rebuild the trajectory: {e}"))),
    }

    lines.push(if objective.spec.variance_bound() > 0.0 {
        skipped("descent_lemma", "skipped (stochastic)")
    } else if cfg.mode() != Mode::Dasgd {
        skipped("descent_lemma", "per-event check needs a peer-to-peer log")
    } else if eta > 1.0 / (2.0 * l) {
        skipped("descent_lemma", "eta above 1/(2L), the inequality is not claimed")
    } else {
        match &trace {
            Ok(t) => match analysis::descent_lemma_check(t, &objective.spec, l) {
                Ok(r) => line(
                    "descent_lemma",
                    r.holds(),
                    format!("{} of {} events violate, worst margin {:e}", r.violations, r.checked, r.worst_margin),
                ),
                Err(e) => line("descent_lemma", false, e.to_string()),
            },
            Err(e) => line("descent_lemma", false, format!("cannot rebuild the trajectory: {e}")),
        }
    });

    for l in &lines {
        println!("{l}");
    }
    let failed = lines.iter().filter(|l| l.status == Status::Fail).count();
    if failed > 0 {
        return Err(CheckFailed(format!("{failed} check(s) failed")).into());
    }
    Ok(lines)
}

/// Replays an event log through the incremental ledger and the brute-force
/// oracle. Returns the report line; mismatches and protocol violations are errors.
pub fn oracle_command(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path)
        .map_err(|e| InputError(format!("cannot read {}: {e}", path.display())))?;
    let log: EventLog = text.parse().map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    match check_log(&log) {
        Ok(Equivalence::Equivalent { events }) => Ok(format!("equivalent ({events} events)")),
        Ok(Equivalence::Mismatch { index, incremental, brute_force }) => Err(CheckFailed(format!(
            "mismatch at application {index}: incremental {incremental:?}, brute force {brute_force:?}"
        ))
        .into()),
        Ok(Equivalence::LengthMismatch { incremental, brute_force }) => Err(CheckFailed(format!(
            "record count differs: incremental {incremental}, brute force {brute_force}"
        ))
        .into()),
        Err(e) => Err(CheckFailed(e.to_string()).into()),
    }
}
