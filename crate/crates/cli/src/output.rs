//! Files written into a run directory.
//!
//! | file               | content                                               |
//! |--------------------|-------------------------------------------------------|
//! | `trace.csv`        | one row per sampled application                       |
//! | `staleness.csv`    | one row per application with tight/loose sizes         |
//! | `events.log`       | compute/apply history in the ledger's line format     |
//! | `final_models.csv` | each node's final parameters, round-trip precision    |
//! | `summary.txt`      | `key = value` staleness, Ψ_T and bound comparison     |
//! | `manifest.txt`     | TOML: digest, resolved seed and η, full config        |

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use dasgd_core::engine::RunTrace;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const TRACE_COLUMNS: [&str; 13] = [
    "run_id",
    "mode",
    "topology",
    "n",
    "eta",
    "seed",
    "t",
    "sim_time",
    "node",
    "loss",
    "grad_norm_sq",
    "tight_staleness",
    "loose_staleness",
];

pub const STALENESS_COLUMNS: [&str; 6] =
    ["applier", "applier_step", "producer", "producer_step", "tight_staleness", "loose_staleness"];

/// Positional decimal with 12 significant digits, trailing zeros trimmed.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let (sign, mantissa) = mantissa.strip_prefix('-').map_or(("", mantissa), |m| ("-", m));
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let point = exp + 1; // digits before the decimal point
    let mut out = String::from(sign);
    if point <= 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-point) as usize));
        out.push_str(&digits);
    } else if point as usize >= digits.len() {
        out.push_str(&digits);
        out.extend(std::iter::repeat_n('0', point as usize - digits.len()));
    } else {
        out.push_str(&digits[..point as usize]);
        out.push('.');
        out.push_str(&digits[point as usize..]);
    }
    if out.contains('.') {
        while out.ends_with('0') {
            out.pop();
        }
        if out.ends_with('.') {
            out.pop();
        }
    }
    out
}

/// Identifies one run in the CSV output.
#[derive(Debug, Clone)]
pub struct RunLabel {
    pub run_id: String,
    pub topology: String,
}

pub fn write_trace_csv(path: &Path, label: &RunLabel, trace: &RunTrace, stride: u64) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(TRACE_COLUMNS)?;
    let last_step = trace.samples.iter().map(|s| s.step).max().unwrap_or(0);
    for s in &trace.samples {
        if s.step % stride != 0 && s.step != last_step {
            continue;
        }
        w.write_record([
            label.run_id.clone(),
            trace.mode.as_str().to_string(),
            label.topology.clone(),
            trace.n.to_string(),
            fmt_sig(trace.eta),
            trace.seed.to_string(),
            s.step.to_string(),
            fmt_sig(s.time),
            s.node.to_string(),
            fmt_sig(s.loss),
            fmt_sig(s.grad_norm_sq),
            s.tight.to_string(),
            s.loose.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_staleness_csv(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(STALENESS_COLUMNS)?;
    for r in &trace.records {
        w.write_record([
            r.applier.to_string(),
            r.applier_step.to_string(),
            r.producer.to_string(),
            r.producer_step.to_string(),
            r.tight_size.to_string(),
            r.loose_size.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_final_models(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    let dim = trace.x0.dim();
    let mut header = vec!["node".to_string()];
    header.extend((0..dim).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for (i, x) in trace.final_models.iter().enumerate() {
        let mut row = vec![i.to_string()];
        // `{:?}` prints the shortest representation that parses back bit-exactly
        row.extend(x.as_slice().iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_final_models(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut models = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let values = rec.iter().skip(1).map(|v| v.parse::<f64>()).collect::<Result<Vec<_>, _>>()?;
        models.push(values);
    }
    Ok(models)
}

pub fn write_events_log(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    match trace.event_log() {
        Some(log) => write!(f, "{log}")?,
        None => writeln!(f, "# no peer-to-peer event log for mode {}", trace.mode.as_str())?,
    }
    Ok(())
}

/// One trace.csv row, parsed back.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TraceRow {
    pub run_id: String,
    pub mode: String,
    pub topology: String,
    pub n: usize,
    pub eta: f64,
    pub seed: u64,
    pub t: u64,
    pub sim_time: f64,
    pub node: usize,
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub tight_staleness: usize,
    pub loose_staleness: usize,
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    anyhow::ensure!(header == TRACE_COLUMNS, "{}: unexpected header {header:?}", path.display());
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// Written as `manifest.txt`; enough to rebuild the run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub digest: String,
    pub run_id: String,
    pub replica: u32,
    pub seed: u64,
    pub eta: f64,
    pub eta_source: String,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let body = toml::to_string(self).context("serializing manifest")?;
        fs::write(path, format!("# dasgd run manifest\n{body}")).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))
    }
}
