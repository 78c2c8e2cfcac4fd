//! Line-oriented event log:
//!
//! ```text
//! COMPUTE <node> <step>
//! APPLY <node> <step> <producer> <producer_step>
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use thiserror::Error;

use super::GradientId;
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogEvent {
    Compute { node: usize, step: u64 },
    Apply { node: usize, step: u64, producer: usize, pstep: u64 },
}

impl fmt::Display for LogEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogEvent::Compute { node, step } => write!(f, "COMPUTE {node} {step}"),
            LogEvent::Apply { node, step, producer, pstep } => write!(f, "APPLY {node} {step} {producer} {pstep}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {msg}")]
pub struct LogParseError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    events: Vec<LogEvent>,
}

impl EventLog {
    pub fn new(events: Vec<LogEvent>) -> Self {
        Self { events }
    }

    pub fn events(&self) -> &[LogEvent] {
        &self.events
    }

    pub fn push(&mut self, ev: LogEvent) {
        self.events.push(ev);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn apply_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, LogEvent::Apply { .. })).count()
    }

    pub fn node_count(&self) -> usize {
        self.events
            .iter()
            .map(|e| match *e {
                LogEvent::Compute { node, .. } => node,
                LogEvent::Apply { node, producer, .. } => node.max(producer),
            })
            .max()
            .map_or(0, |m| m + 1)
    }
}

impl fmt::Display for EventLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ev in &self.events {
            writeln!(f, "{ev}")?;
        }
        Ok(())
    }
}

impl FromStr for EventLog {
    type Err = LogParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut events = Vec::new();
        for (i, raw) in s.lines().enumerate() {
            let line = i + 1;
            let text = raw.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let err = |msg: String| LogParseError { line, msg };
            let mut parts = text.split_whitespace();
            let verb = parts.next().unwrap_or_default();
            let nums: Vec<u64> = parts
                .map(|p| p.parse::<u64>().map_err(|_| err(format!("`{p}` is not a non-negative integer"))))
                .collect::<Result<_, _>>()?;
            let ev = match (verb, nums.as_slice()) {
                ("COMPUTE", &[node, step]) => LogEvent::Compute { node: node as usize, step },
                ("APPLY", &[node, step, producer, pstep]) => {
                    LogEvent::Apply { node: node as usize, step, producer: producer as usize, pstep }
                }
                ("COMPUTE", _) => return Err(err("COMPUTE takes 2 fields: node step".into())),
                ("APPLY", _) => return Err(err("APPLY takes 4 fields: node step producer pstep".into())),
                (other, _) => return Err(err(format!("unknown event `{other}`"))),
            };
            events.push(ev);
        }
        Ok(Self { events })
    }
}

/// A random but protocol-valid log: `n` nodes, each taking at most `max_steps`
/// steps. Each node either computes (and immediately applies) a gradient or
/// applies a random pending foreign gradient, so delivery order is shuffled.
pub fn random_event_log(seed: u64, n: usize, max_steps: u64) -> EventLog {
    assert!(n >= 1 && max_steps >= 1);
    let mut rng = stream_rng(seed, &[stream::EVENT_LOG]);
    let caps: Vec<u64> = (0..n).map(|_| rng.random_range(1..=max_steps)).collect();
    let compute_bias: f64 = rng.random_range(0.2..0.8);
    let mut steps = vec![0u64; n];
    let mut pending: Vec<Vec<GradientId>> = vec![Vec::new(); n];
    let mut log = EventLog::default();

    loop {
        let active: Vec<usize> = (0..n).filter(|&i| steps[i] < caps[i]).collect();
        let Some(&node) = active.choose(&mut rng) else { break };
        let t = steps[node];
        if !pending[node].is_empty() && !rng.random_bool(compute_bias) {
            let k = rng.random_range(0..pending[node].len());
            let gid = pending[node].swap_remove(k);
            log.push(LogEvent::Apply { node, step: t, producer: gid.producer, pstep: gid.step });
        } else {
            log.push(LogEvent::Compute { node, step: t });
            log.push(LogEvent::Apply { node, step: t, producer: node, pstep: t });
            for (j, queue) in pending.iter_mut().enumerate() {
                if j != node {
                    queue.push(GradientId::new(node, t));
                }
            }
        }
        steps[node] += 1;
    }
    log
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print_round_trip() {
        let text = "# header\nCOMPUTE 0 0\nAPPLY 0 0 0 0\n\nAPPLY 1 0 0 0\n";
        let log: EventLog = text.parse().unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log.apply_count(), 2);
        assert_eq!(log.node_count(), 2);
        assert_eq!(log.to_string(), "COMPUTE 0 0\nAPPLY 0 0 0 0\nAPPLY 1 0 0 0\n");
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        assert_eq!("COMPUTE 0 0\nAPPLY 1 2\n".parse::<EventLog>().unwrap_err().line, 2);
        assert_eq!("SEND 0 0\n".parse::<EventLog>().unwrap_err().line, 1);
        assert_eq!("\n\nCOMPUTE -1 0".parse::<EventLog>().unwrap_err().line, 3);
    }

    #[test]
    fn empty_log() {
        let log: EventLog = "".parse().unwrap();
        assert!(log.is_empty());
        assert_eq!(log.node_count(), 0);
    }

    #[test]
    fn random_logs_respect_caps_and_are_seeded() {
        let a = random_event_log(9, 4, 30);
        assert_eq!(a, random_event_log(9, 4, 30));
        assert_ne!(a, random_event_log(10, 4, 30));
        let per_node = (0..4).map(|i| {
            a.events().iter().filter(|e| matches!(e, LogEvent::Apply { node, .. } if *node == i)).count()
        });
        assert!(per_node.into_iter().all(|c| c <= 30));
    }
}
