use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand_chacha::ChaCha8Rng;

use super::{descend, instrument, ApplySample, Mode, RunTrace, SimConfig, SimError, TraceEvent, TraceEventKind};
use crate::ledger::{DenseSet, GradientId, StalenessLedger};
use crate::objective::ParamVector;
use crate::rng::{gradient_seed, stream, stream_rng};

fn empty_trace(mode: Mode, cfg: &SimConfig) -> RunTrace {
    RunTrace {
        mode,
        n: cfg.n(),
        eta: cfg.eta,
        seed: cfg.seed,
        x0: cfg.x0.clone(),
        events: Vec::new(),
        samples: Vec::new(),
        records: Vec::new(),
        summary: None,
        gradients: Vec::new(),
        final_models: Vec::new(),
        final_sets: Vec::new(),
        delays: Vec::new(),
        end_time: 0.0,
    }
}

fn clocks(cfg: &SimConfig) -> Vec<ChaCha8Rng> {
    (0..cfg.n()).map(|i| stream_rng(cfg.seed, &[stream::COMPUTE_TIME, i as u64])).collect()
}

pub(super) fn run_sync(cfg: &SimConfig) -> Result<RunTrace, SimError> {
    let n = cfg.n();
    let mut trace = empty_trace(Mode::Sync, cfg);
    let mut clocks = clocks(cfg);
    let mut x = cfg.x0.clone();
    let mut now = 0.0;
    for round in 0..cfg.samples_per_node {
        let mut slowest: f64 = 0.0;
        let mut avg = vec![0.0; x.dim()];
        for (i, clock) in clocks.iter_mut().enumerate() {
            slowest = slowest.max(cfg.compute_time.base.sample(clock) * cfg.compute_time.scale(i));
            let g = cfg.objective.stochastic_gradient(&x, gradient_seed(cfg.seed, i, round))?;
            for (a, v) in avg.iter_mut().zip(&g) {
                *a += v;
            }
            trace.gradients.push((GradientId::new(i, round), g));
        }
        for a in &mut avg {
            *a /= n as f64;
        }
        now += slowest;
        for i in 0..n {
            trace.events.push(TraceEvent {
                time: now,
                node: i,
                kind: TraceEventKind::Compute,
                gid: GradientId::new(i, round),
                step: round,
                peer: None,
            });
        }
        let (loss, grad_norm_sq) = instrument(&cfg.objective, &x, cfg.eta, 0, round, now)?;
        let gid = GradientId::new(0, round);
        trace.events.push(TraceEvent { time: now, node: 0, kind: TraceEventKind::Apply, gid, step: round, peer: None });
        trace.samples.push(ApplySample { time: now, node: 0, step: round, gid, loss, grad_norm_sq, tight: 0, loose: 0 });
        x = descend(&x, cfg.eta, &avg, 0, round, now)?;
    }
    trace.end_time = now;
    trace.final_models = vec![x; n];
    Ok(trace)
}

#[derive(Debug)]
enum ServerEvent {
    /// Worker finished a gradient; it reaches the server after one latency draw.
    Arrive { worker: usize, gid: GradientId, vector: Vec<f64>, fetched_at: u64 },
    /// The server's reply (its model at send time) reaches the worker.
    Reply { worker: usize, model: ParamVector, set: DenseSet, count: u64 },
    ComputeDone { worker: usize },
}

impl ServerEvent {
    fn rank(&self) -> u8 {
        match self {
            ServerEvent::Arrive { .. } | ServerEvent::Reply { .. } => 0,
            ServerEvent::ComputeDone { .. } => 1,
        }
    }

    fn node(&self) -> usize {
        match self {
            ServerEvent::Arrive { worker, .. } | ServerEvent::Reply { worker, .. } | ServerEvent::ComputeDone { worker } => {
                *worker
            }
        }
    }
}

struct Queued {
    time: f64,
    seq: u64,
    event: ServerEvent,
}

impl Queued {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.event.rank().cmp(&other.event.rank()))
            .then(self.event.node().cmp(&other.event.node()))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

#[derive(Default)]
struct EventQueue {
    heap: BinaryHeap<Queued>,
    next_seq: u64,
}

impl EventQueue {
    fn push(&mut self, time: f64, event: ServerEvent) {
        self.heap.push(Queued { time, seq: self.next_seq, event });
        self.next_seq += 1;
    }

    fn pop(&mut self) -> Option<Queued> {
        self.heap.pop()
    }
}

struct Worker {
    model: ParamVector,
    set: DenseSet,
    fetched_at: u64,
    computed: u64,
    clock: ChaCha8Rng,
}

/// Parameter server as ledger applier 0. A worker's gradient is registered with
/// the server set it fetched, so its tight staleness at the server is exactly
/// the number of server updates since that fetch.
pub(super) fn run_centralized(cfg: &SimConfig) -> Result<RunTrace, SimError> {
    let eta = cfg.eta;
    let mut trace = empty_trace(Mode::CentralizedAsgd, cfg);
    let mut ledger = StalenessLedger::new(1);
    let mut net_rng = stream_rng(cfg.seed, &[stream::NETWORK]);
    let mut server = cfg.x0.clone();
    let mut server_count: u64 = 0;
    let mut workers: Vec<Worker> = clocks(cfg)
        .into_iter()
        .map(|clock| Worker { model: cfg.x0.clone(), set: DenseSet::new(), fetched_at: 0, computed: 0, clock })
        .collect();
    let mut queue = EventQueue::default();
    let start_compute = |w: &mut Worker, worker: usize, now: f64, queue: &mut EventQueue| {
        if w.computed < cfg.samples_per_node {
            let dt = cfg.compute_time.base.sample(&mut w.clock) * cfg.compute_time.scale(worker);
            queue.push(now + dt, ServerEvent::ComputeDone { worker });
        }
    };
    for (i, w) in workers.iter_mut().enumerate() {
        start_compute(w, i, 0.0, &mut queue);
    }

    let mut now = 0.0;
    while let Some(Queued { time, event, .. }) = queue.pop() {
        now = time;
        match event {
            ServerEvent::ComputeDone { worker } => {
                let w = &mut workers[worker];
                let gid = GradientId::new(worker, w.computed);
                let vector = cfg.objective.stochastic_gradient(&w.model, gradient_seed(cfg.seed, worker, w.computed))?;
                ledger.register_with_snapshot(gid, w.set.clone())?;
                w.computed += 1;
                trace.events.push(TraceEvent {
                    time,
                    node: worker,
                    kind: TraceEventKind::Compute,
                    gid,
                    step: gid.step,
                    peer: None,
                });
                trace.events.push(TraceEvent {
                    time,
                    node: worker,
                    kind: TraceEventKind::Send,
                    gid,
                    step: gid.step,
                    peer: Some(0),
                });
                trace.gradients.push((gid, vector.clone()));
                let arrive = time + cfg.latency.sample(&mut net_rng);
                let fetched_at = w.fetched_at;
                queue.push(arrive, ServerEvent::Arrive { worker, gid, vector, fetched_at });
            }
            ServerEvent::Arrive { worker, gid, vector, fetched_at } => {
                let record = ledger.record_application(0, server_count, gid)?;
                let (loss, grad_norm_sq) = instrument(&cfg.objective, &server, eta, 0, server_count, time)?;
                trace.events.push(TraceEvent {
                    time,
                    node: 0,
                    kind: TraceEventKind::Apply,
                    gid,
                    step: server_count,
                    peer: Some(worker),
                });
                trace.samples.push(ApplySample {
                    time,
                    node: 0,
                    step: server_count,
                    gid,
                    loss,
                    grad_norm_sq,
                    tight: record.tight_size,
                    loose: record.loose_size,
                });
                trace.delays.push(server_count - fetched_at);
                trace.records.push(record);
                server = descend(&server, eta, &vector, 0, server_count, time)?;
                server_count += 1;
                let reply_at = time + cfg.latency.sample(&mut net_rng);
                let reply = ServerEvent::Reply {
                    worker,
                    model: server.clone(),
                    set: ledger.dense_set(0).clone(),
                    count: server_count,
                };
                queue.push(reply_at, reply);
            }
            ServerEvent::Reply { worker, model, set, count } => {
                trace.events.push(TraceEvent {
                    time,
                    node: worker,
                    kind: TraceEventKind::Deliver,
                    gid: GradientId::new(worker, workers[worker].computed.saturating_sub(1)),
                    step: workers[worker].computed,
                    peer: Some(0),
                });
                let w = &mut workers[worker];
                w.model = model;
                w.set = set;
                w.fetched_at = count;
                start_compute(w, worker, time, &mut queue);
            }
        }
    }
    trace.end_time = now;
    trace.summary = Some(ledger.summarize()?);
    trace.final_sets = vec![ledger.gradient_set(0)];
    trace.final_models = vec![server];
    Ok(trace)
}
