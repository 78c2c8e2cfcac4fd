use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::{descend, instrument, ApplySample, Mode, RunTrace, SimConfig, SimError, TraceEvent, TraceEventKind};
use crate::ledger::{GradientId, StalenessLedger};
use crate::netsim::{GradientPacket, InFlightMessage, Network, Reception};
use crate::objective::ParamVector;
use crate::rng::{gradient_seed, stream, stream_rng};

enum Payload {
    Deliver(InFlightMessage),
    ComputeDone,
}

impl Payload {
    fn rank(&self) -> u8 {
        match self {
            Payload::Deliver(_) => 0,
            Payload::ComputeDone => 1,
        }
    }
}

struct Scheduled {
    time: f64,
    node: usize,
    seq: u64,
    payload: Payload,
}

impl Scheduled {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.payload.rank().cmp(&other.payload.rank()))
            .then(self.node.cmp(&other.node))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

struct Worker {
    step: u64,
    params: ParamVector,
    inbox: VecDeque<Arc<GradientPacket>>,
    busy: bool,
    samples_left: u64,
    clock: ChaCha8Rng,
}

pub(super) struct Simulation<'a> {
    cfg: &'a SimConfig,
    workers: Vec<Worker>,
    net: Network,
    ledger: StalenessLedger,
    queue: BinaryHeap<Scheduled>,
    next_seq: u64,
    trace: RunTrace,
}

impl<'a> Simulation<'a> {
    pub(super) fn new(cfg: &'a SimConfig) -> Self {
        let n = cfg.n();
        let workers = (0..n)
            .map(|i| Worker {
                step: 0,
                params: cfg.x0.clone(),
                inbox: VecDeque::new(),
                busy: false,
                samples_left: cfg.samples_per_node,
                clock: stream_rng(cfg.seed, &[stream::COMPUTE_TIME, i as u64]),
            })
            .collect();
        Self {
            cfg,
            workers,
            net: Network::new(cfg.topology.clone(), cfg.latency, cfg.seed),
            ledger: StalenessLedger::new(n),
            queue: BinaryHeap::new(),
            next_seq: 0,
            trace: RunTrace {
                mode: Mode::Dasgd,
                n,
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
            },
        }
    }

    fn schedule(&mut self, time: f64, node: usize, payload: Payload) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Scheduled { time, node, seq, payload });
    }

    fn log(&mut self, time: f64, node: usize, kind: TraceEventKind, gid: GradientId, peer: Option<usize>) {
        let step = self.workers[node].step;
        self.trace.events.push(TraceEvent { time, node, kind, gid, step, peer });
    }

    fn send_all(&mut self, msgs: Vec<InFlightMessage>, now: f64) {
        for m in msgs {
            self.log(now, m.from, TraceEventKind::Send, m.packet.id, Some(m.to));
            self.schedule(m.deliver_at, m.to, Payload::Deliver(m));
        }
    }

    /// Applies `vector` to worker `node`, recording staleness and metrics.
    fn apply(&mut self, node: usize, gid: GradientId, vector: &[f64], now: f64) -> Result<(), SimError> {
        let eta = self.cfg.eta;
        let step = self.workers[node].step;
        let record = self.ledger.record_application(node, step, gid)?;
        let (loss, grad_norm_sq) = instrument(&self.cfg.objective, &self.workers[node].params, eta, node, step, now)?;
        self.log(now, node, TraceEventKind::Apply, gid, None);
        let w = &mut self.workers[node];
        w.params = descend(&w.params, eta, vector, node, step, now)?;
        w.step += 1;
        self.trace.samples.push(ApplySample {
            time: now,
            node,
            step,
            gid,
            loss,
            grad_norm_sq,
            tight: record.tight_size,
            loose: record.loose_size,
        });
        self.trace.records.push(record);
        Ok(())
    }

    /// One pass of the worker loop for an idle worker: drain the inbox, then
    /// start a computation if samples remain.
    fn advance(&mut self, node: usize, now: f64) -> Result<(), SimError> {
        debug_assert!(!self.workers[node].busy);
        while let Some(packet) = self.workers[node].inbox.pop_front() {
            self.apply(node, packet.id, &packet.vector, now)?;
        }
        let w = &mut self.workers[node];
        if w.samples_left > 0 {
            w.samples_left -= 1;
            w.busy = true;
            let dt = self.cfg.compute_time.base.sample(&mut w.clock) * self.cfg.compute_time.scale(node);
            self.schedule(now + dt, node, Payload::ComputeDone);
        }
        Ok(())
    }

    fn on_compute_done(&mut self, node: usize, now: f64) -> Result<(), SimError> {
        let step = self.workers[node].step;
        let gid = GradientId::new(node, step);
        let seed = gradient_seed(self.cfg.seed, node, step);
        let vector = self.cfg.objective.stochastic_gradient(&self.workers[node].params, seed)?;
        self.ledger.register_gradient(gid)?;
        self.log(now, node, TraceEventKind::Compute, gid, None);
        self.trace.gradients.push((gid, vector.clone()));
        self.apply(node, gid, &vector, now)?;
        let packet = Arc::new(GradientPacket { id: gid, vector });
        let msgs = self.net.disseminate(node, packet, now);
        self.send_all(msgs, now);
        self.workers[node].busy = false;
        self.advance(node, now)
    }

    fn on_deliver(&mut self, node: usize, msg: InFlightMessage, now: f64) -> Result<(), SimError> {
        let (reception, relays) = self.net.on_receive(node, &msg);
        let kind = match reception {
            Reception::Accept => TraceEventKind::Deliver,
            Reception::Duplicate => TraceEventKind::Duplicate,
        };
        self.log(now, node, kind, msg.packet.id, Some(msg.from));
        self.send_all(relays, now);
        if reception == Reception::Accept {
            self.workers[node].inbox.push_back(msg.packet);
            if !self.workers[node].busy {
                self.advance(node, now)?;
            }
        }
        Ok(())
    }

    pub(super) fn run(mut self) -> Result<RunTrace, SimError> {
        for node in 0..self.workers.len() {
            self.advance(node, 0.0)?;
        }
        let mut now = 0.0;
        while let Some(ev) = self.queue.pop() {
            now = ev.time;
            match ev.payload {
                Payload::ComputeDone => self.on_compute_done(ev.node, now)?,
                Payload::Deliver(msg) => self.on_deliver(ev.node, msg, now)?,
            }
        }
        debug_assert!(self.workers.iter().all(|w| w.inbox.is_empty() && !w.busy && w.samples_left == 0));
        self.trace.end_time = now;
        self.trace.summary = Some(self.ledger.summarize()?);
        self.trace.final_sets = (0..self.workers.len()).map(|i| self.ledger.gradient_set(i)).collect();
        self.trace.final_models = self.workers.into_iter().map(|w| w.params).collect();
        Ok(self.trace)
    }
}
