//! `run`: resolve the stepsize, execute replicas, write one directory per replica.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use dasgd_core::engine::{self, RunTrace, SimError};
use dasgd_core::objective::ObjectiveSpec;
use dasgd_core::theory::stepsize_bound_tight;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::output::{self, fmt_sig, Manifest, RunLabel};
use crate::report::{compare_with_bound, kind_name, no_bound_reason, staleness_or_zero, stepsize_bounds, RunConstants};
use crate::{input_error, DivergenceError};

/// Stepsize used by staleness pilots. The event schedule does not depend on η,
/// so any value measures the same staleness; a tiny one cannot diverge.
const PILOT_ETA: f64 = 1e-12;

/// Objective built once per experiment, with its optimal value.
#[derive(Debug, Clone)]
pub struct PreparedObjective {
    pub spec: Arc<ObjectiveSpec>,
    pub f_star: f64,
}

impl PreparedObjective {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let spec = cfg.build_objective().map_err(input_error)?;
        let f_star = spec.optimal_value()?;
        Ok(Self { spec: Arc::new(spec), f_star })
    }
}

/// Runs the configured mode for `run.pilot_fraction` of the budget and returns
/// `S_avg`. With a fraction of 1 this is exactly the full run's staleness.
pub fn pilot_staleness(cfg: &ExperimentConfig, objective: &PreparedObjective, seed: u64) -> Result<f64> {
    let mut pilot = cfg.clone();
    let budget = (cfg.run.samples_per_node as f64 * cfg.run.pilot_fraction).ceil() as u64;
    pilot.run.samples_per_node = budget.clamp(1, cfg.run.samples_per_node);
    let sim = pilot.sim_config(Arc::clone(&objective.spec), PILOT_ETA, seed).map_err(input_error)?;
    let trace = engine::run_mode(cfg.mode(), &sim).map_err(sim_error)?;
    Ok(staleness_or_zero(&trace).s_avg)
}

/// `(eta, source)`: the configured value, or the tight stepsize bound at the
/// pilot's measured staleness.
pub fn resolve_eta(cfg: &ExperimentConfig, objective: &PreparedObjective, seed: u64) -> Result<(f64, String)> {
    if let Some(eta) = cfg.run.eta {
        return Ok((eta, "config".into()));
    }
    let s_avg = pilot_staleness(cfg, objective, seed)?;
    let l = objective.spec.lipschitz_constant()?;
    Ok((stepsize_bound_tight(l, s_avg), format!("pilot (S_avg = {})", fmt_sig(s_avg))))
}

fn sim_error(e: SimError) -> anyhow::Error {
    match e {
        SimError::InvalidConfig(_) | SimError::Topology(_) => input_error(e.into()),
        other => other.into(),
    }
}

/// One replica to execute and where its files go.
#[derive(Debug, Clone)]
pub struct Job {
    pub config: ExperimentConfig,
    pub objective: PreparedObjective,
    pub replica: u32,
    pub run_id: String,
    pub dir: PathBuf,
}

impl Job {
    pub fn seed(&self) -> u64 {
        self.config.run.seed.wrapping_add(self.replica as u64)
    }
}

#[derive(Debug, Clone)]
pub struct JobResult {
    pub run_id: String,
    pub dir: PathBuf,
    pub eta: f64,
    pub s_avg: f64,
    pub final_psi: f64,
    pub trace: RunTrace,
}

/// Executes one job and writes its directory. Divergence becomes a
/// [`DivergenceError`] carrying the recommended stepsize.
pub fn execute(job: &Job) -> Result<JobResult> {
    let cfg = &job.config;
    let seed = job.seed();
    let (eta, eta_source) = resolve_eta(cfg, &job.objective, seed)?;
    let sim = cfg.sim_config(Arc::clone(&job.objective.spec), eta, seed).map_err(input_error)?;
    let trace = match engine::run_mode(cfg.mode(), &sim) {
        Ok(t) => t,
        Err(SimError::Diverged { eta, node, step, time }) => {
            let s_avg = pilot_staleness(cfg, &job.objective, seed)?;
            let recommended = stepsize_bound_tight(job.objective.spec.lipschitz_constant()?, s_avg);
            return Err(DivergenceError {
                eta,
                recommended,
                detail: format!("{}: diverged at node {node}, step {step}, time {}", job.run_id, fmt_sig(time)),
            }
            .into());
        }
        Err(e) => return Err(sim_error(e)),
    };
    fs::create_dir_all(&job.dir).with_context(|| format!("cannot create {}", job.dir.display()))?;
    let label = RunLabel { run_id: job.run_id.clone(), topology: cfg.topology.kind.to_string() };
    output::write_trace_csv(&job.dir.join("trace.csv"), &label, &trace, cfg.run.stride)?;
    output::write_staleness_csv(&job.dir.join("staleness.csv"), &trace)?;
    output::write_events_log(&job.dir.join("events.log"), &trace)?;
    output::write_final_models(&job.dir.join("final_models.csv"), &trace)?;
    let summary = summary_text(cfg, &job.objective, &trace)?;
    fs::write(job.dir.join("summary.txt"), &summary)?;
    Manifest {
        digest: cfg.digest(),
        run_id: job.run_id.clone(),
        replica: job.replica,
        seed,
        eta,
        eta_source,
        config: cfg.clone(),
    }
    .write(&job.dir.join("manifest.txt"))?;
    Ok(JobResult {
        run_id: job.run_id.clone(),
        dir: job.dir.clone(),
        eta,
        s_avg: staleness_or_zero(&trace).s_avg,
        final_psi: trace.final_psi(),
        trace,
    })
}

/// Node-wise loss sequences never increase.
fn losses_monotone(trace: &RunTrace) -> bool {
    let mut last = vec![f64::INFINITY; trace.n];
    let mut samples: Vec<_> = trace.samples.iter().collect();
    samples.sort_by_key(|s| (s.node, s.step));
    samples.iter().all(|s| {
        let ok = s.loss <= last[s.node];
        last[s.node] = s.loss;
        ok
    })
}

pub fn summary_text(cfg: &ExperimentConfig, objective: &PreparedObjective, trace: &RunTrace) -> Result<String> {
    let s = staleness_or_zero(trace);
    let c = RunConstants::measure(&objective.spec, objective.f_star, trace)?;
    let (tight, loose) = stepsize_bounds(c.l, &s);
    let cmp = compare_with_bound(&trace.psi_series(), &c, &s, trace.eta);
    let mut out = String::new();
    let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("string write");
    kv("mode", trace.mode.as_str().into());
    kv("topology", cfg.topology.kind.to_string());
    kv("n", trace.n.to_string());
    kv("objective", objective.spec.kind_name().into());
    kv("eta", fmt_sig(trace.eta));
    kv("seed", trace.seed.to_string());
    kv("samples_per_node", cfg.run.samples_per_node.to_string());
    kv("gradients_computed", trace.gradients_computed().to_string());
    kv("applications", trace.samples.len().to_string());
    kv("end_time", fmt_sig(trace.end_time));
    kv("throughput", fmt_sig(trace.throughput()));
    kv("s_avg", fmt_sig(s.s_avg));
    kv("s_max", s.s_max.to_string());
    kv("shat_avg", fmt_sig(s.shat_avg));
    kv("shat_max", s.shat_max.to_string());
    if !trace.delays.is_empty() {
        let mean = trace.delays.iter().sum::<u64>() as f64 / trace.delays.len() as f64;
        kv("delay_mean", fmt_sig(mean));
        kv("delay_max", trace.delays.iter().max().copied().unwrap_or(0).to_string());
    }
    kv("lipschitz", fmt_sig(c.l));
    kv("sigma", fmt_sig(c.sigma));
    kv("q_observed", fmt_sig(c.q));
    kv("r0", fmt_sig(c.r0));
    kv("stepsize_bound_tight", fmt_sig(tight));
    kv("stepsize_bound_loose", fmt_sig(loose));
    let final_loss = trace.samples.last().map(|x| x.loss).unwrap_or(f64::NAN);
    kv("final_loss_sample", fmt_sig(final_loss));
    kv("loss_monotone", losses_monotone(trace).to_string());
    kv("final_psi", fmt_sig(cmp.final_psi));
    kv(
        "bound",
        match cmp.kind {
            Some(k) => kind_name(k).into(),
            None => format!("none ({})", no_bound_reason(&c, &s)),
        },
    );
    if let Some(b) = cmp.final_bound {
        kv("final_bound", fmt_sig(b));
        kv("bound_violations", format!("{} of {}", cmp.violations, cmp.checked));
        kv("bound_holds", cmp.holds().to_string());
    }
    Ok(out)
}

/// Runs every job on the shared pool, keeping input order.
pub fn execute_all(jobs: &[Job]) -> Result<Vec<Result<JobResult>>> {
    let pool = crate::thread_pool()?;
    Ok(pool.install(|| jobs.par_iter().map(execute).collect()))
}

/// `run`: replicas go straight into `out` when there is one, else `out/replica-k`.
pub fn run_command(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<JobResult>> {
    let objective = PreparedObjective::build(cfg)?;
    let replicas = cfg.run.replicas;
    let jobs: Vec<Job> = (0..replicas)
        .map(|k| Job {
            config: cfg.clone(),
            objective: objective.clone(),
            replica: k,
            run_id: if replicas == 1 { "run".into() } else { format!("replica-{k}") },
            dir: if replicas == 1 { out.to_path_buf() } else { out.join(format!("replica-{k}")) },
        })
        .collect();
    execute_all(&jobs)?.into_iter().collect()
}
