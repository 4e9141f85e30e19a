//! Discrete-event model of streamed offload execution.
//!
//! A workload of `elements` items is cut into `tasks` chunks. Each chunk moves
//! through transfer-in, compute and transfer-out. Every transfer shares a single
//! host-device channel served first-come-first-served by ready time (ties by
//! task index). Compute stages run on `partitions` disjoint core groups, one task
//! at a time per group, with tasks dealt round-robin.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_TOTAL_CORES: u32 = 224;

/// A `(#partitions, #tasks)` pair. Ordering is lexicographic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StreamConfig {
    pub partitions: u32,
    pub tasks: u32,
}

impl StreamConfig {
    pub const BASELINE: StreamConfig = StreamConfig {
        partitions: 1,
        tasks: 1,
    };

    pub const fn new(partitions: u32, tasks: u32) -> Self {
        StreamConfig { partitions, tasks }
    }

    fn key(self) -> u64 {
        (u64::from(self.partitions) << 32) | u64::from(self.tasks)
    }
}

impl fmt::Display for StreamConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.partitions, self.tasks)
    }
}

fn default_total_cores() -> u32 {
    DEFAULT_TOTAL_CORES
}

/// Generator parameters for one synthetic (program, dataset) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub program_id: String,
    pub dataset_id: String,
    pub elements: u64,
    pub bytes_per_element_in: f64,
    pub bytes_per_element_out: f64,
    /// seconds per byte
    pub transfer_alpha: f64,
    /// seconds per transfer
    pub transfer_beta: f64,
    /// seconds per element per core
    pub compute_eta: f64,
    /// fixed seconds per task
    pub compute_gamma: f64,
    /// seconds per managed thread per task launch
    pub thread_overhead: f64,
    /// seconds per partition per run
    pub partition_overhead: f64,
    #[serde(default = "default_total_cores")]
    pub total_cores: u32,
    pub outer_iterations: u32,
    pub noise_sigma: f64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidWorkload {
                id: format!("{}/{}", self.program_id, self.dataset_id),
                reason: reason.to_string(),
            })
        };
        if self.elements == 0 {
            return fail("elements must be at least 1");
        }
        if self.total_cores == 0 {
            return fail("total_cores must be at least 1");
        }
        if self.outer_iterations == 0 {
            return fail("outer_iterations must be at least 1");
        }
        let rates = [
            ("bytes_per_element_in", self.bytes_per_element_in),
            ("bytes_per_element_out", self.bytes_per_element_out),
            ("transfer_alpha", self.transfer_alpha),
            ("transfer_beta", self.transfer_beta),
            ("compute_eta", self.compute_eta),
            ("compute_gamma", self.compute_gamma),
            ("thread_overhead", self.thread_overhead),
            ("partition_overhead", self.partition_overhead),
            ("noise_sigma", self.noise_sigma),
        ];
        for (name, v) in rates {
            if !v.is_finite() || v < 0.0 {
                return fail(&format!("{name} must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn cores_per_partition(&self, partitions: u32) -> u32 {
        (self.total_cores / partitions.max(1)).max(1)
    }

    /// Split `elements` into `tasks` chunks; the last chunk takes the remainder.
    pub fn chunk_sizes(&self, tasks: u32) -> Vec<u64> {
        let t = u64::from(tasks);
        let base = self.elements / t;
        let mut sizes = vec![base; tasks as usize];
        if let Some(last) = sizes.last_mut() {
            *last += self.elements - base * t;
        }
        sizes
    }

    pub fn check_config(&self, c: StreamConfig) -> Result<()> {
        let invalid = |reason: String| Err(Error::InvalidConfig { config: c, reason });
        if c.partitions == 0 || c.tasks == 0 {
            return invalid("partitions and tasks must be at least 1".into());
        }
        if c.partitions > self.total_cores {
            return invalid(format!(
                "partitions exceed total_cores ({})",
                self.total_cores
            ));
        }
        if u64::from(c.tasks) > self.elements {
            return invalid(format!("tasks exceed elements ({})", self.elements));
        }
        Ok(())
    }
}

/// Per-task stage durations in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDurations {
    pub transfer_in: Vec<f64>,
    pub compute: Vec<f64>,
    pub transfer_out: Vec<f64>,
}

impl StageDurations {
    pub fn tasks(&self) -> usize {
        self.compute.len()
    }

    pub fn total_transfer(&self) -> f64 {
        self.transfer_in.iter().chain(&self.transfer_out).sum()
    }

    pub fn total_compute(&self) -> f64 {
        self.compute.iter().sum()
    }
}

pub fn stage_durations(w: &WorkloadSpec, c: StreamConfig) -> Result<StageDurations> {
    w.check_config(c)?;
    let cores = f64::from(w.cores_per_partition(c.partitions));
    let threading =
        w.thread_overhead * cores * f64::from(w.outer_iterations) / f64::from(c.tasks);
    let chunks = w.chunk_sizes(c.tasks);
    let transfer = |bytes_per_element: f64, chunk: u64| {
        w.transfer_alpha * bytes_per_element * chunk as f64 + w.transfer_beta
    };
    Ok(StageDurations {
        transfer_in: chunks
            .iter()
            .map(|&m| transfer(w.bytes_per_element_in, m))
            .collect(),
        compute: chunks
            .iter()
            .map(|&m| w.compute_eta * m as f64 / cores + w.compute_gamma + threading)
            .collect(),
        transfer_out: chunks
            .iter()
            .map(|&m| transfer(w.bytes_per_element_out, m))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    In,
    Out,
}

/// A transfer waiting for the channel. Ordered by (ready time, task, direction).
#[derive(Debug, Clone, Copy)]
struct PendingTransfer {
    ready: f64,
    task: usize,
    direction: Direction,
}

impl PartialEq for PendingTransfer {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for PendingTransfer {}
impl PartialOrd for PendingTransfer {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for PendingTransfer {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ready
            .total_cmp(&other.ready)
            .then(self.task.cmp(&other.task))
            .then(self.direction.cmp(&other.direction))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    TransferDone(Direction, usize),
    ComputeDone(usize),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.seq.cmp(&other.seq))
    }
}

struct Pipeline<'a> {
    stages: &'a StageDurations,
    partitions: usize,
    events: BinaryHeap<Reverse<Event>>,
    seq: u64,
    pending: BinaryHeap<Reverse<PendingTransfer>>,
    channel_busy: bool,
    input_done: Vec<bool>,
    queues: Vec<VecDeque<usize>>,
    partition_busy: Vec<bool>,
    dirty: Vec<usize>,
    finish: f64,
}

impl<'a> Pipeline<'a> {
    fn new(stages: &'a StageDurations, partitions: usize) -> Self {
        let tasks = stages.tasks();
        let mut queues = vec![VecDeque::new(); partitions];
        for task in 0..tasks {
            queues[task % partitions].push_back(task);
        }
        let pending = (0..tasks)
            .map(|task| {
                Reverse(PendingTransfer {
                    ready: 0.0,
                    task,
                    direction: Direction::In,
                })
            })
            .collect();
        Pipeline {
            stages,
            partitions,
            events: BinaryHeap::new(),
            seq: 0,
            pending,
            channel_busy: false,
            input_done: vec![false; tasks],
            queues,
            partition_busy: vec![false; partitions],
            dirty: Vec::new(),
            finish: 0.0,
        }
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.events.push(Reverse(Event {
            time,
            seq: self.seq,
            kind,
        }));
    }

    fn apply(&mut self, now: f64, kind: EventKind) {
        match kind {
            EventKind::TransferDone(Direction::In, task) => {
                self.channel_busy = false;
                self.input_done[task] = true;
                self.dirty.push(task % self.partitions);
            }
            EventKind::TransferDone(Direction::Out, _) => {
                self.channel_busy = false;
                self.finish = self.finish.max(now);
            }
            EventKind::ComputeDone(task) => {
                self.partition_busy[task % self.partitions] = false;
                self.dirty.push(task % self.partitions);
                self.pending.push(Reverse(PendingTransfer {
                    ready: now,
                    task,
                    direction: Direction::Out,
                }));
            }
        }
    }

    fn dispatch(&mut self, now: f64) {
        if !self.channel_busy {
            if let Some(Reverse(next)) = self.pending.pop() {
                let duration = match next.direction {
                    Direction::In => self.stages.transfer_in[next.task],
                    Direction::Out => self.stages.transfer_out[next.task],
                };
                self.channel_busy = true;
                self.schedule(
                    now + duration,
                    EventKind::TransferDone(next.direction, next.task),
                );
            }
        }
        let mut dirty = std::mem::take(&mut self.dirty);
        dirty.sort_unstable();
        dirty.dedup();
        for part in dirty.drain(..) {
            if self.partition_busy[part] {
                continue;
            }
            if let Some(&task) = self.queues[part].front() {
                if self.input_done[task] {
                    self.queues[part].pop_front();
                    self.partition_busy[part] = true;
                    self.schedule(now + self.stages.compute[task], EventKind::ComputeDone(task));
                }
            }
        }
        self.dirty = dirty;
    }

    fn run(mut self) -> f64 {
        self.dispatch(0.0);
        while let Some(Reverse(event)) = self.events.pop() {
            let now = event.time;
            self.apply(now, event.kind);
            while let Some(Reverse(next)) = self.events.peek() {
                if next.time != now {
                    break;
                }
                let kind = next.kind;
                self.events.pop();
                self.apply(now, kind);
            }
            self.dispatch(now);
        }
        self.finish
    }
}

/// Event-driven makespan of the three-stage pipeline, without partition
/// overhead or noise.
pub fn pipeline_makespan(stages: &StageDurations, partitions: u32) -> f64 {
    if stages.tasks() == 0 {
        return 0.0;
    }
    Pipeline::new(stages, partitions.max(1) as usize).run()
}

/// Noise-free runtime: pipeline makespan plus the per-partition management cost.
pub fn deterministic_runtime(w: &WorkloadSpec, c: StreamConfig) -> Result<f64> {
    let stages = stage_durations(w, c)?;
    Ok(pipeline_makespan(&stages, c.partitions)
        + w.partition_overhead * f64::from(c.partitions))
}

/// Floor on the noise multiplier so runtimes stay positive for very large sigma.
const MIN_NOISE_MULTIPLIER: f64 = 0.01;

/// Multiplicative noise `1 + eps`, eps ~ N(0, sigma) clipped at ±3 sigma.
pub fn noise_multiplier(sigma: f64, seed: u64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let z: f64 = seed::rng(seed).sample(StandardNormal);
    let eps = (z * sigma).clamp(-3.0 * sigma, 3.0 * sigma);
    (1.0 + eps).max(MIN_NOISE_MULTIPLIER)
}

/// One simulated execution of `w` under `c`.
pub fn simulate_run(w: &WorkloadSpec, c: StreamConfig, seed: u64) -> Result<f64> {
    Ok(deterministic_runtime(w, c)? * noise_multiplier(w.noise_sigma, seed))
}

/// Repetition policy for [`profile_config`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunPolicy {
    pub min_runs: u32,
    pub max_runs: u32,
    pub confidence: f64,
    /// Stop once (upper - lower) / mean drops below this.
    pub max_relative_width: f64,
}

impl Default for RunPolicy {
    fn default() -> Self {
        RunPolicy {
            min_runs: 3,
            max_runs: 100,
            confidence: 0.95,
            max_relative_width: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfRecord {
    pub config: StreamConfig,
    pub runtime: f64,
    pub runs: u32,
    #[serde(default)]
    pub unconverged: bool,
}

fn run_seed(seed: u64, run: u32) -> u64 {
    seed::derive(seed, &[u64::from(run)])
}

/// Width of the two-sided Student-t confidence interval relative to the mean.
pub fn relative_ci_width(samples: &[f64], confidence: f64) -> f64 {
    let n = samples.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return 0.0;
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("degrees of freedom positive")
        .inverse_cdf(0.5 + confidence / 2.0);
    2.0 * t * (var / n as f64).sqrt() / mean
}

pub fn profile_config(w: &WorkloadSpec, c: StreamConfig, seed: u64) -> Result<PerfRecord> {
    profile_config_with(w, c, seed, &RunPolicy::default())
}

/// Repeat [`simulate_run`] (run `i` seeded from `(seed, i)`) until the CI
/// criterion holds or `max_runs` is reached.
pub fn profile_config_with(
    w: &WorkloadSpec,
    c: StreamConfig,
    seed: u64,
    policy: &RunPolicy,
) -> Result<PerfRecord> {
    if policy.min_runs == 0 || policy.max_runs < policy.min_runs {
        return Err(Error::InvalidArgument(format!(
            "run policy needs 1 <= min_runs <= max_runs, got {}..{}",
            policy.min_runs, policy.max_runs
        )));
    }
    // simulate_run factors as deterministic_runtime * noise, so the pipeline
    // is evaluated once and only the noise is redrawn per run.
    let base = deterministic_runtime(w, c)?;
    let mut samples = Vec::with_capacity(policy.min_runs as usize);
    let mut converged = false;
    for run in 0..policy.max_runs {
        samples.push(base * noise_multiplier(w.noise_sigma, run_seed(seed, run)));
        if samples.len() >= policy.min_runs as usize
            && relative_ci_width(&samples, policy.confidence) < policy.max_relative_width
        {
            converged = true;
            break;
        }
    }
    let runs = samples.len() as u32;
    Ok(PerfRecord {
        config: c,
        runtime: samples.iter().sum::<f64>() / f64::from(runs),
        runs,
        unconverged: !converged,
    })
}

/// Cartesian product of partition and task counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    partitions: Vec<u32>,
    tasks: Vec<u32>,
}

impl Grid {
    pub fn new(mut partitions: Vec<u32>, mut tasks: Vec<u32>) -> Result<Self> {
        partitions.sort_unstable();
        partitions.dedup();
        tasks.sort_unstable();
        tasks.dedup();
        if partitions.is_empty() || tasks.is_empty() {
            return Err(Error::InvalidGrid("both axes need at least one value".into()));
        }
        if partitions[0] == 0 || tasks[0] == 0 {
            return Err(Error::InvalidGrid("axis values must be positive".into()));
        }
        Ok(Grid { partitions, tasks })
    }

    /// 11 partition counts (divisors of 224 plus 1,2,4,8,16) × 9 powers of two
    /// for tasks: 99 points.
    pub fn desk() -> Self {
        Grid {
            partitions: vec![1, 2, 4, 7, 8, 14, 16, 28, 56, 112, 224],
            tasks: (0..9).map(|k| 1u32 << k).collect(),
        }
    }

    pub fn partitions(&self) -> &[u32] {
        &self.partitions
    }

    pub fn tasks(&self) -> &[u32] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.partitions.len() * self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn configs(&self) -> Vec<StreamConfig> {
        self.partitions
            .iter()
            .flat_map(|&p| self.tasks.iter().map(move |&t| StreamConfig::new(p, t)))
            .collect()
    }

    pub fn at(&self, pi: usize, ti: usize) -> StreamConfig {
        StreamConfig::new(self.partitions[pi], self.tasks[ti])
    }

    pub fn position(&self, c: StreamConfig) -> Option<(usize, usize)> {
        let pi = self.partitions.binary_search(&c.partitions).ok()?;
        let ti = self.tasks.binary_search(&c.tasks).ok()?;
        Some((pi, ti))
    }

    /// Nearest grid point per axis; ties go to the smaller value.
    pub fn snap(&self, c: StreamConfig) -> StreamConfig {
        StreamConfig::new(
            nearest(&self.partitions, c.partitions),
            nearest(&self.tasks, c.tasks),
        )
    }

    pub fn max_partitions(&self) -> u32 {
        *self.partitions.last().expect("non-empty axis")
    }

    pub fn max_tasks(&self) -> u32 {
        *self.tasks.last().expect("non-empty axis")
    }
}

fn nearest(axis: &[u32], value: u32) -> u32 {
    let mut best = axis[0];
    for &a in axis {
        if a.abs_diff(value) < best.abs_diff(value) {
            best = a;
        }
    }
    best
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[u32]| {
            v.iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(f, "{}:{}", join(&self.partitions), join(&self.tasks))
    }
}

impl FromStr for Grid {
    type Err = Error;

    /// `desk`, or `P1,P2,...:T1,T2,...`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "desk" || s == "default" {
            return Ok(Grid::desk());
        }
        let (p, t) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidGrid(format!("expected `P,..:T,..`, got `{s}`")))?;
        let axis = |part: &str| -> Result<Vec<u32>> {
            part.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<u32>()
                        .map_err(|e| Error::InvalidGrid(format!("`{v}`: {e}")))
                })
                .collect()
        };
        Grid::new(axis(p)?, axis(t)?)
    }
}

/// Measured runtimes over a configuration grid for one workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfSurface {
    pub workload: WorkloadSpec,
    pub baseline_runtime: f64,
    /// Sorted by config.
    records: Vec<PerfRecord>,
}

impl PerfSurface {
    pub fn from_records(workload: WorkloadSpec, mut records: Vec<PerfRecord>) -> Result<Self> {
        records.sort_by_key(|r| r.config);
        if records.windows(2).any(|w| w[0].config == w[1].config) {
            return Err(Error::InvalidGrid("duplicate config in surface".into()));
        }
        let baseline_runtime = records
            .binary_search_by_key(&StreamConfig::BASELINE, |r| r.config)
            .map(|i| records[i].runtime)
            .map_err(|_| Error::InvalidGrid("surface lacks the (1,1) baseline".into()))?;
        Ok(PerfSurface {
            workload,
            baseline_runtime,
            records,
        })
    }

    pub fn records(&self) -> &[PerfRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, c: StreamConfig) -> Option<&PerfRecord> {
        self.records
            .binary_search_by_key(&c, |r| r.config)
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn runtime(&self, c: StreamConfig) -> Option<f64> {
        self.get(c).map(|r| r.runtime)
    }

    pub fn speedup(&self, c: StreamConfig) -> Option<f64> {
        self.runtime(c).map(|r| self.baseline_runtime / r)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("partitions,tasks,runtime_s,runs,unconverged\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.config.partitions, r.config.tasks, r.runtime, r.runs, r.unconverged
            ));
        }
        out
    }
}

/// Profile every config in `grid`; each point's seed is derived from the
/// master seed and the config itself.
pub fn exhaustive_profile(
    w: &WorkloadSpec,
    grid: &[StreamConfig],
    seed: u64,
) -> Result<PerfSurface> {
    w.validate()?;
    if !grid.contains(&StreamConfig::BASELINE) {
        return Err(Error::InvalidGrid("grid must include (1,1)".into()));
    }
    let records = grid
        .par_iter()
        .map(|&c| profile_config(w, c, seed::derive(seed, &[c.key()])))
        .collect::<Result<Vec<_>>>()?;
    PerfSurface::from_records(w.clone(), records)
}

/// Fastest config on the surface and its speedup over `(1,1)`.
/// Ties go to the lexicographically smallest config.
pub fn oracle_best(s: &PerfSurface) -> (StreamConfig, f64) {
    let best = s
        .records
        .iter()
        .fold(None::<&PerfRecord>, |acc, r| match acc {
            Some(b) if b.runtime <= r.runtime => Some(b),
            _ => Some(r),
        })
        .expect("surface is non-empty");
    (best.config, s.baseline_runtime / best.runtime)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealParams {
    /// Objective evaluations, including the initial point.
    pub budget: u32,
    /// Temperature on the log-runtime scale; 0 means greedy descent.
    pub initial_temperature: f64,
    /// Geometric cooling factor applied after every proposal.
    pub cooling: f64,
}

impl Default for AnnealParams {
    fn default() -> Self {
        AnnealParams {
            budget: 500,
            initial_temperature: 0.2,
            cooling: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealOutcome {
    pub config: StreamConfig,
    pub speedup: f64,
    pub evaluations: u32,
    /// Configs visited by the walk, in order (accepted moves only).
    pub trajectory: Vec<StreamConfig>,
}

/// Simulated annealing over grid neighbours (±1 step on one axis), using
/// single simulated runs as the objective.
pub fn anneal_search(
    w: &WorkloadSpec,
    grid: &Grid,
    params: &AnnealParams,
    seed: u64,
) -> Result<AnnealOutcome> {
    if params.budget == 0 {
        return Err(Error::InvalidArgument("anneal budget must be >= 1".into()));
    }
    w.validate()?;
    let objective =
        |c: StreamConfig| simulate_run(w, c, seed::derive(seed, &[0xA11E, c.key()]));
    let mut rng = seed::rng(seed::derive(seed, &[0x5A]));
    let (np, nt) = (grid.partitions().len(), grid.tasks().len());

    let mut current = (rng.random_range(0..np), rng.random_range(0..nt));
    let mut current_cost = objective(grid.at(current.0, current.1))?;
    let mut best = (current, current_cost);
    let mut trajectory = vec![grid.at(current.0, current.1)];
    let mut temperature = params.initial_temperature;
    let mut untried: Vec<(usize, usize)> = neighbours(current, np, nt);
    let mut evaluations = 1;

    while evaluations < params.budget {
        if untried.is_empty() {
            untried = neighbours(current, np, nt);
            if untried.is_empty() {
                break;
            }
        }
        let candidate = untried.swap_remove(rng.random_range(0..untried.len()));
        let cost = objective(grid.at(candidate.0, candidate.1))?;
        evaluations += 1;
        let delta = (cost / current_cost).ln();
        let accept = delta <= 0.0
            || (temperature > 0.0 && rng.random::<f64>() < (-delta / temperature).exp());
        if accept {
            current = candidate;
            current_cost = cost;
            untried = neighbours(current, np, nt);
            trajectory.push(grid.at(current.0, current.1));
            if cost < best.1 {
                best = (current, cost);
            }
        }
        temperature *= params.cooling;
    }

    let baseline = objective(StreamConfig::BASELINE)?;
    Ok(AnnealOutcome {
        config: grid.at(best.0 .0, best.0 .1),
        speedup: baseline / best.1,
        evaluations,
        trajectory,
    })
}

fn neighbours((p, t): (usize, usize), np: usize, nt: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(4);
    if p > 0 {
        out.push((p - 1, t));
    }
    if p + 1 < np {
        out.push((p + 1, t));
    }
    if t > 0 {
        out.push((p, t - 1));
    }
    if t + 1 < nt {
        out.push((p, t + 1));
    }
    out
}
