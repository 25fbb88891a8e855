//! The scheduling MDP.
//!
//! Time advances in whole ticks with one scheduling decision per tick. An
//! action picks one of the first `K` queued jobs (ordered by arrival) or does
//! nothing. The picked job is placed on the least-utilised VM that can hold
//! it; if none can, it stays queued.
//!
//! Per tick, in order:
//! 1. dispatch the selected job (if any),
//! 2. charge one tick of waiting to every job still queued: `wait_time` if no
//!    VM could hold it, `queue_time` otherwise,
//! 3. advance the clock and retire running jobs whose work is done,
//! 4. admit arrivals,
//! 5. dismiss the lowest-priority queued jobs while usage exceeds `t_max`,
//! 6. compute the reward.
//!
//! "Usage" for overload control is committed CPU work (remaining work of
//! running jobs plus estimated work of queued jobs) as a fraction of what the
//! cluster can execute within `usage_horizon` ticks.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::events::{EventKind, EventLog};
use crate::metrics::{EpisodeAccumulator, EpisodeStats};
use crate::reward::{self, CompletionInput, RewardBreakdown, RewardParams, RewardWeights};
use crate::workload::{estimate_exec_time, Job, Resources, RESOURCES};

/// Features per visible queue slot.
pub const SLOT_FEATURES: usize = 5;
/// Cluster-wide features appended after the slots.
pub const SYSTEM_FEATURES: usize = 5;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub vm_count: usize,
    /// Visible queue slots `K`.
    pub queue_slots: usize,
    pub cpu_freq_ghz: f64,
    /// Co-location interference factor applied to every job.
    pub interference: f64,
    /// Overload threshold on usage.
    pub t_max: f64,
    /// Horizon (ticks) over which committed work is compared to capacity.
    pub usage_horizon: f64,
    /// Baseline power, watts.
    pub w_base: f64,
    /// Full-load power, watts.
    pub w_max: f64,
    /// Weight of CPI against MAPI in the performance coefficient.
    pub z: f64,
    pub seconds_per_tick: f64,
    /// Hard episode length; `None` means `10 * job_count`.
    pub tick_limit: Option<u64>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            vm_count: 4,
            queue_slots: 10,
            cpu_freq_ghz: 2.0,
            interference: 0.2,
            t_max: 0.95,
            usage_horizon: 200.0,
            w_base: 100.0,
            w_max: 200.0,
            z: 0.3,
            seconds_per_tick: 1.0,
            tick_limit: None,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vm_count == 0 {
            return Err(Error::config("environment.vm_count", "must be at least 1"));
        }
        if self.queue_slots == 0 {
            return Err(Error::config("environment.queue_slots", "must be at least 1"));
        }
        if !(self.cpu_freq_ghz > 0.0) {
            return Err(Error::config("environment.cpu_freq_ghz", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.interference) {
            return Err(Error::config("environment.interference", "must lie in [0, 1)"));
        }
        if !(self.t_max > 0.0 && self.t_max <= 1.0) {
            return Err(Error::config("environment.t_max", "must lie in (0, 1]"));
        }
        if !(self.usage_horizon > 0.0 && self.usage_horizon.is_finite()) {
            return Err(Error::config("environment.usage_horizon", "must be positive"));
        }
        if !(self.w_base > 0.0 && self.w_max >= self.w_base && self.w_max.is_finite()) {
            return Err(Error::config("environment.w_max", "need w_max >= w_base > 0"));
        }
        if !(0.0..=1.0).contains(&self.z) {
            return Err(Error::config("environment.z", "must lie in [0, 1]"));
        }
        if !(self.seconds_per_tick > 0.0 && self.seconds_per_tick.is_finite()) {
            return Err(Error::config("environment.seconds_per_tick", "must be positive"));
        }
        Ok(())
    }

    pub fn observation_len(&self) -> usize {
        SLOT_FEATURES * self.queue_slots + SYSTEM_FEATURES
    }

    /// Actions: one per slot plus the no-op.
    pub fn action_count(&self) -> usize {
        self.queue_slots + 1
    }

    pub fn exec_time(&self, job: &Job) -> f64 {
        estimate_exec_time(job.compute_units, self.cpu_freq_ghz, self.interference).expect("validated cluster config")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Slot(usize),
    NoOp,
}

impl Action {
    /// Index into a `K + 1` action vector; the no-op is last.
    pub fn index(self, queue_slots: usize) -> usize {
        match self {
            Action::Slot(k) => k,
            Action::NoOp => queue_slots,
        }
    }

    pub fn from_index(index: usize, queue_slots: usize) -> Self {
        if index >= queue_slots {
            Action::NoOp
        } else {
            Action::Slot(index)
        }
    }
}

/// A job's life in the system. Timing fields are filled in as it progresses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub job: Job,
    pub enqueue_time: u64,
    /// Ticks queued while no VM could hold the job.
    pub wait_time: u64,
    /// Ticks queued while some VM could hold the job.
    pub queue_time: u64,
    pub start_time: Option<u64>,
    pub exec_time: Option<f64>,
    pub finish_time: Option<u64>,
}

impl QueueEntry {
    pub fn new(job: Job, enqueue_time: u64) -> Self {
        QueueEntry {
            job,
            enqueue_time,
            wait_time: 0,
            queue_time: 0,
            start_time: None,
            exec_time: None,
            finish_time: None,
        }
    }
}

/// `T_wait + T_queue + T_exec` for a completed job.
pub fn job_latency(entry: &QueueEntry) -> Result<f64> {
    match (entry.finish_time, entry.exec_time) {
        (Some(_), Some(exec)) => Ok(entry.wait_time as f64 + entry.queue_time as f64 + exec),
        _ => Err(Error::State(format!("job {} has not completed", entry.job.id))),
    }
}

/// `(W_base + U * iota * (W_max - W_base)) * tau`, in joules.
pub fn job_energy(u_cpu: f64, iota: f64, tau: f64, w_base: f64, w_max: f64) -> Result<f64> {
    if tau < 0.0 {
        return Err(Error::Domain(format!("execution time must be non-negative, got {tau}")));
    }
    Ok((w_base + u_cpu * iota * (w_max - w_base)) * tau)
}

/// `CPI * z + MAPI * (1 - z)`.
pub fn performance_coefficient(cpi: f64, mapi: f64, z: f64) -> f64 {
    cpi * z + mapi * (1.0 - z)
}

/// Indices into `queue` to dismiss, in removal order: lowest priority first,
/// earlier enqueue first among ties. Removal stops once usage, reduced by each
/// victim's `contribution`, is no longer above `t_max`.
pub fn select_victims(
    queue: &[QueueEntry],
    usage: f64,
    t_max: f64,
    contribution: impl Fn(&QueueEntry) -> f64,
) -> Vec<usize> {
    if usage <= t_max {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..queue.len()).collect();
    order.sort_by(|&a, &b| {
        let (ja, jb) = (&queue[a], &queue[b]);
        ja.job
            .priority
            .total_cmp(&jb.job.priority)
            .then(ja.enqueue_time.cmp(&jb.enqueue_time))
            .then(ja.job.id.cmp(&jb.job.id))
    });
    let mut usage = usage;
    let mut victims = Vec::new();
    for idx in order {
        if usage <= t_max {
            break;
        }
        usage -= contribution(&queue[idx]);
        victims.push(idx);
    }
    victims
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub vm_count: usize,
    pub per_vm_utilization: Vec<Resources>,
    pub cpu_freq_ghz: f64,
    pub aggregate_cpu_util: f64,
    pub mapi_now: f64,
    pub cpi_now: f64,
    pub clock: u64,
}

/// Fixed-length state encoding plus the slot mask needed for action selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// `SLOT_FEATURES * K + SYSTEM_FEATURES` finite values.
    pub features: Vec<f64>,
    /// Slot occupancy, length `K`.
    pub occupied: Vec<bool>,
    /// Slot holds a job that fits on some VM right now, length `K`.
    pub feasible: Vec<bool>,
    /// Priority of each slot's job (0 when empty), length `K`.
    pub priorities: Vec<f64>,
    pub clock: u64,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Live actions over `K + 1` entries: the feasible slots, or only the
    /// no-op when no queued job fits anywhere.
    pub fn action_mask(&self) -> Vec<bool> {
        let mut mask = self.feasible.clone();
        mask.push(!mask.iter().any(|m| *m));
        mask
    }

    /// Priorities over `K + 1` entries; the no-op has priority 0.
    pub fn action_priorities(&self) -> Vec<f64> {
        let mut p = self.priorities.clone();
        p.push(0.0);
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletedJob {
    pub entry: QueueEntry,
    pub vm: usize,
    pub latency: f64,
    pub energy_joules: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub dismissed_this_step: usize,
    pub completed_jobs: Vec<CompletedJob>,
    pub dismissed_jobs: Vec<Job>,
    /// The action named an empty or out-of-range slot and was treated as a no-op.
    pub rejected_action: bool,
    /// The selected job fit nowhere and stayed queued.
    pub placement_blocked: bool,
}

/// What a heuristic may see of one visible slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotView {
    pub exec_estimate: f64,
    pub demand: Resources,
    pub priority: f64,
    pub enqueue_time: u64,
    /// Fits on at least one VM right now.
    pub fits: bool,
}

#[derive(Debug, Clone)]
struct Running {
    entry: QueueEntry,
    vm: usize,
    remaining: f64,
    energy_joules: f64,
}

pub struct Environment {
    config: ClusterConfig,
    weights: RewardWeights,
    params: RewardParams,
    trace: Vec<Job>,
    next_arrival: usize,
    queue: Vec<QueueEntry>,
    running: Vec<Running>,
    used: Vec<Resources>,
    clock: u64,
    tick_limit: u64,
    done: bool,
    events: Option<EventLog>,
    tally: EpisodeAccumulator,
}

impl Environment {
    pub fn new(config: ClusterConfig, weights: RewardWeights, params: RewardParams) -> Result<Self> {
        config.validate()?;
        weights.validate()?;
        params.validate()?;
        let used = vec![[0.0; RESOURCES]; config.vm_count];
        Ok(Environment {
            config,
            weights,
            params,
            trace: Vec::new(),
            next_arrival: 0,
            queue: Vec::new(),
            running: Vec::new(),
            used,
            clock: 0,
            tick_limit: 1,
            done: false,
            events: None,
            tally: EpisodeAccumulator::default(),
        })
    }

    /// Record an event log from the next reset on.
    pub fn with_event_log(mut self) -> Self {
        self.events = Some(EventLog::default());
        self
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn reward_weights(&self) -> &RewardWeights {
        &self.weights
    }

    pub fn reward_params(&self) -> &RewardParams {
        &self.params
    }

    pub fn events(&self) -> Option<&EventLog> {
        self.events.as_ref()
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn queue(&self) -> &[QueueEntry] {
        &self.queue
    }

    pub fn running_count(&self) -> usize {
        self.running.len()
    }

    /// Starts a new episode over `trace`, which must be sorted by arrival.
    pub fn reset(&mut self, mut trace: Vec<Job>) -> Observation {
        trace.sort_by_key(|j| j.arrival_time);
        self.tick_limit = self.config.tick_limit.unwrap_or(10 * trace.len() as u64).max(1);
        self.trace = trace;
        self.next_arrival = 0;
        self.queue.clear();
        self.running.clear();
        self.used.iter_mut().for_each(|u| *u = [0.0; RESOURCES]);
        self.clock = 0;
        self.done = false;
        self.tally = EpisodeAccumulator::default();
        if let Some(log) = self.events.as_mut() {
            *log = EventLog::default();
        }
        self.admit_arrivals();
        self.observe()
    }

    pub fn state(&self) -> ClusterState {
        let n = self.config.vm_count as f64;
        let (cpi, mapi) = self.running_intensity();
        ClusterState {
            vm_count: self.config.vm_count,
            per_vm_utilization: self.used.clone(),
            cpu_freq_ghz: self.config.cpu_freq_ghz,
            aggregate_cpu_util: self.used.iter().map(|u| u[0]).sum::<f64>() / n,
            mapi_now: mapi,
            cpi_now: cpi,
            clock: self.clock,
        }
    }

    /// Visible slots in arrival order; `None` for empty slots.
    pub fn queue_view(&self) -> Vec<Option<SlotView>> {
        (0..self.config.queue_slots)
            .map(|k| {
                self.queue.get(k).map(|e| SlotView {
                    exec_estimate: self.config.exec_time(&e.job),
                    demand: e.job.resource_demand,
                    priority: e.job.priority,
                    enqueue_time: e.enqueue_time,
                    fits: self.fits_anywhere(&e.job.resource_demand),
                })
            })
            .collect()
    }

    /// Mean free capacity per resource dimension across VMs.
    pub fn availability(&self) -> Resources {
        let n = self.config.vm_count as f64;
        let mut free = [0.0; RESOURCES];
        for u in &self.used {
            for d in 0..RESOURCES {
                free[d] += (1.0 - u[d]).max(0.0) / n;
            }
        }
        free
    }

    /// Committed CPU work over what the cluster can execute within the usage horizon.
    pub fn usage(&self) -> f64 {
        let running: f64 = self
            .running
            .iter()
            .map(|r| r.entry.job.resource_demand[0] * r.remaining.max(0.0))
            .sum();
        let queued: f64 = self.queue.iter().map(|e| self.queued_work(e)).sum();
        (running + queued) / self.capacity_over_horizon()
    }

    fn queued_work(&self, entry: &QueueEntry) -> f64 {
        entry.job.resource_demand[0] * self.config.exec_time(&entry.job)
    }

    fn capacity_over_horizon(&self) -> f64 {
        self.config.vm_count as f64 * self.config.usage_horizon
    }

    fn running_intensity(&self) -> (f64, f64) {
        if self.running.is_empty() {
            return (0.0, 0.0);
        }
        let n = self.running.len() as f64;
        let cpi = self.running.iter().map(|r| r.entry.job.cpi).sum::<f64>() / n;
        let mapi = self.running.iter().map(|r| r.entry.job.mapi).sum::<f64>() / n;
        (cpi, mapi)
    }

    fn fits(&self, vm: usize, demand: &Resources) -> bool {
        (0..RESOURCES).all(|d| self.used[vm][d] + demand[d] <= 1.0 + EPS)
    }

    fn fits_anywhere(&self, demand: &Resources) -> bool {
        (0..self.config.vm_count).any(|vm| self.fits(vm, demand))
    }

    /// Least-utilised VM (mean over dimensions) that can hold `demand`; lowest index on ties.
    fn placement(&self, demand: &Resources) -> Option<usize> {
        let load = |vm: usize| self.used[vm].iter().sum::<f64>();
        (0..self.config.vm_count)
            .filter(|&vm| self.fits(vm, demand))
            .min_by(|&a, &b| load(a).total_cmp(&load(b)).then(a.cmp(&b)))
    }

    fn log(&mut self, kind: EventKind, job_id: Option<u64>, detail: serde_json::Value) {
        if let Some(log) = self.events.as_mut() {
            log.push(self.clock, kind, job_id, detail);
        }
    }

    fn admit_arrivals(&mut self) {
        while self.next_arrival < self.trace.len() && self.trace[self.next_arrival].arrival_time <= self.clock {
            let job = self.trace[self.next_arrival].clone();
            self.next_arrival += 1;
            self.log(EventKind::Arrive, Some(job.id), json!({ "priority": job.priority }));
            let enqueue = job.arrival_time;
            self.queue.push(QueueEntry::new(job, enqueue));
            self.tally.add_arrived();
        }
    }

    fn dispatch(&mut self, slot: usize) -> bool {
        let demand = self.queue[slot].job.resource_demand;
        let Some(vm) = self.placement(&demand) else {
            let id = self.queue[slot].job.id;
            self.log(EventKind::PlacementBlocked, Some(id), json!({ "slot": slot }));
            return false;
        };
        let mut entry = self.queue.remove(slot);
        for d in 0..RESOURCES {
            self.used[vm][d] += demand[d];
        }
        let exec = self.config.exec_time(&entry.job);
        let iota = performance_coefficient(entry.job.cpi, entry.job.mapi, self.config.z);
        let host_util = self.used[vm][0].min(1.0);
        let energy = job_energy(
            host_util,
            iota,
            exec * self.config.seconds_per_tick,
            self.config.w_base,
            self.config.w_max,
        )
        .expect("exec time is non-negative");
        entry.start_time = Some(self.clock);
        entry.exec_time = Some(exec);
        self.log(EventKind::Dispatch, Some(entry.job.id), json!({ "vm": vm, "exec": exec }));
        self.running.push(Running {
            entry,
            vm,
            remaining: exec,
            energy_joules: energy,
        });
        true
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::State("step called after the episode ended".into()));
        }
        let mut rejected_action = false;
        let mut placement_blocked = false;
        match action {
            Action::Slot(k) if k < self.config.queue_slots && k < self.queue.len() => {
                placement_blocked = !self.dispatch(k);
            }
            Action::Slot(k) => {
                rejected_action = true;
                self.log(EventKind::InvalidAction, None, json!({ "slot": k }));
            }
            Action::NoOp => {}
        }

        // Charge this tick to everything still queued.
        for i in 0..self.queue.len() {
            if self.fits_anywhere(&self.queue[i].job.resource_demand) {
                self.queue[i].queue_time += 1;
            } else {
                self.queue[i].wait_time += 1;
            }
        }

        self.clock += 1;
        let mut completed = Vec::new();
        let mut i = 0;
        while i < self.running.len() {
            self.running[i].remaining -= 1.0;
            if self.running[i].remaining <= EPS {
                let mut r = self.running.swap_remove(i);
                for d in 0..RESOURCES {
                    self.used[r.vm][d] = (self.used[r.vm][d] - r.entry.job.resource_demand[d]).max(0.0);
                }
                r.entry.finish_time = Some(self.clock);
                let latency = job_latency(&r.entry).expect("finished job has timings");
                self.log(EventKind::Complete, Some(r.entry.job.id), json!({ "latency": latency }));
                completed.push(CompletedJob {
                    latency,
                    vm: r.vm,
                    energy_joules: r.energy_joules,
                    entry: r.entry,
                });
            } else {
                i += 1;
            }
        }
        // swap_remove scrambles order; keep completions deterministic and readable.
        completed.sort_by_key(|c| c.entry.job.id);
        self.running.sort_by_key(|r| r.entry.job.id);

        self.admit_arrivals();

        let dismissed_jobs = self.dismiss_overload();
        let dismissed_this_step = dismissed_jobs.len();

        let drained = self.next_arrival == self.trace.len() && self.queue.is_empty() && self.running.is_empty();
        if !drained && self.clock >= self.tick_limit {
            self.truncate();
            self.done = true;
        } else {
            self.done = drained;
        }

        let reward = self.step_reward(&completed, dismissed_this_step);
        for c in &completed {
            self.tally.add_completion(
                c.latency,
                c.entry.exec_time.unwrap_or(0.0),
                c.entry.job.band(),
                c.energy_joules,
            );
        }
        self.tally.add_dismissed(dismissed_this_step);
        self.tally.add_step(&reward);

        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            done: self.done,
            dismissed_this_step,
            completed_jobs: completed,
            dismissed_jobs,
            rejected_action,
            placement_blocked,
        })
    }

    fn dismiss_overload(&mut self) -> Vec<Job> {
        let usage = self.usage();
        if usage <= self.config.t_max {
            return Vec::new();
        }
        let capacity = self.capacity_over_horizon();
        let mut victims = select_victims(&self.queue, usage, self.config.t_max, |e| self.queued_work(e) / capacity);
        let remaining_usage = usage - victims.iter().map(|&i| self.queued_work(&self.queue[i]) / capacity).sum::<f64>();
        let mut removed = Vec::with_capacity(victims.len());
        for &idx in &victims {
            let job = self.queue[idx].job.clone();
            self.log(EventKind::Dismiss, Some(job.id), json!({ "priority": job.priority }));
            removed.push(job);
        }
        victims.sort_unstable_by(|a, b| b.cmp(a));
        for idx in victims {
            self.queue.remove(idx);
        }
        if remaining_usage > self.config.t_max {
            self.log(EventKind::OverloadWithoutVictims, None, json!({ "usage": remaining_usage }));
        }
        removed
    }

    fn truncate(&mut self) {
        let queued: Vec<u64> = self.queue.iter().map(|e| e.job.id).collect();
        let running: Vec<u64> = self.running.iter().map(|r| r.entry.job.id).collect();
        let n = queued.len() + running.len();
        for id in queued.into_iter().chain(running) {
            self.log(EventKind::Truncate, Some(id), serde_json::Value::Null);
        }
        self.queue.clear();
        self.running.clear();
        self.used.iter_mut().for_each(|u| *u = [0.0; RESOURCES]);
        self.tally.add_truncated(n);
    }

    fn step_reward(&self, completed: &[CompletedJob], dismissed: usize) -> RewardBreakdown {
        let energy_norm = self.config.w_max * self.params.l_max * self.config.seconds_per_tick;
        let inputs: Vec<CompletionInput> = completed
            .iter()
            .map(|c| CompletionInput {
                latency: c.latency,
                priority: c.entry.job.priority,
                energy_normalized: c.energy_joules / energy_norm,
            })
            .collect();
        // Allocated CPU share of every active job; queued jobs hold nothing.
        let shares: Vec<f64> = self
            .running
            .iter()
            .map(|r| r.entry.job.resource_demand[0])
            .chain(self.queue.iter().map(|_| 0.0))
            .collect();
        let components = reward::step_components(&inputs, &shares, dismissed, &self.params);
        reward::total_reward(&components, &self.weights)
    }

    pub fn observe(&self) -> Observation {
        let k = self.config.queue_slots;
        let l_max = self.params.l_max;
        let mut features = Vec::with_capacity(self.config.observation_len());
        let mut occupied = Vec::with_capacity(k);
        let mut feasible = Vec::with_capacity(k);
        let mut priorities = Vec::with_capacity(k);
        for slot in 0..k {
            match self.queue.get(slot) {
                Some(e) => {
                    let waited = (e.wait_time + e.queue_time) as f64;
                    let slack = match e.job.deadline {
                        Some(d) => (d as f64 - self.clock as f64) / l_max,
                        None => (l_max - waited) / l_max,
                    };
                    features.extend_from_slice(&[
                        (self.config.exec_time(&e.job) / l_max).min(4.0),
                        e.job.resource_demand.iter().copied().fold(0.0, f64::max),
                        (waited / l_max).min(4.0),
                        e.job.priority,
                        slack.clamp(-1.0, 1.0),
                    ]);
                    occupied.push(true);
                    feasible.push(self.fits_anywhere(&e.job.resource_demand));
                    priorities.push(e.job.priority);
                }
                None => {
                    features.extend_from_slice(&[0.0; SLOT_FEATURES]);
                    occupied.push(false);
                    feasible.push(false);
                    priorities.push(0.0);
                }
            }
        }
        let state = self.state();
        let mean_util = self.used.iter().flat_map(|u| u.iter()).sum::<f64>() / (self.config.vm_count * RESOURCES) as f64;
        features.extend_from_slice(&[
            state.aggregate_cpu_util,
            mean_util,
            (self.queue.len() as f64 / (5 * k) as f64).min(1.0),
            state.cpi_now,
            state.mapi_now,
        ]);
        Observation {
            features,
            occupied,
            feasible,
            priorities,
            clock: self.clock,
        }
    }

    /// Statistics for the episode so far.
    pub fn episode_stats(&self, episode: usize, worker_id: usize) -> EpisodeStats {
        self.tally.finish(episode, worker_id)
    }
}
