//! Deterministic discrete-event engine: arrivals, scheduling cycles,
//! completions, location outages and recoveries, preemption requeues, and
//! metric emission.
//!
//! Events are totally ordered by (time, kind priority, payload id). At equal
//! timestamps completions apply before recoveries, recoveries before
//! arrivals, arrivals before outages, and scheduling ticks run last, so
//! capacity freed at time t is visible to pods arriving at t. Scheduling
//! ticks fire on arrival, completion, and recovery events.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::accounting::{self, CapacityTimeline, Resource, UsageLedger};
use crate::cluster::{Cluster, ClusterError, LocationStatus};
use crate::report::{MetricsReport, NamespaceRollup};
use crate::scenario::{FaultKind, ResolvedScenario};
use crate::scheduler::{self, PolicyConfig, QueueOrdering, RunningTable, UsageSnapshot};
use crate::storage::{self, ReplicaSet, StorageError, StorageObject};
use crate::workload::{NamespaceTable, PodSpec, Priority};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    PodCompletion(String),
    LocationRecovery(String),
    PodArrival(String),
    LocationOutage(String),
    SchedulingTick,
}

impl EventKind {
    /// Order within one timestamp: completion < recovery < arrival < outage
    /// < tick.
    fn priority(&self) -> u8 {
        match self {
            EventKind::PodCompletion(_) => 0,
            EventKind::LocationRecovery(_) => 1,
            EventKind::PodArrival(_) => 2,
            EventKind::LocationOutage(_) => 3,
            EventKind::SchedulingTick => 4,
        }
    }

    fn payload(&self) -> &str {
        match self {
            EventKind::PodCompletion(id)
            | EventKind::LocationRecovery(id)
            | EventKind::PodArrival(id)
            | EventKind::LocationOutage(id) => id,
            EventKind::SchedulingTick => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub time: u64,
    pub kind: EventKind,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .cmp(&other.time)
            .then_with(|| self.kind.priority().cmp(&other.kind.priority()))
            .then_with(|| self.kind.payload().cmp(other.kind.payload()))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("event at {event} precedes the clock at {clock}")]
    TimeRegression { clock: u64, event: u64 },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("accounting failed: {0}")]
    Accounting(#[from] accounting::AccountingError),
}

/// Full simulation state. Mutated only by [`SimState::step`]; reads between
/// steps are safe from anywhere.
#[derive(Debug, Clone)]
pub struct SimState {
    pub clock: u64,
    pub horizon: u64,
    pub cluster: Cluster,
    pub namespaces: NamespaceTable,
    pub policy: PolicyConfig,
    pub pods: BTreeMap<String, PodSpec>,
    pub queue: VecDeque<String>,
    pub running: RunningTable,
    pub ledger: UsageLedger,
    pub objects: Vec<StorageObject>,
    pub placements: BTreeMap<String, ReplicaSet>,
    events: BTreeSet<Event>,
    fair_share_resource: Resource,
    pub gpu_capacity: CapacityTimeline,
    pub cpu_capacity: CapacityTimeline,
    pub arrivals: u64,
    pub completed: u64,
    pub preemption_events: u64,
    pub preemption_victims: u64,
    pub outage_pod_failures: u64,
    pub replica_additions: u64,
    unavailable_now: u64,
    max_unavailable: u64,
    utilization_series: Vec<(u64, f64)>,
    queue_depth_series: Vec<(u64, u64)>,
    availability_series: Vec<(u64, u64)>,
}

pub struct RunOutcome {
    pub state: SimState,
    pub report: MetricsReport,
}

impl SimState {
    pub fn new(resolved: &ResolvedScenario) -> Result<Self, EngineError> {
        let cluster = resolved.cluster.clone();
        let mut placements = BTreeMap::new();
        for object in &resolved.objects {
            placements.insert(object.id.clone(), storage::place_replicas(object, &cluster)?);
        }
        let mut events = BTreeSet::new();
        let pods: BTreeMap<String, PodSpec> =
            resolved.trace.pods.iter().map(|p| (p.id.clone(), p.clone())).collect();
        for pod in resolved.trace.pods.iter() {
            events.insert(Event {
                time: pod.arrival_seconds,
                kind: EventKind::PodArrival(pod.id.clone()),
            });
        }
        for fault in &resolved.faults {
            let kind = match fault.kind {
                FaultKind::Outage => EventKind::LocationOutage(fault.location.clone()),
                FaultKind::Recovery => EventKind::LocationRecovery(fault.location.clone()),
            };
            events.insert(Event { time: fault.time, kind });
        }
        let (gpu, cpu) = cluster.up_capacity_pair();
        let fair_share_resource =
            if cluster.has_gpus() { Resource::Gpu } else { Resource::Cpu };
        let mut state = SimState {
            clock: 0,
            horizon: resolved.horizon_seconds,
            cluster,
            namespaces: resolved.namespaces.clone(),
            policy: resolved.policy.clone(),
            pods,
            queue: VecDeque::new(),
            running: RunningTable::new(),
            ledger: UsageLedger::new(),
            objects: resolved.objects.clone(),
            placements,
            events,
            fair_share_resource,
            gpu_capacity: CapacityTimeline::new(gpu),
            cpu_capacity: CapacityTimeline::new(cpu),
            arrivals: 0,
            completed: 0,
            preemption_events: 0,
            preemption_victims: 0,
            outage_pod_failures: 0,
            replica_additions: 0,
            unavailable_now: 0,
            max_unavailable: 0,
            utilization_series: Vec::new(),
            queue_depth_series: Vec::new(),
            availability_series: Vec::new(),
        };
        state.refresh_unavailable();
        state.sample();
        Ok(state)
    }

    fn schedule_tick(&mut self, time: u64) {
        self.events.insert(Event { time, kind: EventKind::SchedulingTick });
    }

    /// Apply one event. The clock never moves backwards.
    pub fn step(&mut self, event: Event) -> Result<(), EngineError> {
        if event.time < self.clock {
            return Err(EngineError::TimeRegression { clock: self.clock, event: event.time });
        }
        self.clock = event.time;
        self.ledger.note_time(self.clock);
        match event.kind {
            EventKind::PodArrival(pod_id) => {
                self.arrivals += 1;
                self.queue.push_back(pod_id);
                self.schedule_tick(self.clock);
            }
            EventKind::PodCompletion(pod_id) => {
                let run = self
                    .running
                    .remove(&pod_id)
                    .expect("completion event only fires for a running pod");
                self.cluster.release(
                    &run.node,
                    run.cpu_millicores,
                    run.mem_bytes,
                    run.gpu_count,
                    run.assigned_model.as_deref(),
                )?;
                self.ledger.close_pod(&pod_id, self.clock);
                self.completed += 1;
                self.schedule_tick(self.clock);
            }
            EventKind::LocationOutage(location) => {
                if self.cluster.location_status(&location)? == LocationStatus::Up {
                    self.fail_pods_at(&location)?;
                    self.cluster.set_location_status(&location, LocationStatus::Down)?;
                    self.push_capacity_points();
                    let changes =
                        storage::re_replicate(&self.objects, &mut self.placements, &self.cluster);
                    self.replica_additions += changes.len() as u64;
                    self.refresh_unavailable();
                }
            }
            EventKind::LocationRecovery(location) => {
                if self.cluster.location_status(&location)? == LocationStatus::Down {
                    self.cluster.set_location_status(&location, LocationStatus::Up)?;
                    self.push_capacity_points();
                    storage::refresh_degraded(&self.objects, &mut self.placements, &self.cluster);
                    self.refresh_unavailable();
                    self.schedule_tick(self.clock);
                }
            }
            EventKind::SchedulingTick => self.run_cycle(),
        }
        Ok(())
    }

    fn run_cycle(&mut self) {
        let usage = if self.policy.ordering == QueueOrdering::FairShare {
            UsageSnapshot {
                by_namespace: accounting::decayed_usage(
                    &self.ledger,
                    self.fair_share_resource,
                    self.clock,
                    self.policy.fair_share_halflife_seconds,
                ),
            }
        } else {
            UsageSnapshot::empty()
        };
        let pre_cycle_running = self.running.clone();
        let decisions = scheduler::schedule_cycle(
            &mut self.queue,
            &self.pods,
            &mut self.cluster,
            &mut self.running,
            &self.namespaces,
            &usage,
            &self.policy,
            self.clock,
        );
        for decision in &decisions {
            if !decision.preempted_victims.is_empty() {
                self.preemption_events += 1;
            }
            for victim_id in &decision.preempted_victims {
                // Victims placed earlier in this same cycle are not in the
                // pre-cycle snapshot; their completion sits at clock+duration.
                let end = pre_cycle_running.get(victim_id).map(|v| v.end).unwrap_or_else(|| {
                    self.clock.saturating_add(self.pods[victim_id].duration_seconds)
                });
                self.events
                    .remove(&Event { time: end, kind: EventKind::PodCompletion(victim_id.clone()) });
                self.ledger.close_pod(victim_id, self.clock);
                self.queue.push_back(victim_id.clone());
                self.preemption_victims += 1;
            }
            let pod = &self.pods[&decision.pod];
            self.events.insert(Event {
                time: self.clock.saturating_add(pod.duration_seconds),
                kind: EventKind::PodCompletion(decision.pod.clone()),
            });
            if pod.gpu_count > 0 {
                self.ledger.open(
                    &decision.pod,
                    &pod.namespace,
                    Resource::Gpu,
                    u64::from(pod.gpu_count),
                    self.clock,
                );
            }
            if pod.cpu_millicores > 0 {
                self.ledger.open(
                    &decision.pod,
                    &pod.namespace,
                    Resource::Cpu,
                    pod.cpu_millicores,
                    self.clock,
                );
            }
        }
    }

    /// Fail every running pod at a location: free resources, close usage,
    /// cancel completions, requeue (guaranteed at the head, opportunistic at
    /// the tail) with their full duration.
    fn fail_pods_at(&mut self, location: &str) -> Result<(), EngineError> {
        let affected: Vec<String> = self
            .running
            .values()
            .filter(|r| {
                self.cluster.node(&r.node).map(|n| n.location == location).unwrap_or(false)
            })
            .map(|r| r.pod.clone())
            .collect();
        let mut guaranteed = Vec::new();
        let mut opportunistic = Vec::new();
        for pod_id in affected {
            let run = self.running.remove(&pod_id).expect("affected pod is running");
            self.cluster.release(
                &run.node,
                run.cpu_millicores,
                run.mem_bytes,
                run.gpu_count,
                run.assigned_model.as_deref(),
            )?;
            self.events
                .remove(&Event { time: run.end, kind: EventKind::PodCompletion(pod_id.clone()) });
            self.ledger.close_pod(&pod_id, self.clock);
            self.outage_pod_failures += 1;
            match run.priority {
                Priority::Guaranteed => guaranteed.push(pod_id),
                Priority::Opportunistic => opportunistic.push(pod_id),
            }
        }
        for pod_id in guaranteed.into_iter().rev() {
            self.queue.push_front(pod_id);
        }
        for pod_id in opportunistic {
            self.queue.push_back(pod_id);
        }
        Ok(())
    }

    fn push_capacity_points(&mut self) {
        let (gpu, cpu) = self.cluster.up_capacity_pair();
        self.gpu_capacity.push(self.clock, gpu);
        self.cpu_capacity.push(self.clock, cpu);
    }

    fn refresh_unavailable(&mut self) {
        self.unavailable_now = self
            .placements
            .values()
            .filter(|p| !storage::availability(p, &self.cluster))
            .count() as u64;
        self.max_unavailable = self.max_unavailable.max(self.unavailable_now);
    }

    pub fn unavailable_objects(&self) -> u64 {
        self.unavailable_now
    }

    /// One sample per distinct event time; re-sampling at the same time
    /// overwrites so a batch of co-timed events yields its final state.
    fn sample(&mut self) {
        let (gpu_cap, _) = self.cluster.up_capacity_pair();
        let gpu_alloc: u64 = self.running.values().map(|r| u64::from(r.gpu_count)).sum();
        let util = if gpu_cap > 0 { gpu_alloc as f64 / gpu_cap as f64 } else { 0.0 };
        push_point(&mut self.utilization_series, self.clock, util);
        push_point(&mut self.queue_depth_series, self.clock, self.queue.len() as u64);
        push_point(&mut self.availability_series, self.clock, self.unavailable_now);
    }

    /// The allocation ledger must equal the per-node sums over running pods
    /// at every step; used by tests as an independent consistency probe.
    pub fn allocations_consistent(&self) -> bool {
        let mut expected: BTreeMap<&str, (u64, u64, BTreeMap<&str, u32>)> = BTreeMap::new();
        for run in self.running.values() {
            let entry = expected.entry(run.node.as_str()).or_default();
            entry.0 += run.cpu_millicores;
            entry.1 += run.mem_bytes;
            if let Some(model) = &run.assigned_model {
                *entry.2.entry(model.as_str()).or_insert(0) += run.gpu_count;
            }
        }
        self.cluster.nodes().all(|node| {
            let alloc = self.cluster.alloc_of(&node.id).expect("alloc entry");
            let (cpu, mem, gpus) = expected
                .get(node.id.as_str())
                .cloned()
                .unwrap_or((0, 0, BTreeMap::new()));
            alloc.cpu_millicores == cpu
                && alloc.mem_bytes == mem
                && alloc.gpus.len() == gpus.len()
                && alloc.gpus.iter().all(|(m, c)| gpus.get(m.as_str()) == Some(c))
        })
    }

    fn build_report(&self, resolved: &ResolvedScenario) -> Result<MetricsReport, EngineError> {
        let window = (0, self.horizon);
        let now = self.horizon;
        let gpu_utilization =
            accounting::utilization(&self.ledger, &self.gpu_capacity, window, Resource::Gpu, now)?;
        let cpu_utilization =
            accounting::utilization(&self.ledger, &self.cpu_capacity, window, Resource::Cpu, now)?;
        let rollup_for = |ns: Option<&str>| -> Result<NamespaceRollup, EngineError> {
            let gpu_seconds = accounting::aggregate(&self.ledger, ns, window, Resource::Gpu, now)?;
            let cpu_millicore_seconds =
                accounting::aggregate(&self.ledger, ns, window, Resource::Cpu, now)?;
            Ok(NamespaceRollup {
                gpu_hours: Resource::Gpu.unit_seconds_to_hours(gpu_seconds),
                cpu_core_hours: Resource::Cpu.unit_seconds_to_hours(cpu_millicore_seconds),
                gpu_seconds,
                cpu_millicore_seconds,
            })
        };
        let mut by_namespace = BTreeMap::new();
        for ns in self.namespaces.keys() {
            by_namespace.insert(ns.clone(), rollup_for(Some(ns))?);
        }
        Ok(MetricsReport {
            scenario: resolved.name.clone(),
            seed: resolved.seed,
            policy: self.policy.clone(),
            horizon_seconds: self.horizon,
            gpu_utilization,
            cpu_utilization,
            total: rollup_for(None)?,
            by_namespace,
            arrivals: self.arrivals,
            completed: self.completed,
            running_at_horizon: self.running.len() as u64,
            pending_at_horizon: self.queue.len() as u64,
            failed_at_horizon: 0,
            preemption_events: self.preemption_events,
            preemption_victims: self.preemption_victims,
            outage_pod_failures: self.outage_pod_failures,
            replica_additions: self.replica_additions,
            object_count: self.objects.len() as u64,
            degraded_placements_at_horizon: self.placements.values().filter(|p| p.degraded).count()
                as u64,
            max_unavailable_objects: self.max_unavailable,
            utilization_series: self.utilization_series.clone(),
            queue_depth_series: self.queue_depth_series.clone(),
            availability_series: self.availability_series.clone(),
        })
    }
}

fn push_point<T: Copy>(series: &mut Vec<(u64, T)>, time: u64, value: T) {
    if let Some(last) = series.last_mut() {
        if last.0 == time {
            last.1 = value;
            return;
        }
    }
    series.push((time, value));
}

/// Run a scenario to its horizon. Deterministic for a fixed scenario and
/// seed.
pub fn run(resolved: &ResolvedScenario) -> Result<RunOutcome, EngineError> {
    let mut state = SimState::new(resolved)?;
    while let Some(event) = state.events.first().cloned() {
        if event.time > state.horizon {
            break;
        }
        state.events.remove(&event);
        state.step(event)?;
        let batch_done = state.events.first().is_none_or(|next| next.time > state.clock);
        if batch_done {
            state.sample();
        }
    }
    state.clock = state.horizon;
    state.ledger.note_time(state.horizon);
    state.sample();
    let report = state.build_report(resolved)?;
    Ok(RunOutcome { state, report })
}
