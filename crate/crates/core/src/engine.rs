//! Discrete-event simulation of one edge device in front of an unbounded
//! cloud.
//!
//! Events are ordered by `(time, seq)` where `seq` is assigned at enqueue.
//! Arrivals are enqueued lazily, one ahead, so a completion and an arrival
//! at the same instant are handled completion first.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::allocator::{decide, Placement, TradeoffHandler, TradeoffInputs};
use crate::feasibility::{can_afford, check_both, CheckerKind};
use crate::metrics::{aggregate, RunReport};
use crate::model::{
    AppProfile, Decision, EdgeState, Energy, Millis, NetworkModel, ProfileTable, ResidentModel,
    Target, Task, TaskType,
};
use crate::rescue::{rescue, RescueVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    TaskArrival(usize),
    EdgeComplete(usize),
    CloudComplete(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Event {
    pub time: Millis,
    pub seq: u64,
    pub kind: EventKind,
}

/// Min-queue on `(time, seq)`.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: Millis, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Event { time, seq, kind }));
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|Reverse(e)| e)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Admission and placement policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub checker: CheckerKind,
    pub handler: TradeoffHandler,
    pub rescue_enabled: bool,
}

/// Everything a simulation needs besides the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub profiles: ProfileTable,
    pub net: NetworkModel,
    pub edge_init: EdgeState,
    pub policy: Policy,
}

/// Why a dispatched task could not start. Only reachable when the active
/// checker skips the energy or memory guard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DispatchFailure {
    InsufficientEnergy,
    InsufficientMemory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: u64,
    pub app: TaskType,
    pub arrival: Millis,
    pub deadline: Millis,
    pub decision: Decision,
    pub failure: Option<DispatchFailure>,
    /// Execution start on the edge; dispatch instant otherwise.
    pub started: Millis,
    pub completed: Option<Millis>,
    pub on_time: bool,
    pub accuracy: Option<f64>,
    pub energy_spent: Energy,
    pub latency_ms: Option<Millis>,
}

/// Per-event bookkeeping for invariant checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub initial_battery: Energy,
    pub final_battery: Energy,
    pub events_processed: usize,
    /// Events after which resident models exceeded capacity.
    pub memory_violations: usize,
    /// Events after which the battery was negative.
    pub battery_violations: usize,
    pub peak_resident_mb: f64,
    /// `(start, end)` of every edge execution, in dispatch order.
    pub edge_intervals: Vec<(Millis, Millis)>,
}

impl Audit {
    pub fn edge_intervals_disjoint(&self) -> bool {
        let mut iv = self.edge_intervals.clone();
        iv.sort_unstable();
        iv.windows(2).all(|w| w[0].1 <= w[1].0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub report: RunReport,
    pub outcomes: Vec<TaskOutcome>,
    pub audit: Audit,
    pub final_state: EdgeState,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("trace not sorted: task at position {0} arrives before its predecessor")]
    Unsorted(usize),
    #[error("no profile for application {0}")]
    MissingProfile(TaskType),
    #[error("network model must have positive link rates and result size")]
    InvalidNetwork,
}

/// Admission control and placement for one task at `now`.
///
/// Both checks run; exactly one feasible side wins outright, two feasible
/// sides go through [`decide`], and none falls back to rescue when enabled.
pub fn admit(
    task: &Task,
    profile: &AppProfile,
    net: &NetworkModel,
    edge: &EdgeState,
    now: Millis,
    policy: &Policy,
) -> Decision {
    let (cloud_check, edge_check) = check_both(policy.checker, task, profile, net, edge, now);
    let (target, via_rescue) = match (cloud_check.feasible, edge_check.feasible) {
        (true, false) => (Target::Cloud, false),
        (false, true) => (Target::Edge, false),
        (true, true) => {
            let inputs = TradeoffInputs::from_checks(task, profile, &cloud_check, &edge_check);
            match decide(&inputs, &policy.handler) {
                Placement::Cloud => (Target::Cloud, false),
                Placement::Edge => (Target::Edge, false),
            }
        }
        (false, false) if policy.rescue_enabled => match rescue(task, profile, edge, now) {
            RescueVerdict::Edge => (Target::Edge, true),
            RescueVerdict::Drop => (Target::Drop, true),
        },
        (false, false) => (Target::Drop, false),
    };
    Decision {
        target,
        via_rescue,
        cloud_check,
        edge_check,
    }
}

struct Simulation<'a> {
    trace: &'a [Task],
    scenario: &'a Scenario,
    edge: EdgeState,
    queue: EventQueue,
    outcomes: Vec<Option<TaskOutcome>>,
    audit: Audit,
}

impl<'a> Simulation<'a> {
    fn profile(&self, app: TaskType) -> &'a AppProfile {
        &self.scenario.profiles[&app]
    }

    fn run(mut self) -> SimRun {
        if !self.trace.is_empty() {
            self.queue
                .push(self.trace[0].arrival, EventKind::TaskArrival(0));
        }
        while let Some(event) = self.queue.pop() {
            match event.kind {
                EventKind::TaskArrival(idx) => {
                    self.on_arrival(idx, event.time);
                    if let Some(next) = self.trace.get(idx + 1) {
                        self.queue
                            .push(next.arrival, EventKind::TaskArrival(idx + 1));
                    }
                }
                EventKind::EdgeComplete(idx) => self.on_edge_complete(idx, event.time),
                EventKind::CloudComplete(idx) => self.on_cloud_complete(idx, event.time),
            }
            self.record_invariants();
        }
        self.audit.final_battery = self.edge.battery;
        let outcomes: Vec<TaskOutcome> = self
            .outcomes
            .into_iter()
            .map(|o| o.expect("every task has an outcome once the queue drains"))
            .collect();
        SimRun {
            report: aggregate(&outcomes),
            outcomes,
            audit: self.audit,
            final_state: self.edge,
        }
    }

    fn record_invariants(&mut self) {
        self.audit.events_processed += 1;
        let resident = self.edge.resident_memory_mb();
        self.audit.peak_resident_mb = self.audit.peak_resident_mb.max(resident);
        if !self.edge.memory_invariant_holds() {
            self.audit.memory_violations += 1;
        }
        if self.edge.battery.is_negative() {
            self.audit.battery_violations += 1;
        }
    }

    fn on_arrival(&mut self, idx: usize, now: Millis) {
        let task = self.trace[idx];
        let profile = self.profile(task.app);
        let decision = admit(
            &task,
            profile,
            &self.scenario.net,
            &self.edge,
            now,
            &self.scenario.policy,
        );
        let mut outcome = TaskOutcome {
            task_id: task.id,
            app: task.app,
            arrival: task.arrival,
            deadline: task.deadline,
            decision,
            failure: None,
            started: now,
            completed: None,
            on_time: false,
            accuracy: None,
            energy_spent: Energy::ZERO,
            latency_ms: None,
        };
        match decision.target {
            Target::Drop => {}
            Target::Cloud => {
                let cost = decision.cloud_check.energy_cost;
                if can_afford(&self.edge, cost) {
                    self.edge.battery -= cost;
                    outcome.energy_spent = cost;
                    let done = now + decision.cloud_check.expected_latency_ms;
                    self.queue.push(done, EventKind::CloudComplete(idx));
                } else {
                    outcome.failure = Some(DispatchFailure::InsufficientEnergy);
                }
            }
            Target::Edge => match self.dispatch_edge(idx, now) {
                Ok(start) => outcome.started = start,
                Err(f) => outcome.failure = Some(f),
            },
        }
        self.outcomes[idx] = Some(outcome);
    }

    /// Loads the model if needed, reserves energy and queues the execution.
    /// Returns the execution start.
    fn dispatch_edge(&mut self, idx: usize, now: Millis) -> Result<Millis, DispatchFailure> {
        let task = self.trace[idx];
        let profile = self.profile(task.app);
        let cost = profile.edge_energy();
        if !can_afford(&self.edge, cost) {
            return Err(DispatchFailure::InsufficientEnergy);
        }

        let cold_penalty =
            if let Some(pos) = self.edge.resident.iter().position(|m| m.app == task.app) {
                let model = self.edge.resident.remove(pos);
                self.edge.resident.push(model);
                0
            } else {
                let needed = profile.model_size_mb;
                let free = self.edge.memory_capacity_mb - self.edge.resident_memory_mb();
                if free < needed && self.edge.reclaimable_free_mb() < needed {
                    return Err(DispatchFailure::InsufficientMemory);
                }
                // evict least recently used, unpinned first
                while self.edge.memory_capacity_mb - self.edge.resident_memory_mb() < needed {
                    let victim = self
                        .edge
                        .resident
                        .iter()
                        .position(|m| !m.is_pinned())
                        .expect("reclaimable memory covers the model");
                    self.edge.resident.remove(victim);
                }
                self.edge.resident.push(ResidentModel {
                    app: task.app,
                    size_mb: needed,
                    in_flight: 0,
                });
                profile.model_load_ms
            };

        let model = self.edge.resident.last_mut().expect("model just touched");
        model.in_flight += 1;
        self.edge.reserved += cost;
        let start = now.max(self.edge.busy_until);
        let end = start + cold_penalty + profile.edge_exec_ms;
        self.edge.busy_until = end;
        self.audit.edge_intervals.push((start, end));
        self.queue.push(end, EventKind::EdgeComplete(idx));
        Ok(start)
    }

    fn on_edge_complete(&mut self, idx: usize, now: Millis) {
        let task = self.trace[idx];
        let profile = self.profile(task.app);
        let cost = profile.edge_energy();
        self.edge.battery -= cost;
        self.edge.reserved -= cost;
        let model = self
            .edge
            .resident
            .iter_mut()
            .find(|m| m.app == task.app)
            .expect("model of an in-flight task stays resident");
        model.in_flight -= 1;
        let outcome = self.outcomes[idx]
            .as_mut()
            .expect("arrival precedes completion");
        outcome.energy_spent = cost;
        finish(outcome, now, profile.edge_accuracy);
    }

    fn on_cloud_complete(&mut self, idx: usize, now: Millis) {
        let accuracy = self.profile(self.trace[idx].app).cloud_accuracy;
        let outcome = self.outcomes[idx]
            .as_mut()
            .expect("arrival precedes completion");
        finish(outcome, now, accuracy);
    }
}

fn finish(outcome: &mut TaskOutcome, now: Millis, accuracy: f64) {
    outcome.completed = Some(now);
    outcome.on_time = now <= outcome.arrival + outcome.deadline;
    outcome.accuracy = Some(accuracy);
    outcome.latency_ms = Some(now - outcome.arrival);
}

fn validate_inputs(trace: &[Task], scenario: &Scenario) -> Result<(), SimError> {
    if !scenario.net.is_valid() {
        return Err(SimError::InvalidNetwork);
    }
    if let Some(pos) = trace.windows(2).position(|w| w[1].arrival < w[0].arrival) {
        return Err(SimError::Unsorted(pos + 1));
    }
    for t in trace {
        if !scenario.profiles.contains_key(&t.app) {
            return Err(SimError::MissingProfile(t.app));
        }
    }
    Ok(())
}

/// Runs the trace to completion and keeps per-task outcomes and the audit.
pub fn simulate_detailed(trace: &[Task], scenario: &Scenario) -> Result<SimRun, SimError> {
    validate_inputs(trace, scenario)?;
    let sim = Simulation {
        trace,
        scenario,
        edge: scenario.edge_init.clone(),
        queue: EventQueue::new(),
        outcomes: vec![None; trace.len()],
        audit: Audit {
            initial_battery: scenario.edge_init.battery,
            final_battery: scenario.edge_init.battery,
            ..Audit::default()
        },
    };
    Ok(sim.run())
}

pub fn simulate(trace: &[Task], scenario: &Scenario) -> Result<RunReport, SimError> {
    simulate_detailed(trace, scenario).map(|run| run.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::HandlerKind;
    use crate::model::FeasibilityReason;

    fn profile(app: TaskType) -> AppProfile {
        AppProfile {
            app,
            edge_exec_ms: 40,
            cloud_exec_ms: 30,
            model_load_ms: 300,
            model_size_mb: 200.0,
            edge_accuracy: 0.92,
            cloud_accuracy: 0.96,
            edge_energy_j: Energy::from_joules(2.0),
            upload_energy_j_per_kb: 0.01,
            receive_energy_j: Energy::from_joules(0.5),
            accuracy_sensitive: false,
            allow_accuracy_inversion: false,
        }
    }

    fn scenario(battery_j: f64) -> Scenario {
        Scenario {
            profiles: TaskType::ALL.into_iter().map(|a| (a, profile(a))).collect(),
            net: NetworkModel {
                uplink_kbps: 1000.0,
                downlink_kbps: 1000.0,
                rtt_ms: 20,
                result_size_kb: 1.0,
            },
            edge_init: EdgeState::new(Energy::from_joules(battery_j), 512.0),
            policy: Policy {
                checker: CheckerKind::MultiFactor,
                handler: TradeoffHandler::new(HandlerKind::EnergyAccuracy),
                rescue_enabled: true,
            },
        }
    }

    fn task(id: u64, arrival: Millis, deadline: Millis, input_kb: u32) -> Task {
        Task {
            id,
            app: TaskType::FaceRecognition,
            arrival,
            deadline,
            input_kb,
        }
    }

    #[test]
    fn queue_orders_by_time_then_seq() {
        let mut q = EventQueue::new();
        q.push(10, EventKind::CloudComplete(0));
        q.push(5, EventKind::TaskArrival(1));
        q.push(10, EventKind::EdgeComplete(2));
        q.push(5, EventKind::TaskArrival(3));
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|e| e.kind).collect();
        assert_eq!(
            order,
            vec![
                EventKind::TaskArrival(1),
                EventKind::TaskArrival(3),
                EventKind::CloudComplete(0),
                EventKind::EdgeComplete(2),
            ]
        );
    }

    #[test]
    fn empty_trace() {
        let r = simulate(&[], &scenario(100.0)).unwrap();
        assert_eq!(r.overall.n_tasks, 0);
        assert_eq!(r.overall.completion_rate, 1.0);
    }

    #[test]
    fn single_warm_task_on_edge() {
        let mut sc = scenario(100.0);
        sc.edge_init.resident.push(ResidentModel {
            app: TaskType::FaceRecognition,
            size_mb: 200.0,
            in_flight: 0,
        });
        // Cloud latency 1000/1000*1000 + 30 + 1 + 20 = 1051 > deadline: edge only.
        let run = simulate_detailed(&[task(0, 0, 500, 1000)], &sc).unwrap();
        assert_eq!(run.report.overall.completion_rate, 1.0);
        assert_eq!(run.report.overall.total_energy, Energy::from_joules(2.0));
        assert_eq!(run.outcomes[0].decision.target, Target::Edge);
        assert_eq!(run.outcomes[0].latency_ms, Some(40));
        assert_eq!(run.final_state.battery, Energy::from_joules(98.0));
        assert_eq!(run.final_state.reserved, Energy::ZERO);
    }

    #[test]
    fn second_simultaneous_task_misses_edge_deadline() {
        let mut sc = scenario(100.0);
        sc.edge_init.resident.push(ResidentModel {
            app: TaskType::FaceRecognition,
            size_mb: 200.0,
            in_flight: 0,
        });
        // First: c = 40 < 60. Second: c = 80 >= 60, cloud l = 1051 > 60.
        // Rescue: warm c = 80, not < 60: drop.
        let trace = [task(0, 0, 60, 1000), task(1, 0, 60, 1000)];
        let run = simulate_detailed(&trace, &sc).unwrap();
        assert_eq!(run.outcomes[0].decision.target, Target::Edge);
        let second = &run.outcomes[1];
        assert_eq!(second.decision.edge_check.expected_latency_ms, 80);
        assert_eq!(
            second.decision.edge_check.reason,
            FeasibilityReason::DeadlineMiss
        );
        assert_eq!(second.decision.target, Target::Drop);
        assert!(second.decision.via_rescue);

        // With a looser deadline and a small input the second goes to the cloud.
        // l = 10 + 30 + 1 + 20 = 61 <= 70, c = 80 >= 70.
        let trace = [task(0, 0, 70, 1000), task(1, 0, 70, 10)];
        let run = simulate_detailed(&trace, &sc).unwrap();
        assert_eq!(run.outcomes[1].decision.target, Target::Cloud);
        assert!(run.outcomes[1].on_time);
    }

    #[test]
    fn depleted_battery_drops_everything() {
        let sc = scenario(0.1);
        let trace: Vec<_> = (0..5).map(|i| task(i, i * 10, 5000, 100)).collect();
        let run = simulate_detailed(&trace, &sc).unwrap();
        for o in &run.outcomes {
            assert_eq!(o.decision.target, Target::Drop);
            assert_eq!(
                o.decision.cloud_check.reason,
                FeasibilityReason::InsufficientEnergy
            );
            assert_eq!(o.energy_spent, Energy::ZERO);
        }
        assert_eq!(run.final_state.battery, Energy::from_joules(0.1));
        assert_eq!(run.report.overall.dropped, 5);
    }

    #[test]
    fn cold_start_then_warm_reuse() {
        let sc = scenario(100.0);
        // Cloud: input 5000 KB, l = 5000 + 51 > 1000 so edge only.
        let trace = [task(0, 0, 1000, 5000), task(1, 500, 1000, 5000)];
        let run = simulate_detailed(&trace, &sc).unwrap();
        assert_eq!(run.outcomes[0].latency_ms, Some(340));
        assert_eq!(run.outcomes[1].latency_ms, Some(40));
        assert_eq!(run.audit.edge_intervals, vec![(0, 340), (500, 540)]);
    }

    #[test]
    fn lru_eviction_skips_pinned() {
        let mut sc = scenario(100.0);
        sc.edge_init.memory_capacity_mb = 450.0;
        let mk = |id, app, arrival| Task {
            id,
            app,
            arrival,
            deadline: 5000,
            input_kb: 50_000,
        };
        let trace = [
            mk(0, TaskType::FaceRecognition, 0),
            mk(1, TaskType::TextDetection, 1000),
            mk(2, TaskType::ImageDetection, 2000),
        ];
        let run = simulate_detailed(&trace, &sc).unwrap();
        assert!(run.outcomes.iter().all(|o| o.on_time));
        let apps: Vec<_> = run.final_state.resident.iter().map(|m| m.app).collect();
        assert_eq!(
            apps,
            vec![TaskType::TextDetection, TaskType::ImageDetection]
        );
        assert_eq!(run.audit.memory_violations, 0);
    }

    #[test]
    fn latency_only_dispatch_can_fail() {
        let mut sc = scenario(100.0);
        sc.policy.checker = CheckerKind::LatencyOnly;
        sc.edge_init.memory_capacity_mb = 100.0;
        let run = simulate_detailed(&[task(0, 0, 1000, 5000)], &sc).unwrap();
        let o = &run.outcomes[0];
        assert_eq!(o.decision.target, Target::Edge);
        assert_eq!(o.failure, Some(DispatchFailure::InsufficientMemory));
        assert_eq!(run.report.overall.missed, 1);
        assert_eq!(run.final_state.battery, Energy::from_joules(100.0));

        sc.policy.checker = CheckerKind::MultiFactor;
        let run = simulate_detailed(&[task(0, 0, 1000, 5000)], &sc).unwrap();
        assert_eq!(run.outcomes[0].decision.target, Target::Drop);
    }

    #[test]
    fn reservations_prevent_overdraft() {
        // Battery covers one edge inference plus change, never two.
        let mut sc = scenario(3.0);
        sc.edge_init.resident.push(ResidentModel {
            app: TaskType::FaceRecognition,
            size_mb: 200.0,
            in_flight: 0,
        });
        let trace = [task(0, 0, 500, 5000), task(1, 0, 500, 5000)];
        let run = simulate_detailed(&trace, &sc).unwrap();
        assert_eq!(run.outcomes[0].decision.target, Target::Edge);
        assert_eq!(run.outcomes[1].decision.target, Target::Drop);
        assert_eq!(run.audit.battery_violations, 0);
    }

    #[test]
    fn input_errors() {
        let sc = scenario(10.0);
        let trace = [task(0, 10, 100, 1), task(1, 5, 100, 1)];
        assert_eq!(simulate(&trace, &sc), Err(SimError::Unsorted(1)));
        let mut sc2 = scenario(10.0);
        sc2.profiles.remove(&TaskType::FaceRecognition);
        let err = simulate(&[task(0, 0, 100, 1)], &sc2).unwrap_err();
        assert_eq!(err, SimError::MissingProfile(TaskType::FaceRecognition));
        assert!(err.to_string().contains("FaceRecognition"));
    }
}
