//! Admission checks for the cloud and edge paths.
//!
//! Comparison boundaries are deliberately asymmetric between the two paths:
//! the cloud misses only when `deadline < latency` and passes on
//! `E >= cost`, while the edge misses when `completion >= deadline` and
//! passes only on `E > cost` and `free memory > model size`.

use serde::{Deserialize, Serialize};

use crate::model::{
    AppProfile, EdgeState, Energy, FeasibilityEstimate, FeasibilityReason, Millis, NetworkModel,
    Task,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CheckerKind {
    /// Deadline, energy and memory.
    MultiFactor,
    /// Deadline only; energy and memory are reported but not enforced.
    LatencyOnly,
}

impl CheckerKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckerKind::MultiFactor => "multi_factor",
            CheckerKind::LatencyOnly => "latency_only",
        }
    }
}

impl std::str::FromStr for CheckerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "multi_factor" | "MultiFactor" => Ok(CheckerKind::MultiFactor),
            "latency_only" | "LatencyOnly" => Ok(CheckerKind::LatencyOnly),
            other => Err(format!("unknown checker kind `{other}`")),
        }
    }
}

/// End-to-end cloud latency `l_i`: upload, cloud execution, result download
/// and one round trip.
///
/// Both transfer times are summed before rounding up, so instantaneous links
/// leave at most 1 ms of residue.
pub fn estimate_cloud_latency(task: &Task, profile: &AppProfile, net: &NetworkModel) -> Millis {
    let upload_ms = f64::from(task.input_kb) * 1000.0 / net.uplink_kbps;
    let download_ms = net.result_size_kb * 1000.0 / net.downlink_kbps;
    let transfer_ms = (upload_ms + download_ms).ceil() as Millis;
    transfer_ms + profile.cloud_exec_ms + net.rtt_ms
}

/// Cloud feasibility with every guard enforced.
pub fn cloud_feasible(
    task: &Task,
    profile: &AppProfile,
    net: &NetworkModel,
    edge: &EdgeState,
) -> FeasibilityEstimate {
    cloud_check(task, profile, net, edge, CheckerKind::MultiFactor)
}

fn cloud_check(
    task: &Task,
    profile: &AppProfile,
    net: &NetworkModel,
    edge: &EdgeState,
    kind: CheckerKind,
) -> FeasibilityEstimate {
    let latency = estimate_cloud_latency(task, profile, net);
    let cost = profile.cloud_energy(task.input_kb);
    let reason = if task.deadline < latency {
        FeasibilityReason::DeadlineMiss
    } else if kind == CheckerKind::LatencyOnly || edge.available_energy() >= cost {
        FeasibilityReason::Ok
    } else {
        FeasibilityReason::InsufficientEnergy
    };
    FeasibilityEstimate::new(latency, cost, 0.0, reason)
}

fn edge_completion(
    task: &Task,
    profile: &AppProfile,
    edge: &EdgeState,
    now: Millis,
    warm: bool,
) -> Millis {
    debug_assert!(now >= task.arrival);
    let start = now.max(edge.busy_until);
    let cold_penalty = if warm || edge.is_resident(task.app) {
        0
    } else {
        profile.model_load_ms
    };
    start + cold_penalty + profile.edge_exec_ms - task.arrival
}

/// Expected edge completion `c_i`, measured from the task's arrival:
/// queue wait, plus the model load when the model is not resident, plus the
/// warm execution time.
pub fn estimate_edge_completion(
    task: &Task,
    profile: &AppProfile,
    edge: &EdgeState,
    now: Millis,
) -> Millis {
    edge_completion(task, profile, edge, now, false)
}

/// Like [`estimate_edge_completion`] but assuming the model is already
/// loaded. Queue wait still counts.
pub fn estimate_warm_completion(
    task: &Task,
    profile: &AppProfile,
    edge: &EdgeState,
    now: Millis,
) -> Millis {
    edge_completion(task, profile, edge, now, true)
}

/// Edge feasibility with every guard enforced.
///
/// The memory guard compares the model size against capacity minus models
/// pinned by in-flight tasks; unpinned residents count as evictable.
pub fn edge_feasible(
    task: &Task,
    profile: &AppProfile,
    edge: &EdgeState,
    now: Millis,
) -> FeasibilityEstimate {
    edge_check(task, profile, edge, now, CheckerKind::MultiFactor)
}

fn edge_check(
    task: &Task,
    profile: &AppProfile,
    edge: &EdgeState,
    now: Millis,
    kind: CheckerKind,
) -> FeasibilityEstimate {
    let completion = estimate_edge_completion(task, profile, edge, now);
    let cost = profile.edge_energy();
    let needed = profile.model_size_mb;
    let reason = if completion >= task.deadline {
        FeasibilityReason::DeadlineMiss
    } else if kind == CheckerKind::LatencyOnly {
        FeasibilityReason::Ok
    } else if edge.available_energy() <= cost {
        FeasibilityReason::InsufficientEnergy
    } else if edge.reclaimable_free_mb() > needed {
        FeasibilityReason::Ok
    } else {
        FeasibilityReason::InsufficientMemory
    };
    FeasibilityEstimate::new(completion, cost, needed, reason)
}

/// Baseline checker: only the deadline comparisons apply.
pub fn latency_only_feasible(
    task: &Task,
    profile: &AppProfile,
    net: &NetworkModel,
    edge: &EdgeState,
    now: Millis,
) -> (FeasibilityEstimate, FeasibilityEstimate) {
    check_both(CheckerKind::LatencyOnly, task, profile, net, edge, now)
}

/// Runs both checkers of the given kind; returns `(cloud, edge)`.
pub fn check_both(
    kind: CheckerKind,
    task: &Task,
    profile: &AppProfile,
    net: &NetworkModel,
    edge: &EdgeState,
    now: Millis,
) -> (FeasibilityEstimate, FeasibilityEstimate) {
    (
        cloud_check(task, profile, net, edge, kind),
        edge_check(task, profile, edge, now, kind),
    )
}

/// Energy a dispatch must be able to draw without overdrawing the battery.
pub(crate) fn can_afford(edge: &EdgeState, cost: Energy) -> bool {
    edge.available_energy() >= cost
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ResidentModel, TaskType};
    use proptest::prelude::*;

    fn profile() -> AppProfile {
        AppProfile {
            app: TaskType::TextDetection,
            edge_exec_ms: 40,
            cloud_exec_ms: 50,
            model_load_ms: 300,
            model_size_mb: 100.0,
            edge_accuracy: 0.9,
            cloud_accuracy: 0.95,
            edge_energy_j: Energy::from_joules(3.0),
            upload_energy_j_per_kb: 0.0,
            receive_energy_j: Energy::from_joules(10.0),
            accuracy_sensitive: false,
            allow_accuracy_inversion: false,
        }
    }

    fn net() -> NetworkModel {
        NetworkModel {
            uplink_kbps: 1000.0,
            downlink_kbps: 1000.0,
            rtt_ms: 20,
            result_size_kb: 1.0,
        }
    }

    fn task(deadline: Millis, input_kb: u32) -> Task {
        Task {
            id: 0,
            app: TaskType::TextDetection,
            arrival: 0,
            deadline,
            input_kb,
        }
    }

    fn warm_state(battery_j: f64) -> EdgeState {
        let mut s = EdgeState::new(Energy::from_joules(battery_j), 512.0);
        s.resident.push(ResidentModel {
            app: TaskType::TextDetection,
            size_mb: 100.0,
            in_flight: 0,
        });
        s
    }

    /// Network whose latency for a 1000 KB task is exactly `l` ms.
    fn net_with_latency(l: Millis) -> (NetworkModel, AppProfile) {
        let net = NetworkModel {
            uplink_kbps: 1e9,
            downlink_kbps: 1e9,
            rtt_ms: 0,
            result_size_kb: 1.0,
        };
        // transfer rounds up to 1 ms.
        let p = AppProfile {
            cloud_exec_ms: l - 1,
            ..profile()
        };
        (net, p)
    }

    #[test]
    fn cloud_latency_hand_example() {
        assert_eq!(
            estimate_cloud_latency(&task(2000, 1000), &profile(), &net()),
            1071
        );
    }

    #[test]
    fn cloud_latency_degenerate_links() {
        let net = NetworkModel {
            uplink_kbps: 1e9,
            downlink_kbps: 1e9,
            rtt_ms: 0,
            result_size_kb: 1.0,
        };
        let p = AppProfile {
            cloud_exec_ms: 0,
            ..profile()
        };
        assert!(estimate_cloud_latency(&task(10, 1), &p, &net) <= 1);
    }

    #[test]
    fn cloud_latency_grows_with_input() {
        let a = estimate_cloud_latency(&task(10, 500), &profile(), &net());
        let b = estimate_cloud_latency(&task(10, 1000), &profile(), &net());
        assert!(b > a);
    }

    #[test]
    fn cloud_deadline_miss() {
        let (net, p) = net_with_latency(150);
        let est = cloud_feasible(&task(100, 1000), &p, &net, &warm_state(50.0));
        assert_eq!(est.expected_latency_ms, 150);
        assert_eq!(est.reason, FeasibilityReason::DeadlineMiss);
        assert!(!est.feasible);
    }

    #[test]
    fn cloud_feasible_with_energy() {
        let (net, p) = net_with_latency(150);
        let est = cloud_feasible(&task(200, 1000), &p, &net, &warm_state(50.0));
        assert!(est.feasible);
        assert_eq!(est.energy_cost, Energy::from_joules(10.0));
    }

    #[test]
    fn cloud_insufficient_energy() {
        let (net, p) = net_with_latency(150);
        let est = cloud_feasible(&task(200, 1000), &p, &net, &warm_state(5.0));
        assert_eq!(est.reason, FeasibilityReason::InsufficientEnergy);
        assert_eq!(est.expected_latency_ms, 150);
    }

    #[test]
    fn cloud_deadline_equal_to_latency_is_feasible() {
        let (net, p) = net_with_latency(150);
        assert!(cloud_feasible(&task(150, 1000), &p, &net, &warm_state(50.0)).feasible);
    }

    #[test]
    fn cloud_energy_equal_to_cost_is_feasible() {
        let (net, p) = net_with_latency(150);
        assert!(cloud_feasible(&task(200, 1000), &p, &net, &warm_state(10.0)).feasible);
    }

    #[test]
    fn edge_completion_examples() {
        let p = profile();
        let t = task(1000, 10);
        assert_eq!(estimate_edge_completion(&t, &p, &warm_state(10.0), 0), 40);
        let cold = EdgeState::new(Energy::from_joules(10.0), 512.0);
        assert_eq!(estimate_edge_completion(&t, &p, &cold, 0), 340);
        let mut busy = warm_state(10.0);
        busy.busy_until = 100;
        assert_eq!(estimate_edge_completion(&t, &p, &busy, 0), 140);
        assert_eq!(estimate_warm_completion(&t, &p, &cold, 0), 40);
    }

    #[test]
    fn edge_completion_equal_to_deadline_is_infeasible() {
        let est = edge_feasible(&task(40, 10), &profile(), &warm_state(10.0), 0);
        assert_eq!(est.expected_latency_ms, 40);
        assert_eq!(est.reason, FeasibilityReason::DeadlineMiss);
        assert!(edge_feasible(&task(41, 10), &profile(), &warm_state(10.0), 0).feasible);
    }

    #[test]
    fn edge_energy_equal_to_cost_is_infeasible() {
        let est = edge_feasible(&task(100, 10), &profile(), &warm_state(3.0), 0);
        assert_eq!(est.reason, FeasibilityReason::InsufficientEnergy);
    }

    #[test]
    fn edge_memory_equal_to_need_is_infeasible() {
        let p = AppProfile {
            model_size_mb: 512.0,
            model_load_ms: 0,
            ..profile()
        };
        let s = EdgeState::new(Energy::from_joules(10.0), 512.0);
        assert_eq!(
            edge_feasible(&task(100, 10), &p, &s, 0).reason,
            FeasibilityReason::InsufficientMemory
        );
        let s = EdgeState::new(Energy::from_joules(10.0), 512.5);
        assert!(edge_feasible(&task(100, 10), &p, &s, 0).feasible);
    }

    #[test]
    fn edge_model_larger_than_capacity() {
        let p = AppProfile {
            model_size_mb: 600.0,
            model_load_ms: 0,
            ..profile()
        };
        let s = EdgeState::new(Energy::from_joules(10.0), 512.0);
        let est = edge_feasible(&task(100, 10), &p, &s, 0);
        assert_eq!(est.reason, FeasibilityReason::InsufficientMemory);
        assert_eq!(est.memory_needed_mb, 600.0);
    }

    #[test]
    fn pinned_models_are_not_reclaimable() {
        let mut s = warm_state(10.0);
        s.resident.push(ResidentModel {
            app: TaskType::ImageDetection,
            size_mb: 450.0,
            in_flight: 1,
        });
        // 512 - 450 = 62 < 100
        assert_eq!(
            edge_feasible(&task(1000, 10), &profile(), &s, 0).reason,
            FeasibilityReason::InsufficientMemory
        );
        s.resident[1].in_flight = 0;
        assert!(edge_feasible(&task(1000, 10), &profile(), &s, 0).feasible);
    }

    #[test]
    fn energy_guard_reported_before_memory() {
        let p = AppProfile {
            model_size_mb: 600.0,
            ..profile()
        };
        let est = edge_feasible(&task(1000, 10), &p, &warm_state(1.0), 0);
        assert_eq!(est.reason, FeasibilityReason::InsufficientEnergy);
    }

    #[test]
    fn reservations_reduce_available_energy() {
        let mut s = warm_state(10.0);
        s.reserved = Energy::from_joules(7.5);
        assert_eq!(
            edge_feasible(&task(100, 10), &profile(), &s, 0).reason,
            FeasibilityReason::InsufficientEnergy
        );
    }

    #[test]
    fn latency_only_ignores_energy() {
        let (net, p) = net_with_latency(150);
        let s = warm_state(0.0);
        let (cloud, edge) = latency_only_feasible(&task(200, 1000), &p, &net, &s, 0);
        assert!(cloud.feasible);
        assert!(edge.feasible);
        assert_eq!(cloud.energy_cost, Energy::from_joules(10.0));
        let (cloud, _) = latency_only_feasible(&task(100, 1000), &p, &net, &s, 0);
        assert_eq!(cloud.reason, FeasibilityReason::DeadlineMiss);
    }

    fn arb_case() -> impl Strategy<Value = (Task, AppProfile, EdgeState, NetworkModel)> {
        (
            (1u64..2_000, 1u32..2_000),
            (0u64..300, 0u64..300, 0u64..800, 1.0f64..800.0),
            (0i64..20_000_000, 0i64..20_000_000, 0i64..2_000_000),
            (
                0i64..30_000_000,
                0i64..10_000_000,
                100.0f64..1500.0,
                0u64..400,
            ),
            (any::<bool>(), any::<bool>(), 0.0f64..600.0),
            (100.0f64..5000.0, 0u64..100),
        )
            .prop_map(
                |(
                    (deadline, input_kb),
                    (edge_exec, cloud_exec, load, size),
                    (edge_uj, recv_uj, upload_uj_per_kb),
                    (battery_uj, reserved_uj, capacity, busy_until),
                    (resident, pinned, other_pinned),
                    (link, rtt),
                )| {
                    let task = Task {
                        id: 0,
                        app: TaskType::FaceRecognition,
                        arrival: 0,
                        deadline,
                        input_kb,
                    };
                    let profile = AppProfile {
                        app: TaskType::FaceRecognition,
                        edge_exec_ms: edge_exec,
                        cloud_exec_ms: cloud_exec,
                        model_load_ms: load,
                        model_size_mb: size,
                        edge_accuracy: 0.9,
                        cloud_accuracy: 0.95,
                        edge_energy_j: Energy::from_micro_joules(edge_uj),
                        upload_energy_j_per_kb: upload_uj_per_kb as f64 / 1e6,
                        receive_energy_j: Energy::from_micro_joules(recv_uj),
                        accuracy_sensitive: false,
                        allow_accuracy_inversion: false,
                    };
                    let mut edge = EdgeState::new(Energy::from_micro_joules(battery_uj), capacity);
                    edge.reserved = Energy::from_micro_joules(reserved_uj.min(battery_uj));
                    edge.busy_until = busy_until;
                    if resident {
                        edge.resident.push(ResidentModel {
                            app: TaskType::FaceRecognition,
                            size_mb: size,
                            in_flight: u32::from(pinned),
                        });
                    }
                    edge.resident.push(ResidentModel {
                        app: TaskType::ImageDetection,
                        size_mb: other_pinned,
                        in_flight: 1,
                    });
                    let net = NetworkModel {
                        uplink_kbps: link,
                        downlink_kbps: link,
                        rtt_ms: rtt,
                        result_size_kb: 2.0,
                    };
                    (task, profile, edge, net)
                },
            )
    }

    proptest! {
        #[test]
        fn latency_only_admits_superset((task, profile, edge, net) in arb_case()) {
            let (mc, me) = check_both(CheckerKind::MultiFactor, &task, &profile, &net, &edge, 0);
            let (lc, le) = latency_only_feasible(&task, &profile, &net, &edge, 0);
            prop_assert!(!mc.feasible || lc.feasible);
            prop_assert!(!me.feasible || le.feasible);
            prop_assert_eq!(mc.expected_latency_ms, lc.expected_latency_ms);
            prop_assert_eq!(me.energy_cost, le.energy_cost);
        }

        #[test]
        fn feasibility_monotone_in_slack(
            (task, profile, edge, net) in arb_case(),
            extra_deadline in 0u64..500,
            extra_uj in 0i64..5_000_000,
            extra_mb in 0.0f64..500.0,
        ) {
            let before_c = cloud_feasible(&task, &profile, &net, &edge);
            let before_e = edge_feasible(&task, &profile, &edge, 0);
            let looser_task = Task { deadline: task.deadline + extra_deadline, ..task };
            let mut looser = edge.clone();
            looser.battery += Energy::from_micro_joules(extra_uj);
            looser.memory_capacity_mb += extra_mb;
            let after_c = cloud_feasible(&looser_task, &profile, &net, &looser);
            let after_e = edge_feasible(&looser_task, &profile, &looser, 0);
            prop_assert!(!before_c.feasible || after_c.feasible);
            prop_assert!(!before_e.feasible || after_e.feasible);
        }

        #[test]
        fn abundant_resources_make_checkers_agree((task, profile, edge, net) in arb_case()) {
            let mut rich = edge.clone();
            rich.battery = Energy::from_joules(1e6);
            rich.reserved = Energy::ZERO;
            rich.memory_capacity_mb = 1e6;
            let multi = check_both(CheckerKind::MultiFactor, &task, &profile, &net, &rich, 0);
            let base = latency_only_feasible(&task, &profile, &net, &rich, 0);
            prop_assert_eq!(multi, base);
        }
    }
}
