//! Last-chance path for tasks that neither side can admit: run on the edge
//! with whatever model is already loaded, or drop.

use crate::feasibility::estimate_warm_completion;
use crate::model::{AppProfile, EdgeState, Millis, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RescueVerdict {
    Edge,
    Drop,
}

/// Edge iff the model is resident, the warm-start completion beats the
/// deadline strictly, and the available energy covers inference
/// (inclusive). Never loads or evicts anything.
pub fn rescue(task: &Task, profile: &AppProfile, edge: &EdgeState, now: Millis) -> RescueVerdict {
    let warm_completion = estimate_warm_completion(task, profile, edge, now);
    if task.deadline > warm_completion
        && profile.edge_energy() <= edge.available_energy()
        && edge.is_resident(task.app)
    {
        RescueVerdict::Edge
    } else {
        RescueVerdict::Drop
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::edge_feasible;
    use crate::model::{Energy, ResidentModel, TaskType};
    use proptest::prelude::*;

    fn profile() -> AppProfile {
        AppProfile {
            app: TaskType::FaceRecognition,
            edge_exec_ms: 60,
            cloud_exec_ms: 30,
            model_load_ms: 500,
            model_size_mb: 200.0,
            edge_accuracy: 0.93,
            cloud_accuracy: 0.97,
            edge_energy_j: Energy::from_joules(2.0),
            upload_energy_j_per_kb: 0.01,
            receive_energy_j: Energy::from_joules(0.1),
            accuracy_sensitive: true,
            allow_accuracy_inversion: false,
        }
    }

    fn task(deadline: Millis) -> Task {
        Task {
            id: 3,
            app: TaskType::FaceRecognition,
            arrival: 0,
            deadline,
            input_kb: 100,
        }
    }

    fn state(battery_j: f64, resident: bool) -> EdgeState {
        let mut s = EdgeState::new(Energy::from_joules(battery_j), 300.0);
        if resident {
            s.resident.push(ResidentModel {
                app: TaskType::FaceRecognition,
                size_mb: 200.0,
                in_flight: 1,
            });
        }
        s
    }

    #[test]
    fn all_guards_pass() {
        assert_eq!(
            rescue(&task(100), &profile(), &state(10.0, true), 0),
            RescueVerdict::Edge
        );
    }

    #[test]
    fn cold_model_is_dropped() {
        assert_eq!(
            rescue(&task(10_000), &profile(), &state(1000.0, false), 0),
            RescueVerdict::Drop
        );
    }

    #[test]
    fn deadline_equal_to_warm_completion_drops() {
        assert_eq!(
            rescue(&task(60), &profile(), &state(10.0, true), 0),
            RescueVerdict::Drop
        );
        assert_eq!(
            rescue(&task(61), &profile(), &state(10.0, true), 0),
            RescueVerdict::Edge
        );
    }

    #[test]
    fn energy_equal_to_cost_is_rescued() {
        assert_eq!(
            rescue(&task(100), &profile(), &state(2.0, true), 0),
            RescueVerdict::Edge
        );
        assert_eq!(
            rescue(&task(100), &profile(), &state(1.999999, true), 0),
            RescueVerdict::Drop
        );
    }

    #[test]
    fn queue_wait_counts() {
        let mut s = state(10.0, true);
        s.busy_until = 50;
        // warm completion = 50 + 60
        assert_eq!(rescue(&task(110), &profile(), &s, 0), RescueVerdict::Drop);
        assert_eq!(rescue(&task(111), &profile(), &s, 0), RescueVerdict::Edge);
    }

    proptest! {
        #[test]
        fn rescue_leaves_residency_untouched(
            deadline in 1u64..500,
            battery in 0.0f64..5.0,
            resident in any::<bool>(),
            busy in 0u64..200,
        ) {
            let mut s = state(battery, resident);
            s.busy_until = busy;
            let before = s.clone();
            let v = rescue(&task(deadline), &profile(), &s, 0);
            prop_assert_eq!(&s, &before);
            if v == RescueVerdict::Edge {
                let warm = estimate_warm_completion(&task(deadline), &profile(), &s, 0);
                prop_assert!(warm <= deadline);
            }
        }

        #[test]
        fn edge_feasible_resident_implies_rescuable(
            deadline in 1u64..800,
            battery in 0.0f64..5.0,
            busy in 0u64..200,
        ) {
            let mut s = state(battery, true);
            s.resident[0].in_flight = 0;
            s.busy_until = busy;
            let t = task(deadline);
            if edge_feasible(&t, &profile(), &s, 0).feasible {
                prop_assert_eq!(rescue(&t, &profile(), &s, 0), RescueVerdict::Edge);
            }
        }
    }
}
