//! Placement between edge and cloud once both paths are known to be
//! feasible, plus the pluggable trade-off handlers consulted when the cloud
//! is not the cheaper option.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::{AppProfile, Energy, FeasibilityEstimate, Task, TaskType};

/// Where a task that is feasible on both sides should run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Placement {
    Edge,
    Cloud,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HandlerKind {
    EnergyAccuracy,
    LatencyBased,
    EnergyBased,
    AccuracyBased,
}

impl HandlerKind {
    pub const ALL: [HandlerKind; 4] = [
        HandlerKind::EnergyAccuracy,
        HandlerKind::LatencyBased,
        HandlerKind::EnergyBased,
        HandlerKind::AccuracyBased,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HandlerKind::EnergyAccuracy => "energy_accuracy",
            HandlerKind::LatencyBased => "latency_based",
            HandlerKind::EnergyBased => "energy_based",
            HandlerKind::AccuracyBased => "accuracy_based",
        }
    }
}

impl std::str::FromStr for HandlerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        HandlerKind::ALL
            .into_iter()
            .find(|k| k.name() == s || format!("{k:?}") == s)
            .ok_or_else(|| format!("unknown handler kind `{s}`"))
    }
}

/// Everything a handler may look at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffInputs {
    pub task_type: TaskType,
    pub accuracy_sensitive: bool,
    pub edge_energy: Energy,
    /// Edge-side cost of running in the cloud (upload + receive).
    pub cloud_energy: Energy,
    pub edge_accuracy: f64,
    pub cloud_accuracy: f64,
    pub edge_latency_ms: u64,
    pub cloud_latency_ms: u64,
}

impl TradeoffInputs {
    pub fn from_checks(
        task: &Task,
        profile: &AppProfile,
        cloud: &FeasibilityEstimate,
        edge: &FeasibilityEstimate,
    ) -> Self {
        TradeoffInputs {
            task_type: task.app,
            accuracy_sensitive: profile.accuracy_sensitive,
            edge_energy: edge.energy_cost,
            cloud_energy: cloud.energy_cost,
            edge_accuracy: profile.edge_accuracy,
            cloud_accuracy: profile.cloud_accuracy,
            edge_latency_ms: edge.expected_latency_ms,
            cloud_latency_ms: cloud.expected_latency_ms,
        }
    }
}

/// Linear score weights of the energy-accuracy handler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandlerWeights {
    pub w0: f64,
    pub w_energy: f64,
    pub w_accuracy: f64,
    pub w_sensitive: f64,
}

impl Default for HandlerWeights {
    fn default() -> Self {
        HandlerWeights {
            w0: 0.0,
            w_energy: 1.0,
            w_accuracy: 1.0,
            w_sensitive: 0.5,
        }
    }
}

/// Feature normalisation shared by scoring and fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    /// Accuracy delta that maps to one unit of the accuracy feature.
    pub alpha_scale: f64,
    /// Lower bound of the energy normaliser, in joules.
    pub energy_floor_j: f64,
}

impl Default for FeatureScale {
    fn default() -> Self {
        FeatureScale {
            alpha_scale: 0.1,
            energy_floor_j: 1e-3,
        }
    }
}

impl FeatureScale {
    /// `[1, energy delta, accuracy delta, sensitivity]`. The energy delta is
    /// positive when the edge is more expensive.
    pub fn features(&self, inputs: &TradeoffInputs) -> [f64; 4] {
        let edge = inputs.edge_energy.joules();
        let cloud = inputs.cloud_energy.joules();
        let norm = edge.max(cloud).max(self.energy_floor_j);
        [
            1.0,
            (edge - cloud) / norm,
            (inputs.cloud_accuracy - inputs.edge_accuracy) / self.alpha_scale,
            if inputs.accuracy_sensitive { 1.0 } else { 0.0 },
        ]
    }
}

/// A configured handler: which policy, plus the regression parameters used
/// by the energy-accuracy policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffHandler {
    pub kind: HandlerKind,
    pub weights: HandlerWeights,
    pub scale: FeatureScale,
}

impl TradeoffHandler {
    pub fn new(kind: HandlerKind) -> Self {
        TradeoffHandler {
            kind,
            weights: HandlerWeights::default(),
            scale: FeatureScale::default(),
        }
    }

    pub fn verdict(&self, inputs: &TradeoffInputs) -> Placement {
        match self.kind {
            HandlerKind::EnergyAccuracy => {
                handler_energy_accuracy(inputs, &self.weights, &self.scale)
            }
            HandlerKind::LatencyBased => handler_latency_based(inputs),
            HandlerKind::EnergyBased => handler_energy_based(inputs),
            HandlerKind::AccuracyBased => handler_accuracy_based(inputs),
        }
    }
}

/// Cloud whenever it costs the device no more energy than the edge;
/// otherwise the handler decides.
pub fn decide(inputs: &TradeoffInputs, handler: &TradeoffHandler) -> Placement {
    if inputs.cloud_energy <= inputs.edge_energy {
        Placement::Cloud
    } else {
        handler.verdict(inputs)
    }
}

pub fn energy_accuracy_score(
    inputs: &TradeoffInputs,
    weights: &HandlerWeights,
    scale: &FeatureScale,
) -> f64 {
    let [bias, energy, accuracy, sensitive] = scale.features(inputs);
    weights.w0 * bias
        + weights.w_energy * energy
        + weights.w_accuracy * accuracy
        + weights.w_sensitive * sensitive
}

/// Cloud iff the regression score is strictly positive.
pub fn handler_energy_accuracy(
    inputs: &TradeoffInputs,
    weights: &HandlerWeights,
    scale: &FeatureScale,
) -> Placement {
    if energy_accuracy_score(inputs, weights, scale) > 0.0 {
        Placement::Cloud
    } else {
        Placement::Edge
    }
}

pub fn handler_latency_based(inputs: &TradeoffInputs) -> Placement {
    if inputs.cloud_latency_ms < inputs.edge_latency_ms {
        Placement::Cloud
    } else {
        Placement::Edge
    }
}

/// Only reached with `cloud_energy > edge_energy` in-system, so it always
/// answers Edge there.
pub fn handler_energy_based(inputs: &TradeoffInputs) -> Placement {
    if inputs.cloud_energy < inputs.edge_energy {
        Placement::Cloud
    } else {
        Placement::Edge
    }
}

pub fn handler_accuracy_based(inputs: &TradeoffInputs) -> Placement {
    if inputs.cloud_accuracy > inputs.edge_accuracy {
        Placement::Cloud
    } else {
        Placement::Edge
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least 4 samples, got {0}")]
    TooFewSamples(usize),
    #[error("degenerate training set")]
    Degenerate,
}

/// Ordinary least squares on `(1, energy delta, accuracy delta, sensitivity)`
/// with labels Cloud = +1, Edge = -1.
///
/// Feature columns that are zero for every sample carry no information;
/// their weight is fixed at zero and they are left out of the solve. The
/// remaining design must have full column rank.
pub fn fit_weights(
    samples: &[(TradeoffInputs, Placement)],
    scale: &FeatureScale,
) -> Result<HandlerWeights, FitError> {
    if samples.len() < 4 {
        return Err(FitError::TooFewSamples(samples.len()));
    }
    let rows: Vec<[f64; 4]> = samples.iter().map(|(x, _)| scale.features(x)).collect();
    let active: Vec<usize> = (0..4)
        .filter(|&j| rows.iter().any(|r| r[j] != 0.0))
        .collect();

    let design = DMatrix::from_fn(rows.len(), active.len(), |i, j| rows[i][active[j]]);
    let labels = DVector::from_iterator(
        samples.len(),
        samples.iter().map(|(_, y)| match y {
            Placement::Cloud => 1.0,
            Placement::Edge => -1.0,
        }),
    );

    let svd = design.svd(true, true);
    let largest = svd.singular_values.max();
    let tol = largest * 1e-10 * rows.len().max(active.len()) as f64;
    if svd.rank(tol) < active.len() {
        return Err(FitError::Degenerate);
    }
    let solution = svd.solve(&labels, tol).map_err(|_| FitError::Degenerate)?;

    let mut w = [0.0; 4];
    for (k, &j) in active.iter().enumerate() {
        w[j] = solution[k];
    }
    Ok(HandlerWeights {
        w0: w[0],
        w_energy: w[1],
        w_accuracy: w[2],
        w_sensitive: w[3],
    })
}
