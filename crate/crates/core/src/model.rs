//! Domain types shared by every stage of the allocator and the simulator.
//!
//! Units are fixed throughout: time in integer milliseconds, energy in
//! joules stored at micro-joule resolution, memory in megabytes, payloads in
//! kilobytes.

use std::collections::BTreeMap;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub, SubAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Simulation time in milliseconds.
pub type Millis = u64;

/// Energy with a fixed resolution of one micro-joule.
///
/// Sums and differences are exact, so battery bookkeeping can be checked
/// for equality rather than within a tolerance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Energy(i64);

impl Energy {
    pub const ZERO: Energy = Energy(0);

    pub const fn from_micro_joules(uj: i64) -> Self {
        Energy(uj)
    }

    /// Rounds to the nearest micro-joule.
    pub fn from_joules(j: f64) -> Self {
        Energy((j * 1e6).round() as i64)
    }

    pub const fn micro_joules(self) -> i64 {
        self.0
    }

    pub fn joules(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    /// Exact fixed-point rendering with six decimals.
    pub fn to_fixed_string(self) -> String {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        format!("{sign}{}.{:06}", abs / 1_000_000, abs % 1_000_000)
    }
}

impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} J", self.to_fixed_string())
    }
}

impl Add for Energy {
    type Output = Energy;
    fn add(self, rhs: Energy) -> Energy {
        Energy(self.0 + rhs.0)
    }
}

impl Sub for Energy {
    type Output = Energy;
    fn sub(self, rhs: Energy) -> Energy {
        Energy(self.0 - rhs.0)
    }
}

impl AddAssign for Energy {
    fn add_assign(&mut self, rhs: Energy) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Energy {
    fn sub_assign(&mut self, rhs: Energy) {
        self.0 -= rhs.0;
    }
}

impl Sum for Energy {
    fn sum<I: Iterator<Item = Energy>>(iter: I) -> Energy {
        iter.fold(Energy::ZERO, Add::add)
    }
}

impl Serialize for Energy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.joules())
    }
}

impl<'de> Deserialize<'de> for Energy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        f64::deserialize(d).map(Energy::from_joules)
    }
}

/// The four built-in inference applications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskType {
    FaceRecognition,
    TextDetection,
    TextRecognition,
    ImageDetection,
}

impl TaskType {
    pub const ALL: [TaskType; 4] = [
        TaskType::FaceRecognition,
        TaskType::TextDetection,
        TaskType::TextRecognition,
        TaskType::ImageDetection,
    ];

    /// Name used in trace files.
    pub fn name(self) -> &'static str {
        match self {
            TaskType::FaceRecognition => "FaceRecognition",
            TaskType::TextDetection => "TextDetection",
            TaskType::TextRecognition => "TextRecognition",
            TaskType::ImageDetection => "ImageDetection",
        }
    }

    /// Name used in config keys (`profile.<key>.<field>`).
    pub fn config_key(self) -> &'static str {
        match self {
            TaskType::FaceRecognition => "face_recognition",
            TaskType::TextDetection => "text_detection",
            TaskType::TextRecognition => "text_recognition",
            TaskType::ImageDetection => "image_detection",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown application `{0}`")]
pub struct UnknownApp(pub String);

impl FromStr for TaskType {
    type Err = UnknownApp;

    /// Accepts both the trace spelling and the config-key spelling.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskType::ALL
            .into_iter()
            .find(|t| t.name() == s || t.config_key() == s)
            .ok_or_else(|| UnknownApp(s.to_string()))
    }
}

impl Serialize for TaskType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for TaskType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One inference request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: u64,
    pub app: TaskType,
    #[serde(rename = "arrival_ms")]
    pub arrival: Millis,
    /// Relative to `arrival`.
    #[serde(rename = "deadline_ms")]
    pub deadline: Millis,
    pub input_kb: u32,
}

impl Task {
    pub fn absolute_deadline(&self) -> Millis {
        self.arrival + self.deadline
    }
}

/// Per-application cost and quality estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppProfile {
    pub app: TaskType,
    pub edge_exec_ms: Millis,
    pub cloud_exec_ms: Millis,
    /// Cold-start penalty paid when the model is not resident.
    pub model_load_ms: Millis,
    pub model_size_mb: f64,
    pub edge_accuracy: f64,
    pub cloud_accuracy: f64,
    pub edge_energy_j: Energy,
    pub upload_energy_j_per_kb: f64,
    pub receive_energy_j: Energy,
    pub accuracy_sensitive: bool,
    /// Admits `edge_accuracy > cloud_accuracy`.
    #[serde(default)]
    pub allow_accuracy_inversion: bool,
}

impl AppProfile {
    /// Edge-side energy of inference on the device.
    pub fn edge_energy(&self) -> Energy {
        self.edge_energy_j
    }

    /// Radio energy to ship the task input to the cloud; linear in payload.
    pub fn upload_energy(&self, input_kb: u32) -> Energy {
        Energy::from_joules(self.upload_energy_j_per_kb * f64::from(input_kb))
    }

    /// Radio energy to receive the inference result.
    pub fn receive_energy(&self) -> Energy {
        self.receive_energy_j
    }

    /// Total edge-side cost of running the task in the cloud (upload + receive).
    pub fn cloud_energy(&self, input_kb: u32) -> Energy {
        self.upload_energy(input_kb) + self.receive_energy()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProfileViolation {
    NegativeValue(&'static str),
    AccuracyOutOfRange(&'static str),
    EdgeExceedsCloudAccuracy,
}

impl fmt::Display for ProfileViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileViolation::NegativeValue(field) => write!(f, "negative value in `{field}`"),
            ProfileViolation::AccuracyOutOfRange(field) => {
                write!(f, "accuracy out of [0,1] in `{field}`")
            }
            ProfileViolation::EdgeExceedsCloudAccuracy => {
                f.write_str("edge exceeds cloud accuracy")
            }
        }
    }
}

/// Collects every violated profile invariant; an empty list means valid.
pub fn validate_profile(profile: &AppProfile) -> Vec<ProfileViolation> {
    let mut out = Vec::new();
    let non_negative = [
        ("model_size_mb", profile.model_size_mb),
        ("edge_energy_j", profile.edge_energy_j.joules()),
        ("upload_energy_j_per_kb", profile.upload_energy_j_per_kb),
        ("receive_energy_j", profile.receive_energy_j.joules()),
    ];
    for (field, v) in non_negative {
        if v.is_nan() || v < 0.0 {
            out.push(ProfileViolation::NegativeValue(field));
        }
    }
    for (field, v) in [
        ("edge_accuracy", profile.edge_accuracy),
        ("cloud_accuracy", profile.cloud_accuracy),
    ] {
        if !(0.0..=1.0).contains(&v) {
            out.push(ProfileViolation::AccuracyOutOfRange(field));
        }
    }
    if profile.edge_accuracy > profile.cloud_accuracy && !profile.allow_accuracy_inversion {
        out.push(ProfileViolation::EdgeExceedsCloudAccuracy);
    }
    out
}

/// Profiles keyed by application.
pub type ProfileTable = BTreeMap<TaskType, AppProfile>;

/// Link model between the device and the cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub uplink_kbps: f64,
    pub downlink_kbps: f64,
    pub rtt_ms: Millis,
    pub result_size_kb: f64,
}

impl NetworkModel {
    pub fn is_valid(&self) -> bool {
        self.uplink_kbps > 0.0 && self.downlink_kbps > 0.0 && self.result_size_kb > 0.0
    }
}

/// A model held in edge memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidentModel {
    pub app: TaskType,
    pub size_mb: f64,
    /// Edge tasks admitted for this model and not yet finished. A model with
    /// in-flight tasks cannot be evicted.
    pub in_flight: u32,
}

impl ResidentModel {
    pub fn is_pinned(&self) -> bool {
        self.in_flight > 0
    }
}

/// Mutable state of the single edge device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeState {
    /// Charge left in the battery.
    pub battery: Energy,
    /// Energy promised to admitted edge tasks that have not finished yet.
    pub reserved: Energy,
    pub memory_capacity_mb: f64,
    /// LRU order, most recently used last.
    pub resident: Vec<ResidentModel>,
    /// Instant the executor frees up.
    pub busy_until: Millis,
}

impl EdgeState {
    pub fn new(battery: Energy, memory_capacity_mb: f64) -> Self {
        EdgeState {
            battery,
            reserved: Energy::ZERO,
            memory_capacity_mb,
            resident: Vec::new(),
            busy_until: 0,
        }
    }

    /// Energy the admission checks may spend (`E`): battery minus reservations.
    pub fn available_energy(&self) -> Energy {
        self.battery - self.reserved
    }

    pub fn is_resident(&self, app: TaskType) -> bool {
        self.resident.iter().any(|m| m.app == app)
    }

    pub fn resident_memory_mb(&self) -> f64 {
        self.resident.iter().map(|m| m.size_mb).sum()
    }

    pub fn pinned_memory_mb(&self) -> f64 {
        self.resident
            .iter()
            .filter(|m| m.is_pinned())
            .map(|m| m.size_mb)
            .sum()
    }

    /// Free memory if every unpinned model were evicted.
    pub fn reclaimable_free_mb(&self) -> f64 {
        self.memory_capacity_mb - self.pinned_memory_mb()
    }

    pub fn memory_invariant_holds(&self) -> bool {
        self.resident_memory_mb() <= self.memory_capacity_mb
    }
}

/// Why a feasibility check failed, or `Ok`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeasibilityReason {
    Ok,
    DeadlineMiss,
    InsufficientEnergy,
    InsufficientMemory,
}

/// Result of one feasibility checker. Costs are always populated, even when
/// the verdict is negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityEstimate {
    pub feasible: bool,
    /// `l_i` for the cloud, `c_i` for the edge; relative to arrival.
    pub expected_latency_ms: Millis,
    pub energy_cost: Energy,
    /// Zero on the cloud path.
    pub memory_needed_mb: f64,
    pub reason: FeasibilityReason,
}

impl FeasibilityEstimate {
    pub fn new(
        expected_latency_ms: Millis,
        energy_cost: Energy,
        memory_needed_mb: f64,
        reason: FeasibilityReason,
    ) -> Self {
        FeasibilityEstimate {
            feasible: reason == FeasibilityReason::Ok,
            expected_latency_ms,
            energy_cost,
            memory_needed_mb,
            reason,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    Edge,
    Cloud,
    Drop,
}

/// Allocation outcome for one task, with the checks that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub target: Target,
    pub via_rescue: bool,
    pub cloud_check: FeasibilityEstimate,
    pub edge_check: FeasibilityEstimate,
}
