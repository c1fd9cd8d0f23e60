//! Flat `key = value` configuration with dotted keys.
//!
//! ```text
//! # comment
//! edge.battery_j = 2500
//! profile.face_recognition.edge_exec_ms = 70
//! rescue.enabled = on
//! ```
//!
//! Every key is known up front; an unrecognised key is an error that names
//! it. Overrides (`key=value`) are applied to the raw map before typing, so
//! they obey exactly the same rules as the file.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::allocator::{FeatureScale, HandlerKind, HandlerWeights, TradeoffHandler};
use crate::engine::{Policy, Scenario};
use crate::feasibility::CheckerKind;
use crate::model::{
    validate_profile, AppProfile, EdgeState, Energy, NetworkModel, ProfileTable, TaskType,
};
use crate::workload::{ArrivalProcess, WorkloadSpec};

/// The example configuration shipped with the repository.
pub const EXAMPLE_CONFIG: &str = include_str!("../../../configs/example.cfg");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("config key `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            message: message.into(),
        }
    }
}

const PROFILE_FIELDS: [&str; 11] = [
    "edge_exec_ms",
    "cloud_exec_ms",
    "model_load_ms",
    "model_size_mb",
    "edge_accuracy",
    "cloud_accuracy",
    "edge_energy_j",
    "upload_energy_j_per_kb",
    "receive_energy_j",
    "accuracy_sensitive",
    "allow_accuracy_inversion",
];

const TOP_LEVEL_KEYS: [&str; 26] = [
    "edge.battery_j",
    "edge.memory_mb",
    "net.uplink_kbps",
    "net.downlink_kbps",
    "net.rtt_ms",
    "net.result_kb",
    "checker.kind",
    "handler.kind",
    "handler.w0",
    "handler.w_energy",
    "handler.w_accuracy",
    "handler.w_sensitive",
    "handler.alpha_scale",
    "handler.energy_floor_j",
    "rescue.enabled",
    "workload.n_tasks",
    "workload.horizon_ms",
    "workload.deadline_min_ms",
    "workload.deadline_max_ms",
    "workload.input_min_kb",
    "workload.input_max_kb",
    "workload.arrivals",
    "experiment.load_grid",
    "experiment.seeds",
    "experiment.threads",
    "experiment.svg",
];

fn is_known_key(key: &str) -> bool {
    if TOP_LEVEL_KEYS.contains(&key) {
        return true;
    }
    if let Some(app) = key.strip_prefix("workload.mix.") {
        return app.parse::<TaskType>().is_ok();
    }
    if let Some(rest) = key.strip_prefix("profile.") {
        if let Some((app, field)) = rest.split_once('.') {
            return app.parse::<TaskType>().is_ok() && PROFILE_FIELDS.contains(&field);
        }
    }
    false
}

/// Raw dotted-key map, before typing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::new(line, format!("line {}: expected `key = value`", i + 1))
            })?;
            raw.set(key.trim(), value.trim())?;
        }
        Ok(raw)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = normalize_key(key);
        if !is_known_key(&key) {
            return Err(ConfigError::new(key, "unknown key"));
        }
        self.entries.insert(key, value.to_string());
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::new(spec, "override must look like key=value"))?;
        self.set(key.trim(), value.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let v = self
            .get(key)
            .ok_or_else(|| ConfigError::new(key, "missing required key"))?;
        parse_value(key, v)
    }

    fn optional<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.get(key) {
            Some(v) => parse_value(key, v),
            None => Ok(default),
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => parse_bool(v).ok_or_else(|| {
                ConfigError::new(key, format!("expected on/off/true/false, got `{v}`"))
            }),
        }
    }
}

/// Accepts either app spelling in keys and stores the config-key form.
fn normalize_key(key: &str) -> String {
    let parts: Vec<&str> = key.split('.').collect();
    let app_pos = match parts.as_slice() {
        ["profile", _, _] => Some(1),
        ["workload", "mix", _] => Some(2),
        _ => None,
    };
    match app_pos.and_then(|p| parts[p].parse::<TaskType>().ok().map(|a| (p, a))) {
        Some((p, app)) => {
            let mut owned: Vec<String> = parts.iter().map(|s| s.to_string()).collect();
            owned[p] = app.config_key().to_string();
            owned.join(".")
        }
        None => key.to_string(),
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError::new(key, format!("cannot parse `{v}`")))
}

pub fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Some(true),
        "off" | "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

/// Parses `1,2,5..9` (exclusive) and `5..=9` (inclusive) seed lists.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || format!("bad seed list element `{part}`");
        if let Some((a, b)) = part.split_once("..=") {
            let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
            out.extend(a..=b);
        } else if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err("seed list is empty".into());
    }
    Ok(out)
}

fn parse_usize_list(key: &str, text: &str) -> Result<Vec<usize>, ConfigError> {
    text.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| parse_value(key, p))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub load_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Upper bound on concurrently running replications; `None` means one
    /// per core.
    pub threads: Option<usize>,
    pub svg: bool,
}

/// Fully typed configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub battery: Energy,
    pub memory_capacity_mb: f64,
    pub net: NetworkModel,
    pub profiles: ProfileTable,
    pub policy: Policy,
    pub workload: WorkloadSpec,
    pub experiment: ExperimentSettings,
}

impl SimConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let battery_j: f64 = raw.required("edge.battery_j")?;
        if battery_j.is_nan() || battery_j < 0.0 {
            return Err(ConfigError::new("edge.battery_j", "must be non-negative"));
        }
        let memory_capacity_mb: f64 = raw.required("edge.memory_mb")?;
        if memory_capacity_mb.is_nan() || memory_capacity_mb < 0.0 {
            return Err(ConfigError::new("edge.memory_mb", "must be non-negative"));
        }

        let net = NetworkModel {
            uplink_kbps: positive(raw, "net.uplink_kbps")?,
            downlink_kbps: positive(raw, "net.downlink_kbps")?,
            rtt_ms: raw.required("net.rtt_ms")?,
            result_size_kb: positive(raw, "net.result_kb")?,
        };

        let mut profiles = ProfileTable::new();
        for app in TaskType::ALL {
            let profile = read_profile(raw, app)?;
            let violations = validate_profile(&profile);
            if let Some(v) = violations.first() {
                return Err(ConfigError::new(
                    format!("profile.{}", app.config_key()),
                    v.to_string(),
                ));
            }
            profiles.insert(app, profile);
        }

        let checker = raw
            .get("checker.kind")
            .map(|v| {
                v.parse::<CheckerKind>()
                    .map_err(|e| ConfigError::new("checker.kind", e))
            })
            .transpose()?
            .unwrap_or(CheckerKind::MultiFactor);
        let kind = raw
            .get("handler.kind")
            .map(|v| {
                v.parse::<HandlerKind>()
                    .map_err(|e| ConfigError::new("handler.kind", e))
            })
            .transpose()?
            .unwrap_or(HandlerKind::EnergyAccuracy);
        let dw = HandlerWeights::default();
        let weights = HandlerWeights {
            w0: finite(raw, "handler.w0", dw.w0)?,
            w_energy: finite(raw, "handler.w_energy", dw.w_energy)?,
            w_accuracy: finite(raw, "handler.w_accuracy", dw.w_accuracy)?,
            w_sensitive: finite(raw, "handler.w_sensitive", dw.w_sensitive)?,
        };
        let ds = FeatureScale::default();
        let scale = FeatureScale {
            alpha_scale: finite(raw, "handler.alpha_scale", ds.alpha_scale)?,
            energy_floor_j: finite(raw, "handler.energy_floor_j", ds.energy_floor_j)?,
        };
        if scale.alpha_scale <= 0.0 {
            return Err(ConfigError::new("handler.alpha_scale", "must be positive"));
        }
        if scale.energy_floor_j <= 0.0 {
            return Err(ConfigError::new(
                "handler.energy_floor_j",
                "must be positive",
            ));
        }
        let policy = Policy {
            checker,
            handler: TradeoffHandler {
                kind,
                weights,
                scale,
            },
            rescue_enabled: raw.flag("rescue.enabled", true)?,
        };

        let mut app_mix = [1.0; 4];
        for app in TaskType::ALL {
            let key = format!("workload.mix.{}", app.config_key());
            app_mix[app.index()] = raw.optional(&key, 1.0)?;
        }
        let arrivals = match raw.get("workload.arrivals").unwrap_or("uniform") {
            "uniform" => ArrivalProcess::Uniform,
            "poisson" => ArrivalProcess::Poisson,
            other => {
                return Err(ConfigError::new(
                    "workload.arrivals",
                    format!("expected uniform or poisson, got `{other}`"),
                ))
            }
        };
        let workload = WorkloadSpec {
            n_tasks: raw.required("workload.n_tasks")?,
            horizon_ms: raw.required("workload.horizon_ms")?,
            app_mix,
            deadline_range_ms: (
                raw.required("workload.deadline_min_ms")?,
                raw.required("workload.deadline_max_ms")?,
            ),
            input_kb_range: (
                raw.required("workload.input_min_kb")?,
                raw.required("workload.input_max_kb")?,
            ),
            arrivals,
        };
        workload
            .validate()
            .map_err(|e| ConfigError::new("workload", e.to_string()))?;

        let load_grid = match raw.get("experiment.load_grid") {
            Some(v) => parse_usize_list("experiment.load_grid", v)?,
            None => vec![workload.n_tasks],
        };
        if load_grid.is_empty() {
            return Err(ConfigError::new("experiment.load_grid", "empty grid"));
        }
        let seeds = parse_seed_list(raw.get("experiment.seeds").unwrap_or("1..=10"))
            .map_err(|e| ConfigError::new("experiment.seeds", e))?;
        let threads = raw
            .get("experiment.threads")
            .map(|v| parse_value::<usize>("experiment.threads", v))
            .transpose()?
            .filter(|&t| t > 0);
        let experiment = ExperimentSettings {
            load_grid,
            seeds,
            threads,
            svg: raw.flag("experiment.svg", true)?,
        };

        Ok(SimConfig {
            battery: Energy::from_joules(battery_j),
            memory_capacity_mb,
            net,
            profiles,
            policy,
            workload,
            experiment,
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    pub fn example() -> Self {
        Self::parse(EXAMPLE_CONFIG).expect("shipped example config is valid")
    }

    pub fn edge_init(&self) -> EdgeState {
        EdgeState::new(self.battery, self.memory_capacity_mb)
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            profiles: self.profiles.clone(),
            net: self.net,
            edge_init: self.edge_init(),
            policy: self.policy,
        }
    }
}

fn positive(raw: &RawConfig, key: &str) -> Result<f64, ConfigError> {
    let v: f64 = raw.required(key)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(key, "must be positive"))
    }
}

fn finite(raw: &RawConfig, key: &str, default: f64) -> Result<f64, ConfigError> {
    let v: f64 = raw.optional(key, default)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(key, "must be finite"))
    }
}

fn read_profile(raw: &RawConfig, app: TaskType) -> Result<AppProfile, ConfigError> {
    let key = |field: &str| format!("profile.{}.{field}", app.config_key());
    let joules = |field: &str| -> Result<Energy, ConfigError> {
        raw.required::<f64>(&key(field)).map(Energy::from_joules)
    };
    Ok(AppProfile {
        app,
        edge_exec_ms: raw.required(&key("edge_exec_ms"))?,
        cloud_exec_ms: raw.required(&key("cloud_exec_ms"))?,
        model_load_ms: raw.required(&key("model_load_ms"))?,
        model_size_mb: raw.required(&key("model_size_mb"))?,
        edge_accuracy: raw.required(&key("edge_accuracy"))?,
        cloud_accuracy: raw.required(&key("cloud_accuracy"))?,
        edge_energy_j: joules("edge_energy_j")?,
        upload_energy_j_per_kb: raw.required(&key("upload_energy_j_per_kb"))?,
        receive_energy_j: joules("receive_energy_j")?,
        accuracy_sensitive: raw.flag(&key("accuracy_sensitive"), false)?,
        allow_accuracy_inversion: raw.flag(&key("allow_accuracy_inversion"), false)?,
    })
}

/// Reads a config file and applies overrides in order.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<SimConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(path.display().to_string(), format!("cannot read: {e}")))?;
    let mut raw = RawConfig::parse(&text)?;
    for o in overrides {
        raw.apply_override(o)?;
    }
    SimConfig::from_raw(&raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_config_parses() {
        let cfg = SimConfig::example();
        assert_eq!(cfg.profiles.len(), 4);
        assert_eq!(cfg.policy.checker, CheckerKind::MultiFactor);
        assert!(cfg.policy.rescue_enabled);
        assert!(cfg.experiment.load_grid.len() >= 5);
        assert!(cfg.experiment.seeds.len() >= 10);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RawConfig::parse("edge.batery_j = 4").unwrap_err();
        assert_eq!(err.key, "edge.batery_j");
        let err = RawConfig::parse("profile.lidar.edge_exec_ms = 4").unwrap_err();
        assert_eq!(err.key, "profile.lidar.edge_exec_ms");
    }

    #[test]
    fn missing_key_is_named() {
        let mut raw = RawConfig::parse(EXAMPLE_CONFIG).unwrap();
        raw.entries.remove("net.rtt_ms");
        assert_eq!(SimConfig::from_raw(&raw).unwrap_err().key, "net.rtt_ms");
    }

    #[test]
    fn bad_value_is_named() {
        let mut raw = RawConfig::parse(EXAMPLE_CONFIG).unwrap();
        raw.apply_override("handler.kind=coin_flip").unwrap();
        assert_eq!(SimConfig::from_raw(&raw).unwrap_err().key, "handler.kind");
    }

    #[test]
    fn overrides_apply() {
        let mut raw = RawConfig::parse(EXAMPLE_CONFIG).unwrap();
        raw.apply_override("rescue.enabled=off").unwrap();
        raw.apply_override("checker.kind = latency_only").unwrap();
        raw.apply_override("profile.FaceRecognition.edge_exec_ms=5")
            .unwrap();
        let cfg = SimConfig::from_raw(&raw).unwrap();
        assert!(!cfg.policy.rescue_enabled);
        assert_eq!(cfg.policy.checker, CheckerKind::LatencyOnly);
        assert_eq!(cfg.profiles[&TaskType::FaceRecognition].edge_exec_ms, 5);
        assert!(raw.apply_override("no_equals").is_err());
    }

    #[test]
    fn profile_violation_reported_with_app_key() {
        let mut raw = RawConfig::parse(EXAMPLE_CONFIG).unwrap();
        raw.apply_override("profile.text_detection.edge_accuracy=0.999")
            .unwrap();
        let err = SimConfig::from_raw(&raw).unwrap_err();
        assert_eq!(err.key, "profile.text_detection");
        assert!(err.message.contains("edge exceeds cloud accuracy"));
        raw.apply_override("profile.text_detection.allow_accuracy_inversion=true")
            .unwrap();
        assert!(SimConfig::from_raw(&raw).is_ok());
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seed_list("1,2,3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seed_list("1..4").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seed_list("7, 1..=3").unwrap(), vec![7, 1, 2, 3]);
        assert!(parse_seed_list("").is_err());
        assert!(parse_seed_list("a").is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let raw = RawConfig::parse("# hi\n\nnet.rtt_ms = 5 # trailing\n").unwrap();
        assert_eq!(raw.get("net.rtt_ms"), Some("5"));
        assert!(RawConfig::parse("net.rtt_ms 5").is_err());
    }
}
