//! Aggregation of task outcomes into run reports, cross-run comparison, and
//! the CSV formats emitted by the experiment harness.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::engine::TaskOutcome;
use crate::model::{Energy, Target, TaskType};

/// Counts and means over a set of outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub n_tasks: usize,
    pub completed_on_time: usize,
    pub dropped: usize,
    /// Dispatched but not finished by the deadline, including dispatches that
    /// failed for lack of energy or memory.
    pub missed: usize,
    /// `completed_on_time / max(n_tasks, 1)`; an empty run counts as 1.0.
    pub completion_rate: f64,
    pub total_energy: Energy,
    /// Over on-time completions only; `None` when there are none.
    pub mean_accuracy: Option<f64>,
    /// Over all completed tasks; `None` when there are none.
    pub mean_latency_ms: Option<f64>,
}

impl Tally {
    fn from_outcomes<'a>(outcomes: impl Iterator<Item = &'a TaskOutcome>) -> Tally {
        let mut n = 0;
        let mut on_time = 0;
        let mut dropped = 0;
        let mut energy = Energy::ZERO;
        let mut accuracies = Vec::new();
        let mut latency_sum: u128 = 0;
        let mut latency_n: usize = 0;
        for o in outcomes {
            n += 1;
            energy += o.energy_spent;
            if o.decision.target == Target::Drop {
                dropped += 1;
            }
            if o.on_time {
                on_time += 1;
                if let Some(a) = o.accuracy {
                    accuracies.push(a);
                }
            }
            if let Some(l) = o.latency_ms {
                latency_sum += u128::from(l);
                latency_n += 1;
            }
        }
        let completion_rate = if n == 0 {
            1.0
        } else {
            on_time as f64 / n as f64
        };
        Tally {
            n_tasks: n,
            completed_on_time: on_time,
            dropped,
            missed: n - on_time - dropped,
            completion_rate,
            total_energy: energy,
            mean_accuracy: order_free_mean(accuracies),
            mean_latency_ms: (latency_n > 0).then(|| latency_sum as f64 / latency_n as f64),
        }
    }
}

/// Mean that does not depend on input order: values are sorted first.
fn order_free_mean(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

/// Aggregated metrics of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub overall: Tally,
    pub per_app: BTreeMap<TaskType, Tally>,
}

impl RunReport {
    pub fn completion_rate(&self) -> f64 {
        self.overall.completion_rate
    }

    pub fn total_energy(&self) -> Energy {
        self.overall.total_energy
    }
}

pub fn aggregate(outcomes: &[TaskOutcome]) -> RunReport {
    let overall = Tally::from_outcomes(outcomes.iter());
    let per_app = TaskType::ALL
        .into_iter()
        .filter(|app| outcomes.iter().any(|o| o.app == *app))
        .map(|app| {
            (
                app,
                Tally::from_outcomes(outcomes.iter().filter(|o| o.app == app)),
            )
        })
        .collect();
    RunReport { overall, per_app }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl MetricStats {
    fn over(values: &[f64]) -> Option<MetricStats> {
        if values.is_empty() {
            return None;
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(MetricStats {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min,
            max,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub a: Option<MetricStats>,
    pub b: Option<MetricStats>,
    /// `mean(a) - mean(b)` when both sides have values.
    pub difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompareError {
    #[error("no replications to compare")]
    Empty,
    #[error("replication counts differ: {0} vs {1}")]
    MismatchedCounts(usize, usize),
}

pub const COMPARED_METRICS: [&str; 4] = [
    "completion_rate",
    "total_energy_j",
    "mean_accuracy",
    "mean_latency_ms",
];

fn metric_values(reports: &[RunReport], metric: &str) -> Vec<f64> {
    reports
        .iter()
        .filter_map(|r| match metric {
            "completion_rate" => Some(r.overall.completion_rate),
            "total_energy_j" => Some(r.overall.total_energy.joules()),
            "mean_accuracy" => r.overall.mean_accuracy,
            "mean_latency_ms" => r.overall.mean_latency_ms,
            _ => None,
        })
        .collect()
}

/// Per-metric means and ranges of two equally sized replication sets, in
/// the fixed order of [`COMPARED_METRICS`].
pub fn compare(a: &[RunReport], b: &[RunReport]) -> Result<Vec<ComparisonRow>, CompareError> {
    if a.is_empty() && b.is_empty() {
        return Err(CompareError::Empty);
    }
    if a.len() != b.len() {
        return Err(CompareError::MismatchedCounts(a.len(), b.len()));
    }
    Ok(COMPARED_METRICS
        .iter()
        .map(|&metric| {
            let sa = MetricStats::over(&metric_values(a, metric));
            let sb = MetricStats::over(&metric_values(b, metric));
            let difference = match (sa, sb) {
                (Some(x), Some(y)) => Some(x.mean - y.mean),
                _ => None,
            };
            ComparisonRow {
                metric: metric.to_string(),
                a: sa,
                b: sb,
                difference,
            }
        })
        .collect())
}

/// One replication, one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub experiment: String,
    pub series: String,
    pub load: usize,
    pub seed: u64,
    pub n_tasks: usize,
    pub completed_on_time: usize,
    pub dropped: usize,
    pub missed: usize,
    pub completion_rate: f64,
    pub total_energy_j: f64,
    pub mean_accuracy: Option<f64>,
    pub mean_latency_ms: Option<f64>,
}

impl ReplicationRow {
    pub fn new(experiment: &str, series: &str, load: usize, seed: u64, report: &RunReport) -> Self {
        let t = &report.overall;
        ReplicationRow {
            experiment: experiment.to_string(),
            series: series.to_string(),
            load,
            seed,
            n_tasks: t.n_tasks,
            completed_on_time: t.completed_on_time,
            dropped: t.dropped,
            missed: t.missed,
            completion_rate: t.completion_rate,
            total_energy_j: t.total_energy.joules(),
            mean_accuracy: t.mean_accuracy,
            mean_latency_ms: t.mean_latency_ms,
        }
    }
}

/// Replication-averaged point of one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub series: String,
    pub load: usize,
    pub replications: usize,
    pub completion_mean: f64,
    pub completion_min: f64,
    pub completion_max: f64,
    pub energy_mean_j: f64,
    pub accuracy_mean: Option<f64>,
    pub latency_mean_ms: Option<f64>,
}

impl SummaryRow {
    pub fn new(experiment: &str, series: &str, load: usize, reports: &[RunReport]) -> Self {
        let rates = metric_values(reports, "completion_rate");
        let rate = MetricStats::over(&rates).unwrap_or(MetricStats {
            mean: f64::NAN,
            min: f64::NAN,
            max: f64::NAN,
        });
        let mean = |m: &str| MetricStats::over(&metric_values(reports, m)).map(|s| s.mean);
        SummaryRow {
            experiment: experiment.to_string(),
            series: series.to_string(),
            load,
            replications: reports.len(),
            completion_mean: rate.mean,
            completion_min: rate.min,
            completion_max: rate.max,
            energy_mean_j: mean("total_energy_j").unwrap_or(f64::NAN),
            accuracy_mean: mean("mean_accuracy"),
            latency_mean_ms: mean("mean_latency_ms"),
        }
    }
}

/// One metric of one two-series comparison at one load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCsvRow {
    pub experiment: String,
    pub load: usize,
    pub metric: String,
    pub series_a: String,
    pub series_b: String,
    pub mean_a: Option<f64>,
    pub min_a: Option<f64>,
    pub max_a: Option<f64>,
    pub mean_b: Option<f64>,
    pub min_b: Option<f64>,
    pub max_b: Option<f64>,
    pub difference: Option<f64>,
}

impl ComparisonCsvRow {
    pub fn new(experiment: &str, load: usize, series: (&str, &str), row: &ComparisonRow) -> Self {
        ComparisonCsvRow {
            experiment: experiment.to_string(),
            load,
            metric: row.metric.clone(),
            series_a: series.0.to_string(),
            series_b: series.1.to_string(),
            mean_a: row.a.map(|s| s.mean),
            min_a: row.a.map(|s| s.min),
            max_a: row.a.map(|s| s.max),
            mean_b: row.b.map(|s| s.mean),
            min_b: row.b.map(|s| s.min),
            max_b: row.b.map(|s| s.max),
            difference: row.difference,
        }
    }
}

pub fn write_csv<W: Write, R: Serialize>(writer: W, rows: &[R]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string<R: Serialize>(rows: &[R]) -> csv::Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn read_replication_csv<R: Read>(reader: R) -> csv::Result<Vec<ReplicationRow>> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

pub fn read_summary_csv<R: Read>(reader: R) -> csv::Result<Vec<SummaryRow>> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

pub fn read_comparison_csv<R: Read>(reader: R) -> csv::Result<Vec<ComparisonCsvRow>> {
    csv::Reader::from_reader(reader).deserialize().collect()
}
