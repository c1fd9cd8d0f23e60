//! Replicated runs and the three ablation sweeps: feasibility checker,
//! trade-off handler and rescue.
//!
//! Every replication is an independent single-threaded simulation; they run
//! on a bounded rayon pool and results are collected in submission order,
//! so outputs do not depend on the thread count.

use rayon::prelude::*;

use crate::allocator::HandlerKind;
use crate::config::SimConfig;
use crate::engine::{simulate_detailed, Policy, SimError, SimRun};
use crate::feasibility::CheckerKind;
use crate::metrics::{compare, CompareError, ComparisonRow, ReplicationRow, RunReport, SummaryRow};
use crate::model::Task;
use crate::workload::{generate_trace, WorkloadError, WorkloadSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error("seed list is empty")]
    NoSeeds,
    #[error("workload: {0}")]
    Workload(#[from] WorkloadError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("comparison: {0}")]
    Compare(#[from] CompareError),
    #[error("unknown experiment `{0}`; expected feasibility, tradeoff or rescue")]
    UnknownExperiment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Feasibility,
    Tradeoff,
    Rescue,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Feasibility => "feasibility",
            ExperimentKind::Tradeoff => "tradeoff",
            ExperimentKind::Rescue => "rescue",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "feasibility" => Ok(ExperimentKind::Feasibility),
            "tradeoff" => Ok(ExperimentKind::Tradeoff),
            "rescue" => Ok(ExperimentKind::Rescue),
            other => Err(ExperimentError::UnknownExperiment(other.to_string())),
        }
    }
}

/// Runs `f` over `items` on at most `threads` workers, preserving order.
fn run_bounded<T, R, F>(items: Vec<T>, threads: Option<usize>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Send + Sync,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    match builder.build() {
        Ok(pool) => pool.install(|| items.into_par_iter().map(&f).collect()),
        // No threads available: run inline.
        Err(_) => items.into_iter().map(f).collect(),
    }
}

fn trace_for(spec: &WorkloadSpec, load: usize, seed: u64) -> Result<Vec<Task>, WorkloadError> {
    let spec = WorkloadSpec {
        n_tasks: load,
        ..spec.clone()
    };
    generate_trace(&spec, seed)
}

fn replicate(
    cfg: &SimConfig,
    policy: Policy,
    load: usize,
    seed: u64,
) -> Result<SimRun, ExperimentError> {
    let trace = trace_for(&cfg.workload, load, seed)?;
    let mut scenario = cfg.scenario();
    scenario.policy = policy;
    Ok(simulate_detailed(&trace, &scenario)?)
}

/// One simulation per seed over the configured workload, in seed order.
pub fn run_replications(
    cfg: &SimConfig,
    seeds: &[u64],
    threads: Option<usize>,
) -> Result<Vec<RunReport>, ExperimentError> {
    if seeds.is_empty() {
        return Err(ExperimentError::NoSeeds);
    }
    run_bounded(seeds.to_vec(), threads, |seed| {
        replicate(cfg, cfg.policy, cfg.workload.n_tasks, seed).map(|r| r.report)
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone)]
pub struct Replication {
    pub seed: u64,
    pub run: SimRun,
}

/// All replications of one series at one load.
#[derive(Debug, Clone)]
pub struct SeriesPoint {
    pub series: String,
    pub load: usize,
    pub replications: Vec<Replication>,
}

impl SeriesPoint {
    pub fn reports(&self) -> Vec<RunReport> {
        self.replications
            .iter()
            .map(|r| r.run.report.clone())
            .collect()
    }

    pub fn mean_completion(&self) -> f64 {
        let n = self.replications.len().max(1) as f64;
        self.replications
            .iter()
            .map(|r| r.run.report.overall.completion_rate)
            .sum::<f64>()
            / n
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    /// Series names in emission order.
    pub series: Vec<String>,
    /// Ordered by load, then series.
    pub points: Vec<SeriesPoint>,
}

impl ExperimentOutput {
    pub fn point(&self, series: &str, load: usize) -> Option<&SeriesPoint> {
        self.points
            .iter()
            .find(|p| p.series == series && p.load == load)
    }

    pub fn loads(&self) -> Vec<usize> {
        let mut loads: Vec<usize> = self.points.iter().map(|p| p.load).collect();
        loads.dedup();
        loads
    }

    pub fn replication_rows(&self) -> Vec<ReplicationRow> {
        self.points
            .iter()
            .flat_map(|p| {
                p.replications.iter().map(move |r| {
                    ReplicationRow::new(self.kind.name(), &p.series, p.load, r.seed, &r.run.report)
                })
            })
            .collect()
    }

    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        self.points
            .iter()
            .map(|p| SummaryRow::new(self.kind.name(), &p.series, p.load, &p.reports()))
            .collect()
    }

    /// First series against second at every load (two-series experiments).
    pub fn comparisons(&self) -> Result<Vec<(usize, Vec<ComparisonRow>)>, ExperimentError> {
        if self.series.len() != 2 {
            return Ok(Vec::new());
        }
        self.loads()
            .into_iter()
            .map(|load| {
                let a = self
                    .point(&self.series[0], load)
                    .map(|p| p.reports())
                    .unwrap_or_default();
                let b = self
                    .point(&self.series[1], load)
                    .map(|p| p.reports())
                    .unwrap_or_default();
                Ok((load, compare(&a, &b)?))
            })
            .collect()
    }
}

/// Runs one sweep. Feasibility and rescue sweep `experiment.load_grid`; the
/// trade-off comparison uses `workload.n_tasks` for every handler.
pub fn run_experiment(
    kind: ExperimentKind,
    cfg: &SimConfig,
    threads: Option<usize>,
) -> Result<ExperimentOutput, ExperimentError> {
    let seeds = &cfg.experiment.seeds;
    if seeds.is_empty() {
        return Err(ExperimentError::NoSeeds);
    }
    let base = cfg.policy;
    let (series, loads): (Vec<(String, Policy)>, Vec<usize>) = match kind {
        ExperimentKind::Feasibility => (
            [CheckerKind::MultiFactor, CheckerKind::LatencyOnly]
                .into_iter()
                .map(|checker| (checker.name().to_string(), Policy { checker, ..base }))
                .collect(),
            cfg.experiment.load_grid.clone(),
        ),
        ExperimentKind::Rescue => (
            [("rescue_on", true), ("rescue_off", false)]
                .into_iter()
                .map(|(name, on)| {
                    (
                        name.to_string(),
                        Policy {
                            checker: CheckerKind::MultiFactor,
                            rescue_enabled: on,
                            ..base
                        },
                    )
                })
                .collect(),
            cfg.experiment.load_grid.clone(),
        ),
        ExperimentKind::Tradeoff => (
            HandlerKind::ALL
                .into_iter()
                .map(|k| {
                    let mut policy = base;
                    policy.handler.kind = k;
                    (k.name().to_string(), policy)
                })
                .collect(),
            vec![cfg.workload.n_tasks],
        ),
    };

    let mut jobs = Vec::new();
    for &load in &loads {
        for (si, (_, policy)) in series.iter().enumerate() {
            for &seed in seeds {
                jobs.push((load, si, *policy, seed));
            }
        }
    }
    let results = run_bounded(jobs, threads, |(load, si, policy, seed)| {
        replicate(cfg, policy, load, seed).map(|run| (load, si, Replication { seed, run }))
    });

    let mut points: Vec<SeriesPoint> = Vec::new();
    for result in results {
        let (load, si, rep) = result?;
        match points.last_mut() {
            Some(p) if p.load == load && p.series == series[si].0 => p.replications.push(rep),
            _ => points.push(SeriesPoint {
                series: series[si].0.clone(),
                load,
                replications: vec![rep],
            }),
        }
    }
    Ok(ExperimentOutput {
        kind,
        series: series.into_iter().map(|(n, _)| n).collect(),
        points,
    })
}
