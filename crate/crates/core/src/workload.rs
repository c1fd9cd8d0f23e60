//! Seeded trace generation and the JSON-lines trace format.
//!
//! Generation uses ChaCha8 seeded with `seed_from_u64`, so a given
//! `(WorkloadSpec, seed)` yields the same trace on every platform. Draw
//! order: all arrivals first (sorted afterwards), then per task in arrival
//! order the application, the deadline and the input size.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use crate::model::{Millis, Task, TaskType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArrivalProcess {
    /// Arrival instants drawn uniformly over `[0, horizon]`.
    Uniform,
    /// Exponential inter-arrival gaps with mean `horizon / n_tasks`.
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub n_tasks: usize,
    pub horizon_ms: Millis,
    /// Weights in [`TaskType::ALL`] order.
    pub app_mix: [f64; 4],
    /// Inclusive.
    pub deadline_range_ms: (Millis, Millis),
    /// Inclusive.
    pub input_kb_range: (u32, u32),
    pub arrivals: ArrivalProcess,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkloadError {
    #[error("application mix weights must be non-negative with a positive sum")]
    InvalidMix,
    #[error("deadline range {0}..={1} is empty or starts at zero")]
    InvalidDeadlineRange(Millis, Millis),
    #[error("input size range {0}..={1} is empty or starts at zero")]
    InvalidInputRange(u32, u32),
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let mix_ok = self.app_mix.iter().all(|w| *w >= 0.0 && w.is_finite())
            && self.app_mix.iter().sum::<f64>() > 0.0;
        if !mix_ok {
            return Err(WorkloadError::InvalidMix);
        }
        let (dmin, dmax) = self.deadline_range_ms;
        if dmin == 0 || dmin > dmax {
            return Err(WorkloadError::InvalidDeadlineRange(dmin, dmax));
        }
        let (imin, imax) = self.input_kb_range;
        if imin == 0 || imin > imax {
            return Err(WorkloadError::InvalidInputRange(imin, imax));
        }
        Ok(())
    }
}

pub fn generate_trace(spec: &WorkloadSpec, seed: u64) -> Result<Vec<Task>, WorkloadError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut arrivals: Vec<Millis> = match spec.arrivals {
        ArrivalProcess::Uniform => (0..spec.n_tasks)
            .map(|_| rng.random_range(0..=spec.horizon_ms))
            .collect(),
        ArrivalProcess::Poisson => {
            let mean_gap = spec.horizon_ms as f64 / spec.n_tasks.max(1) as f64;
            let gaps = Exp::new(1.0 / mean_gap.max(f64::MIN_POSITIVE)).expect("positive rate");
            let mut t = 0.0f64;
            (0..spec.n_tasks)
                .map(|_| {
                    t += gaps.sample(&mut rng);
                    t.floor() as Millis
                })
                .collect()
        }
    };
    arrivals.sort_unstable();

    let apps = WeightedIndex::new(spec.app_mix).map_err(|_| WorkloadError::InvalidMix)?;
    let (dmin, dmax) = spec.deadline_range_ms;
    let (imin, imax) = spec.input_kb_range;
    Ok(arrivals
        .into_iter()
        .enumerate()
        .map(|(i, arrival)| Task {
            id: i as u64,
            app: TaskType::ALL[apps.sample(&mut rng)],
            arrival,
            deadline: rng.random_range(dmin..=dmax),
            input_kb: rng.random_range(imin..=imax),
        })
        .collect())
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("cannot access trace file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed task: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown application `{name}`")]
    UnknownApp { line: usize, name: String },
    #[error("line {line}: {message}")]
    InvalidTask { line: usize, message: String },
    #[error("line {line}: duplicate task id {id}")]
    DuplicateId { line: usize, id: u64 },
    #[error("line {line}: trace not sorted by arrival")]
    NotSorted { line: usize },
}

/// Wire form; the application stays a string until validated so unknown
/// names can be reported by name.
#[derive(Debug, Serialize, Deserialize)]
struct TraceLine {
    id: u64,
    app: String,
    arrival_ms: Millis,
    deadline_ms: Millis,
    input_kb: u32,
}

pub fn write_trace<W: Write>(mut w: W, tasks: &[Task]) -> std::io::Result<()> {
    for t in tasks {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_trace(tasks: &[Task], path: &Path) -> std::io::Result<()> {
    write_trace(BufWriter::new(File::create(path)?), tasks)
}

/// Parses and validates a trace. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn read_trace<R: BufRead>(reader: R) -> Result<Vec<Task>, TraceError> {
    let mut tasks: Vec<Task> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: TraceLine = serde_json::from_str(&line).map_err(|e| TraceError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let app: TaskType = raw.app.parse().map_err(|_| TraceError::UnknownApp {
            line: line_no,
            name: raw.app.clone(),
        })?;
        if raw.deadline_ms == 0 {
            return Err(TraceError::InvalidTask {
                line: line_no,
                message: "deadline_ms must be positive".into(),
            });
        }
        if raw.input_kb == 0 {
            return Err(TraceError::InvalidTask {
                line: line_no,
                message: "input_kb must be positive".into(),
            });
        }
        if !seen.insert(raw.id) {
            return Err(TraceError::DuplicateId {
                line: line_no,
                id: raw.id,
            });
        }
        if tasks
            .last()
            .is_some_and(|prev| raw.arrival_ms < prev.arrival)
        {
            return Err(TraceError::NotSorted { line: line_no });
        }
        tasks.push(Task {
            id: raw.id,
            app,
            arrival: raw.arrival_ms,
            deadline: raw.deadline_ms,
            input_kb: raw.input_kb,
        });
    }
    Ok(tasks)
}

pub fn load_trace(path: &Path) -> Result<Vec<Task>, TraceError> {
    read_trace(BufReader::new(File::open(path)?))
}
