//! Command-line harness: single runs, ablation sweeps, trace generation and
//! config validation.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error, 3 trace
//! error.

mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use e2c_core::config::{load_config, parse_bool, parse_seed_list, ConfigError, SimConfig};
use e2c_core::experiment::{run_experiment, run_replications, ExperimentError, ExperimentKind};
use e2c_core::metrics::{to_csv_string, ComparisonCsvRow, ReplicationRow, RunReport};
use e2c_core::model::validate_profile;
use e2c_core::simulate;
use e2c_core::workload::{generate_trace, load_trace, save_trace, TraceError};

/// Caps the number of replications simulated concurrently.
const THREADS_ENV: &str = "HE2C_SIM_THREADS";

#[derive(Parser)]
#[command(
    name = "e2c-sim",
    version,
    about = "Edge-cloud inference allocation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// `key=value`, applied after the file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured scenario once per seed.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Replay a JSON-lines trace instead of generating one.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 1, conflicts_with = "seeds")]
        seed: u64,
        /// Seed list, e.g. `1,2,3` or `1..=10`.
        #[arg(long)]
        seeds: Option<String>,
        /// Shorthand for `--override rescue.enabled=...`.
        #[arg(long, value_name = "on|off")]
        rescue: Option<String>,
        /// CSV file, or JSON when the name ends in `.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an ablation sweep: feasibility, tradeoff or rescue.
    Experiment {
        name: String,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a generated trace as JSON lines.
    GenTrace {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse the config and check every profile.
    ValidateConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<TraceError>() {
            return 3;
        }
        if let Some(ExperimentError::UnknownExperiment(_)) = cause.downcast_ref() {
            return 2;
        }
    }
    1
}

fn config_error(key: &str, message: impl Into<String>) -> anyhow::Error {
    ConfigError {
        key: key.to_string(),
        message: message.into(),
    }
    .into()
}

fn load(args: &ConfigArgs, extra: &[String]) -> anyhow::Result<SimConfig> {
    let mut overrides = args.overrides.clone();
    overrides.extend_from_slice(extra);
    Ok(load_config(&args.config, &overrides)?)
}

fn seeds_from(arg: Option<&str>, fallback: &[u64]) -> anyhow::Result<Vec<u64>> {
    match arg {
        Some(text) => parse_seed_list(text).map_err(|e| config_error("--seeds", e)),
        None => Ok(fallback.to_vec()),
    }
}

fn thread_cap(cfg: &SimConfig) -> anyhow::Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| config_error(THREADS_ENV, format!("not a thread count: `{v}`")))?;
            Ok((n > 0).then_some(n))
        }
        Err(_) => Ok(cfg.experiment.threads),
    }
}

fn print_report(label: &str, r: &RunReport) {
    let t = &r.overall;
    println!(
        "{label}: {} tasks, {} on time, {} missed, {} dropped, completion {:.4}, energy {}, accuracy {}, latency {}",
        t.n_tasks,
        t.completed_on_time,
        t.missed,
        t.dropped,
        t.completion_rate,
        t.total_energy,
        t.mean_accuracy.map_or("-".into(), |a| format!("{a:.4}")),
        t.mean_latency_ms.map_or("-".into(), |l| format!("{l:.1} ms")),
    );
    for (app, a) in &r.per_app {
        println!(
            "    {:<16} {:>5} tasks  completion {:.4}  energy {}",
            app.name(),
            a.n_tasks,
            a.completion_rate,
            a.total_energy
        );
    }
}

fn cmd_run(
    cfg_args: &ConfigArgs,
    trace: Option<&Path>,
    seed: u64,
    seeds: Option<&str>,
    rescue: Option<&str>,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let mut extra = Vec::new();
    if let Some(r) = rescue {
        let on = parse_bool(r).ok_or_else(|| config_error("--rescue", "expected on or off"))?;
        extra.push(format!("rescue.enabled={}", if on { "on" } else { "off" }));
    }
    let cfg = load(cfg_args, &extra)?;
    // A replayed trace does not depend on the seed: one report.
    let seeds = match trace {
        Some(_) => vec![seed],
        None => seeds_from(seeds, &[seed])?,
    };
    let reports = match trace {
        Some(path) => vec![simulate(&load_trace(path)?, &cfg.scenario())?],
        None => run_replications(&cfg, &seeds, thread_cap(&cfg)?)?,
    };

    for (seed, r) in seeds.iter().zip(&reports) {
        print_report(&format!("seed {seed}"), r);
    }

    if let Some(path) = out {
        if path.extension().is_some_and(|e| e == "json") {
            let json: Vec<_> = seeds
                .iter()
                .zip(&reports)
                .map(|(s, r)| serde_json::json!({ "seed": s, "report": r }))
                .collect();
            fs::write(path, serde_json::to_string_pretty(&json)? + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
        } else {
            let rows: Vec<_> = seeds
                .iter()
                .zip(&reports)
                .map(|(s, r)| ReplicationRow::new("run", "config", cfg.workload.n_tasks, *s, r))
                .collect();
            fs::write(path, to_csv_string(&rows)?)
                .with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(())
}

fn cmd_experiment(
    name: &str,
    cfg_args: &ConfigArgs,
    seeds: Option<&str>,
    out_dir: &Path,
) -> anyhow::Result<()> {
    let kind: ExperimentKind = name.parse()?;
    let mut cfg = load(cfg_args, &[])?;
    cfg.experiment.seeds = seeds_from(seeds, &cfg.experiment.seeds)?;
    let output = run_experiment(kind, &cfg, thread_cap(&cfg)?)?;

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let write = |file: String, body: String| -> anyhow::Result<()> {
        let path = out_dir.join(file);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
    };

    let summary = output.summary_rows();
    write(
        format!("{name}_replications.csv"),
        to_csv_string(&output.replication_rows())?,
    )?;
    write(format!("{name}_summary.csv"), to_csv_string(&summary)?)?;
    write(
        format!("{name}_summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;

    let comparisons = output.comparisons()?;
    if !comparisons.is_empty() {
        let pair = (output.series[0].as_str(), output.series[1].as_str());
        let rows: Vec<_> = comparisons
            .iter()
            .flat_map(|(load, table)| {
                table
                    .iter()
                    .map(move |row| ComparisonCsvRow::new(name, *load, pair, row))
            })
            .collect();
        write(format!("{name}_comparison.csv"), to_csv_string(&rows)?)?;
    }

    if cfg.experiment.svg && kind != ExperimentKind::Tradeoff {
        let series: Vec<svg::Series> = output
            .series
            .iter()
            .map(|s| svg::Series {
                name: s.clone(),
                points: summary
                    .iter()
                    .filter(|r| &r.series == s)
                    .map(|r| (r.load as f64, r.completion_mean))
                    .collect(),
            })
            .collect();
        write(
            format!("{name}.svg"),
            svg::line_chart(&format!("{name}: on-time completion rate"), &series),
        )?;
    }

    println!(
        "{:<16} {:>6} {:>6} {:>10} {:>10} {:>12} {:>10} {:>10}",
        "series", "load", "reps", "completion", "min", "energy_j", "accuracy", "latency"
    );
    for r in &summary {
        println!(
            "{:<16} {:>6} {:>6} {:>10.4} {:>10.4} {:>12.3} {:>10} {:>10}",
            r.series,
            r.load,
            r.replications,
            r.completion_mean,
            r.completion_min,
            r.energy_mean_j,
            r.accuracy_mean.map_or("-".into(), |a| format!("{a:.4}")),
            r.latency_mean_ms.map_or("-".into(), |l| format!("{l:.1}")),
        );
    }
    for (load, table) in &comparisons {
        let rate = &table[0];
        if let Some(d) = rate.difference {
            println!(
                "load {load}: {} - {} completion difference {:+.4}",
                output.series[0], output.series[1], d
            );
        }
    }
    println!("outputs written to {}", out_dir.display());
    Ok(())
}

fn cmd_gen_trace(cfg_args: &ConfigArgs, seed: u64, out: &Path) -> anyhow::Result<()> {
    let cfg = load(cfg_args, &[])?;
    let tasks =
        generate_trace(&cfg.workload, seed).map_err(|e| config_error("workload", e.to_string()))?;
    save_trace(&tasks, out).with_context(|| format!("writing {}", out.display()))?;
    println!("{} tasks written to {}", tasks.len(), out.display());
    Ok(())
}

fn cmd_validate(cfg_args: &ConfigArgs) -> anyhow::Result<()> {
    let cfg = load(cfg_args, &[])?;
    for (app, profile) in &cfg.profiles {
        let v = validate_profile(profile);
        debug_assert!(v.is_empty(), "typed config only holds valid profiles");
        println!("{:<16} ok", app.name());
    }
    println!(
        "config ok: checker {}, handler {}, rescue {}",
        cfg.policy.checker.name(),
        cfg.policy.handler.kind.name(),
        if cfg.policy.rescue_enabled {
            "on"
        } else {
            "off"
        }
    );
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Run {
            cfg,
            trace,
            seed,
            seeds,
            rescue,
            out,
        } => cmd_run(
            cfg,
            trace.as_deref(),
            *seed,
            seeds.as_deref(),
            rescue.as_deref(),
            out.as_deref(),
        ),
        Command::Experiment {
            name,
            cfg,
            seeds,
            out,
        } => cmd_experiment(name, cfg, seeds.as_deref(), out),
        Command::GenTrace { cfg, seed, out } => cmd_gen_trace(cfg, *seed, out),
        Command::ValidateConfig { cfg } => cmd_validate(cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
