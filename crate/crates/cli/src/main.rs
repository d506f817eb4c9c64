//! `senvm`: run, report on, and serve server-room scenarios.
//!
//! Exit codes: 0 success, 2 invalid input (scenario or run directory),
//! 3 runtime fault (including a busy port in serve mode).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use log::info;

use senvm_core::basestation::read_csv;
use senvm_core::domain::validate_scenario;
use senvm_core::report::{day_night_means, Report};
use senvm_core::sim::{run_to_dir, RunOutputs};
use senvm_core::ScenarioConfig;

mod serve;

#[derive(Parser)]
#[command(name = "senvm", version, about = "Server-room sensor network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario to completion and write its outputs.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scenario's duration, e.g. `3d`, `90min`, `500ms`.
        #[arg(long, value_parser = parse_duration)]
        duration: Option<Duration>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print per-node day/night averages of a finished run.
    Report { dir: PathBuf },
    /// Run a scenario paced against wall time and serve the web API.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Simulated seconds per wall second.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Where exports are written on shutdown.
        #[arg(long, default_value = "senvm-out")]
        out: PathBuf,
    },
    /// Check a scenario file and list every violation.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

/// Failure classes that map onto exit codes.
#[derive(Debug)]
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

/// Accepts humantime durations and bare integers as milliseconds.
fn parse_duration(s: &str) -> Result<Duration, String> {
    if let Ok(ms) = s.parse::<u64>() {
        return Ok(Duration::from_millis(ms));
    }
    humantime::parse_duration(s).map_err(|e| e.to_string())
}

/// Loads and validates a scenario, applying command-line overrides.
fn load_scenario(path: &Path, seed: Option<u64>, duration: Option<Duration>) -> Result<ScenarioConfig, Failure> {
    let mut s = ScenarioConfig::load(path).map_err(|e| Failure::Invalid(e.to_string()))?;
    if let Some(seed) = seed {
        s.run.seed = seed;
    }
    if let Some(d) = duration {
        s.run.duration_ms = u64::try_from(d.as_millis()).map_err(|_| Failure::Invalid("duration too long".into()))?;
    }
    let violations = validate_scenario(&s);
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(|v| format!("  - {v}")).collect();
        return Err(Failure::Invalid(format!(
            "invalid scenario {}:\n{}",
            path.display(),
            lines.join("\n")
        )));
    }
    Ok(s)
}

fn run(scenario: &Path, seed: Option<u64>, duration: Option<Duration>, out: &Path) -> Result<(), Failure> {
    let s = load_scenario(scenario, seed, duration)?;
    info!("running {} for {} ms, seed {}", s.name, s.run.duration_ms, s.run.seed);
    let started = std::time::Instant::now();
    let (outputs, summary) = run_to_dir(s, out).map_err(|e| match e {
        senvm_core::Error::Config(_) | senvm_core::Error::UnstableStep { .. } => Failure::Invalid(e.to_string()),
        e => Failure::Runtime(e.to_string()),
    })?;
    info!("{} events in {:.2?}", summary.events, started.elapsed());
    println!("wrote {}", outputs.dir.display());
    match summary.delivery_ratio {
        Some(d) => println!("delivery ratio {d:.3}, {} commands issued", summary.commands.issued),
        None => println!("no readings originated"),
    }
    if !summary.dead_nodes.is_empty() {
        let ids: Vec<String> = summary.dead_nodes.iter().map(|n| n.to_string()).collect();
        println!("dead nodes: {}", ids.join(", "));
    }
    Ok(())
}

/// Builds the report from a run directory, recomputing the per-node means
/// from `readings.csv`.
fn build_report(dir: &Path) -> Result<Report, Failure> {
    let out = RunOutputs::in_dir(dir);
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| Failure::Invalid(format!("{}: {e}", p.display())))
    };
    let csv = read(&out.readings)?;
    let summary: serde_json::Value = serde_json::from_str(&read(&out.summary)?)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", out.summary.display())))?;
    let records = read_csv(&csv).map_err(|e| Failure::Invalid(format!("{}: {e}", out.readings.display())))?;

    let hour = |key: &str, default: u64| summary[key].as_u64().unwrap_or(default);
    let sensors: Vec<u64> = summary["nodes"]
        .as_array()
        .map(|nodes| {
            nodes
                .iter()
                .filter(|n| n["role"] == "sensor")
                .filter_map(|n| n["id"].as_u64())
                .collect()
        })
        .unwrap_or_default();
    let mut rows = day_night_means(&records, hour("day_start_h", 8), hour("day_end_h", 20));
    if !sensors.is_empty() {
        rows.retain(|r| sensors.contains(&u64::from(r.node)));
    }
    Ok(Report {
        rows,
        delivery_ratio: summary["delivery_ratio"].as_f64(),
        commands_issued: summary["commands"]["issued"].as_u64().unwrap_or(0),
    })
}

fn validate(path: &Path) -> Result<(), Failure> {
    let s = load_scenario(path, None, None)?;
    senvm_core::World::new(s).map_err(|e| Failure::Invalid(e.to_string()))?;
    println!("{}: ok", path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            duration,
            out,
        } => run(&scenario, seed, duration, &out),
        Command::Report { dir } => build_report(&dir).map(|r| print!("{r}")),
        Command::Serve {
            scenario,
            seed,
            speed,
            port,
            out,
        } => {
            if !(speed.is_finite() && speed > 0.0) {
                Err(Failure::Invalid(format!("speed must be positive, got {speed}")))
            } else {
                serve::serve(&scenario, seed, speed, port, &out)
            }
        }
        Command::Validate { scenario } => validate(&scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Invalid(msg) | Failure::Runtime(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
