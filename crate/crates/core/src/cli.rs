//! Command-line front end. Exit status: 0 success, 1 user error, 2 fault
//! during simulation.

use crate::config::{load_config_with_warnings, SimConfig};
use crate::engine::{replay_isolated, run_simulation, SimError};
use crate::metrics::compare_runtimes;
use crate::scheduler::global_registry;
use crate::workload::load_trace_records;
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_FAULT: i32 = 2;

pub const SUMMARY_FILE: &str = "summary.json";
pub const UTILIZATION_FILE: &str = "utilization.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const COMPARISON_FILE: &str = "comparison.csv";

#[derive(Debug, Parser)]
#[command(name = "eudoxia", version, about = "Tick-based FaaS pipeline scheduling simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation and write summary, utilization, and event files.
    Run(Invocation),
    /// Replay each trace row in isolation and report percent error against observed runtimes.
    Compare(Invocation),
    /// Parse a config, check it, and print the effective values.
    ValidateConfig(Invocation),
}

#[derive(Debug, Args)]
pub struct Invocation {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub output: PathBuf,
    /// Overrides the config file's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config file's trace_path.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => dispatch(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USER
            } else {
                EXIT_OK
            }
        }
    }
}

pub fn dispatch(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Run(inv) => cmd_run(&inv),
        Command::Compare(inv) => cmd_compare(&inv),
        Command::ValidateConfig(inv) => cmd_validate_config(&inv),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}

#[derive(Debug)]
struct CliFailure {
    code: i32,
    message: String,
}

impl CliFailure {
    fn user(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USER,
            message: message.into(),
        }
    }
}

impl From<SimError> for CliFailure {
    fn from(e: SimError) -> Self {
        Self {
            code: if e.is_fault() { EXIT_FAULT } else { EXIT_USER },
            message: e.to_string(),
        }
    }
}

fn effective_config(inv: &Invocation) -> Result<SimConfig, CliFailure> {
    let loaded = load_config_with_warnings(&inv.config).map_err(|e| CliFailure::user(e.to_string()))?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let mut config = loaded.config;
    if let Some(seed) = inv.seed {
        config.seed = seed;
    }
    if let Some(trace) = &inv.trace {
        config.trace_path = Some(trace.clone());
    }
    Ok(config)
}

/// Writes through a temp file in the same directory, then renames.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<(), CliFailure> {
    let io_err = |e: std::io::Error| CliFailure::user(format!("cannot write {}: {e}", dir.join(name).display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents.as_bytes()).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(dir.join(name)).map_err(|e| io_err(e.error))?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<(), CliFailure> {
    std::fs::create_dir_all(dir).map_err(|e| CliFailure::user(format!("cannot create {}: {e}", dir.display())))
}

fn cmd_run(inv: &Invocation) -> Result<(), CliFailure> {
    let config = effective_config(inv)?;
    let report = run_simulation(config)?;
    ensure_dir(&inv.output)?;
    let summary = report.summary_json();
    write_atomic(&inv.output, SUMMARY_FILE, &summary)?;
    write_atomic(&inv.output, UTILIZATION_FILE, &report.utilization_csv())?;
    write_atomic(&inv.output, EVENTS_FILE, &report.events_jsonl())?;
    print!("{summary}");
    Ok(())
}

fn cmd_compare(inv: &Invocation) -> Result<(), CliFailure> {
    let config = effective_config(inv)?;
    let trace = config
        .trace_path
        .clone()
        .ok_or_else(|| CliFailure::user("compare needs a trace (--trace or trace_path in the config)"))?;
    let records = load_trace_records(&trace).map_err(|e| CliFailure::user(e.to_string()))?;
    let mut observed = Vec::with_capacity(records.len());
    for r in &records {
        let obs = r.observed_ticks.ok_or_else(|| {
            CliFailure::user(format!(
                "trace row at line {} (pipeline {}) has no observed_ticks",
                r.line, r.pipeline.id
            ))
        })?;
        observed.push((r.pipeline.id, obs));
    }
    let simulated = replay_isolated(&config, &global_registry(), &records)?;
    let table = compare_runtimes(&simulated, &observed).map_err(|e| CliFailure {
        code: EXIT_FAULT,
        message: e.to_string(),
    })?;
    ensure_dir(&inv.output)?;
    write_atomic(&inv.output, COMPARISON_FILE, &table.to_csv())?;
    println!(
        "compared {} pipelines: min error {:.2}%, mean error {:.2}%, max error {:.2}%",
        table.rows.len(),
        table.min,
        table.mean,
        table.max
    );
    Ok(())
}

fn cmd_validate_config(inv: &Invocation) -> Result<(), CliFailure> {
    let config = effective_config(inv)?;
    print!("{}", config.to_toml());
    Ok(())
}
