//! Experiment runner around `tasep-core`: JSON configs, parallel replicas,
//! CSV results and a JSON manifest per run.

pub mod commands;
pub mod config;
pub mod output;
pub mod runner;

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;
use serde_json::json;

use config::{load_config, ConfigError, Subcommand};
use output::{write_outputs, Manifest};

#[derive(Debug)]
pub enum LabError {
    Config(ConfigError),
    Simulation(tasep_core::Error),
    Io(std::io::Error),
}

impl From<ConfigError> for LabError {
    fn from(e: ConfigError) -> Self {
        LabError::Config(e)
    }
}

impl From<tasep_core::Error> for LabError {
    fn from(e: tasep_core::Error) -> Self {
        LabError::Simulation(e)
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e)
    }
}

impl fmt::Display for LabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabError::Config(e) => write!(f, "invalid config: {e}"),
            LabError::Simulation(e) => write!(f, "simulation failed: {e}"),
            LabError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for LabError {}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            _ => 1,
        }
    }

    /// Machine-readable error record.
    pub fn record(&self) -> serde_json::Value {
        match self {
            LabError::Config(e) => json!({
                "status": "error",
                "kind": "invalid_config",
                "field": e.field,
                "message": e.message,
            }),
            LabError::Simulation(e) => json!({
                "status": "error",
                "kind": "simulation",
                "message": e.to_string(),
            }),
            LabError::Io(e) => json!({
                "status": "error",
                "kind": "io",
                "message": e.to_string(),
            }),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tasep-lab", version, about = "Run exclusion-process experiments")]
pub struct Cli {
    #[arg(value_enum)]
    pub subcommand: Subcommand,
    /// JSON config file (a previous run's manifest also works).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value = "tasep-lab-out")]
    pub out: PathBuf,
}

/// Runs one experiment and writes its outputs. Returns the manifest.
pub fn run(cli: &Cli) -> Result<Manifest, LabError> {
    let started = Instant::now();
    let mut cfg = load_config(&cli.config)?;
    if let Some(sub) = cfg.subcommand {
        if sub != cli.subcommand {
            return Err(ConfigError::field(
                "subcommand",
                format!("config is for `{}`, not `{}`", sub.name(), cli.subcommand.name()),
            )
            .into());
        }
    }
    cfg.subcommand = Some(cli.subcommand);
    cfg.seed = Some(cli.seed.or(cfg.seed).unwrap_or(0));
    let threads = runner::resolve_threads(cli.threads, cfg.threads);

    let outcome = runner::pool(threads).install(|| commands::dispatch(cli.subcommand, &cfg))?;
    for line in &outcome.lines {
        println!("{line}");
    }
    let manifest = Manifest {
        subcommand: cli.subcommand.name().into(),
        seed: cfg.seed(),
        config: cfg,
        replica_seeds: outcome.replica_seeds,
        build: Manifest::build_id(),
        threads,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        outputs: outcome.tables.iter().map(|t| t.file_name()).collect(),
        warning: outcome.warning,
    };
    write_outputs(&cli.out, &outcome.tables, &manifest)?;
    if let Some(w) = &manifest.warning {
        eprintln!("warning: {w}");
    }
    Ok(manifest)
}
