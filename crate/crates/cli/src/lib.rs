//! Command-line harness: configuration, orchestration and reproducible artifacts.

pub mod config;
mod commands;
pub mod output;

use std::path::Path;
use std::time::Instant;

use jc_core::error::ErrorClass;
use serde::Serialize;

pub use config::{parse_config, Command, ExperimentConfig, Overrides};
pub use output::{FileEntry, Writer};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{command}: {source}")]
    Core {
        command: &'static str,
        #[source]
        source: jc_core::Error,
    },
    #[error("{command}: {message}")]
    Statistics { command: &'static str, message: String },
    #[error("output: {0}")]
    Io(String),
}

impl CliError {
    /// 1 configuration, 2 solver or output, 3 statistics.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Core { source, .. } => match source.class() {
                ErrorClass::Config => 1,
                ErrorClass::Solver => 2,
                ErrorClass::Statistics => 3,
            },
            CliError::Statistics { .. } => 3,
            CliError::Io(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub config: ExperimentConfig,
    pub inputs: Vec<InputFile>,
    pub wall_time_s: f64,
    pub outputs: Vec<FileEntry>,
}

/// Run one experiment and write its artifacts plus `manifest.json` into the output directory.
pub fn run(cfg: &ExperimentConfig, input: Option<(&Path, &str)>) -> Result<RunManifest, CliError> {
    let t0 = Instant::now();
    let mut w = Writer::new(&cfg.output_dir)?;
    commands::dispatch(cfg, &mut w)?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cfg.subcommand.name(),
        config: cfg.clone(),
        inputs: input
            .map(|(p, text)| InputFile {
                path: p.display().to_string(),
                sha256: output::sha256_hex(text.as_bytes()),
            })
            .into_iter()
            .collect(),
        wall_time_s: t0.elapsed().as_secs_f64(),
        outputs: w.files().to_vec(),
    };
    w.json("manifest.json", &manifest)?;
    Ok(manifest)
}

/// Size the global rayon pool from `JCQ_THREADS` when set.
pub fn init_threads() -> Result<Option<usize>, CliError> {
    let Ok(v) = std::env::var("JCQ_THREADS") else {
        return Ok(None);
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("JCQ_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    Ok(Some(n))
}
