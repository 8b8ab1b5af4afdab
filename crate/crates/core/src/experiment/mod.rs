//! Configuration-driven experiment runner behind the `mfjump` binary.

mod commands;
mod config;
mod verify;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use commands::{cmd_control, cmd_flow, cmd_game, cmd_simulate, cmd_verify};
pub use config::{
    ControlConfig, ExperimentConfig, GridConfig, InitialConfig, McConfig, ModelConfig, OutputConfig,
    PlayerConfig, RatesConfig, Setup, SolverConfig, VerifyConfig,
};
pub use verify::{Check, VerifyOutput};

use crate::error::{Error, Result};

/// Tag written into every result document.
pub const SCHEMA: &str = "mfjump.result/v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Flow,
    Simulate,
    Control,
    Game,
    Verify,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// Names of the failed invariants.
    InvariantFailure { failed: Vec<String> },
    /// The game has no value at the grid resolution.
    NoValue { isaacs_gap: f64 },
}

impl Status {
    fn from_failures(failed: Vec<String>) -> Self {
        if failed.is_empty() {
            Status::Ok
        } else {
            Status::InvariantFailure { failed }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema: String,
    pub version: String,
    pub command: Command,
    pub config_hash: String,
    pub seed: u64,
    pub status: Status,
    pub config: ExperimentConfig,
    pub output: serde_json::Value,
}

impl ResultDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result document serializes")
    }
}

/// A finished command: the result document and its CSV side files.
#[derive(Clone, Debug)]
pub struct Run {
    pub document: ResultDocument,
    pub files: Vec<(String, String)>,
}

impl Run {
    pub(crate) fn new(
        command: Command,
        config: &ExperimentConfig,
        seed: u64,
        status: Status,
        output: impl Serialize,
        files: Vec<(String, String)>,
    ) -> Result<Self> {
        Ok(Self {
            document: ResultDocument {
                schema: SCHEMA.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                command,
                config_hash: config.hash(),
                seed,
                status,
                config: config.clone(),
                output: serde_json::to_value(output)?,
            },
            files,
        })
    }

    pub fn exit_code(&self) -> i32 {
        match self.document.status {
            Status::Ok => 0,
            Status::InvariantFailure { .. } => 4,
            Status::NoValue { .. } => 5,
        }
    }

    /// Writes `result.json` and, if enabled, the CSV side files.
    pub fn write(&self, dir: &Path, csv: bool) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("result.json"), self.document.to_json())?;
        if csv {
            for (name, body) in &self.files {
                std::fs::write(dir.join(name), body)?;
            }
        }
        Ok(())
    }
}

/// Exit status for a command that failed before producing a document.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config { .. }
        | Error::InvalidParameter(_)
        | Error::MismatchedSpace { .. }
        | Error::Json(_) => 2,
        Error::NonConvergence { .. } | Error::Oscillation { .. } => 3,
        Error::StepSize { .. }
        | Error::MajorantViolated { .. }
        | Error::InactiveJump { .. }
        | Error::Overflow { .. }
        | Error::NonPositive { .. }
        | Error::Unbalanced { .. } => 4,
        Error::Io(_) => 1,
    }
}

pub fn run(command: Command, config: &ExperimentConfig) -> Result<Run> {
    match command {
        Command::Flow => cmd_flow(config),
        Command::Simulate => cmd_simulate(config),
        Command::Control => cmd_control(config),
        Command::Game => cmd_game(config),
        Command::Verify => cmd_verify(config),
    }
}

/// Runs a command on a dedicated pool of `threads` workers. Results do not
/// depend on the worker count.
pub fn run_with_threads(command: Command, config: &ExperimentConfig, threads: usize) -> Result<Run> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| run(command, config))
}
