use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use mfjump::experiment::{exit_code, run_with_threads, Command, ExperimentConfig, Status};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Flow,
    Simulate,
    Control,
    Game,
    Verify,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Flow => Command::Flow,
            Cmd::Simulate => Command::Simulate,
            Cmd::Control => Command::Control,
            Cmd::Game => Command::Game,
            Cmd::Verify => Command::Verify,
        }
    }
}

/// Controlled mean-field jump processes.
#[derive(Debug, Parser)]
#[command(name = "mfjump", version)]
struct Args {
    command: Cmd,
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, default_value_t = default_threads())]
    threads: usize,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("mfjump: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    let run = match run_with_threads(args.command.into(), &config, args.threads.max(1)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("mfjump: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    let dir = args.out.or_else(|| config.output.dir.as_ref().map(PathBuf::from));
    match dir {
        Some(dir) => {
            if let Err(e) = run.write(&dir, config.output.csv) {
                eprintln!("mfjump: {e}");
                return ExitCode::from(exit_code(&e) as u8);
            }
        }
        None => println!("{}", run.document.to_json()),
    }
    match &run.document.status {
        Status::Ok => {}
        Status::InvariantFailure { failed } => eprintln!("mfjump: failed invariants: {}", failed.join(", ")),
        Status::NoValue { isaacs_gap } => {
            eprintln!("mfjump: no value at grid resolution (Isaacs gap {isaacs_gap:e})")
        }
    }
    ExitCode::from(run.exit_code() as u8)
}
