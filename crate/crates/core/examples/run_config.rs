//! Runs one experiment command on a JSON config and prints the result document.
//!
//! cargo run --release --example run_config -- game configs/game.json

use mfjump::experiment::{run, Command, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let command = match args.next().as_deref() {
        Some("flow") | None => Command::Flow,
        Some("simulate") => Command::Simulate,
        Some("control") => Command::Control,
        Some("game") => Command::Game,
        Some("verify") => Command::Verify,
        Some(other) => return Err(format!("unknown command {other}").into()),
    };
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/small.json").to_string());
    let config = ExperimentConfig::load(path.as_ref())?;
    let r = run(command, &config)?;
    println!("{}", r.document.to_json());
    eprintln!("exit code {}", r.exit_code());
    Ok(())
}
