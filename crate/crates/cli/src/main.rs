use std::path::PathBuf;
use std::process::ExitCode;

use ccaqed_core::bench::{run_scenario, RunConfig, RunRequest, SCENARIOS};
use ccaqed_core::error::Error;
use clap::Parser;

/// Run one named experiment of the coupled-cavity-array model.
#[derive(Debug, Parser)]
#[command(name = "ccaqed", version)]
struct Cli {
    /// Scenario name.
    scenario: String,
    /// INI-style run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, env = "CCAQED_WORKERS")]
    workers: Option<usize>,
    /// Seed for stochastic scenarios; overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config value, `section.key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn run(cli: Cli) -> Result<(), Error> {
    if !SCENARIOS.contains(&cli.scenario.as_str()) {
        return Err(Error::validation(format!(
            "unknown scenario '{}' (expected one of: {})",
            cli.scenario,
            SCENARIOS.join(", ")
        )));
    }
    let mut config = RunConfig::from_file(&cli.config)?;
    for s in &cli.set {
        config.set_override(s)?;
    }
    let art = run_scenario(RunRequest {
        scenario: cli.scenario,
        config,
        out: cli.out,
        workers: cli.workers,
        seed: cli.seed,
    })?;
    for line in &art.summary {
        println!("{line}");
    }
    println!("wrote {} tables to {}", art.files.len(), art.dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
