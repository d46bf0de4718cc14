use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

mod config;
mod output;
mod scenarios;

use config::{RunConfig, Scenario};
use output::Artifacts;
use scenarios::CliError;

/// Degenerate beam with delayed boundary feedback: simulation and checks.
#[derive(Debug, Parser)]
#[command(name = "degbeam", version)]
struct Args {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the scenario named in the config.
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
    /// Run parameter sets that fail validation.
    #[arg(long)]
    force: bool,
    /// Seed for randomized campaigns and probes.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve(args: &Args) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.scenario {
        cfg.scenario = s;
    }
    cfg.force |= args.force;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    cfg.gamma()?;
    Ok(cfg)
}

fn execute(args: &Args) -> Result<(), CliError> {
    let cfg = resolve(args)?;
    let mut art = Artifacts::new(&cfg.output_dir, &cfg)?;
    let summary = scenarios::dispatch(&cfg, &mut art)?;
    println!("{summary}");
    for p in art.written() {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
