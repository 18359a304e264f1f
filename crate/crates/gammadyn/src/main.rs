//! `gammadyn <command> --config <file> [--seed S] [--threads N] [--out DIR]`
//!
//! Exit status: 0 success, 1 failed check or runtime error, 2 configuration
//! error, 3 violated hypothesis flag.

mod commands;
mod config;
mod failure;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::commands::{Outcome, Run};
use crate::config::Command;
use crate::failure::Failure;
use crate::io::Artifacts;

#[derive(Parser, Debug)]
#[command(name = "gammadyn", version, about = "Correlation-function dynamics of continuum birth-and-death systems")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replica-parallel work.
    #[arg(long, env = "GAMMADYN_THREADS")]
    threads: Option<usize>,
    /// Output directory (overrides `output_dir`; default `gammadyn-out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: &Cli) -> Result<Outcome, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        // fails only if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = config::load(&cli.config)?;
    if let Some(c) = cfg.config.command {
        if c != cli.command {
            return Err(Failure::Config(format!(
                "configuration is for `{}`, not `{}`",
                c.name(),
                cli.command.name()
            )));
        }
    }
    let seed = cli.seed.or(cfg.config.seed).unwrap_or(0);
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.config.output_dir.as_ref().map(|p| cfg.resolve(p)))
        .unwrap_or_else(|| PathBuf::from("gammadyn-out"));
    let mut r = Run { cfg: &cfg, seed, out: Artifacts::create(&dir)? };
    let result = match cli.command {
        Command::Validate => commands::validate(&mut r),
        Command::Evolve => commands::evolve(&mut r),
        Command::Chain => commands::chain(&mut r),
        Command::Stationary => commands::stationary(&mut r),
        Command::Simulate => commands::simulate(&mut r),
        Command::Ergodicity => commands::ergodicity(&mut r),
        Command::Compare => commands::compare(&mut r),
    };
    // the manifest is written for failed checks too, so they can be rerun
    let summary = match &result {
        Ok(o) => o.summary.clone(),
        Err(e) => serde_json::json!({ "error": e.to_string(), "exit_code": e.exit_code() }),
    };
    println!("artifacts: {}", r.out.dir().display());
    r.out.finish(cli.command.name(), &cfg.text, seed, summary)?;
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
