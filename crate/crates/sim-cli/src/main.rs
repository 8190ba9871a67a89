//! `simulate <config> [--mode M] [--out PREFIX] [--seed N] [--tol X]`
//!
//! Exit codes: 0 success, 2 validation error, 3 simulation failure,
//! 4 Zeno-terminated (partial outputs written).

use clap::Parser;
use sim_cli::run::{run_scenario, RunError};
use sim_cli::scenario::{load_scenario, Mode};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "simulate",
    about = "Hybrid forced mechanical system simulator: full, reduced and comparison runs"
)]
struct Args {
    /// Scenario configuration file (flat key = value format).
    config: PathBuf,

    /// Override the scenario mode: full, reduced, both, classify, symcheck.
    #[arg(long)]
    mode: Option<String>,

    /// Override the output path prefix.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Override the random seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the integrator relative tolerance (absolute is set 100x
    /// tighter).
    #[arg(long)]
    tol: Option<f64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut scenario = match load_scenario(&args.config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(mode) = &args.mode {
        match Mode::parse(mode) {
            Some(m) => scenario.mode = m,
            None => {
                eprintln!("error: unknown mode '{mode}'");
                return ExitCode::from(2);
            }
        }
    }
    if let Some(out) = args.out {
        scenario.out_prefix = out;
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
        scenario.numerics.seed = seed;
    }
    if let Some(tol) = args.tol {
        scenario.numerics.rel_tol = tol;
        scenario.numerics.abs_tol = tol * 1e-2;
        if let Err(e) = scenario.numerics.validate() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }

    match run_scenario(&scenario) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for line in &outcome.summary {
                println!("{line}");
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(RunError::Setup(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
