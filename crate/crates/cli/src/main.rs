//! `occlubench` command line: train the reference model, evaluate occlusion
//! robustness, and write sample grids, mask dumps and schema checks.

mod common;
mod eval;
mod masks;
mod samples;
mod train;
mod validate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "occlubench", version, about = "Occlusion robustness benchmark for image classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the reference CNN; writes a checkpoint and a per-epoch CSV.
    Train(train::TrainArgs),
    /// Evaluate a checkpoint or a set of prediction logs; writes CSV and SVG.
    Eval(eval::EvalArgs),
    /// Write a PNG grid of MixUp / CutMix / FMix samples plus a sidecar CSV.
    GenSamples(samples::SamplesArgs),
    /// Dump masks to an OBMK file, optionally writing the occluded dataset.
    GenMasks(masks::MasksArgs),
    /// Schema-check interchange files and configs.
    Validate(validate::ValidateArgs),
}

/// Caps the global pool at `OCCLUBENCH_THREADS` when set.
fn init_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("OCCLUBENCH_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow::anyhow!("OCCLUBENCH_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    match cli.command {
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
        Command::GenSamples(a) => samples::run(a),
        Command::GenMasks(a) => masks::run(a),
        Command::Validate(a) => validate::run(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
