//! `vitmerge`: FLOPs accounting, inference, evaluation, diversity sweeps and
//! the self-test suite from the command line.

mod args;
mod commands;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{diversity, eval, flops, infer, selftest, synth};

#[derive(Debug, Parser)]
#[command(name = "vitmerge", version, about = "ViT inference with in-block token decoupling and merging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-layer token counts and analytic FLOPs
    Flops(flops::FlopsCmd),
    /// Classify one image tensor and print the top-5 classes
    Infer(infer::InferCmd),
    /// Accuracy and agreement over a manifest
    Eval(eval::EvalCmd),
    /// Final-prune-layer token diversity over a strategy x keep-rate grid
    Diversity(diversity::DiversityCmd),
    /// Run the seeded invariant suite
    Selftest(selftest::SelftestCmd),
    /// Generate random weights, images and a manifest
    Synth(synth::SynthCmd),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Flops(c) => flops::run(c),
        Command::Infer(c) => infer::run(c),
        Command::Eval(c) => eval::run(c),
        Command::Diversity(c) => diversity::run(c),
        Command::Selftest(c) => selftest::run(c),
        Command::Synth(c) => synth::run(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
