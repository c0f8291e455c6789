//! `tacdiff`: simulate a dataset, train a model, generate tactile images and
//! evaluate them, all driven by one experiment config.

mod config;
mod eval;
mod generate;
mod simulate;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "tacdiff", version, about = "Contact-conditioned tactile image diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic paired dataset with the virtual rig.
    Simulate(simulate::SimulateArgs),
    /// Split a dataset and train a denoiser on the training part.
    Train(train::TrainArgs),
    /// Sample tactile images from a checkpoint.
    Generate(generate::GenerateArgs),
    /// Compare real and generated images pairwise.
    Eval(eval::EvalArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Train(a) => train::run(a),
        Command::Generate(a) => generate::run(a),
        Command::Eval(a) => eval::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
