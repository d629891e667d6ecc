//! `guided-proto`: cost matrices, prototype embeddings, synthetic data,
//! training, evaluation and inference from the command line.

mod checkpoint;
mod commands;
mod config;
mod error;
mod io;

use clap::{Parser, Subcommand};

use commands::{cost, embed, eval, infer, synth, train};

#[derive(Debug, Parser)]
#[command(name = "guided-proto", version, about = "Metric-guided prototype learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    Cost(cost::CostArgs),
    Embed(embed::EmbedArgs),
    Synth(synth::SynthArgs),
    Train(train::TrainArgs),
    Eval(eval::EvalArgs),
    Infer(infer::InferArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match &cli.command {
        Command::Cost(a) => cost::run(a),
        Command::Embed(a) => embed::run(a),
        Command::Synth(a) => synth::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Infer(a) => infer::run(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
