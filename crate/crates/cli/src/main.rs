//! `dpdsyn`: synthesize privacy-preserving tabular datasets and evaluate
//! their downstream utility.
//!
//! Subcommands compose the pipeline stages: `infer-schema`, `train`, `synth`,
//! `eval`, `bench`, `scale`, `accountant`, `pipeline`, and `sample-data`.
//! Flags override config-file values; the `DPDSYN_OUT_DIR` environment
//! variable overrides the output directory everywhere.
//!
//! Exit codes: 2 config, 3 data, 4 training, 5 evaluation/synthesis,
//! 6 infeasible privacy budget.

mod commands;
mod config;
mod error;
mod summary;

use clap::{Parser, Subcommand};

use commands as cmd;

#[derive(Parser)]
#[command(
    name = "dpdsyn",
    version,
    about = "Privacy-preserving tabular dataset synthesis: DP-SGD training, column-wise shuffling, model relabeling, and train-on-synthetic evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Infer a JSON schema (attribute names, kinds, domains) from a CSV file
    InferSchema(cmd::InferSchemaArgs),
    /// Train a DP classifier on the 80% train split and save its checkpoint
    Train(cmd::TrainArgs),
    /// Synthesize a dataset from a CSV and a model checkpoint
    Synth(cmd::SynthArgs),
    /// Train downstream models on a synthetic CSV and score them on a real test CSV
    Eval(cmd::EvalArgs),
    /// Run the utility benchmark: repeated pipeline cells plus the non-private baseline
    Bench(cmd::BenchArgs),
    /// Run the benchmark on bootstrap-scaled copies of the dataset
    Scale(cmd::ScaleArgs),
    /// Convert between a noise multiplier and the (epsilon, delta) it achieves
    Accountant(cmd::AccountantArgs),
    /// Run the full pipeline once, writing model, synthetic CSV, provenance, and report
    Pipeline(cmd::PipelineArgs),
    /// Generate a deterministic census-style sample dataset
    SampleData(cmd::SampleDataArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::InferSchema(args) => cmd::infer_schema(args),
        Command::Train(args) => cmd::train(args),
        Command::Synth(args) => cmd::synth(args),
        Command::Eval(args) => cmd::eval(args),
        Command::Bench(args) => cmd::bench(args),
        Command::Scale(args) => cmd::scale(args),
        Command::Accountant(args) => cmd::accountant(args),
        Command::Pipeline(args) => cmd::pipeline(args),
        Command::SampleData(args) => cmd::sample_data(args),
    };
    if let Err(err) = result {
        let (stage, code) = err.stage_and_code();
        eprintln!("error ({stage}): {err}");
        std::process::exit(code);
    }
}
