mod cmd_benchmark;
mod cmd_explain;
mod cmd_synth;
mod config;
mod run;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "lux",
    version,
    about = "Local rule-based explanations for black-box classifiers",
    long_about = "Explains single predictions of a black-box classifier with factual rules, \
counterfactual rules and examples, and tree visualizations; also ships a benchmark harness \
and a synthetic dataset generator."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explain one instance: prints the factual rule, optionally writes
    /// rule/counterfactual/tree reports and DOT/SVG visualizations.
    Explain(cmd_explain::ExplainArgs),
    /// Run the metric suite over datasets (or a synthetic dimensionality
    /// sweep) and write per-instance and summary CSVs.
    Benchmark(cmd_benchmark::BenchmarkArgs),
    /// Generate a synthetic blob dataset CSV.
    Synth(cmd_synth::SynthArgs),
}

/// Errors before the pipeline starts exit with 1, runtime failures with 2.
pub enum CliError {
    Config(String),
    Pipeline(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Pipeline(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Pipeline(m) => m,
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders usage itself; route everything to stderr and keep
            // exit status 1 for configuration mistakes (help/version exit 0)
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Explain(args) => cmd_explain::run(args),
        Command::Benchmark(args) => cmd_benchmark::run(args),
        Command::Synth(args) => cmd_synth::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
