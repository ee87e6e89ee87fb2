use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use atlab_cli::{parse_config, run, RunOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "atlab", version, about = "Conditional expectation and approximate tensorization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON configuration.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    config: PathBuf,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-row margins as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "ATLAB_THREADS")]
    threads: Option<usize>,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

const EXIT_VIOLATIONS: u8 = 1;
const EXIT_ERROR: u8 = 2;

fn execute(args: RunArgs) -> anyhow::Result<bool> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let config = parse_config(&text)?;
    let output = config.output.clone().unwrap_or_default();
    let doc = run(
        config,
        RunOptions {
            seed: args.seed,
            threads: args.threads,
        },
    )?;
    match args.out.or(output.report) {
        Some(path) => doc.write_json(&path)?,
        None => println!("{}", serde_json::to_string_pretty(&doc)?),
    }
    if let Some(path) = args.csv.or(output.csv) {
        doc.write_csv(&path)?;
    }
    eprint!("{}", doc.summary());
    eprintln!(
        "{}: {} violations in {:.2} s",
        doc.experiment, doc.violations, doc.wall_clock_seconds
    );
    Ok(doc.passed())
}

fn main() -> ExitCode {
    let Command::Run(args) = Cli::parse().command;
    match execute(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VIOLATIONS),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
