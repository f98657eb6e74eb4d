//! `svcvv`: visual vertical estimation, motion sickness prediction,
//! synthetic data generation and evaluation.

mod commands;
mod config;
mod plots;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{EvalArgs, PlotArgs, PredictArgs, SynthArgs, VvArgs};

#[derive(Parser, Debug)]
#[command(
    name = "svcvv",
    version,
    about = "Motion sickness prediction from head motion and the visual vertical"
)]
struct Cli {
    /// Worker threads for frame processing (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the visual vertical of a frame sequence.
    Vv(VvArgs),
    /// Simulate a trial and write the MSI series and summary.
    Predict(PredictArgs),
    /// Generate a synthetic slalom IMU stream and optional scene frames.
    Synth(SynthArgs),
    /// Score cohort summaries with a confusion matrix and metrics.
    Eval(EvalArgs),
    /// Plot MSI time series from one or more trial files.
    Plot(PlotArgs),
}

/// Error caused by the user's input rather than a fault in the program.
#[derive(Debug)]
pub struct UserError(pub String);

impl std::fmt::Display for UserError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

pub fn user_error(msg: impl Into<String>) -> anyhow::Error {
    UserError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UserError>() || cause.is::<toml::de::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<svcvv_core::Error>() {
            return if e.is_user_error() { 2 } else { 1 };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(user_error("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Vv(a) => commands::vv(a),
        Command::Predict(a) => commands::predict(a),
        Command::Synth(a) => commands::synth(a),
        Command::Eval(a) => commands::eval(a),
        Command::Plot(a) => commands::plot(a),
    }
}

/// Error chain joined by `: `, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
