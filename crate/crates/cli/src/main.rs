//! Command-line driver: train solution bundles, certify error bounds, fit
//! weight posteriors, score runs, infer equation parameters, and plot.

mod artifacts;
mod commands;
mod svg;

use std::process::ExitCode;

use clap::Parser;

use bundle_uq::{Error, Result};

use commands::{bayes, bounds, eval, inverse, pipeline, plot, train};

const AFTER_HELP: &str = "\
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
Threads: worker count follows RAYON_NUM_THREADS (default: all cores).
Every run directory receives a config.json echoing the resolved configuration.";

#[derive(Parser)]
#[command(
    name = "bundle-uq",
    version,
    about = "Neural solution bundles for cosmological ODEs with calibrated uncertainty",
    after_help = AFTER_HELP
)]
enum Cli {
    /// Train a deterministic solution bundle.
    Train(train::TrainArgs),
    /// Certify residual-integral error bound tables for a checkpoint.
    Bounds(bounds::BoundsArgs),
    /// Fit a weight posterior and summarize its predictive distribution.
    Bayes(bayes::BayesArgs),
    /// Score a run against an oracle on train/test/ood grids.
    Eval(eval::EvalArgs),
    /// Estimate equation parameters from Hubble observations.
    Inverse(inverse::InverseArgs),
    /// Render run artifacts to SVG.
    Plot(plot::PlotArgs),
    /// Run train -> bounds -> bayes -> eval -> inverse end to end.
    Pipeline(pipeline::PipelineArgs),
}

fn dispatch(cli: &Cli) -> Result<()> {
    match cli {
        Cli::Train(args) => train::run(args),
        Cli::Bounds(args) => bounds::run(args),
        Cli::Bayes(args) => bayes::run(args),
        Cli::Eval(args) => eval::run(args),
        Cli::Inverse(args) => inverse::run(args),
        Cli::Plot(args) => plot::run(args),
        Cli::Pipeline(args) => pipeline::run(args),
    }
}

/// 2 for configuration problems, 3 for numerical failures.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Io(_)
        | Error::Serialization(_)
        | Error::DimensionMismatch { .. } => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
