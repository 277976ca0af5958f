mod commands;
mod config;
mod io;
mod svg;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Bidirectional message-passing networks for molecular property prediction.
#[derive(Debug, Parser)]
#[command(name = "bmpnn", version, about)]
struct Cli {
    /// Worker threads for featurization, CV folds and tuning trials.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// More log output (-v info, -vv debug). `RUST_LOG` also works.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Featurize a CSV or SDF file into a graph cache.
    Featurize(commands::FeaturizeArgs),
    /// Train one model per seed and aggregate blind-test metrics.
    Train(commands::TrainArgs),
    /// Score a checkpoint on labelled molecules.
    Evaluate(commands::EvaluateArgs),
    /// Write per-molecule predictions as CSV.
    Predict(commands::PredictArgs),
    /// Export per-atom relevance scores (CSV, optional SVG).
    Relevance(commands::RelevanceArgs),
    /// Rank and eliminate features by cross-validated F1.
    SelectFeatures(commands::SelectArgs),
    /// Random hyperparameter search with pruning and a Pareto knee.
    Tune(commands::TuneArgs),
    /// Fingerprint clustering and Shannon entropy of a molecule set.
    Diversity(commands::DiversityArgs),
    /// Compare 3D, noisy-3D and 2D featurization.
    Ablate3d(commands::AblateArgs),
}

/// 1 for bad input, 2 for a violated internal invariant.
fn exit_code(err: &anyhow::Error) -> u8 {
    use bmpnn_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Shape { .. } | E::SegmentId { .. } | E::NonScalarLoss(_) | E::NonFiniteLoss { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.workers {
        anyhow::ensure!(n > 0, "--workers must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Featurize(a) => commands::featurize(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Predict(a) => commands::predict(a),
        Command::Relevance(a) => commands::relevance(a),
        Command::SelectFeatures(a) => commands::select(a),
        Command::Tune(a) => commands::tune(a),
        Command::Diversity(a) => commands::diversity(a),
        Command::Ablate3d(a) => commands::ablate3d(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(2),
    }
}
