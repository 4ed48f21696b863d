use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cltv::artifacts::{hash_bytes, Store};
use cltv::commands::{
    cmd_calibrate, cmd_datagen, cmd_embed, cmd_evaluate, cmd_features, cmd_predict, cmd_rolling,
    cmd_train, Ctx,
};
use cltv::config::{apply_seed_override, load_config};
use cltv::CliError;

/// Customer lifetime value and churn pipeline.
#[derive(Parser)]
#[command(name = "cltv", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Pipeline config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override every stage seed (stages derive their own sub-seeds).
    #[arg(long)]
    seed: Option<u64>,
    /// Force bit-reproducible single-threaded training.
    #[arg(long)]
    deterministic: bool,
    /// Override the artifacts directory.
    #[arg(long)]
    artifacts: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic event log with planted customer value.
    Datagen(CommonArgs),
    /// Compute handcrafted features over the feature window.
    Features(CommonArgs),
    /// Train customer embeddings from product view sequences.
    Embed(CommonArgs),
    /// Fit the churn and spend-percentile forests.
    Train(CommonArgs),
    /// Fit probability and value calibration on held-out rows.
    Calibrate(CommonArgs),
    /// Score every customer and write the prediction CSV.
    Predict(CommonArgs),
    /// Evaluate predictions on the held-out test set.
    Evaluate(CommonArgs),
    /// Retrain over rolling windows with warm-started embeddings.
    Rolling(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, run): (&CommonArgs, fn(&Ctx) -> Result<(), CliError>) = match &cli.command {
        Command::Datagen(a) => (a, cmd_datagen),
        Command::Features(a) => (a, cmd_features),
        Command::Embed(a) => (a, cmd_embed),
        Command::Train(a) => (a, cmd_train),
        Command::Calibrate(a) => (a, cmd_calibrate),
        Command::Predict(a) => (a, cmd_predict),
        Command::Evaluate(a) => (a, cmd_evaluate),
        Command::Rolling(a) => (a, cmd_rolling),
    };
    match build_ctx(args).and_then(|ctx| run(&ctx)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn build_ctx(args: &CommonArgs) -> Result<Ctx, CliError> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        apply_seed_override(&mut config, seed);
    }
    if args.deterministic {
        config.mode.deterministic = true;
    }
    if let Some(dir) = &args.artifacts {
        config.paths.artifacts = dir.clone();
    }
    let config_bytes = std::fs::read(&args.config)
        .map_err(|e| CliError::config(format!("cannot read config: {e}")))?;
    let store = Store::new(&config.paths.artifacts)?;
    Ok(Ctx { config, store, config_hash: hash_bytes(&config_bytes) })
}
