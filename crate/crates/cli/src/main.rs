//! `sensorclf`: stage-per-command front end for the sensorclf library.
//!
//! Every command reads a JSON [`config::RunConfig`] (`--config`), applies the
//! flag overrides, writes the resolved config to the output directory and
//! then its artifacts. Exit codes: 0 success, 1 configuration error,
//! 2 runtime or data error, 3 training divergence.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Run;
use config::RunConfig;
use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "sensorclf",
    version,
    about = "Occupancy and open-window detection from gas-sensor time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run config; omitted keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "SENSORCLF_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Worker threads for the data-parallel kernels.
    #[arg(long, global = true, env = "SENSORCLF_THREADS")]
    threads: Option<usize>,
    /// Primary input path (CSV frame, window set or track).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Directory written by `split`.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Model directory or autoencoder checkpoint.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Validate the config, print it and exit without writing anything.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Generate a synthetic labeled frame (or an unlabeled fleet).
    Synth,
    /// Interpolate missing values and binarize the person label.
    Clean,
    /// Count missing values per channel.
    ReportMissing,
    /// Pearson correlation of channels and classes.
    Correlate,
    /// Drop redundant channels by correlation.
    SelectFeatures,
    /// Event-centred under-sampling and windowing.
    Sample,
    /// Train/valid/test window sets with a fitted scaler.
    Split,
    /// Train a classifier on a split.
    Train,
    /// Random search over architecture hyperparameters.
    Tune,
    /// Pretrain the sequence autoencoder on unlabeled frames.
    PretrainAe,
    /// Train a classifier head on the frozen encoder.
    TrainHead,
    /// Score a model on a window set.
    Eval,
    /// Per-timestamp predictions over a frame.
    Predict,
    /// Remove short prediction spikes from a track.
    Smooth,
    /// Two-component PCA of windows or model features.
    Pca,
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    for (flag, slot) in [
        (&cli.input, &mut cfg.input),
        (&cli.data, &mut cfg.data),
        (&cli.checkpoint, &mut cfg.checkpoint),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    let cfg = cfg.resolve();
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(cli)?;
    if cli.dry_run {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        println!("config is valid");
        return Ok(());
    }
    if let Some(n) = cli.threads {
        sensorclf::par::init_threads(n)?;
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    sensorclf::train::report::write_json(&cfg.out_dir.join("config.json"), &cfg)?;
    let run = Run { cfg: &cfg };
    match cli.command {
        Command::Synth => commands::synth(&run),
        Command::Clean => commands::clean(&run),
        Command::ReportMissing => commands::report_missing(&run),
        Command::Correlate => commands::correlate(&run),
        Command::SelectFeatures => commands::select_features_cmd(&run),
        Command::Sample => commands::sample(&run),
        Command::Split => commands::split(&run),
        Command::Train => commands::train(&run),
        Command::Tune => commands::tune_cmd(&run),
        Command::PretrainAe => commands::pretrain_ae(&run),
        Command::TrainHead => commands::train_head(&run),
        Command::Eval => commands::eval(&run),
        Command::Predict => commands::predict(&run),
        Command::Smooth => commands::smooth_cmd(&run),
        Command::Pca => commands::pca(&run),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
