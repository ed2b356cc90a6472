//! `trapal`: batch entry points for every pipeline stage.

mod commands;
mod error;
mod featurize;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "trapal", version, about = "Active learning for camera-trap image pools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Threshold detector output and cut one crop per kept detection.
    Ingest(IngestArgs),
    /// Compute base features (colour grid means and histograms) for crops.
    Featurize(FeaturizeArgs),
    /// Train an embedding network on labeled features.
    Embed(EmbedArgs),
    /// Run the labeling loop against ground truth and write the learning curve.
    Simulate(SimulateArgs),
    /// Serve labeling sessions over HTTP.
    Serve(ServeArgs),
    /// Score image-level predictions against ground truth.
    Eval(EvalArgs),
    /// Dump embedded vectors of a feature file.
    ExportEmbedding(ExportArgs),
    /// Write a synthetic pool directory with ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, clap::Args)]
pub struct IngestArgs {
    /// Detector output (JSON with an `images` array).
    #[arg(long)]
    pub detections: PathBuf,
    /// Root that image paths in the detection file are relative to.
    #[arg(long)]
    pub images: PathBuf,
    /// Output directory; must not exist yet.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f64,
    #[arg(long, default_value_t = 256)]
    pub crop_side: u32,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, clap::Args)]
pub struct FeaturizeArgs {
    /// Crop index written by `ingest`.
    #[arg(long)]
    pub index: PathBuf,
    /// Directory holding `<crop_id>.png`.
    #[arg(long)]
    pub crops: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, clap::Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// `crop_id,label` CSV; rows without a label are not trained on.
    #[arg(long)]
    pub labels: PathBuf,
    /// `triplet` or `xent`.
    #[arg(long, default_value = "triplet")]
    pub loss: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Triplet margin.
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Pool directory (`features.csv`, optional holdout, classes, checkpoint).
    #[arg(long)]
    pub pool: PathBuf,
    /// `crop_id,label` for the pool and, unless the pool has its own, the holdout.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub initial: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub finetune_interval: Option<usize>,
    #[arg(long)]
    pub finetune_start: Option<usize>,
    /// Loop settings as TOML; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Learning curve CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep a durable session directory (journal, checkpoints, audit log).
    #[arg(long)]
    pub session: Option<PathBuf>,
    /// Continue the session in `--session` instead of creating one.
    #[arg(long, requires = "session")]
    pub resume: bool,
    /// Record elapsed seconds in the curve.
    #[arg(long)]
    pub wall_time: bool,
}

#[derive(Debug, clap::Args)]
pub struct ServeArgs {
    /// Root directory of session directories.
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: String,
    /// Crop image directory.
    #[arg(long)]
    pub crops: PathBuf,
    /// Root that pool paths in create requests resolve against.
    #[arg(long)]
    pub pools: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// `image_id,label,count,empty` rows predicted by the pipeline.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Ground truth in the same format.
    #[arg(long)]
    pub truth: PathBuf,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// CSV with header `crop_id,e0,e1,...`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    /// Output pool directory; must not exist yet.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 5000)]
    pub pool: usize,
    #[arg(long, default_value_t = 1000)]
    pub holdout: usize,
    /// Centre distance in units of the noise scale.
    #[arg(long, default_value_t = 2.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(a) => commands::ingest(&a),
        Command::Featurize(a) => featurize::run(&a),
        Command::Embed(a) => commands::embed(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Serve(a) => commands::serve(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::ExportEmbedding(a) => commands::export_embedding(&a),
        Command::Synth(a) => commands::synth(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            eprintln!("trapal: error: {line}");
            ExitCode::FAILURE
        }
    }
}
