mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::SynthArgs;
use config::{PipelineConfig, Seeds};
use error::Result;
use manifest::Run;

#[derive(Debug, Parser)]
#[command(name = "pdmc", version, about = "Dense correspondence and compression of mesh sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// JSON pipeline configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces every named seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Working directory for all stage outputs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render PDMs of the sequence and labeled PDMs of the training meshes.
    RenderPdm(Common),
    /// Train the descriptor network on the labeled training PDMs.
    TrainDescriptor(Common),
    /// Vote reference-to-frame vertex correspondences.
    Match(Common),
    /// Build the trajectory matrix and repair outlier correspondences.
    Refine(Common),
    /// Encode the refined trajectories into a clip file.
    Compress(Common),
    /// Decode the clip back into per-frame meshes.
    Decompress(Common),
    /// KG error, Hausdorff distance and correspondence-error curves.
    Evaluate(Common),
    /// Write a synthetic mesh sequence.
    Synth {
        #[command(flatten)]
        args: SynthArgs,
        #[arg(long, default_value = "sequence")]
        out: PathBuf,
    },
}

fn resolve(common: &Common) -> Result<PipelineConfig> {
    let mut config = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seeds = Seeds::all(seed);
    }
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    config.validate()?;
    Ok(config)
}

type Stage = fn(&PipelineConfig, &mut Run) -> Result<serde_json::Value>;

fn run_stage(name: &str, common: &Common, stage: Stage) -> Result<()> {
    let config = resolve(common)?;
    let mut run = Run::new(name, &config.to_json(), &config.out);
    if let Some(path) = &common.config {
        run.input(path)?;
    }
    let summary = stage(&config, &mut run)?;
    let manifest = run.commit(summary)?;
    println!("{}", serde_json::to_string_pretty(&manifest.summary)?);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::RenderPdm(c) => run_stage("render-pdm", &c, commands::render),
        Command::TrainDescriptor(c) => run_stage("train-descriptor", &c, commands::train_descriptor),
        Command::Match(c) => run_stage("match", &c, commands::match_frames),
        Command::Refine(c) => run_stage("refine", &c, commands::refine),
        Command::Compress(c) => run_stage("compress", &c, commands::compress),
        Command::Decompress(c) => run_stage("decompress", &c, commands::decompress),
        Command::Evaluate(c) => run_stage("evaluate", &c, commands::evaluate),
        Command::Synth { args, out } => {
            let mut run = Run::new("synth", &serde_json::to_string(&args)?, &out);
            let summary = commands::synth_sequence(&args, &out, &mut run)?;
            let manifest = run.commit(summary)?;
            println!("{}", serde_json::to_string_pretty(&manifest.summary)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pdmc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
