//! `lidarshape`: command-line front end for the recognition pipeline.
//!
//! Exit codes: 0 on success, 1 on a numerical failure inside an algorithm,
//! 2 on bad input or usage.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lidarshape::Error;

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "lidarshape", version, about = "Segmentation-free LiDAR object recognition")]
struct Cli {
    /// Config file of `key = value` lines; see --print-config for the keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key (`key=value`); applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Run seed; overrides `seed` from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// D2/A3/T3/R3 histograms for one cloud or every object of a manifest.
    Features(FeaturesArgs),
    /// Ground tiling and candidate-tile selection for a scene.
    Roi(RoiArgs),
    /// Align a group of objects into one frame.
    Align(AlignArgs),
    /// Within/across-category distance matrices and statistics.
    Eval(EvalArgs),
    /// Spin images, codebook encoding and part clustering for one cloud.
    Spin(SpinArgs),
    /// Generate synthetic objects, groups and scenes.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Cloud file (.xyz or .ply) or a `file_path,category` manifest (.csv).
    input: PathBuf,
    /// exact or hsd; overrides `feature.mode`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RoiArgs {
    scene: PathBuf,
    /// CSV with `tile_x,tile_y` columns naming positive training tiles.
    /// Without it only the basic filter runs.
    #[arg(long)]
    positives: Option<PathBuf>,
    /// Scene the positive tiles refer to; defaults to the input scene.
    #[arg(long)]
    train_scene: Option<PathBuf>,
    /// Class name of the model; when the positives CSV has a `class`
    /// column, only its rows with this class are used.
    #[arg(long)]
    class: Option<String>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    manifest: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    manifest: PathBuf,
    /// exact, hsd or both; overrides `feature.mode`.
    #[arg(long)]
    mode: Option<String>,
    /// average, smallest, biggest or all; overrides `strategy`.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpinArgs {
    cloud: PathBuf,
    /// Codebook file to encode with.
    #[arg(long, conflicts_with = "train", required_unless_present = "train")]
    codebook: Option<PathBuf>,
    /// Train a codebook from this cloud's spin images and write it.
    #[arg(long)]
    train: bool,
    /// Part clusters; overrides `spin.k`.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Labeled objects of several classes plus a manifest.
    Dataset {
        /// Comma-separated classes.
        #[arg(long, default_value = "sphere,cylinder,box")]
        classes: String,
        #[arg(long, default_value_t = 10)]
        per_class: usize,
        #[arg(long, default_value_t = 300)]
        points: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Copies of one object under random 4-DOF placements, with the truth.
    Group {
        #[arg(long, default_value = "car")]
        class: String,
        #[arg(long, default_value_t = 4)]
        copies: usize,
        #[arg(long, default_value_t = 300)]
        points: usize,
        /// Largest translation per axis (m).
        #[arg(long, default_value_t = 0.3)]
        max_shift: f64,
        /// Largest yaw (degrees).
        #[arg(long, default_value_t = 15.0)]
        max_yaw: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// A flat street scene with planted objects and their tiles.
    Scene {
        /// Comma-separated classes, one object each; defaults to a mixed
        /// street.
        #[arg(long)]
        objects: Option<String>,
        #[arg(long, default_value_t = 40.0)]
        extent: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn build_config(cli: &Cli) -> lidarshape::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> lidarshape::Result<()> {
    let cfg = build_config(&cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidConfig("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    if cli.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    match cli.command {
        None => Err(Error::InvalidConfig("no command given; see --help".into())),
        Some(Command::Features(a)) => commands::features(&cfg, &a),
        Some(Command::Roi(a)) => commands::roi(&cfg, &a),
        Some(Command::Align(a)) => commands::align(&cfg, &a),
        Some(Command::Eval(a)) => commands::eval(&cfg, &a),
        Some(Command::Spin(a)) => commands::spin(&cfg, &a),
        Some(Command::Synth(s)) => commands::synth(&cfg, &s),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
