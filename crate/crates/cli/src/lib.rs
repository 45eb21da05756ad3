//! `mvdet` command-line front end. Every subcommand reads KITTI-layout
//! inputs, writes its artifacts under `--out`, and copies the effective
//! configuration there as `config.toml`.

pub mod commands;
pub mod config;
pub mod error;
pub mod grid;
pub mod layout;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "mvdet", version, about = "Multi-view 3D detection pipeline tools")]
pub struct Cli {
    /// TOML configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed (and MVDET_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for frame-level parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// More logging; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

/// One frame of a KITTI-layout directory.
#[derive(Debug, Clone, Args)]
pub struct FrameArgs {
    /// Directory with velodyne/, calib/, planes/, image_2/ and label_2/.
    #[arg(long)]
    pub frame_dir: PathBuf,
    /// Frame id, e.g. 000042.
    #[arg(long)]
    pub id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentKind {
    Lambda,
    Mask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProposalKind {
    Perturb,
    DepthAligned,
    Random,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rasterize a point cloud into the six BEV channels.
    Bev {
        #[command(flatten)]
        frame: FrameArgs,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Foreground masks of proposals, as CSV and image overlays.
    Mask {
        #[command(flatten)]
        frame: FrameArgs,
        /// Proposals in KITTI result format.
        #[arg(long)]
        proposals: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-view label agreement of proposals against ground truth.
    LabelStats {
        /// KITTI-layout root with the ground truth.
        #[arg(long)]
        frame_dir: PathBuf,
        /// Directory of KITTI result files named by frame id.
        #[arg(long)]
        proposals_dir: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write synthetic scenes in the KITTI layout.
    GenScenes {
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Also write proposals of this kind under proposals/.
        #[arg(long)]
        proposals: Option<ProposalKind>,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the toy header under an ablation and report held-out metrics.
    Experiment {
        #[arg(long)]
        kind: ExperimentKind,
        /// Sub-loss ratios compared by the lambda ablation.
        #[arg(long, num_args = 2, value_delimiter = ',', default_values_t = [0.001, 1.0])]
        ratios: Vec<f64>,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Average precision of detections per difficulty.
    EvalAp {
        /// Ground-truth root with label_2/ and calib/.
        #[arg(long)]
        gt_dir: PathBuf,
        /// Directory of KITTI result files named by frame id.
        #[arg(long)]
        det_dir: PathBuf,
        #[arg(long, default_value = "Car")]
        class: mvdet_core::ObjectClass,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Mirror a frame left to right.
    Flip {
        #[command(flatten)]
        frame: FrameArgs,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// PCA colour jitter of every image in a directory.
    Jitter {
        /// KITTI-layout root; every image_2/ PNG is jittered.
        #[arg(long)]
        frame_dir: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    pub fn out_dir(&self) -> &std::path::Path {
        match self {
            Command::Bev { out, .. }
            | Command::Mask { out, .. }
            | Command::LabelStats { out, .. }
            | Command::GenScenes { out, .. }
            | Command::Experiment { out, .. }
            | Command::EvalAp { out, .. }
            | Command::Flip { out, .. }
            | Command::Jitter { out, .. } => out,
        }
    }
}

/// Loads and validates the configuration, then runs the command.
pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    let env = std::env::var(config::SEED_ENV).ok();
    cfg.resolve_seed(cli.seed, env.as_deref())?;
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    commands::check_inputs(&cli.command)?;
    let out = cli.command.out_dir();
    layout::write_file(&out.join("config.toml"), cfg.to_toml().as_bytes())?;
    pool.install(|| commands::dispatch(&cli.command, &cfg))
}
