mod commands;
mod synthetic;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "semfuse", version, about = "Multi-view semantic label fusion pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the scene's pipeline.json.
#[derive(Args, Clone, Default)]
pub struct Overrides {
    /// Pipeline config (default: <scene>/pipeline.json).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// TSDF voxel size in meters.
    #[arg(long)]
    pub voxel: Option<f64>,
    /// TSDF truncation distance in meters.
    #[arg(long)]
    pub trunc: Option<f64>,
    /// Point cloud voxel size in meters.
    #[arg(long)]
    pub downsample: Option<f64>,
    /// Lifting occlusion tolerance in meters.
    #[arg(long)]
    pub occlusion_tol: Option<f64>,
    /// Minimum consensus weight for a pixel label.
    #[arg(long)]
    pub min_votes: Option<f64>,
    /// Colormap CSV (id,r,g,b).
    #[arg(long)]
    pub colormap: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Synchronize a raw recording into <scene>/synced.
    Sync {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Gravity alignment, TSDF fusion and point downsampling.
    Fuse {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Vote per-model predictions into per-frame consensus maps.
    Consensus {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Lift consensus labels onto the scene point cloud.
    Lift {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score predictions against ground truth; prints JSON.
    Eval {
        /// Ground truth: labeled PLY or directory of label PNGs.
        #[arg(long)]
        gt: PathBuf,
        /// Prediction: labeled PLY or directory of label PNGs.
        #[arg(long)]
        pred: PathBuf,
        /// Class groups CSV (group,id).
        #[arg(long)]
        groups: Option<PathBuf>,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the scene's pending tasks, one stage, or emit batch scripts.
    Run {
        #[arg(long)]
        scene: PathBuf,
        /// Run only this task (its dependencies must be done).
        #[arg(long)]
        stage: Option<String>,
        #[arg(long)]
        max_parallel: Option<usize>,
        /// Write one script per pending task under this directory instead of running.
        #[arg(long)]
        emit_scripts: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the per-task state table.
    Status {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Color-render label maps. Uses the scene's sources, or --input/--output.
    Render {
        #[arg(long, conflicts_with_all = ["input", "output"])]
        scene: Option<PathBuf>,
        #[arg(long, requires = "output")]
        input: Option<PathBuf>,
        #[arg(long, requires = "input")]
        output: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write a synthetic room recording with simulated models.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of raw color frames.
        #[arg(long, default_value_t = 60)]
        frames: usize,
    },
    /// Label a scene's cloud.ply from its synth.json into gt_cloud.ply and
    /// write ground-truth label maps for the synchronized frames.
    SynthGt {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Stand-in segmentation model: reads class-colored frames, writes
    /// corrupted 16-bit label maps.
    SimulateModel {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        colormap: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        /// Systematic confusion, as a:b. Repeatable.
        #[arg(long, value_parser = commands::parse_swap)]
        swap: Vec<(u16, u16)>,
        /// Added to every nonzero output id.
        #[arg(long, default_value_t = 0)]
        offset: u16,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEMFUSE_LOG", "info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sync { scene } => commands::sync(&scene),
        Command::Fuse { scene, overrides } => commands::fuse(&scene, &overrides),
        Command::Consensus { scene, overrides } => commands::consensus(&scene, &overrides),
        Command::Lift { scene, overrides } => commands::lift(&scene, &overrides),
        Command::Eval { gt, pred, groups, out } => commands::eval(&gt, &pred, groups.as_deref(), out.as_deref()),
        Command::Run {
            scene,
            stage,
            max_parallel,
            emit_scripts,
            overrides,
        } => commands::run(&scene, stage.as_deref(), max_parallel, emit_scripts.as_deref(), &overrides),
        Command::Status { scene, config } => commands::status(&scene, config.as_deref()),
        Command::Render {
            scene,
            input,
            output,
            overrides,
        } => commands::render(scene.as_deref(), input.as_deref(), output.as_deref(), &overrides),
        Command::Synth { out, seed, frames } => synthetic::synth(&out, seed, frames),
        Command::SynthGt { scene } => synthetic::synth_gt(&scene),
        Command::SimulateModel {
            input,
            output,
            colormap,
            seed,
            noise,
            swap,
            offset,
        } => synthetic::simulate_model(&input, &output, &colormap, seed, noise, swap, offset),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
