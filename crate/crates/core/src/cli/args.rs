use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "bdpnp", version, about = "Bidirectional depth-augmented PnP pose refinement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One BD-PnP solve per object on oracle or file-provided revisions.
    Solve(SolveArgs),
    /// The full inner/outer refinement loop.
    Refine(RefineArgs),
    /// MSSD, MSPD and VSD of predicted poses, with recall.
    Eval(EvalArgs),
    /// Finite-difference check of the solver gradients.
    Gradcheck(GradcheckArgs),
    /// Accuracy and runtime over a grid of inner and outer loop counts.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Rgbd,
    Rgb,
}

/// Flags shared by every subcommand. Flags win over `--config`.
#[derive(Clone, Debug, Default, Args)]
pub struct CommonArgs {
    /// Scene bundle directory; a synthetic suite is used when absent.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Object model (PLY) overriding the bundle's or the synthetic one.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Run configuration, TOML or JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Synthetic suite size.
    #[arg(long)]
    pub objects: Option<usize>,
    /// Factor applied to model coordinates read from disk.
    #[arg(long)]
    pub unit_scale: Option<f64>,
    #[arg(long)]
    pub inner: Option<usize>,
    #[arg(long)]
    pub outer: Option<usize>,
    /// Gauss-Newton iterations per solve.
    #[arg(long, visible_alias = "iters")]
    pub gn_iters: Option<usize>,
    /// Rendered views per outer iteration.
    #[arg(long)]
    pub views: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Oracle coordinate noise in grid pixels.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Oracle outlier rate.
    #[arg(long)]
    pub outliers: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Also write the per-iteration trace as JSON lines.
    #[arg(long)]
    pub trace: bool,
    /// Solve a problem file instead of assembling one from a scene.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Write each assembled problem next to the results.
    #[arg(long)]
    pub save_problems: bool,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated initial rotation errors in degrees; enables the sweep.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Predicted poses: a `poses.json` from `refine` or a list of 4×4 matrices.
    #[arg(long)]
    pub pred: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Pixels per field of each random problem.
    #[arg(long)]
    pub pixels: Option<usize>,
    /// Number of random problems.
    #[arg(long)]
    pub problems: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated inner loop counts.
    #[arg(long, value_delimiter = ',')]
    pub inner_grid: Option<Vec<usize>>,
    /// Comma-separated outer loop counts.
    #[arg(long, value_delimiter = ',')]
    pub outer_grid: Option<Vec<usize>>,
}
