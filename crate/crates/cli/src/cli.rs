use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Sound-field reconstruction pipeline: modal simulation, datasets, a
/// complex-valued U-Net, the kernel ridge baseline and NMSE sweeps.
///
/// Every numeric flag can also be set in a `--config` file of `key = value`
/// lines (`#` comments, snake_case keys, comma-separated lists). Flags win.
#[derive(Debug, Parser)]
#[command(name = "rtfrec", version)]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one room: record file, magnitude/phase images and a CSV slice.
    Simulate(SimulateArgs),
    /// Generate a dataset directory of simulated rooms.
    GenDataset(GenArgs),
    /// Train the complex U-Net on a dataset.
    Train(TrainArgs),
    /// Score one method on a dataset split.
    Eval(EvalArgs),
    /// Score several methods on the same sweep and plot them together.
    Compare(CompareArgs),
    /// Render metric CSV files as line charts.
    Plots(PlotsArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Overwrite a nonempty output directory.
    #[arg(long)]
    pub force: bool,

    /// Resolve and print the configuration, then stop.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,

    /// Room dimensions Lx Ly Lz in metres.
    #[arg(long, num_args = 3, value_names = ["LX", "LY", "LZ"])]
    pub room: Vec<f64>,

    /// Source position x y z in metres.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"])]
    pub source: Vec<f64>,

    /// Reverberation time in seconds [default: 1.0].
    #[arg(long)]
    pub t60: Option<f64>,

    /// Frequency of the images and CSV slice in Hz [default: 100].
    #[arg(long)]
    pub freq: Option<f64>,

    /// Height of the measurement plane [default: Lz/2].
    #[arg(long)]
    pub z_plane: Option<f64>,

    /// Grid points along x [default: 32].
    #[arg(long)]
    pub grid_w: Option<usize>,

    /// Grid points along y [default: 32].
    #[arg(long)]
    pub grid_h: Option<usize>,

    /// Number of band frequencies stored in the record [default: 40].
    #[arg(long)]
    pub k: Option<usize>,

    /// Lower band edge in Hz [default: 30].
    #[arg(long)]
    pub f_lo: Option<f64>,

    /// Upper band edge in Hz [default: 300].
    #[arg(long)]
    pub f_hi: Option<f64>,

    /// Highest mode frequency included in the modal sum [default: 400].
    #[arg(long)]
    pub f_cutoff: Option<f64>,

    /// Damping term: wavenumber_scaled or literal [default: wavenumber_scaled].
    #[arg(long)]
    pub damping: Option<String>,

    /// Speed of sound in m/s [default: 343].
    #[arg(long)]
    pub speed_of_sound: Option<f64>,

    /// Microphones in the stored mask [default: every grid point].
    #[arg(long)]
    pub mics: Option<usize>,

    /// Seed of the mask draw, stored in the record [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,

    /// Number of rooms [default: 5000].
    #[arg(long)]
    pub n_rooms: Option<usize>,

    /// Fraction of rooms in the training split [default: 0.75].
    #[arg(long)]
    pub split: Option<f64>,

    /// T60 values rooms are drawn from [default: 0.4,0.6,...,1.6].
    #[arg(long, value_delimiter = ',')]
    pub t60: Vec<f64>,

    /// Microphone counts masks are drawn from [default: 5,10,15,35,55].
    #[arg(long, value_delimiter = ',')]
    pub mics: Vec<usize>,

    /// Frequencies per record [default: 40].
    #[arg(long)]
    pub k: Option<usize>,

    /// Lower band edge in Hz [default: 30].
    #[arg(long)]
    pub f_lo: Option<f64>,

    /// Upper band edge in Hz [default: 300].
    #[arg(long)]
    pub f_hi: Option<f64>,

    /// Dataset seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,

    /// Grid points along x [default: 32].
    #[arg(long)]
    pub grid_w: Option<usize>,

    /// Grid points along y [default: 32].
    #[arg(long)]
    pub grid_h: Option<usize>,

    /// Highest mode frequency included in the modal sum [default: 400].
    #[arg(long)]
    pub f_cutoff: Option<f64>,

    /// Damping term: wavenumber_scaled or literal [default: wavenumber_scaled].
    #[arg(long)]
    pub damping: Option<String>,

    /// Speed of sound in m/s [default: 343].
    #[arg(long)]
    pub speed_of_sound: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,

    /// Dataset directory written by gen-dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Learning rate [default: 0.001].
    #[arg(long)]
    pub lr: Option<f64>,

    /// Mini-batch size [default: 32].
    #[arg(long)]
    pub batch: Option<usize>,

    /// Epoch limit [default: 5000].
    #[arg(long)]
    pub max_epochs: Option<usize>,

    /// Epochs without validation improvement before stopping [default: 100].
    #[arg(long)]
    pub patience: Option<usize>,

    /// Adam beta1 [default: 0.9].
    #[arg(long)]
    pub beta1: Option<f64>,

    /// Adam beta2 [default: 0.999].
    #[arg(long)]
    pub beta2: Option<f64>,

    /// Adam epsilon [default: 1e-8].
    #[arg(long)]
    pub eps: Option<f64>,

    /// Seed of weight initialization, mask resampling and shuffling [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,

    /// Divide every layer width by this (1 = full size) [default: 1].
    #[arg(long)]
    pub width_divisor: Option<usize>,

    /// Draw fresh masks every epoch [default: true].
    #[arg(long)]
    pub resample_masks: Option<bool>,

    /// Write last.ckpt every N epochs (0 = only at the end) [default: 10].
    #[arg(long)]
    pub checkpoint_every: Option<usize>,

    /// Continue from a trainer checkpoint (last.ckpt).
    #[arg(long)]
    pub resume: Option<PathBuf>,

    /// Train and validate on the training split (overfit check).
    #[arg(long)]
    pub overfit: Option<bool>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Network checkpoint, required for the cvnn method.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Sweep: mics, t60 or none (stored masks) [default: mics].
    #[arg(long)]
    pub sweep: Option<String>,

    /// Microphone counts of a mics sweep [default: 5,10,15,35,55].
    #[arg(long, value_delimiter = ',')]
    pub mics: Vec<usize>,

    /// T60 levels of a t60 sweep [default: 0.4,0.6,...,1.6].
    #[arg(long, value_delimiter = ',')]
    pub t60: Vec<f64>,

    /// Microphones per room in a t60 sweep [default: 55].
    #[arg(long)]
    pub m: Option<usize>,

    /// Kernel ridge regularization [default: 0.01].
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Records to score: validation, train or all [default: validation].
    #[arg(long)]
    pub split: Option<String>,

    /// Use only the first N records of the split.
    #[arg(long)]
    pub limit: Option<usize>,

    /// Seed of the evaluation masks [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,

    /// Method: kernel or cvnn [default: kernel].
    #[arg(long)]
    pub method: Option<String>,

    #[command(flatten)]
    pub sweep: SweepArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,

    /// Methods to compare [default: kernel,cvnn].
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,

    #[command(flatten)]
    pub sweep: SweepArgs,
}

#[derive(Debug, Args)]
pub struct PlotsArgs {
    /// Metric CSV files written by eval or compare.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,

    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}
