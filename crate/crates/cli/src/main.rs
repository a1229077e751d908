//! `tdefumi`: simulate lanes, prescreen, cut alarms, train, classify, score
//! and plot, one stage per subcommand.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdefumi::alarms::{
    DEFAULT_BANDWIDTH_M, DEFAULT_HALO_M, DEFAULT_OFFSET, DEFAULT_RADIUS_M, DEFAULT_TOP_FRACTION,
};
use tdefumi::td_efumi::Pooling;

#[derive(Debug, Parser)]
#[command(
    name = "tdefumi",
    version,
    about = "TD-eFUMI target detection on wideband EMI lanes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic lanes and their ground truth.
    Simulate(SimulateArgs),
    /// Joint-pursuit confidence map for every lane.
    Prescreen(PrescreenArgs),
    /// Threshold the maps, cluster with mean shift and cut labelled alarms.
    Alarms(AlarmsArgs),
    /// Fit a TD-eFUMI model on the alarms of the training lanes.
    Train(TrainArgs),
    /// Score alarms with a saved model.
    Classify(ClassifyArgs),
    /// ROC curves and report, classifier against prescreener.
    Score(ScoreArgs),
    /// Overlay ROC curves in a static SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Explicit scene description (TOML); overrides --plan and --seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scene plan (TOML) turned into a scene with --seed.
    #[arg(long, conflicts_with = "config")]
    pub plan: Option<PathBuf>,
    /// Use the built-in inventory dominated by low-metal targets.
    #[arg(long, conflicts_with_all = ["config", "plan"])]
    pub lmt_dominant: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PrescreenArgs {
    /// Directory holding `lane_<id>.csv` files.
    #[arg(long)]
    pub lanes: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Samples on either side joined by the pursuit.
    #[arg(long, default_value_t = DEFAULT_OFFSET)]
    pub offset: usize,
    /// Relaxation atoms in the prescreening dictionary.
    #[arg(long, default_value_t = tdefumi::alarms::PRESCREEN_ATOMS)]
    pub atoms: usize,
}

#[derive(Debug, Args)]
pub struct AlarmsArgs {
    #[arg(long)]
    pub lanes: PathBuf,
    /// Directory written by `prescreen`.
    #[arg(long)]
    pub confidence: PathBuf,
    /// Ground truth used to label alarms; without it alarms stay unlabelled.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep this fraction of the most confident positions per lane.
    #[arg(long, default_value_t = DEFAULT_TOP_FRACTION, conflicts_with = "threshold")]
    pub top_fraction: f64,
    /// Absolute confidence threshold instead of a fraction.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_BANDWIDTH_M)]
    pub bandwidth: f64,
    #[arg(long, default_value_t = DEFAULT_RADIUS_M)]
    pub radius: f64,
    #[arg(long, default_value_t = DEFAULT_HALO_M)]
    pub halo: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub lanes: PathBuf,
    /// Directory written by `alarms`.
    #[arg(long)]
    pub alarms: PathBuf,
    /// Lane left out of training.
    #[arg(long)]
    pub test_lane: Option<u32>,
    /// Training settings (TOML); unset keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub lanes: PathBuf,
    #[arg(long)]
    pub alarms: PathBuf,
    /// Only score alarms on this lane.
    #[arg(long)]
    pub lane: Option<u32>,
    #[arg(long, value_enum, default_value = "max")]
    pub pooling: PoolingArg,
    /// Scores CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum PoolingArg {
    Max,
    Mean,
}

impl From<PoolingArg> for Pooling {
    fn from(p: PoolingArg) -> Self {
        match p {
            PoolingArg::Max => Pooling::Max,
            PoolingArg::Mean => Pooling::Mean,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Score files from `classify`; repeat to merge several.
    #[arg(long, required = true)]
    pub scores: Vec<PathBuf>,
    #[arg(long)]
    pub lanes: PathBuf,
    #[arg(long)]
    pub alarms: PathBuf,
    #[arg(long)]
    pub ground_truth: PathBuf,
    /// Drop alarms near clutter objects before scoring.
    #[arg(long)]
    pub ignore_clutter: bool,
    #[arg(long, default_value_t = DEFAULT_HALO_M)]
    pub halo: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// ROC CSV files; the legend uses their file stems.
    #[arg(long, required = true)]
    pub roc: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Prescreen(a) => commands::prescreen(&a),
        Command::Alarms(a) => commands::alarms(&a),
        Command::Train(a) => commands::train(&a),
        Command::Classify(a) => commands::classify(&a),
        Command::Score(a) => commands::score(&a),
        Command::Plot(a) => commands::plot(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
