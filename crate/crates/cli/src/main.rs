//! `mobman`: anchoring, demonstration processing, toy diffusion training and
//! simulated latency ablations as reproducible runs.
//!
//! Every command writes `manifest.json` next to its outputs. Exit codes are
//! 0 on success, 1 when the input is rejected on domain grounds and 2 for
//! usage errors.

mod aggregate;
mod commands;
mod error;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mobman_core::sim::{LabelFrame, ScenarioId};
use serde::{Deserialize, Serialize};

use error::CliError;
use manifest::{RunInfo, RunManifest};

#[derive(Parser, Debug)]
#[command(
    name = "mobman",
    version,
    about = "Demonstration processing and latency-aware execution runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate synthetic raw sessions from the scripted expert
    GenSession(GenArgs),
    /// Estimate the cross-node transform of each session from board detections
    Anchor(AnchorArgs),
    /// Turn anchored raw sessions into the 10 Hz chest-relative dataset
    Process(ProcessArgs),
    /// Train the toy denoiser on a dataset
    TrainToy(TrainArgs),
    /// Run seeded closed-loop episodes and write metrics
    Simulate(SimulateArgs),
    /// Render metrics files as markdown, plain text and SVG
    Report(ReportArgs),
    /// Rerun a manifest into a new directory and compare output hashes
    Replay(ReplayArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Noise {
    None,
    Noisy,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OnOff {
    On,
    Off,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicySource {
    /// Stage-goal expert law rolled out into chunks
    Scripted,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GenArgs {
    #[arg(long, default_value = "nav_reach")]
    pub scenario: ScenarioId,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of sessions; more than one writes `session_NNN` subdirectories
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,
    #[arg(long, value_enum, default_value = "noisy")]
    pub noise: Noise,
    /// Replace one hand sample's covariance trace with this value
    #[arg(long)]
    pub cov_spike: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct AnchorArgs {
    /// A session directory or a directory of sessions
    #[arg(long)]
    pub session: PathBuf,
    /// Covariance trace above which detections are discarded, m^2
    #[arg(long)]
    pub cov_threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ProcessArgs {
    /// A session directory or a directory of sessions
    #[arg(long)]
    pub raw: PathBuf,
    /// `anchor.json` written by the anchor command
    #[arg(long)]
    pub anchor: PathBuf,
    /// Gripper calibration; defaults to each session's `calib.json`
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Skip Savitzky-Golay smoothing
    #[arg(long)]
    pub no_smooth: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrainArgs {
    /// `dataset.jsonl` from process, or JSONL of `{"cond": [...], "a0": [...]}`
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.9999)]
    pub ema_decay: f64,
    /// Diffusion steps K of the cosine schedule
    #[arg(long, default_value_t = 100)]
    pub schedule_steps: usize,
    /// Chunk length when building examples from a processed dataset
    #[arg(long, default_value_t = 16)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: Option<ScenarioId>,
    #[arg(long, value_enum, default_value = "scripted")]
    pub policy: PolicySource,
    #[arg(long, value_enum)]
    pub matching: Option<OnOff>,
    #[arg(long)]
    pub label: Option<LabelFrame>,
    /// Run all four label x matching conditions
    #[arg(long, conflicts_with_all = ["matching", "label"])]
    pub matrix: bool,
    /// Total latency, split in the default input/net/execution proportions
    #[arg(long)]
    pub latency_ms: Option<u64>,
    /// Gaussian jitter on the planner leg, ms
    #[arg(long)]
    pub jitter_ms: Option<f64>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON file overriding parts of the episode configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write one JSONL event log per episode
    #[arg(long)]
    pub logs: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReportArgs {
    /// `aggregate.json` or `episodes.csv` files from simulate
    #[arg(long, num_args = 1.., required = true)]
    pub metrics: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::GenSession(_) => "gen-session",
            Self::Anchor(_) => "anchor",
            Self::Process(_) => "process",
            Self::TrainToy(_) => "train-toy",
            Self::Simulate(_) => "simulate",
            Self::Report(_) => "report",
            Self::Replay(_) => "replay",
        }
    }

    pub fn out(&self) -> &Path {
        match self {
            Self::GenSession(a) => &a.out,
            Self::Anchor(a) => &a.out,
            Self::Process(a) => &a.out,
            Self::TrainToy(a) => &a.out,
            Self::Simulate(a) => &a.out,
            Self::Report(a) => &a.out,
            Self::Replay(a) => &a.out,
        }
    }

    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            Self::GenSession(a) => a.out = out,
            Self::Anchor(a) => a.out = out,
            Self::Process(a) => a.out = out,
            Self::TrainToy(a) => a.out = out,
            Self::Simulate(a) => a.out = out,
            Self::Report(a) => a.out = out,
            Self::Replay(a) => a.out = out,
        }
    }
}

/// Runs one command and writes its manifest.
pub fn execute(cmd: &Command) -> Result<RunManifest, CliError> {
    if let Command::Replay(r) = cmd {
        return commands::replay::run(r);
    }
    let out = cmd.out();
    fs::create_dir_all(out)?;
    let info: RunInfo = match cmd {
        Command::GenSession(a) => commands::gen::run(a)?,
        Command::Anchor(a) => commands::anchor::run(a)?,
        Command::Process(a) => commands::process::run(a)?,
        Command::TrainToy(a) => commands::train::run(a)?,
        Command::Simulate(a) => commands::simulate::run(a)?,
        Command::Report(a) => commands::report::run(a)?,
        Command::Replay(_) => unreachable!("handled above"),
    };
    let m = RunManifest {
        command: cmd.name().into(),
        args: serde_json::to_value(cmd)?,
        config: info.config,
        seeds: info.seeds,
        inputs: manifest::hash_inputs(&info.inputs)?,
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        outputs: manifest::hash_outputs(out)?,
        status: match &info.rejected {
            None => "ok".into(),
            Some(m) => format!("rejected: {m}"),
        },
    };
    manifest::write(out, &m)?;
    match info.rejected {
        None => Ok(m),
        Some(msg) => Err(CliError::Rejected(msg)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mobman {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
