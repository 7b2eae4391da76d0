use std::path::PathBuf;

use ccmx::experiment::ExperimentId;
use ccmx::loss::LossKind;
use ccmx::Domain;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "ccmx", version, about = "Roughness calibration and CCM extrapolation")]
pub struct Cli {
    /// Worker threads for the forward and gradient passes (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "kebab-case")]
pub enum Command {
    /// Ground-truth CCMs from the scene's tile materials.
    GenerateTruth(TruthArgs),
    /// Fit roughness coefficients to a training CCM.
    Calibrate(CalibrateArgs),
    /// Predict a CCM from a calibration checkpoint.
    Extrapolate(ExtrapolateArgs),
    /// Compare a predicted CCM against a reference.
    Evaluate(EvaluateArgs),
    /// Run one of the reference experiments end to end.
    Reproduce(ReproduceArgs),
    /// Re-run the command recorded in a manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TruthArgs {
    #[arg(long, default_value = "scenes/paper.scene")]
    pub scene: PathBuf,
    /// Areas to generate, comma separated; area `i` uses seed `seed + i`.
    #[arg(long, value_delimiter = ',', default_value = "train,test")]
    pub areas: Vec<String>,
    #[arg(long, default_value = "frequency", value_parser = parse_domain)]
    pub domain: Domain,
    #[arg(long, default_value_t = 512)]
    pub n_mc: usize,
    #[arg(long, default_value_t = 20_240_601)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CalibrateArgs {
    #[arg(long, default_value = "scenes/paper.scene")]
    pub scene: PathBuf,
    /// Training CCM file.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long, default_value = "train")]
    pub area: String,
    /// `mmse` or `frobenius`; defaults to the one paired with the CCM domain.
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    #[arg(long, default_value_t = 100.0)]
    pub snr: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub n_mc: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    /// Defaults to 300 for frequency training CCMs, 600 for spatial ones.
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, default_value_t = 30)]
    pub window: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub rel_tol: f64,
    /// Continue from an earlier checkpoint instead of a random start.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ExtrapolateArgs {
    #[arg(long, default_value = "scenes/paper.scene")]
    pub scene: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    pub area: String,
    #[arg(long, default_value = "frequency", value_parser = parse_domain)]
    pub domain: Domain,
    #[arg(long, default_value_t = 512)]
    pub n_mc: usize,
    #[arg(long, default_value_t = 4_242)]
    pub seed: u64,
    /// Draw positions and phases from the calibration streams, which
    /// reproduces the training estimate when area and seed match.
    #[arg(long)]
    pub calibration_draws: bool,
    /// Also write the paths and gains at the first sampled position.
    #[arg(long)]
    pub dump_paths: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    /// Reference CCM.
    #[arg(long)]
    pub truth: PathBuf,
    /// Predicted CCM.
    #[arg(long)]
    pub estimate: PathBuf,
    /// Earlier prediction to report the mismatch reduction against.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long, default_value_t = 100.0)]
    pub snr: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReproduceArgs {
    #[arg(value_parser = parse_experiment)]
    pub experiment: ExperimentId,
    #[arg(long, default_value = "scenes/paper.scene")]
    pub scene: PathBuf,
    /// Calibration seed (positions, phases, initial coefficients).
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 20_240_601)]
    pub truth_seed: u64,
    #[arg(long, default_value_t = 512)]
    pub truth_n_mc: usize,
    #[arg(long, default_value_t = 4_242)]
    pub eval_seed: u64,
    #[arg(long, default_value_t = 512)]
    pub eval_n_mc: usize,
    #[arg(long, default_value_t = 64)]
    pub n_mc: usize,
    #[arg(long, default_value_t = 100.0)]
    pub snr: f64,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Record the test-area metric at every iteration.
    #[arg(long)]
    pub track_test: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_domain(s: &str) -> Result<Domain, String> {
    s.parse().map_err(|e: ccmx::Error| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: ccmx::Error| e.to_string())
}

fn parse_experiment(s: &str) -> Result<ExperimentId, String> {
    s.parse().map_err(|e: ccmx::Error| e.to_string())
}

impl Command {
    pub fn out_dir(&self) -> Option<&PathBuf> {
        match self {
            Command::GenerateTruth(a) => Some(&a.out),
            Command::Calibrate(a) => Some(&a.out),
            Command::Extrapolate(a) => Some(&a.out),
            Command::Evaluate(a) => Some(&a.out),
            Command::Reproduce(a) => Some(&a.out),
            Command::Replay(_) => None,
        }
    }

    pub fn set_out_dir(&mut self, dir: PathBuf) {
        match self {
            Command::GenerateTruth(a) => a.out = dir,
            Command::Calibrate(a) => a.out = dir,
            Command::Extrapolate(a) => a.out = dir,
            Command::Evaluate(a) => a.out = dir,
            Command::Reproduce(a) => a.out = dir,
            Command::Replay(_) => {}
        }
    }
}
