//! Command-line front end: argument parsing, configuration merging and the
//! `propose`, `detect`, `cluster`, `segment-prior`, `synth` and `eval` commands.

pub mod classifier;
pub mod commands;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vidprop::config::{ClassifierSpec, ClusterCount};
use vidprop::PipelineConfig;

pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "vidprop",
    version,
    about = "Video object proposals, streaming clustering and label propagation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ranked proposals per frame.
    Propose(RunArgs),
    /// Classify new clusters and propagate labels to the rest.
    Detect(RunArgs),
    /// Streaming cluster assignment of every proposal.
    Cluster(RunArgs),
    /// Foreground masks from each frame's cluster members.
    SegmentPrior(SegmentArgs),
    /// Render synthetic videos with ground truth and exact flow.
    Synth(SynthArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
}

/// Pipeline settings; flags override values from `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON configuration file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "F")]
    pub lambda: Option<f64>,
    #[arg(long, value_name = "N")]
    pub subseq_len: Option<usize>,
    /// Clusters per sub-sequence: a number, `auto` or `motion`.
    #[arg(long, value_name = "N|auto")]
    pub k: Option<String>,
    #[arg(long, value_name = "F")]
    pub rho: Option<f64>,
    #[arg(long, value_name = "F")]
    pub tau_kl: Option<f64>,
    #[arg(long, value_name = "N")]
    pub max_proposals: Option<usize>,
    /// `oracle`, `always` or `cmd:PATH`.
    #[arg(long, value_name = "SPEC")]
    pub classifier: Option<String>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    /// The configuration file (or defaults) with flag overrides applied, validated.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path).map_err(|e| match e {
                vidprop::Error::Io { .. } => CliError::Core(e),
                e => CliError::Config(format!("{}: {e}", path.display())),
            })?,
            None => PipelineConfig::default(),
        };
        let bad = |e: vidprop::Error| CliError::Config(e.to_string());
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.subseq_len {
            cfg.subseq_len = v;
        }
        if let Some(v) = &self.k {
            cfg.k = v.parse::<ClusterCount>().map_err(bad)?;
        }
        if let Some(v) = self.rho {
            cfg.rho = v;
        }
        if let Some(v) = self.tau_kl {
            cfg.tau_kl = v;
        }
        if let Some(v) = self.max_proposals {
            cfg.max_proposals = v;
        }
        if let Some(v) = &self.classifier {
            cfg.classifier = v.parse::<ClassifierSpec>().map_err(bad)?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate().map_err(bad)?;
        Ok(cfg)
    }
}

/// Frame inputs shared by the pipeline commands.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Directory of numbered `.ppm` frames.
    #[arg(long, value_name = "DIR")]
    pub frames: PathBuf,
    /// Directory of `.flo` flows between consecutive frames; block matching otherwise.
    #[arg(long, value_name = "DIR")]
    pub flow: Option<PathBuf>,
    /// Directory of `.pgm` spatial edge maps used instead of the built-in detector.
    #[arg(long, value_name = "DIR")]
    pub edges: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory; JSON lines go to stdout when omitted.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Cluster records from `cluster`; clustering runs first when omitted.
    #[arg(long, value_name = "PATH")]
    pub clusters: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// JSON synthetic video description.
    #[arg(
        long,
        value_name = "PATH",
        conflicts_with = "suite",
        required_unless_present = "suite"
    )]
    pub spec: Option<PathBuf>,
    /// Write a seeded suite of this many videos instead.
    #[arg(long, value_name = "N")]
    pub suite: Option<usize>,
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Recall,
    Purity,
    Consistency,
    Detection,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub mode: EvalMode,
    /// JSON lines: proposals, cluster records or detections, by mode.
    #[arg(long, value_name = "PATH")]
    pub predictions: PathBuf,
    /// Ground truth as written by `synth`.
    #[arg(long, value_name = "PATH")]
    pub gt: PathBuf,
    /// Proposals per frame counted by `recall`.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// Also write `metrics.json` here.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Propose(a) => commands::propose(&a),
        Command::Detect(a) => commands::detect(&a),
        Command::Cluster(a) => commands::cluster(&a),
        Command::SegmentPrior(a) => commands::segment_prior(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Eval(a) => commands::eval(&a),
    }
}
