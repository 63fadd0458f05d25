//! Command-line front end: simulate bundles, run the streaming pipeline,
//! evaluate runs, print ablation tables and dynamic-map studies.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use dynrecon::io::{load_config, FullConfig};
use dynrecon::pipeline::PipelineConfig;
use dynrecon::Error;

mod evaluate;
mod layout;
mod run;

pub use layout::RunLayout;

#[derive(Debug, Parser)]
#[command(
    name = "dynrecon",
    version,
    about = "Dynamic-aware streaming reconstruction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a simulated sequence to an on-disk bundle.
    Simulate(SimulateArgs),
    /// Stream a sequence through the pipeline and write its outputs.
    Run(RunArgs),
    /// Score a run directory against a ground-truth bundle.
    Eval(EvalArgs),
    /// Base / R / R+M / R+S / Full over the standard simulated suite.
    Ablate(AblateArgs),
    /// Dynamic-map quality of stored runs or of a stratified simulated suite.
    Dynmap(DynmapArgs),
}

/// Scene selection shared by commands that simulate.
#[derive(Debug, Args)]
pub struct SceneArgs {
    /// TOML configuration (pipeline, scene and eval sections).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the scene seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the scene length.
    #[arg(long)]
    pub frames: Option<usize>,
}

/// Pipeline knobs layered over the configuration file.
#[derive(Debug, Args, Default)]
pub struct TuningArgs {
    /// Memory reset period in frames.
    #[arg(long)]
    pub reset_period: Option<usize>,
    /// Disable memory resets.
    #[arg(long)]
    pub no_reset: bool,
    /// Staticness sigmoid sensitivity.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Smoothing strength.
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Bundle directory to create.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Bundle to run on; its recorded scene drives the simulated backbone and
    /// its files are the ground truth.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Dual-branch gating (R).
    #[arg(long)]
    pub enable_r: bool,
    /// Reset alignment (M).
    #[arg(long)]
    pub enable_m: bool,
    /// State-aware smoothing (S).
    #[arg(long)]
    pub enable_s: bool,
    /// Skip metrics; keeps memory flat for very long runs.
    #[arg(long)]
    pub no_eval: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory written by `run`.
    #[arg(long)]
    pub run: PathBuf,
    /// Ground-truth bundle.
    #[arg(long)]
    pub gt: PathBuf,
    /// Configuration whose eval section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for metrics.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Number of consecutive seeds, starting at `--seed` (default 0).
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Directory for ablation.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct DynmapArgs {
    /// Run directories, paired in order with `--gt`.
    #[arg(long)]
    pub run: Vec<PathBuf>,
    #[arg(long)]
    pub gt: Vec<PathBuf>,
    /// Without runs: size of the stratified simulated suite.
    #[arg(long, default_value_t = 30)]
    pub suite: usize,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Pixel stride for the pooled AUC of the suite study.
    #[arg(long, default_value_t = 1)]
    pub pixel_stride: usize,
    /// Directory for dynmap.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

impl SceneArgs {
    /// Configuration file (or defaults) with the scene overrides applied.
    pub fn load(&self) -> anyhow::Result<FullConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => FullConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.scene.seed = s;
        }
        if let Some(n) = self.frames {
            cfg.scene.frame_count = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl TuningArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) -> anyhow::Result<()> {
        if let Some(p) = self.reset_period {
            cfg.reset.period = p;
        }
        if self.no_reset {
            cfg.reset.enabled = false;
        }
        if let Some(g) = self.gamma {
            cfg.dynid.gamma = g;
        }
        if let Some(l) = self.lambda {
            cfg.smooth.lambda = l;
        }
        cfg.validate()?;
        Ok(())
    }
}

pub fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(a) => run::simulate(&a),
        Command::Run(a) => run::run(&a),
        Command::Eval(a) => evaluate::eval(&a),
        Command::Ablate(a) => evaluate::ablate(&a),
        Command::Dynmap(a) => evaluate::dynmap(&a),
    }
}

/// Machine-readable description of a failure, printed on stderr.
pub fn error_summary(err: &anyhow::Error) -> Value {
    let mut summary = json!({
        "status": "error",
        "message": format!("{err:#}"),
    });
    let Some(mut e) = err.downcast_ref::<Error>() else {
        summary["kind"] = json!("other");
        return summary;
    };
    if let Error::Frame { frame, source } = e {
        summary["frame"] = json!(frame);
        e = &**source;
    }
    let kind = match e {
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::InvalidParameter(_) => "invalid_parameter",
        Error::Degenerate(_) => "degenerate",
        Error::OutOfRange { .. } => "out_of_range",
        Error::Insufficient(_) => "insufficient",
        Error::Parse { path, line, .. } => {
            summary["path"] = json!(path);
            summary["line"] = json!(line);
            "parse"
        }
        Error::Frame { .. } => "frame",
        Error::Config { key, constraint } => {
            summary["key"] = json!(key);
            summary["constraint"] = json!(constraint);
            "config"
        }
        Error::Image { path, .. } => {
            summary["path"] = json!(path);
            "image"
        }
        Error::Io { path, .. } => {
            summary["path"] = json!(path);
            "io"
        }
    };
    summary["kind"] = json!(kind);
    summary
}
