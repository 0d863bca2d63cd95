mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qabias_core::stats::{BootstrapConfig, Metric};

#[derive(Parser, Debug)]
#[command(name = "qabias", version, about = "Measure prediction bias of extractive QA models")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GlobalOpts {
    /// Seed for bootstrap and resampling streams
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Bootstrap trials per group
    #[arg(long, global = true, default_value_t = 100)]
    pub trials: usize,
    /// Samples drawn per bootstrap trial
    #[arg(long, global = true, default_value_t = 800)]
    pub sample_size: usize,
    #[arg(long, global = true, default_value_t = 0.025)]
    pub q_lo: f64,
    #[arg(long, global = true, default_value_t = 0.975)]
    pub q_hi: f64,
    /// em or f1
    #[arg(long, global = true, default_value = "em", value_parser = Metric::from_str)]
    pub metric: Metric,
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl GlobalOpts {
    pub fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig {
            trials: self.trials,
            sample_size: self.sample_size,
            q_lo: self.q_lo,
            q_hi: self.q_hi,
            seed: self.seed,
        }
    }
}

/// A fixed threshold, or `auto` for the shipped per-heuristic default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdArg {
    Auto,
    Value(f64),
}

impl FromStr for ThresholdArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(ThresholdArg::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(ThresholdArg::Value(v)),
            _ => Err(format!("`{s}` is neither a number nor `auto`")),
        }
    }
}

impl Serialize for ThresholdArg {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ThresholdArg::Auto => s.serialize_str("auto"),
            ThresholdArg::Value(v) => s.serialize_f64(*v),
        }
    }
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Compute one attribute table (or all seven with `--heuristic all`)
    Attributes(AttributesArgs),
    /// Measure bias at a fixed threshold or by grid search
    Measure(MeasureArgs),
    /// Supersample the underrepresented group until both groups match
    Resample(SplitArgs),
    /// Bias of human annotators, using alternative gold answers as predictions
    Human(SplitArgs),
    /// Per-heuristic bias change of variant models against a baseline
    CrossBias(CrossBiasArgs),
    /// Synthetic dataset with a planted gap, plus the expected bias
    Synth(SynthArgs),
    /// Tables and a bar chart from measurement files
    Report(ReportArgs),
    /// Full-dataset scores of several models on several datasets
    Evaluate(EvaluateArgs),
    /// Write both groups of a split as separate dataset files
    ExportSplits(SplitArgs),
    /// Rerun a command from its manifest
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AttributesArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Heuristic name, or `all` (then `--out` is a directory)
    #[arg(long)]
    pub heuristic: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Entity/subject annotation sidecar
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Rule-based annotations for samples the sidecar does not cover
    #[arg(long)]
    pub fallback_annotator: bool,
    /// Replaces the wh-word to entity-label table
    #[arg(long)]
    pub entity_mapping: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MeasureArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub attributes: PathBuf,
    /// Number or `auto`
    #[arg(long, required_unless_present = "search", conflicts_with = "search")]
    pub threshold: Option<ThresholdArg>,
    /// Search the threshold grid; also writes `<out>.trace.json`
    #[arg(long)]
    pub search: bool,
    /// Defaults to the predictions file stem
    #[arg(long)]
    pub model_name: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub attributes: PathBuf,
    /// Number or `auto`
    #[arg(long)]
    pub threshold: ThresholdArg,
    /// Output file (`resample`, `human`) or directory (`export-splits`)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CrossBiasArgs {
    /// Directory of baseline measurement files
    #[arg(long)]
    pub baseline: PathBuf,
    /// `NAME=DIR`, or `DIR` named after the directory; repeatable
    #[arg(long, required = true)]
    pub variant: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SynthArgs {
    /// JSON planting spec; missing fields take their defaults
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Monte-Carlo replications for the expected bias
    #[arg(long, default_value_t = 1000)]
    pub replications: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ReportArgs {
    /// Measurement files or directories of them
    #[arg(long, required = true, num_args = 1..)]
    pub measurements: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EvaluateArgs {
    /// Evaluation datasets; the first is the reference column
    #[arg(long, required = true)]
    pub dataset: Vec<PathBuf>,
    /// `MODEL=FILE`; repeat a model to merge several prediction files
    #[arg(long, required = true)]
    pub predictions: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<qabias_core::Error>())
        .map_or(3, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse_from(&argv);
    if let Err(e) = commands::install_workers(cli.global.workers) {
        eprintln!("error[usage]: {e:#}");
        return ExitCode::from(2);
    }
    match commands::run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let kind = match code {
                2 => "usage",
                4 => "io",
                _ => "validation",
            };
            eprintln!("error[{kind}]: {e:#}");
            ExitCode::from(code)
        }
    }
}
