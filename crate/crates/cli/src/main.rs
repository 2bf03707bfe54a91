//! `ledgerscope` command-line entry point.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ledgerscope::features::VideoPolicy;

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\ncheckpoint format: 1",
    "\nfeature widths: hashtags 768, comments 768, images 2560",
);

#[derive(Debug, Parser)]
#[command(name = "ledgerscope", version, long_version = LONG_VERSION)]
#[command(about = "Flag posts that advertise untaxed trade, and rank them for review")]
pub struct Cli {
    /// Master seed; overrides any seed in a config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,
    /// How video posts are turned into image features.
    #[arg(long, global = true, value_enum, default_value_t = VideoArg::Noise)]
    pub video_policy: VideoArg,
    /// Directory that relative image paths resolve against. Defaults to
    /// the directory recorded by `split`, else the input file's directory.
    #[arg(long, global = true)]
    pub image_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VideoArg {
    Noise,
    Zero,
}

impl From<VideoArg> for VideoPolicy {
    fn from(v: VideoArg) -> Self {
        match v {
            VideoArg::Noise => VideoPolicy::Noise,
            VideoArg::Zero => VideoPolicy::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureSource {
    /// Hashed text vectors and image cell statistics.
    Baseline,
    /// Precomputed vectors written by `featurize`.
    Sidecar,
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    #[arg(long, value_enum, default_value_t = FeatureSource::Baseline)]
    pub features: FeatureSource,
    /// Directory holding the sidecar embedding files.
    #[arg(long, default_value = "features")]
    pub sidecar_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct HeadOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labelled corpus (JSONL plus PNG images).
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a corpus, optionally dropping unavailable and repeated posts.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        clean: bool,
        #[arg(long)]
        report: PathBuf,
        /// Where to write the (cleaned) corpus.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split a corpus into train, validation and test files.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 400)]
        test: usize,
        /// Fraction of the non-test posts held out for validation.
        #[arg(long, default_value_t = 0.2)]
        val: f64,
        #[arg(long)]
        out_dir: PathBuf,
        /// Keep the class ratio in every part.
        #[arg(long)]
        stratify: bool,
    },
    /// Write baseline feature vectors as sidecar embedding files.
    Featurize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the fused classifier.
    Train {
        #[arg(long)]
        splits: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated subset of hashtags,comments,images.
        #[arg(long, value_delimiter = ',')]
        modalities: Option<Vec<String>>,
        #[command(flatten)]
        overrides: HeadOverrides,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch training report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate a trained model on a labelled file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        roc: Option<PathBuf>,
    },
    /// Train and evaluate hashtag-, comment-, image-only and fused models.
    Ablate {
        #[arg(long)]
        splits: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: HeadOverrides,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score unlabelled posts into a review queue.
    Rank {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the review API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        queue: PathBuf,
        /// Falls back to LEDGER_MODEL.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Falls back to LEDGER_DATA_DIR, then `ledger-data`.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

/// Bad input: usage, config or data that fails validation.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<Invalid>()) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
