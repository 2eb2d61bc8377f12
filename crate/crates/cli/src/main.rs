mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Sleep-event detection on polysomnography records.
#[derive(Parser)]
#[command(name = "sleepnet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Overwrite {
    /// Replace existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort of raw records.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        records: Option<usize>,
        /// Seconds per record.
        #[arg(long)]
        duration: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Event plan (`task start end value` lines, in samples) used for
        /// every record instead of a random one.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[command(flatten)]
        overwrite: Overwrite,
    },
    /// Filter, decimate and normalize raw records into model inputs.
    Prepare {
        /// A raw record directory or a directory of them.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Padded input length in seconds.
        #[arg(long, default_value_t = sleepnet::prep::FULL_NIGHT_SECONDS)]
        pad_seconds: usize,
        /// Skip the moving-window normalization.
        #[arg(long)]
        no_normalization: bool,
        /// Records prepared concurrently.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        overwrite: Overwrite,
    },
    /// Train one fold on a directory of prepared records.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        fold: u8,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overwrite: Overwrite,
    },
    /// Average the predictions of several checkpoints on one prepared record.
    Ensemble {
        #[arg(long, num_args = 1.., required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overwrite: Overwrite,
    },
    /// Predict one prepared record with one checkpoint.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overwrite: Overwrite,
    },
    /// Score a prediction against the labels of its raw record.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        record: PathBuf,
        /// Exclude non-target arousal samples from raw-rate arousal scoring.
        #[arg(long)]
        mask_nontarget: bool,
        /// Text report path; JSON lines go next to it with a `.jsonl` extension.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overwrite: Overwrite,
    },
    /// Clinical summaries and grade agreement for a set of predictions.
    Report {
        /// Directory of prediction files.
        #[arg(long)]
        pred: PathBuf,
        /// Directory of raw records named by record id.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overwrite: Overwrite,
    },
    /// Run ablation experiments on fold 1 of a synthetic cohort.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated experiment numbers; all ten when omitted.
        #[arg(long, value_delimiter = ',')]
        experiments: Vec<usize>,
        /// Epochs per experiment.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overwrite: Overwrite,
    },
    /// Synthesize, prepare, train every fold, ensemble and report.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overwrite: Overwrite,
    },
    /// Print the default run configuration.
    Config,
    /// Quick internal consistency checks.
    Selftest {
        /// Random shapes per operator in the gradient check.
        #[arg(long, default_value_t = 20)]
        cases: usize,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<sleepnet::Error>() {
            if e.is_validation() {
                return 2;
            }
            if e.is_numerical() {
                return 3;
            }
        }
        if let Some(e) = cause.downcast_ref::<commands::Refused>() {
            return e.code;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
