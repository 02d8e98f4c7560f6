//! The `dfgnn` command-line interface.

use clap::{Args, Parser, Subcommand};
use dfgnn::cli::{self, SpectrumOptions, TrainOptions};
use dfgnn::config::RunConfig;
use dfgnn::error::Result;
use dfgnn::model::Variant;
use dfgnn::trainer::Task;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dfgnn",
    version,
    about = "Sign-aware recommendation with dual-frequency graph filters",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug)]
struct CommonArgs {
    /// TOML configuration file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed overriding every component seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse a rating file, threshold signs, core-filter, and split.
    Ingest {
        #[command(flatten)]
        common: CommonArgs,
        /// Raw rating file (CSV or TSV).
        #[arg(long)]
        input: PathBuf,
        /// Input format override: csv or tsv.
        #[arg(long)]
        format: Option<String>,
    },
    /// Frequency-domain analysis: per-sign spectral histograms of the
    /// 1-D factorization signal plus filter kernel response curves.
    Spectrum {
        #[command(flatten)]
        common: CommonArgs,
        /// Raw rating file (CSV or TSV); ingested in-memory.
        #[arg(long)]
        input: PathBuf,
        /// Number of uniform frequency buckets over [0, 2].
        #[arg(long, default_value_t = 10)]
        buckets: usize,
        /// Bucket |f(lambda)| instead of f(lambda)^2.
        #[arg(long)]
        amplitude: bool,
        /// Dense eigensolver node cap.
        #[arg(long, default_value_t = 3000)]
        max_nodes: usize,
        /// Layer count K for the kernel sweep.
        #[arg(long, default_value_t = 2)]
        kernel_layers: u32,
    },
    /// Train on an ingested split with early stopping.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory produced by `ingest`.
        #[arg(long)]
        data_dir: PathBuf,
        /// Model variant: Basic, Basic+LGF, Basic+DGF, or DFGNN.
        #[arg(long)]
        variant: Option<Variant>,
        /// Task: ranking or feedback_type.
        #[arg(long)]
        task: Option<Task>,
        /// Sweep the learning-rate grid and keep the best by validation.
        #[arg(long)]
        lr_sweep: bool,
        /// Verify analytic gradients against finite differences first.
        #[arg(long)]
        grad_check: bool,
    },
    /// Score a checkpoint on the test split.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        task: Option<Task>,
    },
    /// Train all four variants over shared seeds and tabulate metrics.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data_dir: PathBuf,
        /// Number of seeds (base seed comes from --seed / config).
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Restrict to one task (default: both).
        #[arg(long)]
        task: Option<Task>,
    },
    /// Representation diagnostics for one or two checkpoints.
    Diagnose {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Second checkpoint for side-by-side comparison.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            common,
            input,
            format,
        } => {
            let mut cfg = common.load()?;
            if let Some(format) = format {
                cfg.ingest.format = match format.to_ascii_lowercase().as_str() {
                    "csv" => dfgnn::ingest::FileFormat::Csv,
                    "tsv" => dfgnn::ingest::FileFormat::Tsv,
                    other => {
                        return Err(dfgnn::Error::Config(format!(
                            "unknown format {other:?}; expected csv or tsv"
                        )))
                    }
                };
            }
            cli::cmd_ingest(&input, &common.out_dir, &cfg)
        }
        Command::Spectrum {
            common,
            input,
            buckets,
            amplitude,
            max_nodes,
            kernel_layers,
        } => {
            let cfg = common.load()?;
            let opts = SpectrumOptions {
                buckets,
                amplitude,
                max_nodes,
                kernel_layers,
            };
            cli::cmd_spectrum(&input, &common.out_dir, &cfg, &opts)
        }
        Command::Train {
            common,
            data_dir,
            variant,
            task,
            lr_sweep,
            grad_check,
        } => {
            let mut cfg = common.load()?;
            if let Some(variant) = variant {
                cfg.model.variant = variant;
            }
            if let Some(task) = task {
                cfg.train.task = task;
            }
            let opts = TrainOptions {
                lr_sweep,
                grad_check,
            };
            cli::cmd_train(&data_dir, &common.out_dir, &cfg, &opts)
        }
        Command::Evaluate {
            common,
            data_dir,
            checkpoint,
            task,
        } => {
            let mut cfg = common.load()?;
            if let Some(task) = task {
                cfg.train.task = task;
            }
            cli::cmd_evaluate(&data_dir, &checkpoint, &common.out_dir, &cfg)
        }
        Command::Ablate {
            common,
            data_dir,
            seeds,
            task,
        } => {
            let cfg = common.load()?;
            let tasks: Vec<Task> = match task {
                Some(task) => vec![task],
                None => vec![Task::Ranking, Task::FeedbackType],
            };
            cli::cmd_ablate(&data_dir, &common.out_dir, &cfg, seeds, &tasks)
        }
        Command::Diagnose {
            common,
            checkpoint,
            compare,
        } => {
            let cfg = common.load()?;
            cli::cmd_diagnose(&checkpoint, compare.as_deref(), &common.out_dir, &cfg)
        }
    }
}

fn main() -> ExitCode {
    // usage errors are input errors (exit 1); --help/--version exit 0
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
