//! Pipeline driver: validate, split, train, score, report, blend.
//!
//! Exit codes are a stable contract: 0 success, 1 domain or validation
//! failure, 2 I/O failure (including unreadable inputs). All randomness
//! flows from the configured seed, so reruns with identical inputs produce
//! byte-identical outputs.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use tokenfocus_core::score::ProjectionMode;

use config::TaskSelection;

#[derive(Debug)]
pub enum CliError {
    /// Validation or domain failure: exit 1.
    Domain(String),
    /// I/O failure: exit 2.
    Io(String),
}

impl From<tokenfocus_core::Error> for CliError {
    fn from(e: tokenfocus_core::Error) -> Self {
        match e {
            tokenfocus_core::Error::Io(inner) => CliError::Io(inner.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Domain(m) | CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

/// `--mode` flag spelling; maps onto the library's projection mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Literal,
    LogitRenorm,
}

impl From<ModeArg> for ProjectionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Literal => ProjectionMode::Literal,
            ModeArg::LogitRenorm => ProjectionMode::LogitRenorm,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "tokenfocus",
    about = "First-token score projection pipeline for image-text alignment evaluation"
)]
struct Cli {
    /// JSON run configuration; flags override individual fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Projection mode override.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a dataset file, reporting every problem.
    Validate {
        /// Dataset path (falls back to the config's dataset).
        dataset: Option<PathBuf>,
    },
    /// Write a prompt-disjoint k-fold plan and print its size table.
    Split {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        /// Output path for the plan JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the miniature scorer on one fold's training view.
    Train {
        /// Fold index whose training view to use.
        #[arg(long)]
        fold: usize,
        /// Fold plan JSON (computed from the config when omitted).
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Scoring task to train for.
        #[arg(long, value_enum)]
        task: Option<TaskSelection>,
        /// Output directory for checkpoint and loss log.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Produce per-sample predictions from a checkpoint or external
    /// distributions.
    Score {
        #[arg(long, conflicts_with = "external")]
        checkpoint: Option<PathBuf>,
        /// External first-token distribution file.
        #[arg(long)]
        external: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Fold plan for subset selection.
        #[arg(long, requires = "fold")]
        plan: Option<PathBuf>,
        /// Fold index whose view to score (with --plan).
        #[arg(long)]
        fold: Option<usize>,
        /// Which side of the fold view to score.
        #[arg(long, value_enum, default_value = "all")]
        subset: commands::SubsetArg,
        /// Output predictions file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute SRCC/PLCC/accuracy and the composite metric.
    Report {
        /// Predictions file(s); one table row per file.
        #[arg(long, required_unless_present = "precomputed")]
        predictions: Vec<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Average element accuracy per image instead of per instance.
        #[arg(long)]
        per_image_acc: bool,
        /// Inject precomputed `srcc,plcc,acc` and report their composite.
        #[arg(long, value_name = "S,P,A")]
        precomputed: Option<String>,
        /// Output report JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Blend fold checkpoints through the boosted-tree meta-learner.
    Blend {
        /// One checkpoint per fold, in fold order.
        #[arg(long, required = true, num_args = 1..)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Held-out dataset to predict (falls back to config test_dataset).
        #[arg(long)]
        test: Option<PathBuf>,
        /// Output directory for predictions and reports.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(path) => match config::RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                std::process::exit(match e {
                    CliError::Domain(_) => 1,
                    CliError::Io(_) => 2,
                });
            }
        },
        None => config::RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
        config.training.seed = seed;
        config.gbt.seed = seed;
    }
    if let Some(mode) = cli.mode {
        config.mode = mode.into();
        config.training.projection_mode = mode.into();
    }

    let result = match cli.command {
        Command::Validate { dataset } => commands::validate(&config, dataset.as_deref()),
        Command::Split { dataset, k, out } => commands::split(&config, dataset.as_deref(), k, &out),
        Command::Train {
            fold,
            plan,
            task,
            out,
        } => commands::train(&config, fold, plan.as_deref(), task, out.as_deref()),
        Command::Score {
            checkpoint,
            external,
            dataset,
            plan,
            fold,
            subset,
            out,
        } => commands::score(
            &config,
            checkpoint.as_deref(),
            external.as_deref(),
            dataset.as_deref(),
            plan.as_deref(),
            fold,
            subset,
            &out,
        ),
        Command::Report {
            predictions,
            dataset,
            per_image_acc,
            precomputed,
            out,
        } => commands::report(
            &config,
            &predictions,
            dataset.as_deref(),
            per_image_acc,
            precomputed.as_deref(),
            out.as_deref(),
        ),
        Command::Blend {
            checkpoints,
            plan,
            test,
            out,
        } => commands::blend(
            &config,
            &checkpoints,
            plan.as_deref(),
            test.as_deref(),
            out.as_deref(),
        ),
    };

    match result {
        Ok(code) => std::process::exit(code),
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}
