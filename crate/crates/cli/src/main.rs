//! `tutorbench`: generate and score AI-teacher responses from a config file.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tutorbench_core::metrics::ReportFormat;
use tutorbench_core::promptkit::TemplateId;

use config::{ModeName, SplitName};

pub const EXIT_DATA: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_EVAL: u8 = 4;

/// An error tagged with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn data(m: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_DATA,
            message: m.to_string(),
        }
    }

    pub fn config(m: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: m.to_string(),
        }
    }

    pub fn eval(m: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_EVAL,
            message: m.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(name = "tutorbench", version, about = "Batch experiments for AI-teacher dialogue responses")]
struct Cli {
    /// Config file (TOML, or JSON with a .json extension).
    #[arg(short, long, global = true, default_value = "tutorbench.toml")]
    config: PathBuf,

    /// Swap every backend for its deterministic offline mock.
    #[arg(long, global = true)]
    mock: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct ExperimentOverrides {
    #[arg(long, value_enum)]
    pub mode: Option<ModeName>,
    /// Fine-tuned model id (implies --mode finetuned when no mode is set).
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, short = 't')]
    pub template: Option<TemplateId>,
    #[arg(long, value_enum)]
    pub split: Option<SplitName>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus statistics for one split.
    Stats {
        #[arg(long, value_enum, default_value = "train")]
        split: SplitName,
        /// Print JSON instead of the aligned table.
        #[arg(long)]
        json: bool,
    },
    /// Print the exact prompt sent for one sample.
    Prompt {
        sample_id: String,
        #[arg(long, short = 't')]
        template: Option<TemplateId>,
        /// Drop the exemplars and the example announcement.
        #[arg(long)]
        zero_shot: bool,
    },
    /// List the exemplars the configured choice resolves to.
    Exemplars,
    /// Run generation over the evaluation split and persist the run.
    Generate {
        #[command(flatten)]
        overrides: ExperimentOverrides,
    },
    /// Score a stored run and write reports/<run_id>.{md,csv,json}.
    Evaluate {
        run_id: String,
        /// Row label in rendered reports.
        #[arg(long)]
        label: Option<String>,
    },
    /// Write the fine-tuning JSON-lines file and its holdout set.
    ExportFinetune {
        #[arg(long)]
        holdout_fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render saved reports side by side.
    Report {
        run_ids: Vec<String>,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
    },
    /// List stored runs.
    Runs,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = config::CliConfig::load(&cli.config)?;
    let ctx = commands::Context::new(config, cli.mock);
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Stats { split, json } => ctx.stats(split, json, &mut out),
        Command::Prompt {
            sample_id,
            template,
            zero_shot,
        } => ctx.prompt(&sample_id, template, zero_shot, &mut out),
        Command::Exemplars => ctx.exemplars(&mut out),
        Command::Generate { overrides } => ctx.generate(&overrides, &mut out),
        Command::Evaluate { run_id, label } => ctx.evaluate(&run_id, label, &mut out),
        Command::ExportFinetune { holdout_fraction, seed } => ctx.export_finetune(holdout_fraction, seed, &mut out),
        Command::Report { run_ids, format } => ctx.report(&run_ids, format, &mut out),
        Command::Runs => ctx.runs(&mut out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
