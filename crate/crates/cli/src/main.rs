mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "coherelab", version, about = "Emotional-coherence analytics for therapy transcripts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
    #[command(flatten)]
    inputs: Inputs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Inputs {
    #[arg(long, global = true)]
    pub transcripts: Option<PathBuf>,
    #[arg(long = "self-reports", global = true)]
    pub self_reports: Option<PathBuf>,
    #[arg(long, global = true)]
    pub predictions: Option<PathBuf>,
    /// Saved baseline model (JSON) for `--source baseline`; trained on the gold labels when absent.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    #[arg(long = "out-dir", global = true, default_value = "coherelab-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check inputs against the data invariants; exits 1 when violations are found.
    Validate,
    /// Label client utterances and write predictions.jsonl.
    Label,
    /// Cross-validate a labeler on the gold sessions.
    Evaluate {
        /// External fine-tune adapter program (finetune/predict protocol).
        #[arg(long)]
        adapter: Option<String>,
        #[arg(long = "adapter-arg", allow_hyphen_values = true)]
        adapter_args: Vec<String>,
    },
    /// Session-wide correlation of POMS totals with label shares.
    Coherence,
    /// Client-level correlation of coherence with mean ORS.
    Associate,
    /// Generate a synthetic corpus with planted ground truth.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Merge the reports found in a run directory into summary.txt.
    Report {
        #[arg(long = "run-dir")]
        run_dir: PathBuf,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data { code: String, message: String },
    Numerics(String),
    Violations(usize),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data {
            code: "IO".into(),
            message: format!("{}: {e}", path.display()),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Violations(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Data { .. } => 3,
            CliError::Numerics(_) => 4,
        }
    }
}

impl From<coherelab::Error> for CliError {
    fn from(e: coherelab::Error) -> Self {
        match e.class() {
            coherelab::ErrorClass::Numerics => CliError::Numerics(e.to_string()),
            coherelab::ErrorClass::Data => CliError::Data {
                code: e.code().into(),
                message: e.to_string(),
            },
        }
    }
}

macro_rules! via_core_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                coherelab::Error::from(e).into()
            }
        })*
    };
}

via_core_error!(
    coherelab::ingest::IngestError,
    coherelab::labeling::LabelingError,
    coherelab::eval::EvalError,
    coherelab::stats::StatsError,
    coherelab::coherence::CoherenceError,
    coherelab::synth::SynthError
);

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config::Settings::resolve(&cli.overrides).and_then(|settings| {
        let ctx = commands::Context {
            settings,
            inputs: cli.inputs,
            seed_flag: cli.overrides.seed,
        };
        match cli.command {
            Command::Validate => commands::validate(&ctx),
            Command::Label => commands::label(&ctx),
            Command::Evaluate { adapter, adapter_args } => commands::evaluate(&ctx, adapter, adapter_args),
            Command::Coherence => commands::coherence(&ctx),
            Command::Associate => commands::associate(&ctx),
            Command::Synth { spec } => commands::synth(&ctx, spec.as_deref()),
            Command::Report { run_dir } => commands::report(&ctx, &run_dir),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("usage error: {m}"),
                CliError::Data { code, message } if message.starts_with(code.as_str()) => eprintln!("error: {message}"),
                CliError::Data { code, message } => eprintln!("error: {code}: {message}"),
                CliError::Numerics(m) => eprintln!("internal numerics error: {m}"),
                CliError::Violations(n) => eprintln!("{n} violation(s) found"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
