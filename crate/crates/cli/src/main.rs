mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use episodic_eae::{Error, ErrorKind};

use commands::SynthKind;
use config::{Overrides, RunConfig};

/// Few-shot document-level event argument extraction: corpus splitting,
/// episode sampling, episodic training, evaluation and reporting.
#[derive(Parser)]
#[command(name = "eae", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate the corpus, write its statistics
    Ingest,
    /// Split by event type, mask leaked roles, write the pools
    Split,
    /// Write dev/test episode files and episode statistics
    Sample,
    /// Train the encoder episodically, keep the best dev checkpoint
    Train,
    /// Score a head on an episode file
    Eval,
    /// Tabulate all reports in the output directory
    Report,
    /// Dump toy-encoder embeddings of one pool in the external format
    ExportEmbeddings,
    /// Dump per-episode prototypes as CSV
    ExportPrototypes,
    /// Generate a synthetic corpus at the configured corpus path
    Synth {
        #[arg(long, value_enum, default_value = "separable")]
        kind: SynthKind,
        /// Documents (per event type for the separable family)
        #[arg(long)]
        docs: Option<usize>,
    },
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Io | ErrorKind::Data | ErrorKind::Config => 2,
        ErrorKind::Infeasible => 3,
        ErrorKind::Numerical => 4,
    }
}

fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Io => "io",
        ErrorKind::Data => "data",
        ErrorKind::Config => "config",
        ErrorKind::Infeasible => "infeasible",
        ErrorKind::Numerical => "numerical",
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = RunConfig::resolve(&cli.overrides)?;
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    match &cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Split => commands::split(&cfg),
        Command::Sample => commands::sample(&cfg),
        Command::Train => commands::train_cmd(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Report => commands::report(&cfg),
        Command::ExportEmbeddings => commands::export_embeddings(&cfg),
        Command::ExportPrototypes => commands::export_prototypes(&cfg),
        Command::Synth { kind, docs } => commands::synth(&cfg, *kind, *docs),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.kind();
            let code = exit_code(kind);
            let message = e.to_string().replace('\n', " ");
            eprintln!("error: code={code} kind={}: {message}", kind_name(kind));
            ExitCode::from(code)
        }
    }
}
