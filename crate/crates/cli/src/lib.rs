//! The `coldrec` command line: argument parsing, configuration resolution,
//! error reporting and exit codes. Subcommands live in [`commands`].

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use coldrec_core::{Error, ErrorCategory};

use crate::config::{Knobs, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "coldrec", version, about = "Subword-initialized cold-start recommendation")]
struct Cli {
    /// Flat `key = value` file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    knobs: Knobs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Train a byte-level BPE vocabulary on a corpus.
    TrainBpe,
    /// Build a deterministic token embedding table for a vocabulary.
    SynthEmbeddings,
    /// Generate the synthetic topic benchmark.
    SynthData,
    /// Train a BPR model on a dataset's warm interactions.
    Train,
    /// Evaluate a checkpoint, or run paired trials over the modes.
    Evaluate,
    /// End-to-end synthetic comparison with report and projection.
    Bench,
    /// Export a 2-D projection of a model's cold items.
    Project,
    /// Print dataset statistics.
    Stats,
}

impl Command {
    fn stage(self) -> &'static str {
        match self {
            Command::TrainBpe => "train-bpe",
            Command::SynthEmbeddings => "synth-embeddings",
            Command::SynthData => "synth-data",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Bench => "bench",
            Command::Project => "project",
            Command::Stats => "stats",
        }
    }
}

/// An error together with the pipeline stage it came from.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub error: Error,
}

pub fn exit_code(category: ErrorCategory) -> i32 {
    match category {
        ErrorCategory::Configuration => 2,
        ErrorCategory::Parse => 3,
        ErrorCategory::Divergence => 4,
        ErrorCategory::Degenerate => 5,
    }
}

/// The single stderr line printed on failure, e.g.
/// `coldrec: error stage=train category=configuration code=2 message="..."`.
pub fn error_line(stage: &str, category: ErrorCategory, message: &str) -> String {
    format!(
        "coldrec: error stage={stage} category={} code={} message={}",
        category.as_str(),
        exit_code(category),
        serde_json::to_string(message).expect("string serializes")
    )
}

fn init_logging(quiet: bool) {
    let _ = env_logger::Builder::new()
        .format(|buf, record| writeln!(buf, "{}", record.args()))
        .filter_level(log::LevelFilter::Info)
        .target(env_logger::Target::Stderr)
        .try_init();
    log::set_max_level(if quiet { log::LevelFilter::Off } else { log::LevelFilter::Info });
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let message = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or(&message);
            eprintln!("{}", error_line("cli", ErrorCategory::Configuration, first.trim_start_matches("error: ")));
            return exit_code(ErrorCategory::Configuration);
        }
    };
    let stage = cli.command.stage();
    let cfg = match RunConfig::resolve(cli.config.as_deref(), &cli.knobs) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{}", error_line(stage, e.category(), &e.to_string()));
            return exit_code(e.category());
        }
    };
    init_logging(cfg.quiet);

    let threads = if cfg.deterministic { 1 } else { cfg.threads };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("{}", error_line(stage, ErrorCategory::Configuration, &e.to_string()));
            return exit_code(ErrorCategory::Configuration);
        }
    };
    let outcome = pool.install(|| match cli.command {
        Command::TrainBpe => commands::train_bpe_cmd(&cfg),
        Command::SynthEmbeddings => commands::synth_embeddings_cmd(&cfg),
        Command::SynthData => commands::synth_data_cmd(&cfg),
        Command::Train => commands::train_cmd(&cfg),
        Command::Evaluate => commands::evaluate_cmd(&cfg),
        Command::Bench => commands::bench_cmd(&cfg),
        Command::Project => commands::project_cmd(&cfg),
        Command::Stats => commands::stats_cmd(&cfg),
    });
    match outcome {
        Ok(()) => 0,
        Err(Failure { stage, error }) => {
            let category = error.category();
            eprintln!("{}", error_line(stage, category, &error.to_string()));
            exit_code(category)
        }
    }
}
