//! `spangec`: span-based grammatical error correction from the command line.

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spangec::synth::Script;

use crate::commands::RunArgs;
use crate::config::{CorruptFlags, GlobalFlags, PipelineConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "spangec",
    version,
    about = "Span detection and span correction for grammatical errors"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScriptArg {
    Latin,
    Cjk,
}

impl From<ScriptArg> for Script {
    fn from(s: ScriptArg) -> Script {
        match s {
            ScriptArg::Latin => Script::Latin,
            ScriptArg::Cjk => Script::Cjk,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Annotate gold edit spans of `source<TAB>target` pairs
    Extract {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Build detector and corrector training sets from parallel pairs
    MakeData {
        input: PathBuf,
        #[arg(long)]
        esd_out: PathBuf,
        #[arg(long)]
        esc_out: PathBuf,
    },
    /// Inject synthetic errors into clean sentences, writing `corrupted<TAB>clean`
    Corrupt {
        input: PathBuf,
        #[command(flatten)]
        rates: CorruptFlags,
        /// Whitespace-separated replacement vocabulary; defaults to the input's own tokens
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Train the span detector on detector JSONL
    TrainEsd {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        epochs: Option<u32>,
    },
    /// Train the span corrector on corrector JSONL
    TrainEsc {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Correct sentences; the step report goes to --report or stderr
    Run {
        input: PathBuf,
        /// Detector model file, or `oracle` to use gold spans
        #[arg(long)]
        esd_model: PathBuf,
        /// Corrector table, or `oracle` to copy gold corrections
        #[arg(long)]
        esc_model: PathBuf,
        /// Reference corrections, one per input line
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score hypotheses against references with edit-level P/R/F0.5
    Eval {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        hypothesis: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Detection (and optionally correction) quality over a threshold grid
    Sweep {
        input: PathBuf,
        #[arg(long)]
        esd_model: PathBuf,
        #[arg(long)]
        esc_model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7])]
        thresholds: Vec<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Sample sentences from a seeded synthetic bigram language
    Synth {
        #[arg(long, default_value_t = 1000)]
        sentences: usize,
        #[arg(long, default_value_t = 1000)]
        vocab_size: usize,
        #[arg(long, default_value_t = 4)]
        successors: usize,
        #[arg(long, value_enum, default_value_t = ScriptArg::Latin)]
        script: ScriptArg,
        #[arg(long, default_value_t = 8)]
        min_len: usize,
        #[arg(long, default_value_t = 20)]
        max_len: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let corrupt = match &cli.command {
        Command::Corrupt { rates, .. } => Some(rates),
        _ => None,
    };
    let epochs = match &cli.command {
        Command::TrainEsd { epochs, .. } => *epochs,
        _ => None,
    };
    let cfg = PipelineConfig::load(&cli.global, corrupt, epochs)?;
    log::debug!("{cfg:?}");
    match &cli.command {
        Command::Extract { input, output } => commands::extract(input, output.as_deref(), &cfg),
        Command::MakeData {
            input,
            esd_out,
            esc_out,
        } => commands::make_data(input, esd_out, esc_out, &cfg),
        Command::Corrupt {
            input, vocab, output, ..
        } => commands::corrupt_cmd(input, output.as_deref(), vocab.as_deref(), &cfg),
        Command::TrainEsd { input, output, .. } => commands::train_esd(input, output, &cfg),
        Command::TrainEsc { input, output } => commands::train_esc(input, output),
        Command::Run {
            input,
            esd_model,
            esc_model,
            gold,
            output,
            report,
        } => commands::run(
            &RunArgs {
                input,
                esd_model,
                esc_model,
                gold: gold.as_deref(),
                output: output.as_deref(),
                report: report.as_deref(),
            },
            &cfg,
        ),
        Command::Eval {
            source,
            hypothesis,
            gold,
            output,
        } => commands::eval(source, hypothesis, gold, output.as_deref(), &cfg),
        Command::Sweep {
            input,
            esd_model,
            esc_model,
            thresholds,
            output,
        } => commands::sweep(
            input,
            esd_model,
            esc_model.as_deref(),
            thresholds,
            output.as_deref(),
            &cfg,
        ),
        Command::Synth {
            sentences,
            vocab_size,
            successors,
            script,
            min_len,
            max_len,
            output,
        } => commands::synth(
            &commands::SynthArgs {
                sentences: *sentences,
                vocab_size: *vocab_size,
                successors: *successors,
                script: (*script).into(),
                min_len: *min_len,
                max_len: *max_len,
                output: output.clone(),
            },
            &cfg,
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPANGEC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) | Err(CliError::Closed) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spangec: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
