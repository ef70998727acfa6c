//! `dyntag` — train, run, and inspect dynamic-window CCG supertaggers.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data error
//! (unreadable/malformed files, failed validation or gradient check).

mod commands;
mod config;

use clap::{Parser, Subcommand};
use config::TrainArgs;
use dyntag_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dyntag", version, about = "Dynamic-window CCG supertagger")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a tagger; writes the best-on-dev model and a history CSV.
    Train(TrainArgs),

    /// Tag plain text (one sentence per line, space-separated words).
    Tag {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },

    /// Score a model against a gold corpus in pipe format.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },

    /// Export per-token gate activations as CSV (test mode, no dropout).
    Gates {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Collapse elementwise gates to one value per window slot ("mean").
        #[arg(long)]
        reduce: Option<String>,
    },

    /// Compare analytic gradients against finite differences on a tiny
    /// captive model.
    Gradcheck {
        /// Architecture to check, or "all".
        #[arg(long, default_value = "all")]
        arch: String,
        /// Gate variant to check, or "all".
        #[arg(long, default_value = "all")]
        gate_variant: String,
        /// Max tolerated relative error.
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
        /// Central-difference step h.
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        /// Dropout-mask seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },

    /// CCG category utilities.
    Cat {
        #[command(subcommand)]
        cmd: CatCmd,
    },

    /// Generate a synthetic toy-CCG corpus in pipe format.
    GenCorpus {
        #[arg(long, default_value_t = 50)]
        sentences: usize,
        /// Probability of splicing junk filler tokens at eligible sites.
        #[arg(long, default_value_t = 0.0)]
        distractor_rate: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CatCmd {
    /// Parse one category and print its canonical form.
    Parse { category: String },
    /// Print the number of outermost argument slots.
    Arity { category: String },
    /// Parse every non-blank line of a file, reporting failures.
    Validate { file: PathBuf },
}

fn run(cmd: Cmd) -> dyntag_core::Result<u8> {
    match cmd {
        Cmd::Train(args) => commands::train(&args),
        Cmd::Tag { model, input } => commands::tag(&model, &input),
        Cmd::Eval { model, gold } => commands::eval(&model, &gold),
        Cmd::Gates {
            model,
            input,
            out,
            reduce,
        } => commands::gates(&model, &input, out.as_deref(), reduce.as_deref()),
        Cmd::Gradcheck {
            arch,
            gate_variant,
            threshold,
            step,
            seed,
        } => commands::gradcheck(&arch, &gate_variant, threshold, step, seed),
        Cmd::Cat { cmd } => match cmd {
            CatCmd::Parse { category } => commands::cat_parse(&category),
            CatCmd::Arity { category } => commands::cat_arity(&category),
            CatCmd::Validate { file } => commands::cat_validate(&file),
        },
        Cmd::GenCorpus {
            sentences,
            distractor_rate,
            seed,
            out,
        } => commands::gen_corpus(sentences, distractor_rate, seed, out.as_ref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version arrive here too; they exit 0.
            let usage = e.exit_code() != 0;
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
