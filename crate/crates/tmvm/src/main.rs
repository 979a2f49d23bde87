use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tmvm::{run, Command, Error, RunConfig};

/// Text-adaptive multiple-prototype retrieval head: synthetic corpora,
/// training, evaluation and diagnostics.
#[derive(Debug, Parser)]
#[command(name = "tmvm", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Args)]
struct Common {
    /// Seed for corpus generation, initialization and sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Plain `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parent of the run directories.
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,
    /// Override one config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate a synthetic multi-event corpus.
    Synth,
    /// Train a head; writes the log, checkpoints and a report.
    Train {
        /// Corpus manifest (default: generate from the synth keys).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Checkpoint to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Finite-difference check of the full training objective.
    Gradcheck,
    /// Caption ambiguity statistics, plus prototype diversity when a
    /// checkpoint is given.
    Diagnose {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Per-token mask values of one video.
    Heatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        video_id: String,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

fn path_override(key: &str, p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| format!("{key}={}", p.display()))
}

fn execute(cli: Cli) -> Result<tmvm::Outcome, Error> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.common.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_overrides(&cli.common.overrides)?;
    let (command, extra) = match &cli.command {
        Cmd::Synth => (Command::Synth, vec![]),
        Cmd::Train { corpus, resume } => (
            Command::Train,
            vec![path_override("corpus", corpus), path_override("resume", resume)],
        ),
        Cmd::Eval { checkpoint, corpus } => (
            Command::Eval,
            vec![
                path_override("checkpoint", &Some(checkpoint.clone())),
                path_override("corpus", corpus),
            ],
        ),
        Cmd::Gradcheck => (Command::Gradcheck, vec![]),
        Cmd::Diagnose { corpus, checkpoint } => (
            Command::Diagnose,
            vec![path_override("corpus", corpus), path_override("checkpoint", checkpoint)],
        ),
        Cmd::Heatmap {
            checkpoint,
            video_id,
            corpus,
        } => (
            Command::Heatmap,
            vec![
                path_override("checkpoint", &Some(checkpoint.clone())),
                Some(format!("video_id={video_id}")),
                path_override("corpus", corpus),
            ],
        ),
    };
    let extra: Vec<String> = extra.into_iter().flatten().collect();
    cfg.apply_overrides(&extra)?;
    if let Some(seed) = cli.common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    run(command, &cfg, &cli.common.out_dir)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            println!("{}", outcome.run_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
