//! Command-line front end for the chroma-rsa study pipeline.

use chroma_rsa::config::{ConfigError, StudyConfig};
use chroma_rsa::pipeline::{self, PipelineError};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "chroma-rsa", version, about = "Pitch-height and chroma RSA over auditory representations")]
struct Cli {
    /// Study config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the stimulus bank. Required by `all`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; stage directories are created inside it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: logical CPU count).
    #[arg(long, global = true, env = "CHROMA_RSA_WORKERS")]
    workers: Option<usize>,
    /// Family-wise significance level.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Synthesize the stimulus bank.
    Synth,
    /// Run the front-ends and write interchange files.
    Frontend,
    /// Per-instrument, averaged and model RDMs.
    Rdm,
    /// Model comparisons, noise ceilings and tests.
    Rsa,
    /// Figures.
    Report,
    /// Every stage in order.
    All,
}

fn load(cli: &Cli) -> Result<StudyConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => StudyConfig::load(p)?,
        None => StudyConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(alpha) = cli.alpha {
        cfg.alpha = alpha;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, PipelineError> {
    if matches!(cli.command, Command::All) && cli.seed.is_none() {
        return Err(ConfigError::Invalid("`all` requires --seed so that runs are reproducible".into()).into());
    }
    let cfg = load(cli)?;
    let command = cli.command;
    pipeline::with_workers(cli.workers, move || match command {
        Command::Synth => pipeline::cmd_synth(&cfg).map(|p| vec![p]),
        Command::Frontend => pipeline::cmd_frontend(&cfg).map(|p| vec![p]),
        Command::Rdm => pipeline::cmd_rdm(&cfg).map(|p| vec![p]),
        Command::Rsa => pipeline::cmd_rsa(&cfg).map(|p| vec![p]),
        Command::Report => pipeline::cmd_report(&cfg).map(|p| vec![p]),
        Command::All => pipeline::cmd_all(&cfg).map(|s| {
            let mut dirs: Vec<PathBuf> = s.synth.into_iter().chain(s.frontend).collect();
            dirs.extend([s.rdm, s.rsa, s.report]);
            dirs
        }),
    })?
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(dirs) => {
            for d in dirs {
                println!("{}", d.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
