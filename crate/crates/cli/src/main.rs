use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use fallacy_forensics::config;
use fallacy_forensics::pipeline::{self, Context};

#[derive(Parser)]
#[command(
    name = "fallacy-forensics",
    version,
    about = "Ad hominem forensics over threaded forum dumps"
)]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Report bundle directory.
    #[arg(long, global = true, default_value = "report")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config override, e.g. `--set temporal.k=3`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic corpus, labeled set and example config.
    Synth {
        #[arg(long, default_value = "data/synthetic")]
        dir: PathBuf,
    },
    /// Validate and pseudonymize the corpus.
    Ingest,
    /// Train the builtin classifier on the labeled set.
    Train,
    /// Stratified k-fold evaluation of the builtin classifier.
    Evaluate,
    /// Label-fraction sweep of the builtin classifier.
    Sweep,
    /// Score every comment with the configured scorer.
    Score,
    /// Highlight trigger trigrams in flagged comments.
    Explain,
    #[command(subcommand)]
    Analyze(Analysis),
    /// Write the manifest of the report bundle.
    Report,
    /// Every step in order, then `report`.
    All,
    /// Check an external scorer against the wire protocol.
    CheckScorer {
        /// Scorer command; defaults to `scorer.command` from the config.
        #[arg(last = true)]
        command: Vec<String>,
    },
}

#[derive(Subcommand)]
enum Analysis {
    Networks,
    Temporal,
    Wordshift,
    Users,
}

fn run(cli: Cli) -> Result<bool> {
    let (cfg, base) = config::load(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    if let Command::Synth { dir } = &cli.command {
        for p in pipeline::synth(dir, cfg.seed)? {
            println!("{}", p.display());
        }
        return Ok(true);
    }
    if let Command::CheckScorer { command } = &cli.command {
        let cmd = if command.is_empty() {
            &cfg.scorer.command
        } else {
            command
        };
        return pipeline::check_scorer(cmd);
    }
    let mut ctx = Context::new(cfg, base, cli.out);
    ctx.write_resolved_config()?;
    match cli.command {
        Command::Ingest => pipeline::ingest(&mut ctx)?,
        Command::Train => pipeline::train(&mut ctx)?,
        Command::Evaluate => pipeline::evaluate(&mut ctx)?,
        Command::Sweep => pipeline::sweep(&mut ctx)?,
        Command::Score => pipeline::score(&mut ctx)?,
        Command::Explain => pipeline::explain(&mut ctx)?,
        Command::Analyze(Analysis::Networks) => pipeline::analyze_networks(&mut ctx)?,
        Command::Analyze(Analysis::Temporal) => pipeline::analyze_temporal(&mut ctx)?,
        Command::Analyze(Analysis::Wordshift) => pipeline::analyze_wordshift(&mut ctx)?,
        Command::Analyze(Analysis::Users) => pipeline::analyze_users(&mut ctx)?,
        Command::Report => pipeline::report(&mut ctx)?,
        Command::All => pipeline::run_all(&mut ctx)?,
        Command::Synth { .. } | Command::CheckScorer { .. } => unreachable!(),
    }
    if ctx.failures().is_empty() {
        return Ok(true);
    }
    eprintln!("{} analyses failed:", ctx.failures().len());
    for f in ctx.failures() {
        eprintln!("  - {f}");
    }
    Ok(false)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
