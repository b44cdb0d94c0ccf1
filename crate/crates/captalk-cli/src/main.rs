//! Batch command-line surface of the voice-design toolkit.
//!
//! Every command takes one TOML config (`--config`) and writes its outputs
//! under the configured or overridden output directory with documented
//! filenames. Fixed config plus fixed seed means byte-identical outputs.

mod commands;
mod context;

use anyhow::{Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};
use context::Ctx;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "captalkkit", version, about = "Voice-design toolkit: control-label extraction, corpus construction, sequence assembly, variational timbre conditioning, and evaluation")]
struct Cli {
    /// Toolkit configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Which branch build-corpus and assemble operate on.
    #[arg(long, global = true, value_enum, default_value_t = BranchArg::Both)]
    branch: BranchArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BranchArg {
    Single,
    Dialogue,
    Both,
}

impl BranchArg {
    pub fn includes_single(self) -> bool {
        matches!(self, BranchArg::Single | BranchArg::Both)
    }

    pub fn includes_dialogue(self) -> bool {
        matches!(self, BranchArg::Dialogue | BranchArg::Both)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract per-utterance control labels and per-speaker baselines.
    ExtractCot,
    /// Build the single-utterance and dialogue dataset files.
    BuildCorpus,
    /// Turn dataset instances into laid-out token samples with masks.
    Assemble,
    /// Fit the variational timbre-conditioning module.
    FitFhvae {
        /// Verify gradients against finite differences before fitting;
        /// fails the command when the error reaches 1e-4.
        #[arg(long)]
        grad_check: bool,
    },
    /// Quantitative evaluation reports.
    Eval {
        #[command(subcommand)]
        which: EvalCommand,
    },
    /// Verify analytic gradients against central finite differences.
    GradCheck,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Average pairwise speaker similarity over wav files.
    Sim { wavs: Vec<PathBuf> },
    /// Fixed-vs-resampled speaker-condition contrast on the fitted module.
    Reuse {
        /// Fitted parameter file; defaults to fhvae_params.bin in the
        /// output directory.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Per-attribute success rates from paired single-edit generations.
    Control {
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Per-attribute and overall plausibility accuracy.
    CotAcc {
        #[arg(long)]
        judgments: PathBuf,
    },
    /// Majority-vote pairwise preference shares.
    Pref {
        #[arg(long)]
        votes: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let config_path = cli
        .config
        .context("--config is required (path to the toolkit TOML)")?;
    let mut ctx = Ctx::load(&config_path, cli.seed, cli.out)?;

    let name = match &cli.command {
        Command::ExtractCot => {
            commands::extract_cot::run(&mut ctx)?;
            "extract-cot"
        }
        Command::BuildCorpus => {
            commands::build_corpus::run(&mut ctx, cli.branch)?;
            "build-corpus"
        }
        Command::Assemble => {
            commands::assemble::run(&mut ctx, cli.branch)?;
            "assemble"
        }
        Command::FitFhvae { grad_check } => {
            commands::fit::run_fit(&mut ctx, *grad_check)?;
            "fit-fhvae"
        }
        Command::GradCheck => {
            commands::fit::run_grad_check(&mut ctx)?;
            "grad-check"
        }
        Command::Eval { which } => {
            match which {
                EvalCommand::Sim { wavs } => commands::eval::run_sim(&mut ctx, wavs)?,
                EvalCommand::Reuse { params } => {
                    commands::eval::run_reuse(&mut ctx, params.as_deref())?
                }
                EvalCommand::Control { pairs } => commands::eval::run_control(&mut ctx, pairs)?,
                EvalCommand::CotAcc { judgments } => {
                    commands::eval::run_cot_acc(&mut ctx, judgments)?
                }
                EvalCommand::Pref { votes } => commands::eval::run_pref(&mut ctx, votes)?,
            }
            "eval"
        }
    };
    ctx.finish(name);
    Ok(())
}
