use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use genrec_cli::commands;
use genrec_cli::config::RunConfig;
use genrec_core::EvalPhase;

#[derive(Parser)]
#[command(
    name = "genrec",
    about = "Generative sequential recommendation: preprocess, train with the masked-item objective, rank next items with constrained beam search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Validation,
    Test,
}

impl From<PhaseArg> for EvalPhase {
    fn from(p: PhaseArg) -> Self {
        match p {
            PhaseArg::Validation => EvalPhase::Validation,
            PhaseArg::Test => EvalPhase::Test,
        }
    }
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration file (key=value lines).
    #[arg(long)]
    config: PathBuf,
    /// Override the config file's seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Ingest the raw TSV, filter, split, and build the vocabulary.
    Preprocess {
        #[command(flatten)]
        common: Common,
    },
    /// Train from scratch with randomly masked items.
    Pretrain {
        #[command(flatten)]
        common: Common,
    },
    /// Train with the appended-mask next-item objective.
    Finetune {
        #[command(flatten)]
        common: Common,
        /// Start from this checkpoint; omit to train from scratch.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Compute HR@k / NDCG@k for one phase.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate (default: <workdir>/finetune.ckpt).
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long, value_enum)]
        phase: PhaseArg,
    },
    /// Print the top-k next items for one user.
    Recommend {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to use (default: <workdir>/finetune.ckpt).
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long)]
        user: String,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Preprocess { common } => commands::cmd_preprocess(&common.load()?),
        Command::Pretrain { common } => commands::cmd_pretrain(&common.load()?),
        Command::Finetune { common, from } => {
            commands::cmd_finetune(&common.load()?, from.as_deref())
        }
        Command::Evaluate {
            common,
            from,
            phase,
        } => commands::cmd_evaluate(&common.load()?, from.as_deref(), phase.into()),
        Command::Recommend { common, from, user } => {
            commands::cmd_recommend(&common.load()?, from.as_deref(), &user)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {
            println!("status=ok");
            ExitCode::SUCCESS
        }
        Err(err) => {
            println!("status=error message={err:#}");
            ExitCode::FAILURE
        }
    }
}
