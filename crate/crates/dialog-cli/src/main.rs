use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dialog_cli::commands;
use dialog_cli::config::{parse_mode, Overrides};
use dialog_cli::exit_code;
use dialog_core::Result;

#[derive(Parser)]
#[command(
    name = "dialog",
    about = "Task-oriented dialogue model: training, evaluation, sweeps and chat"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Corpus JSON; omit together with --ontology/--db to use the
    /// built-in toy corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    db: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write checkpoint, log and test metrics.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Training regime: baseline, pseudo or pi.
        #[arg(long)]
        mode: Option<String>,
        /// Labelled fraction of the training dialogues.
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Pseudo-label confidence threshold.
        #[arg(long)]
        nu: Option<f64>,
        /// Consistency-noise std-dev.
        #[arg(long)]
        sigma: Option<f64>,
        /// Consistency-loss weight.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on one split.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write metrics JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the modes x fractions x seeds experiment grid.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interactive session against a trained checkpoint.
    Chat {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        db: PathBuf,
        /// Print the belief-state dump after every turn.
        #[arg(long)]
        show_state: bool,
    },
    /// Generate the synthetic corpus, ontology and entity database.
    GenCorpus {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            data,
            mode,
            fraction,
            seed,
            nu,
            sigma,
            alpha,
            config,
            out,
        } => {
            let cfg = commands::load_config(config.as_ref())?;
            let overrides = Overrides {
                mode: mode.as_deref().map(parse_mode).transpose()?,
                fraction,
                seed,
                nu,
                sigma,
                alpha,
            };
            commands::cmd_train(
                &cfg,
                &overrides,
                data.corpus.as_deref(),
                data.ontology.as_deref(),
                data.db.as_deref(),
                &out,
            )
        }
        Command::Evaluate {
            data,
            model,
            split,
            config,
            out,
        } => {
            let cfg = commands::load_config(config.as_ref())?;
            let split = commands::parse_split(&split)?;
            commands::cmd_evaluate(
                &cfg,
                &model,
                data.corpus.as_deref(),
                data.ontology.as_deref(),
                data.db.as_deref(),
                split,
                out.as_deref(),
            )
        }
        Command::Sweep { data, config, out } => {
            let cfg = commands::load_config(config.as_ref())?;
            commands::cmd_sweep(
                &cfg,
                data.corpus.as_deref(),
                data.ontology.as_deref(),
                data.db.as_deref(),
                &out,
            )
        }
        Command::Chat {
            model,
            db,
            show_state,
        } => commands::cmd_chat(&model, &db, show_state),
        Command::GenCorpus { seed, config, out } => {
            let cfg = commands::load_config(config.as_ref())?;
            commands::cmd_gen_corpus(&cfg, seed, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
