//! `termnmt`: command-line pipelines over the termnmt library.
//!
//! Every subcommand reads one TOML config (`--config`), applies `--set
//! key=value` overrides and then its own flags, and writes
//! `<out_dir>/<command>.manifest.json` plus the effective config as
//! `<out_dir>/<command>.config.toml`. On success a one-line JSON summary
//! goes to stdout; on failure a one-line JSON error goes to stderr and the
//! exit code is 1 (2 for usage errors).

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::PipelineConfig;
use error::{CliError, ErrorReport};
use manifest::Manifest;

#[derive(Parser)]
#[command(name = "termnmt", version, about = "Terminology-aware NMT pipelines")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML pipeline config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set nmt.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus, phrase table and n-best list.
    Synth {
        #[arg(long)]
        train_pairs: Option<usize>,
        #[arg(long)]
        dev_pairs: Option<usize>,
        #[arg(long)]
        test_pairs: Option<usize>,
    },
    /// List candidate terms as `line<TAB>start<TAB>end<TAB>surface`.
    ExtractTerms {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Pair terms, replace them with TT_i and write tokenized corpora.
    Preprocess {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        dev_corpus: Option<PathBuf>,
        #[arg(long)]
        phrase_table: Option<PathBuf>,
        /// Count terms but keep the surface words (baseline).
        #[arg(long)]
        no_substitute: bool,
    },
    /// Train an NMT checkpoint on tokenized corpora.
    Train {
        #[arg(long)]
        train_tokens: Option<PathBuf>,
        #[arg(long)]
        dev_tokens: Option<PathBuf>,
        /// Where to write the checkpoint (default `<out_dir>/model.json`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
    /// Decode tagged source sentences, restoring term translations.
    Translate {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        phrase_table: Option<PathBuf>,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        no_substitute: bool,
    },
    /// Rerank SMT n-best lists by the mean of SMT and NMT scores.
    Rerank {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        nbest: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        phrase_table: Option<PathBuf>,
    },
    /// Corpus BLEU and RIBES of hypotheses against references.
    Evaluate {
        #[arg(long)]
        hyp: Option<PathBuf>,
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::ExtractTerms { .. } => "extract-terms",
            Command::Preprocess { .. } => "preprocess",
            Command::Train { .. } => "train",
            Command::Translate { .. } => "translate",
            Command::Rerank { .. } => "rerank",
            Command::Evaluate { .. } => "evaluate",
        }
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, flag: Option<PathBuf>) {
    if flag.is_some() {
        *slot = flag;
    }
}

/// Applies command flags to the loaded config.
fn apply_flags(cfg: &mut PipelineConfig, global: Global, command: Command) {
    if let Some(s) = global.seed {
        cfg.seed = s;
        cfg.nmt.seed = s;
    }
    set(&mut cfg.paths.out_dir, global.out_dir);
    let p = &mut cfg.paths;
    match command {
        Command::Synth {
            train_pairs,
            dev_pairs,
            test_pairs,
        } => {
            set(&mut cfg.synth.train_pairs, train_pairs);
            set(&mut cfg.synth.dev_pairs, dev_pairs);
            set(&mut cfg.synth.test_pairs, test_pairs);
        }
        Command::ExtractTerms { input } => set_path(&mut p.input, input),
        Command::Preprocess {
            corpus,
            dev_corpus,
            phrase_table,
            no_substitute,
        } => {
            set_path(&mut p.corpus, corpus);
            set_path(&mut p.dev_corpus, dev_corpus);
            set_path(&mut p.phrase_table, phrase_table);
            cfg.terms.substitute &= !no_substitute;
        }
        Command::Train {
            train_tokens,
            dev_tokens,
            checkpoint,
            epochs,
            quiet: _,
        } => {
            set_path(&mut p.train_tokens, train_tokens);
            set_path(&mut p.dev_tokens, dev_tokens);
            set_path(&mut p.checkpoint, checkpoint);
            set(&mut cfg.nmt.epochs, epochs);
        }
        Command::Translate {
            input,
            checkpoint,
            phrase_table,
            beam,
            no_substitute,
        } => {
            set_path(&mut p.input, input);
            set_path(&mut p.checkpoint, checkpoint);
            set_path(&mut p.phrase_table, phrase_table);
            set(&mut cfg.nmt.beam_size, beam);
            cfg.terms.substitute &= !no_substitute;
        }
        Command::Rerank {
            input,
            nbest,
            checkpoint,
            phrase_table,
        } => {
            set_path(&mut p.input, input);
            set_path(&mut p.nbest, nbest);
            set_path(&mut p.checkpoint, checkpoint);
            set_path(&mut p.phrase_table, phrase_table);
        }
        Command::Evaluate { hyp, reference } => {
            set_path(&mut p.hypotheses, hyp);
            set_path(&mut p.references, reference);
        }
    }
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    let name = cli.command.name();
    let quiet = matches!(cli.command, Command::Train { quiet: true, .. });
    let mut cfg = PipelineConfig::load(cli.global.config.as_deref(), &cli.global.overrides)?;
    apply_flags(&mut cfg, cli.global, cli.command);
    cfg.paths.fill_defaults();
    cfg.validate()?;

    let mut m = Manifest::new(name, &cfg);
    let summary = match name {
        "synth" => commands::synth(&cfg, &mut m)?,
        "extract-terms" => commands::extract_terms(&cfg, &mut m)?,
        "preprocess" => commands::preprocess_cmd(&cfg, &mut m)?,
        "train" => commands::train(&cfg, &mut m, !quiet)?,
        "translate" => commands::translate(&cfg, &mut m)?,
        "rerank" => commands::rerank(&cfg, &mut m)?,
        "evaluate" => commands::evaluate_cmd(&cfg, &mut m)?,
        _ => unreachable!("every subcommand is dispatched"),
    };
    m.summary = summary.clone();
    let path = m.finish(&cfg.paths.out_dir)?;
    // The effective config, replayable with `--config`.
    let replay = cfg.paths.out_dir.join(format!("{name}.config.toml"));
    std::fs::write(&replay, cfg.to_toml()).map_err(|e| CliError::io(&replay, e))?;
    Ok(serde_json::json!({
        "command": name,
        "manifest": path.display().to_string(),
        "summary": summary,
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", ErrorReport::new(name, &e).to_line());
            ExitCode::FAILURE
        }
    }
}
