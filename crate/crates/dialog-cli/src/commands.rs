//! Subcommand implementations shared by the binary and the tests.

use std::path::{Path, PathBuf};

use dialog_core::corpus::{load_corpus, save_corpus, Corpus, Split};
use dialog_core::eval::evaluate;
use dialog_core::kb::EntityDb;
use dialog_core::model::Model;
use dialog_core::toy::generate_toy_corpus;
use dialog_core::training::train;
use dialog_core::{Error, Result};

use crate::config::{CliConfig, Overrides};
use crate::sweep::{run_sweep, write_reports};

/// Corpus + database, either loaded from files or generated from the
/// config's toy section. File paths must come as a complete set.
pub fn load_data(
    cfg: &CliConfig,
    corpus: Option<&Path>,
    ontology: Option<&Path>,
    db: Option<&Path>,
) -> Result<(Corpus, EntityDb)> {
    match (corpus, ontology, db) {
        (Some(c), Some(o), Some(d)) => Ok((load_corpus(c, o)?, EntityDb::load(d)?)),
        (None, None, None) => generate_toy_corpus(&cfg.toy, cfg.toy_seed),
        _ => Err(Error::Config(
            "--corpus, --ontology and --db must be given together (or all omitted for the built-in toy corpus)".into(),
        )),
    }
}

pub fn cmd_gen_corpus(cfg: &CliConfig, seed: Option<u64>, out: &Path) -> Result<()> {
    let seed = seed.unwrap_or(cfg.toy_seed);
    let (corpus, db) = generate_toy_corpus(&cfg.toy, seed)?;
    std::fs::create_dir_all(out)?;
    save_corpus(&corpus, &out.join("corpus.json"))?;
    corpus.ontology.save(&out.join("ontology.json"))?;
    db.save(&out.join("db.json"))?;
    println!(
        "wrote {} dialogues to {}",
        corpus.dialogues.len(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    cfg: &CliConfig,
    overrides: &Overrides,
    corpus: Option<&Path>,
    ontology: Option<&Path>,
    db: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let (corpus, db) = load_data(cfg, corpus, ontology, db)?;
    let mut training = cfg.training.clone();
    overrides.apply(&mut training);
    training.validate()?;
    std::fs::create_dir_all(out)?;
    let mut log = std::fs::File::create(out.join("log.jsonl"))?;
    let outcome = train(&training, &corpus, &db, Some(&mut log))?;
    let model_path = out.join("model.json");
    outcome.model.save(&model_path)?;
    let metrics = evaluate(&outcome.model, &corpus, &db, Split::Test)?;
    std::fs::write(
        out.join("metrics.json"),
        serde_json::to_string_pretty(&metrics)?,
    )?;
    println!(
        "best epoch {} (valid joint {:.4}); test joint {:.4}, success {:.4}; model at {}",
        outcome.best_epoch,
        outcome.best_valid_joint_acc,
        metrics.joint_goal_accuracy,
        metrics.success_rate,
        model_path.display()
    );
    Ok(())
}

pub fn cmd_evaluate(
    cfg: &CliConfig,
    model: &Path,
    corpus: Option<&Path>,
    ontology: Option<&Path>,
    db: Option<&Path>,
    split: Split,
    out: Option<&Path>,
) -> Result<()> {
    let (corpus, db) = load_data(cfg, corpus, ontology, db)?;
    let model = Model::load(model)?;
    let metrics = evaluate(&model, &corpus, &db, split)?;
    let text = serde_json::to_string_pretty(&metrics)?;
    match out {
        Some(path) => std::fs::write(path, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}

pub fn cmd_sweep(
    cfg: &CliConfig,
    corpus: Option<&Path>,
    ontology: Option<&Path>,
    db: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let (corpus, db) = load_data(cfg, corpus, ontology, db)?;
    let report = run_sweep(&cfg.plan, &cfg.training, &corpus, &db, out)?;
    write_reports(&report, out)?;
    let failures: usize = report.runs.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} runs ({} failed); reports at {}",
        report.runs.len(),
        failures,
        out.display()
    );
    if failures > 0 {
        return Err(Error::Report(format!("{failures} sweep runs failed")));
    }
    Ok(())
}

pub fn cmd_chat(model: &Path, db: &Path, show_state: bool) -> Result<()> {
    let model = Model::load(model)?;
    let db = EntityDb::load(db)?;
    let stdin = std::io::stdin();
    crate::chat::repl(&model, &db, show_state, stdin.lock(), std::io::stdout())
}

pub fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "valid" => Ok(Split::Valid),
        "test" => Ok(Split::Test),
        other => Err(Error::Config(format!(
            "unknown split '{other}' (expected train, valid or test)"
        ))),
    }
}

/// Load the config file when given, defaults otherwise.
pub fn load_config(path: Option<&PathBuf>) -> Result<CliConfig> {
    match path {
        Some(p) => CliConfig::load(p),
        None => Ok(CliConfig::default()),
    }
}
