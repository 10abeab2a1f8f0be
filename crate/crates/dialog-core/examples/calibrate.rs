//! Scratch harness for timing and accuracy calibration on the toy corpus.

use dialog_core::corpus::Split;
use dialog_core::eval::evaluate;
use dialog_core::toy::{generate_toy_corpus, ToyConfig};
use dialog_core::training::{train, TrainMode, TrainingConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let fraction: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20);
    let mode = match args.get(3).map(|s| s.as_str()) {
        Some("pi") => TrainMode::Pi,
        Some("pseudo") => TrainMode::Pseudo,
        _ => TrainMode::Baseline,
    };
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0);
    let lr: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let clip: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(5.0);
    let dialogues: usize = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(500);

    let toy = ToyConfig {
        dialogues,
        ..ToyConfig::default()
    };
    let (corpus, db) = generate_toy_corpus(&toy, 42).unwrap();
    eprintln!(
        "corpus: {} dialogues, vocab {}",
        corpus.dialogues.len(),
        corpus.vocab.len()
    );
    let cfg = TrainingConfig {
        mode,
        epochs,
        patience: epochs,
        learning_rate: lr,
        grad_clip: clip,
        labelled_fraction: fraction,
        seed,
        ..TrainingConfig::default()
    };
    let t0 = std::time::Instant::now();
    let out = train(&cfg, &corpus, &db, Some(&mut std::io::stderr())).unwrap();
    eprintln!(
        "trained in {:.1}s, best epoch {} (valid joint {:.4})",
        t0.elapsed().as_secs_f64(),
        out.best_epoch,
        out.best_valid_joint_acc
    );
    let report = evaluate(&out.model, &corpus, &db, Split::Test).unwrap();
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
}
