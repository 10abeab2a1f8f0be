//! Cross-module invariants on realistic corpora: label masking, wire
//! round-trips, and the tokenize/delexicalize/lexicalize pipeline.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use dialog_core::corpus::{
    delexicalize, lexicalize, load_corpus, save_corpus, split_labelled, tokenize, Corpus, Split,
};
use dialog_core::toy::{generate_toy_corpus, ToyConfig};

fn small_corpus(seed: u64) -> Corpus {
    let cfg = ToyConfig {
        dialogues: 40,
        entities_per_domain: 6,
        ..ToyConfig::default()
    };
    generate_toy_corpus(&cfg, seed).unwrap().0
}

fn labelled_ids(corpus: &Corpus) -> BTreeSet<&str> {
    corpus
        .dialogues_in(Split::Train)
        .filter(|d| d.turns.iter().all(|t| t.is_labelled))
        .map(|d| d.id.as_str())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn label_masks_nest_across_fractions(
        f1 in 0.0f64..=1.0,
        f2 in 0.0f64..=1.0,
        seed in 0u64..50,
    ) {
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let corpus = small_corpus(3);
        let small = split_labelled(&corpus, lo, seed).unwrap();
        let large = split_labelled(&corpus, hi, seed).unwrap();
        let small_ids = labelled_ids(&small);
        let large_ids = labelled_ids(&large);
        prop_assert!(small_ids.is_subset(&large_ids));
        // Only training dialogues are ever masked.
        for c in [&small, &large] {
            for d in c.dialogues.iter().filter(|d| d.split != Split::Train) {
                prop_assert!(d.turns.iter().all(|t| t.is_labelled));
            }
        }
    }

    #[test]
    fn label_mask_count_matches_fraction(f in 0.0f64..=1.0, seed in 0u64..50) {
        let corpus = small_corpus(3);
        let masked = split_labelled(&corpus, f, seed).unwrap();
        let total = corpus.dialogues_in(Split::Train).count();
        let expect = ((f * total as f64).round() as usize).min(total);
        prop_assert_eq!(labelled_ids(&masked).len(), expect);
    }

    #[test]
    fn label_mask_is_deterministic(f in 0.0f64..=1.0, seed in 0u64..50) {
        let corpus = small_corpus(3);
        let a = split_labelled(&corpus, f, seed).unwrap();
        let b = split_labelled(&corpus, f, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn tokenize_output_well_formed(text in "[a-zA-Z0-9 .,?!':]{0,60}") {
        for tok in tokenize(&text) {
            prop_assert!(!tok.is_empty());
            prop_assert_eq!(tok.to_lowercase(), tok.clone());
            prop_assert!(!tok.contains(char::is_whitespace));
        }
    }

    #[test]
    fn lexicalize_inverts_delexicalize(
        slot in "[a-z]{1,8}",
        value in "[a-z]{1,8}",
        filler in proptest::collection::vec("[a-z]{1,6}", 0..6),
    ) {
        // Distinct surface forms so substitution is unambiguous.
        prop_assume!(!filler.contains(&value));
        let entity: BTreeMap<String, String> =
            [(slot.clone(), value.clone())].into_iter().collect();
        let mut tokens = filler.clone();
        tokens.push(value.clone());
        let delex = delexicalize(&tokens, &entity);
        let ph = format!("[value_{slot}]");
        prop_assert!(delex.contains(&ph));
        let relex = lexicalize(&delex, &entity).unwrap();
        prop_assert_eq!(relex, tokens);
    }
}

#[test]
fn placeholders_survive_tokenize() {
    let toks = tokenize("the phone is [value_phone] .");
    assert!(toks.contains(&"[value_phone]".to_string()));
    assert_eq!(toks.last().unwrap(), ".");
}

#[test]
fn lexicalize_fails_on_missing_field() {
    let entity: BTreeMap<String, String> = BTreeMap::new();
    let tokens = vec!["[value_phone]".to_string()];
    assert!(lexicalize(&tokens, &entity).is_err());
}

#[test]
fn corpus_json_round_trip() {
    let corpus = small_corpus(9);
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.json");
    let ontology_path = dir.path().join("ontology.json");
    save_corpus(&corpus, &corpus_path).unwrap();
    corpus.ontology.save(&ontology_path).unwrap();
    let loaded = load_corpus(&corpus_path, &ontology_path).unwrap();
    assert_eq!(loaded, corpus);
}

#[test]
fn masked_corpus_round_trips_unlabelled_turns() {
    let corpus = small_corpus(9);
    let masked = split_labelled(&corpus, 0.5, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.json");
    let ontology_path = dir.path().join("ontology.json");
    save_corpus(&masked, &corpus_path).unwrap();
    masked.ontology.save(&ontology_path).unwrap();
    let loaded = load_corpus(&corpus_path, &ontology_path).unwrap();
    assert_eq!(loaded, masked);
}

#[test]
fn toy_generation_is_deterministic() {
    let cfg = ToyConfig {
        dialogues: 25,
        ..ToyConfig::default()
    };
    let (a, db_a) = generate_toy_corpus(&cfg, 5).unwrap();
    let (b, db_b) = generate_toy_corpus(&cfg, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(db_a, db_b);
    let (c, _) = generate_toy_corpus(&cfg, 6).unwrap();
    assert_ne!(a, c);
}
