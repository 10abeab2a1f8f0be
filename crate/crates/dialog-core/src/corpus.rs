//! Data model for ontologies, dialogues and annotations, plus corpus
//! ingestion, labelled-fraction splitting and delexicalization.
//!
//! Tokenization is whitespace after lowercasing and punctuation
//! splitting; placeholder tokens of the form `[value_<slot>]` are kept
//! atomic.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NOT_MENTIONED: &str = "not-mentioned";
pub const DONT_CARE: &str = "dont-care";
/// Fixed index of `not-mentioned` in every value list.
pub const NOT_MENTIONED_IDX: usize = 0;
/// Fixed index of `dont-care` in every value list.
pub const DONT_CARE_IDX: usize = 1;

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "</s>";

pub type SlotKey = (String, String);

/// Closed slot/value inventory. Every informable value list carries the
/// two special values at indices 0 and 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Ontology {
    pub domains: Vec<String>,
    pub informable: BTreeMap<SlotKey, Vec<String>>,
    pub requestable: BTreeMap<String, Vec<String>>,
}

// JSON form uses nested maps (tuple keys are not valid JSON keys).
#[derive(Serialize, Deserialize)]
struct OntologyWire {
    domains: Vec<String>,
    informable: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    requestable: BTreeMap<String, Vec<String>>,
}

impl Serialize for Ontology {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let mut informable: BTreeMap<String, BTreeMap<String, Vec<String>>> = BTreeMap::new();
        for ((d, s), values) in &self.informable {
            informable
                .entry(d.clone())
                .or_default()
                .insert(s.clone(), values.clone());
        }
        OntologyWire {
            domains: self.domains.clone(),
            informable,
            requestable: self.requestable.clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Ontology {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let wire = OntologyWire::deserialize(de)?;
        let mut informable = BTreeMap::new();
        for (d, slots) in wire.informable {
            for (s, values) in slots {
                informable.insert((d.clone(), s), values);
            }
        }
        Ok(Ontology {
            domains: wire.domains,
            informable,
            requestable: wire.requestable,
        })
    }
}

impl Ontology {
    /// Build from raw per-domain value lists (without special values).
    pub fn new(
        informable: BTreeMap<SlotKey, Vec<String>>,
        requestable: BTreeMap<String, Vec<String>>,
    ) -> Result<Self> {
        let mut full = BTreeMap::new();
        let mut domains = BTreeSet::new();
        for ((d, s), values) in informable {
            if values.is_empty() {
                return Err(Error::Config(format!("empty value list for ({d}, {s})")));
            }
            let mut seen = BTreeSet::new();
            for v in &values {
                if v == NOT_MENTIONED || v == DONT_CARE {
                    return Err(Error::Config(format!(
                        "special value '{v}' must not appear in the ontology file for ({d}, {s})"
                    )));
                }
                if !seen.insert(v.clone()) {
                    return Err(Error::Config(format!("duplicate value '{v}' in ({d}, {s})")));
                }
            }
            let mut list = vec![NOT_MENTIONED.to_string(), DONT_CARE.to_string()];
            list.extend(values);
            domains.insert(d.clone());
            full.insert((d, s), list);
        }
        for d in requestable.keys() {
            domains.insert(d.clone());
        }
        Ok(Self {
            domains: domains.into_iter().collect(),
            informable: full,
            requestable,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            informable: BTreeMap<String, BTreeMap<String, Vec<String>>>,
            requestable: BTreeMap<String, Vec<String>>,
        }
        let raw: Raw = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let mut informable = BTreeMap::new();
        for (d, slots) in raw.informable {
            for (s, values) in slots {
                informable.insert((d.clone(), s), values);
            }
        }
        Ontology::new(informable, raw.requestable)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut informable: BTreeMap<String, BTreeMap<String, Vec<String>>> = BTreeMap::new();
        for ((d, s), values) in &self.informable {
            informable
                .entry(d.clone())
                .or_default()
                .insert(s.clone(), values[2..].to_vec());
        }
        let out = serde_json::json!({
            "informable": informable,
            "requestable": self.requestable,
        });
        std::fs::write(path, serde_json::to_string_pretty(&out)?)?;
        Ok(())
    }

    pub fn value_index(&self, domain: &str, slot: &str, value: &str) -> Option<usize> {
        self.informable
            .get(&(domain.to_string(), slot.to_string()))?
            .iter()
            .position(|v| v == value)
    }

    pub fn value_name(&self, domain: &str, slot: &str, index: usize) -> Option<&str> {
        self.informable
            .get(&(domain.to_string(), slot.to_string()))?
            .get(index)
            .map(|s| s.as_str())
    }

    pub fn informable_slots(&self) -> impl Iterator<Item = (&SlotKey, &Vec<String>)> {
        self.informable.iter()
    }

    /// Requestable (domain, slot) pairs in fixed order; this ordering
    /// defines the gate-memory indexing used by the generator.
    pub fn requestable_pairs(&self) -> Vec<SlotKey> {
        let mut out = Vec::new();
        for (d, slots) in &self.requestable {
            for s in slots {
                out.push((d.clone(), s.clone()));
            }
        }
        out
    }

    /// Total belief-state dimension: sum of value-list lengths.
    pub fn belief_dim(&self) -> usize {
        self.informable.values().map(|v| v.len()).sum()
    }
}

/// Token <-> index bijection with reserved `<unk>`, `<bos>`, `</s>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub tokens: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens(all: impl IntoIterator<Item = String>) -> Self {
        let mut set: BTreeSet<String> = all.into_iter().collect();
        for r in [UNK, BOS, EOS] {
            set.remove(r);
        }
        let mut tokens = vec![UNK.to_string(), BOS.to_string(), EOS.to_string()];
        tokens.extend(set);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    /// Rebuild from an already-ordered token list (e.g. a checkpoint).
    pub fn from_token_list(tokens: Vec<String>) -> Self {
        let mut v = Self {
            tokens,
            index: BTreeMap::new(),
        };
        v.rebuild_index();
        v
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        *self.index.get(token).unwrap_or(&0)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn unk_id(&self) -> usize {
        0
    }
    pub fn bos_id(&self) -> usize {
        1
    }
    pub fn eos_id(&self) -> usize {
        2
    }
}

/// Lowercase, split punctuation into separate tokens, keep
/// `[value_...]` placeholders atomic, then split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.to_lowercase().split_whitespace() {
        if chunk.starts_with("[value_") && chunk.ends_with(']') {
            out.push(chunk.to_string());
            continue;
        }
        let mut cur = String::new();
        for ch in chunk.chars() {
            if ".,?!;:'\"".contains(ch) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

pub fn placeholder(slot: &str) -> String {
    format!("[value_{slot}]")
}

/// Slot name of a placeholder token, if it is one.
pub fn placeholder_slot(token: &str) -> Option<&str> {
    token
        .strip_prefix("[value_")
        .and_then(|rest| rest.strip_suffix(']'))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Turn {
    pub user_tokens: Vec<String>,
    /// Delexicalized system tokens, always ending with `</s>`.
    pub system_tokens: Vec<String>,
    pub user_ids: Vec<usize>,
    pub system_ids: Vec<usize>,
    /// Active domain of this turn.
    pub domain: String,
    /// Value index per slot mentioned this turn; absent when unlabelled.
    pub gold_informable: Option<BTreeMap<SlotKey, usize>>,
    /// Requestable slots asked this turn; absent when unlabelled.
    pub gold_requestable: Option<BTreeSet<SlotKey>>,
    pub is_labelled: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Goal {
    pub constraints: BTreeMap<SlotKey, String>,
    pub requests: BTreeSet<SlotKey>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dialogue {
    pub id: String,
    pub domain_tags: BTreeSet<String>,
    pub goal: Goal,
    pub turns: Vec<Turn>,
    pub split: Split,
}

/// Immutable after load/generation; safe to share across readers.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub ontology: Ontology,
    pub vocab: Vocab,
    pub dialogues: Vec<Dialogue>,
}

impl Corpus {
    pub fn dialogues_in(&self, split: Split) -> impl Iterator<Item = &Dialogue> {
        self.dialogues.iter().filter(move |d| d.split == split)
    }
}

// Wire format (External Interfaces). `split` and per-turn `domain` are
// carried so that save/load round-trips exactly.
#[derive(Serialize, Deserialize)]
pub(crate) struct RawTurn {
    pub(crate) user: String,
    pub(crate) system: String,
    pub(crate) belief: Vec<(String, String, String)>,
    pub(crate) requested: Vec<(String, String)>,
    pub(crate) labelled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub(crate) domain: Option<String>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct RawGoal {
    pub(crate) constraints: Vec<(String, String, String)>,
    pub(crate) requests: Vec<(String, String)>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct RawDialogue {
    pub(crate) id: String,
    pub(crate) domains: Vec<String>,
    pub(crate) goal: RawGoal,
    pub(crate) turns: Vec<RawTurn>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub(crate) split: Option<Split>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct RawCorpus {
    pub(crate) dialogues: Vec<RawDialogue>,
}

pub fn load_corpus(path: &Path, ontology_path: &Path) -> Result<Corpus> {
    let ontology = Ontology::load(ontology_path)?;
    let raw: RawCorpus = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    corpus_from_raw(raw, ontology)
}

pub(crate) fn corpus_from_raw(raw: RawCorpus, ontology: Ontology) -> Result<Corpus> {
    let mut dialogues = Vec::with_capacity(raw.dialogues.len());
    let mut all_tokens: Vec<String> = Vec::new();

    for rd in raw.dialogues {
        if rd.turns.is_empty() {
            return Err(Error::Schema {
                dialogue: rd.id,
                field: "turns".into(),
                message: "dialogue has no turns".into(),
            });
        }
        let mut goal = Goal::default();
        for (d, s, v) in rd.goal.constraints {
            if v != DONT_CARE && ontology.value_index(&d, &s, &v).is_none() {
                return Err(Error::Schema {
                    dialogue: rd.id,
                    field: "goal.constraints".into(),
                    message: format!("({d}, {s}, {v}) not in ontology"),
                });
            }
            goal.constraints.insert((d, s), v);
        }
        for (d, s) in rd.goal.requests {
            goal.requests.insert((d, s));
        }

        let fallback_domain = rd
            .domains
            .first()
            .cloned()
            .unwrap_or_else(|| ontology.domains.first().cloned().unwrap_or_default());
        let mut prev_domain = fallback_domain.clone();
        let mut turns = Vec::with_capacity(rd.turns.len());
        for rt in rd.turns {
            let user_tokens = tokenize(&rt.user);
            if user_tokens.is_empty() {
                return Err(Error::Schema {
                    dialogue: rd.id,
                    field: "turns.user".into(),
                    message: "empty user utterance".into(),
                });
            }
            let mut system_tokens = tokenize(&rt.system);
            if system_tokens.last().map(|t| t.as_str()) != Some(EOS) {
                system_tokens.push(EOS.to_string());
            }

            let domain = rt
                .domain
                .clone()
                .or_else(|| rt.belief.first().map(|(d, _, _)| d.clone()))
                .or_else(|| rt.requested.first().map(|(d, _)| d.clone()))
                .unwrap_or_else(|| prev_domain.clone());
            prev_domain = domain.clone();

            let (gold_informable, gold_requestable) = if rt.labelled {
                let mut inf = BTreeMap::new();
                for (d, s, v) in &rt.belief {
                    let idx = ontology.value_index(d, s, v).ok_or_else(|| {
                        Error::UnknownLabel {
                            domain: d.clone(),
                            slot: s.clone(),
                            value: v.clone(),
                        }
                    })?;
                    inf.insert((d.clone(), s.clone()), idx);
                }
                let mut req = BTreeSet::new();
                for (d, s) in &rt.requested {
                    if !self_requestable(&ontology, d, s) {
                        return Err(Error::Schema {
                            dialogue: rd.id.clone(),
                            field: "turns.requested".into(),
                            message: format!("({d}, {s}) not a requestable slot"),
                        });
                    }
                    req.insert((d.clone(), s.clone()));
                }
                (Some(inf), Some(req))
            } else {
                (None, None)
            };

            all_tokens.extend(user_tokens.iter().cloned());
            all_tokens.extend(system_tokens.iter().cloned());
            turns.push(Turn {
                user_tokens,
                system_tokens,
                user_ids: Vec::new(),
                system_ids: Vec::new(),
                domain,
                gold_informable,
                gold_requestable,
                is_labelled: rt.labelled,
            });
        }
        dialogues.push(Dialogue {
            id: rd.id,
            domain_tags: rd.domains.into_iter().collect(),
            goal,
            turns,
            split: rd.split.unwrap_or(Split::Train),
        });
    }

    let vocab = Vocab::from_tokens(all_tokens);
    for d in &mut dialogues {
        for t in &mut d.turns {
            t.user_ids = vocab.ids(&t.user_tokens);
            t.system_ids = vocab.ids(&t.system_tokens);
        }
    }
    Ok(Corpus {
        ontology,
        vocab,
        dialogues,
    })
}

fn self_requestable(ontology: &Ontology, domain: &str, slot: &str) -> bool {
    ontology
        .requestable
        .get(domain)
        .map(|slots| slots.iter().any(|s| s == slot))
        .unwrap_or(false)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let raw = corpus_to_raw(corpus);
    std::fs::write(path, serde_json::to_string(&raw)?)?;
    Ok(())
}

fn corpus_to_raw(corpus: &Corpus) -> RawCorpus {
    let dialogues = corpus
        .dialogues
        .iter()
        .map(|d| RawDialogue {
            id: d.id.clone(),
            domains: d.domain_tags.iter().cloned().collect(),
            goal: RawGoal {
                constraints: d
                    .goal
                    .constraints
                    .iter()
                    .map(|((dm, s), v)| (dm.clone(), s.clone(), v.clone()))
                    .collect(),
                requests: d.goal.requests.iter().cloned().collect(),
            },
            turns: d
                .turns
                .iter()
                .map(|t| {
                    let system = t.system_tokens[..t.system_tokens.len() - 1].join(" ");
                    RawTurn {
                        user: t.user_tokens.join(" "),
                        system,
                        belief: t
                            .gold_informable
                            .as_ref()
                            .map(|m| {
                                m.iter()
                                    .map(|((dm, s), &idx)| {
                                        let v = corpus
                                            .ontology
                                            .value_name(dm, s, idx)
                                            .unwrap_or(NOT_MENTIONED)
                                            .to_string();
                                        (dm.clone(), s.clone(), v)
                                    })
                                    .collect()
                            })
                            .unwrap_or_default(),
                        requested: t
                            .gold_requestable
                            .as_ref()
                            .map(|r| r.iter().cloned().collect())
                            .unwrap_or_default(),
                        labelled: t.is_labelled,
                        domain: Some(t.domain.clone()),
                    }
                })
                .collect(),
            split: Some(d.split),
        })
        .collect();
    RawCorpus { dialogues }
}

/// Keep `round(fraction * #train)` training dialogues labelled, mask the
/// rest. Masking is per dialogue and nested across fractions for the same
/// seed: the labelled set at a smaller fraction is a subset of the set at
/// any larger fraction.
pub fn split_labelled(corpus: &Corpus, fraction: f64, seed: u64) -> Result<Corpus> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "labelled fraction {fraction} outside [0, 1]"
        )));
    }
    let mut out = corpus.clone();
    let train_idx: Vec<usize> = out
        .dialogues
        .iter()
        .enumerate()
        .filter(|(_, d)| d.split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    let mut order = train_idx.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let keep = ((fraction * train_idx.len() as f64).round() as usize).min(train_idx.len());
    let masked: BTreeSet<usize> = order[keep..].iter().cloned().collect();
    for (i, d) in out.dialogues.iter_mut().enumerate() {
        if masked.contains(&i) {
            for t in &mut d.turns {
                t.is_labelled = false;
                t.gold_informable = None;
                t.gold_requestable = None;
            }
        }
    }
    Ok(out)
}

/// Replace surface values of entity fields with `[value_<slot>]` tokens.
pub fn delexicalize(tokens: &[String], entity: &BTreeMap<String, String>) -> Vec<String> {
    tokens
        .iter()
        .map(|tok| {
            for (slot, value) in entity {
                if slot != "id" && tok == value {
                    return placeholder(slot);
                }
            }
            tok.clone()
        })
        .collect()
}

/// Replace `[value_<slot>]` placeholders with the entity's field values.
pub fn lexicalize(tokens: &[String], entity: &BTreeMap<String, String>) -> Result<Vec<String>> {
    tokens
        .iter()
        .map(|tok| match placeholder_slot(tok) {
            Some(slot) => entity
                .get(slot)
                .cloned()
                .ok_or_else(|| Error::Generation(slot.to_string())),
            None => Ok(tok.clone()),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_ontology() -> Ontology {
        let mut informable = BTreeMap::new();
        informable.insert(
            ("hotel".to_string(), "pricerange".to_string()),
            vec!["cheap".to_string(), "expensive".to_string()],
        );
        informable.insert(
            ("hotel".to_string(), "area".to_string()),
            vec!["north".to_string(), "south".to_string()],
        );
        let mut requestable = BTreeMap::new();
        requestable.insert(
            "hotel".to_string(),
            vec!["phone".to_string(), "postcode".to_string()],
        );
        Ontology::new(informable, requestable).unwrap()
    }

    #[test]
    fn ontology_special_indices() {
        let ont = toy_ontology();
        assert_eq!(
            ont.value_index("hotel", "pricerange", NOT_MENTIONED),
            Some(NOT_MENTIONED_IDX)
        );
        assert_eq!(
            ont.value_index("hotel", "pricerange", DONT_CARE),
            Some(DONT_CARE_IDX)
        );
        assert_eq!(ont.value_index("hotel", "pricerange", "cheap"), Some(2));
        assert_eq!(ont.value_name("hotel", "pricerange", 2), Some("cheap"));
    }

    #[test]
    fn ontology_lookup_inverse() {
        let ont = toy_ontology();
        for ((d, s), values) in ont.informable_slots() {
            for (k, v) in values.iter().enumerate() {
                assert_eq!(ont.value_index(d, s, v), Some(k));
                assert_eq!(ont.value_name(d, s, k), Some(v.as_str()));
            }
        }
    }

    #[test]
    fn tokenize_splits_punctuation() {
        assert_eq!(
            tokenize("What is the phone, please?"),
            vec!["what", "is", "the", "phone", ",", "please", "?"]
        );
    }

    #[test]
    fn tokenize_keeps_placeholders() {
        assert_eq!(
            tokenize("the phone is [value_phone] ."),
            vec!["the", "phone", "is", "[value_phone]", "."]
        );
    }

    fn fixture_json() -> String {
        serde_json::json!({
            "dialogues": [
                {
                    "id": "d1",
                    "domains": ["hotel"],
                    "goal": {
                        "constraints": [["hotel", "pricerange", "cheap"]],
                        "requests": [["hotel", "phone"]]
                    },
                    "turns": [
                        {
                            "user": "i want a cheap hotel",
                            "system": "ok , any area ?",
                            "belief": [["hotel", "pricerange", "cheap"]],
                            "requested": [],
                            "labelled": true
                        },
                        {
                            "user": "what is the phone ?",
                            "system": "the phone is [value_phone] .",
                            "belief": [],
                            "requested": [["hotel", "phone"]],
                            "labelled": true
                        }
                    ]
                },
                {
                    "id": "d2",
                    "domains": ["hotel"],
                    "goal": { "constraints": [], "requests": [] },
                    "turns": [
                        {
                            "user": "hello there",
                            "system": "hi , how can i help ?",
                            "belief": [],
                            "requested": [],
                            "labelled": true
                        }
                    ]
                }
            ]
        })
        .to_string()
    }

    fn write_fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let corpus_path = dir.join("corpus.json");
        let ont_path = dir.join("ontology.json");
        std::fs::write(&corpus_path, fixture_json()).unwrap();
        toy_ontology().save(&ont_path).unwrap();
        (corpus_path, ont_path)
    }

    #[test]
    fn load_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (cp, op) = write_fixture(dir.path());
        let corpus = load_corpus(&cp, &op).unwrap();
        assert_eq!(corpus.dialogues.len(), 2);
        // All tokens covered by the vocab.
        for d in &corpus.dialogues {
            for t in &d.turns {
                for tok in t.user_tokens.iter().chain(t.system_tokens.iter()) {
                    assert!(corpus.vocab.contains(tok), "missing {tok}");
                }
            }
        }
        // Label resolved to ontology index.
        let t0 = &corpus.dialogues[0].turns[0];
        let idx = t0.gold_informable.as_ref().unwrap()
            [&("hotel".to_string(), "pricerange".to_string())];
        assert_eq!(
            idx,
            corpus
                .ontology
                .value_index("hotel", "pricerange", "cheap")
                .unwrap()
        );
        // System turns end with EOS.
        assert_eq!(t0.system_tokens.last().unwrap(), EOS);
    }

    #[test]
    fn load_rejects_unknown_label_value() {
        let dir = tempfile::tempdir().unwrap();
        let (cp, op) = write_fixture(dir.path());
        let bad = fixture_json().replace("\"cheap\"", "\"cheep\"");
        std::fs::write(&cp, bad).unwrap();
        let err = load_corpus(&cp, &op).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("hotel") && msg.contains("cheep"), "{msg}");
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (cp, op) = write_fixture(dir.path());
        let corpus = load_corpus(&cp, &op).unwrap();
        let saved = dir.path().join("saved.json");
        save_corpus(&corpus, &saved).unwrap();
        let reloaded = load_corpus(&saved, &op).unwrap();
        assert_eq!(corpus, reloaded);
    }

    #[test]
    fn split_labelled_extremes() {
        let dir = tempfile::tempdir().unwrap();
        let (cp, op) = write_fixture(dir.path());
        let corpus = load_corpus(&cp, &op).unwrap();
        let all = split_labelled(&corpus, 1.0, 1).unwrap();
        assert!(all
            .dialogues
            .iter()
            .flat_map(|d| &d.turns)
            .all(|t| t.is_labelled));
        let none = split_labelled(&corpus, 0.0, 1).unwrap();
        assert!(none
            .dialogues
            .iter()
            .flat_map(|d| &d.turns)
            .all(|t| !t.is_labelled && t.gold_informable.is_none()));
    }

    #[test]
    fn delexicalize_and_back() {
        let mut entity = BTreeMap::new();
        entity.insert("phone".to_string(), "01223".to_string());
        let tokens: Vec<String> = ["the", "phone", "is", "01223"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let delex = delexicalize(&tokens, &entity);
        assert_eq!(delex[3], "[value_phone]");
        let lex = lexicalize(&delex, &entity).unwrap();
        assert_eq!(lex, tokens);
    }

    #[test]
    fn lexicalize_missing_field_errors() {
        let entity = BTreeMap::new();
        let tokens = vec!["[value_phone]".to_string()];
        let err = lexicalize(&tokens, &entity).unwrap_err();
        assert!(err.to_string().contains("phone"));
    }
}
