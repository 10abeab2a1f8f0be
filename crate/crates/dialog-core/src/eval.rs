//! Inference-time dialogue runner and evaluation metrics: joint goal
//! accuracy, task success, value-frequency bucket accuracy, and
//! per-domain success.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dialogue, Ontology, SlotKey, Split, DONT_CARE, DONT_CARE_IDX,
    NOT_MENTIONED_IDX};
use crate::dst::{self, BeliefState, TurnPrediction};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::kb::{self, EntityDb, Record};
use crate::model::{BeliefKeep, Model};
use crate::policy::{self, GenerationResult};

/// Everything the system produced for one turn.
#[derive(Clone, Debug)]
pub struct TurnRun {
    pub domain: String,
    pub pred: TurnPrediction,
    pub belief: BeliefState,
    pub output: GenerationResult,
    /// Entity backing the offer/lexicalization, when any matched.
    pub offered: Option<Record>,
}

/// Run the full pipeline over one dialogue: track, query, decide,
/// generate. Uses the corpus turn structure for the user side only.
pub fn run_dialogue(model: &Model, db: &EntityDb, dialogue: &Dialogue) -> Result<Vec<TurnRun>> {
    let mut g = Graph::new();
    let token_table = model.store.bind(&mut g, "embed.token");
    let sv = dst::build_sv_embeddings(
        &mut g,
        &model.store,
        &model.ontology,
        &model.index,
        model.config.embed_dim,
    )?;
    let mut belief = BeliefState::initial(&model.ontology);
    let mut runs = Vec::with_capacity(dialogue.turns.len());
    for turn in &dialogue.turns {
        let enc = crate::neural::encode_sequence(
            &mut g,
            &model.store,
            token_table,
            model.config.embed_dim,
            &turn.user_ids,
            None,
        )?;
        let graph_pred = dst::predict_turn(&mut g, &enc, &sv, model.config.attention_normalize);
        let pred = graph_pred.extract(&g);
        belief = dst::update_belief(&belief, &pred, model.config.belief_keep)?;

        let (matching, q) = kb::query(db, &belief, &model.ontology, &turn.domain)?;
        let offered = kb::select_entity(&matching).cloned();
        let belief_node = g.input(belief.concat());
        let z = policy::policy(&mut g, model, belief_node, enc.final_state, &q)?;
        let gate0 = policy::init_gate_memory(&pred, &model.index);
        let mut output = policy::generate(&mut g, model, z, &gate0, model.config.max_decode_len)?;
        if let Some(entity) = &offered {
            output.lexicalized =
                crate::corpus::lexicalize(&output.delex_tokens, &entity.fields).ok();
        }
        runs.push(TurnRun {
            domain: turn.domain.clone(),
            pred,
            belief: belief.clone(),
            output,
            offered,
        });
    }
    Ok(runs)
}

/// Accumulated gold belief argmaxes per turn, applying the same
/// keep/replace rule as inference so the comparison is like-for-like.
pub fn gold_trajectory(
    dialogue: &Dialogue,
    ontology: &Ontology,
    keep: BeliefKeep,
) -> Result<Vec<BTreeMap<SlotKey, usize>>> {
    let mut acc: BTreeMap<SlotKey, usize> = ontology
        .informable_slots()
        .map(|(k, _)| (k.clone(), NOT_MENTIONED_IDX))
        .collect();
    let mut out = Vec::with_capacity(dialogue.turns.len());
    for turn in &dialogue.turns {
        let gold = turn.gold_informable.as_ref().ok_or_else(|| {
            Error::Report(format!(
                "dialogue {} has unlabelled turns; cannot score state tracking",
                dialogue.id
            ))
        })?;
        for (k, &idx) in gold {
            let keep_prev = idx == NOT_MENTIONED_IDX
                || (idx == DONT_CARE_IDX && keep == BeliefKeep::Both);
            if !keep_prev {
                acc.insert(k.clone(), idx);
            }
        }
        out.push(acc.clone());
    }
    Ok(out)
}

/// A turn counts as jointly correct when every slot's belief argmax
/// equals the accumulated gold label.
pub fn joint_correct_turns(
    runs: &[TurnRun],
    gold: &[BTreeMap<SlotKey, usize>],
) -> (usize, usize) {
    let mut correct = 0;
    for (run, gold_turn) in runs.iter().zip(gold.iter()) {
        let ok = gold_turn
            .iter()
            .all(|((d, s), &idx)| run.belief.argmax(d, s) == idx);
        if ok {
            correct += 1;
        }
    }
    (correct, runs.len())
}

fn entity_satisfies(entity: &Record, constraints: &BTreeMap<SlotKey, String>, domain: &str) -> bool {
    constraints.iter().all(|((d, s), v)| {
        if d != domain || v == DONT_CARE {
            return true;
        }
        entity.fields.get(s).map(|fv| fv == v).unwrap_or(false)
    })
}

fn domain_offer_ok(dialogue: &Dialogue, runs: &[TurnRun], domain: &str) -> bool {
    let has_constraints = dialogue
        .goal
        .constraints
        .keys()
        .any(|(d, _)| d == domain);
    if !has_constraints {
        return true;
    }
    runs.iter().any(|r| {
        r.domain == domain
            && r.output.mentions_placeholder("name")
            && r.offered
                .as_ref()
                .map(|e| entity_satisfies(e, &dialogue.goal.constraints, domain))
                .unwrap_or(false)
    })
}

fn domain_requests_ok(dialogue: &Dialogue, runs: &[TurnRun], domain: &str) -> bool {
    dialogue
        .goal
        .requests
        .iter()
        .filter(|(d, _)| d == domain)
        .all(|(d, slot)| {
            runs.iter()
                .any(|r| r.domain == *d && r.output.mentions_placeholder(slot))
        })
}

/// Success restricted to one domain: a suitable entity was offered and
/// every requested attribute of that domain was provided.
pub fn domain_success(dialogue: &Dialogue, runs: &[TurnRun], domain: &str) -> bool {
    domain_offer_ok(dialogue, runs, domain) && domain_requests_ok(dialogue, runs, domain)
}

/// Whole-dialogue success: every tagged domain succeeds.
pub fn dialogue_success(dialogue: &Dialogue, runs: &[TurnRun]) -> bool {
    dialogue
        .domain_tags
        .iter()
        .all(|d| domain_success(dialogue, runs, d))
}

pub const BUCKET_LABELS: [&str; 6] = ["0", "1-5", "6-10", "11-15", "16-20", ">20"];

pub fn bucket_label(count: usize) -> &'static str {
    match count {
        0 => "0",
        1..=5 => "1-5",
        6..=10 => "6-10",
        11..=15 => "11-15",
        16..=20 => "16-20",
        _ => ">20",
    }
}

/// How often each (domain, slot, value) appears as a turn label in the
/// labelled training data.
#[derive(Clone, Debug, Default)]
pub struct ValueCounts {
    pub counts: BTreeMap<(String, String, String), usize>,
}

impl ValueCounts {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut counts = BTreeMap::new();
        for d in corpus.dialogues_in(Split::Train) {
            for t in &d.turns {
                let Some(gold) = t.gold_informable.as_ref() else {
                    continue;
                };
                if !t.is_labelled {
                    continue;
                }
                for ((dom, slot), &idx) in gold {
                    if idx == NOT_MENTIONED_IDX || idx == DONT_CARE_IDX {
                        continue;
                    }
                    let Some(value) = corpus.ontology.value_name(dom, slot, idx) else {
                        continue;
                    };
                    *counts
                        .entry((dom.clone(), slot.clone(), value.to_string()))
                        .or_insert(0) += 1;
                }
            }
        }
        Self { counts }
    }

    pub fn count(&self, domain: &str, slot: &str, value: &str) -> usize {
        self.counts
            .get(&(domain.to_string(), slot.to_string(), value.to_string()))
            .copied()
            .unwrap_or(0)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct BucketStat {
    pub correct: usize,
    pub total: usize,
}

impl BucketStat {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub joint_goal_accuracy: f64,
    pub success_rate: f64,
    /// Per-slot accuracy over concretely-labelled slot instances.
    pub slot_accuracy: f64,
    /// Keyed by training-frequency bucket; empty buckets are absent.
    pub bucket_accuracy: BTreeMap<String, BucketStat>,
    pub per_domain_success: BTreeMap<String, f64>,
    pub dialogues: usize,
    pub turns: usize,
}

impl MetricsReport {
    /// The bucket stats must partition the slot instances: the weighted
    /// mean of bucket accuracies reproduces the overall slot accuracy.
    pub fn bucket_weighted_mean(&self) -> f64 {
        let total: usize = self.bucket_accuracy.values().map(|b| b.total).sum();
        if total == 0 {
            return 0.0;
        }
        let correct: usize = self.bucket_accuracy.values().map(|b| b.correct).sum();
        correct as f64 / total as f64
    }
}

/// Score a model over one corpus split. Slot instances for the bucket
/// report are turns x slots whose accumulated gold label is a concrete
/// value; frequency comes from the labelled training portion.
pub fn evaluate(model: &Model, corpus: &Corpus, db: &EntityDb, split: Split) -> Result<MetricsReport> {
    let counts = ValueCounts::from_corpus(corpus);
    let mut joint_correct = 0;
    let mut turns = 0;
    let mut successes = 0;
    let mut dialogues = 0;
    let mut buckets: BTreeMap<String, BucketStat> = BTreeMap::new();
    let mut slot_correct = 0usize;
    let mut slot_total = 0usize;
    let mut domain_hits: BTreeMap<String, (usize, usize)> = BTreeMap::new();

    for dialogue in corpus.dialogues_in(split) {
        let runs = run_dialogue(model, db, dialogue)?;
        let gold = gold_trajectory(dialogue, &model.ontology, model.config.belief_keep)?;
        let (c, t) = joint_correct_turns(&runs, &gold);
        joint_correct += c;
        turns += t;
        dialogues += 1;
        if dialogue_success(dialogue, &runs) {
            successes += 1;
        }
        for domain in &dialogue.domain_tags {
            let entry = domain_hits.entry(domain.clone()).or_insert((0, 0));
            entry.1 += 1;
            if domain_success(dialogue, &runs, domain) {
                entry.0 += 1;
            }
        }
        for (run, gold_turn) in runs.iter().zip(gold.iter()) {
            for ((d, s), &idx) in gold_turn {
                if idx == NOT_MENTIONED_IDX || idx == DONT_CARE_IDX {
                    continue;
                }
                let value = model
                    .ontology
                    .value_name(d, s, idx)
                    .ok_or_else(|| Error::Report(format!("bad gold index for ({d}, {s})")))?;
                let label = bucket_label(counts.count(d, s, value));
                let stat = buckets.entry(label.to_string()).or_default();
                stat.total += 1;
                slot_total += 1;
                if run.belief.argmax(d, s) == idx {
                    stat.correct += 1;
                    slot_correct += 1;
                }
            }
        }
    }

    if turns == 0 {
        return Err(Error::Report(format!("no dialogues in split {split:?}")));
    }
    Ok(MetricsReport {
        joint_goal_accuracy: joint_correct as f64 / turns as f64,
        success_rate: successes as f64 / dialogues as f64,
        slot_accuracy: if slot_total == 0 {
            0.0
        } else {
            slot_correct as f64 / slot_total as f64
        },
        bucket_accuracy: buckets,
        per_domain_success: domain_hits
            .into_iter()
            .map(|(d, (c, n))| (d, c as f64 / n as f64))
            .collect(),
        dialogues,
        turns,
    })
}

/// Mean and (population) standard deviation across per-seed results.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
