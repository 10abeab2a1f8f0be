//! Joint training of tracker, policy and generator, with optional
//! semi-supervised regimes: threshold-based pseudo-labelling and a
//! consistency (Pi-model) loss on noised encoder inputs.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{split_labelled, Corpus, Dialogue, SlotKey, Split, NOT_MENTIONED_IDX};
use crate::dst::{self, BeliefState};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::kb::{self, EntityDb};
use crate::model::{Model, ModelConfig};
use crate::policy;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    #[default]
    Baseline,
    Pseudo,
    Pi,
}

/// Target of the consistency loss: the detached clean-pass prediction,
/// or the gold label where one exists (falling back to the clean pass).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiTarget {
    #[default]
    CleanPred,
    Gold,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub mode: TrainMode,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    /// Pseudo-label confidence threshold; labels require probability
    /// strictly above it.
    pub nu: f64,
    /// Std-dev of the Gaussian noise on user-token embeddings.
    pub sigma: f64,
    /// Weight of the consistency loss.
    pub alpha: f64,
    pub pi_target: PiTarget,
    pub seed: u64,
    pub labelled_fraction: f64,
    pub model: ModelConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Baseline,
            learning_rate: 0.05,
            grad_clip: 5.0,
            batch_size: 16,
            epochs: 100,
            patience: 10,
            nu: 0.9,
            sigma: 0.1,
            alpha: 1.0,
            pi_target: PiTarget::CleanPred,
            seed: 0,
            labelled_fraction: 1.0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.labelled_fraction) {
            return Err(Error::Config("labelled_fraction must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.nu) {
            return Err(Error::Config("nu must be in [0, 1]".into()));
        }
        if self.sigma < 0.0 || self.alpha < 0.0 {
            return Err(Error::Config("sigma and alpha must be non-negative".into()));
        }
        if self.learning_rate <= 0.0 || self.grad_clip <= 0.0 {
            return Err(Error::Config(
                "learning_rate and grad_clip must be positive".into(),
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Scalar loss nodes for one batch; `total` is the node-level sum of the
/// three components, so its value equals their values' sum exactly.
pub struct BatchLoss {
    pub l_dst: NodeId,
    pub l_gen: NodeId,
    pub l_pi: NodeId,
    pub total: NodeId,
    pub pseudo_labels_used: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LossBreakdown {
    pub l_dst: f64,
    pub l_gen: f64,
    pub l_pi: f64,
    pub total: f64,
    pub pseudo_labels_used: usize,
}

impl BatchLoss {
    pub fn breakdown(&self, g: &Graph) -> LossBreakdown {
        LossBreakdown {
            l_dst: g.value(self.l_dst)[0],
            l_gen: g.value(self.l_gen)[0],
            l_pi: g.value(self.l_pi)[0],
            total: g.value(self.total)[0],
            pseudo_labels_used: self.pseudo_labels_used,
        }
    }
}

fn scalar_sum(g: &mut Graph, parts: &[NodeId]) -> NodeId {
    if parts.is_empty() {
        g.zeros(1)
    } else {
        g.sum_list(parts)
    }
}

fn gaussian_noise(
    rng: &mut ChaCha8Rng,
    sigma: f64,
    tokens: usize,
    dim: usize,
) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    (0..tokens)
        .map(|_| {
            (0..dim)
                .map(|_| if sigma == 0.0 { 0.0 } else { normal.sample(rng) })
                .collect()
        })
        .collect()
}

/// Cross-entropy targets for one labelled turn: the gold value where
/// given, `not-mentioned` for every other informable slot.
fn informable_targets(model: &Model, gold: &BTreeMap<SlotKey, usize>) -> Vec<(SlotKey, usize)> {
    model
        .ontology
        .informable_slots()
        .map(|(k, _)| (k.clone(), gold.get(k).copied().unwrap_or(NOT_MENTIONED_IDX)))
        .collect()
}

/// Build the joint loss for a batch of dialogues on one tape. The noise
/// rng is consumed only in `pi` mode, once per turn.
pub fn batch_loss(
    g: &mut Graph,
    model: &Model,
    db: &EntityDb,
    dialogues: &[&Dialogue],
    cfg: &TrainingConfig,
    noise_rng: &mut ChaCha8Rng,
) -> Result<BatchLoss> {
    debug_assert!(!dialogues.is_empty());
    let token_table = model.store.bind(g, "embed.token");
    let sv = dst::build_sv_embeddings(
        g,
        &model.store,
        &model.ontology,
        &model.index,
        model.config.embed_dim,
    )?;

    let mut dst_terms: Vec<NodeId> = Vec::new();
    let mut gen_terms: Vec<NodeId> = Vec::new();
    let mut pi_terms: Vec<NodeId> = Vec::new();
    let mut pseudo_labels_used = 0usize;

    for dialogue in dialogues {
        let mut belief_nodes = dst::initial_belief_nodes(g, &model.ontology);
        let mut belief_vals = BeliefState::initial(&model.ontology);
        for turn in &dialogue.turns {
            let enc = crate::neural::encode_sequence(
                g,
                &model.store,
                token_table,
                model.config.embed_dim,
                &turn.user_ids,
                None,
            )?;
            let pred = dst::predict_turn(g, &enc, &sv, model.config.attention_normalize);
            let pred_vals = pred.extract(g);

            if turn.is_labelled {
                let gold = turn.gold_informable.as_ref().ok_or_else(|| {
                    Error::Contract(format!("labelled turn without labels in {}", dialogue.id))
                })?;
                for (key, target) in informable_targets(model, gold) {
                    let term = g.neg_log_pick(pred.informable[&key], target);
                    dst_terms.push(term);
                }
                let req_gold = turn.gold_requestable.as_ref().ok_or_else(|| {
                    Error::Contract(format!("labelled turn without labels in {}", dialogue.id))
                })?;
                for (key, &node) in &pred.requestable {
                    let target = if req_gold.contains(key) { 1.0 } else { 0.0 };
                    dst_terms.push(g.bce(node, target));
                }
            } else if cfg.mode == TrainMode::Pseudo {
                for (key, &node) in &pred.informable {
                    let dist = &pred_vals.informable[key];
                    let best = dst::argmax(dist);
                    if dist[best] > cfg.nu {
                        dst_terms.push(g.neg_log_pick(node, best));
                        pseudo_labels_used += 1;
                    }
                }
                for (key, &node) in &pred.requestable {
                    let p = pred_vals.requestable[key];
                    if p > cfg.nu {
                        dst_terms.push(g.bce(node, 1.0));
                        pseudo_labels_used += 1;
                    } else if p < 1.0 - cfg.nu {
                        dst_terms.push(g.bce(node, 0.0));
                        pseudo_labels_used += 1;
                    }
                }
            }

            if cfg.mode == TrainMode::Pi {
                let noise = gaussian_noise(
                    noise_rng,
                    cfg.sigma,
                    turn.user_ids.len(),
                    model.config.embed_dim,
                );
                let enc_noisy = crate::neural::encode_sequence(
                    g,
                    &model.store,
                    token_table,
                    model.config.embed_dim,
                    &turn.user_ids,
                    Some(&noise),
                )?;
                let pred_noisy =
                    dst::predict_turn(g, &enc_noisy, &sv, model.config.attention_normalize);
                for (key, &noisy_node) in &pred_noisy.informable {
                    match (cfg.pi_target, turn.gold_informable.as_ref()) {
                        (PiTarget::Gold, Some(gold)) => {
                            let idx = gold.get(key).copied().unwrap_or(NOT_MENTIONED_IDX);
                            let mut t = vec![0.0; pred_vals.informable[key].len()];
                            t[idx] = 1.0;
                            pi_terms.push(g.mse_const(noisy_node, t));
                        }
                        // Squared distance between the two live branches;
                        // gradients flow through both passes.
                        _ => {
                            let clean_node = pred.informable[key];
                            let neg_clean = g.scale(clean_node, -1.0);
                            let diff = g.add(noisy_node, neg_clean);
                            pi_terms.push(g.dot(diff, diff));
                        }
                    }
                }
            }

            belief_nodes = dst::update_belief_nodes(g, &belief_nodes, &pred, model.config.belief_keep);
            belief_vals = dst::update_belief(&belief_vals, &pred_vals, model.config.belief_keep)?;

            let (_, q) = kb::query(db, &belief_vals, &model.ontology, &turn.domain)?;
            let belief_parts: Vec<NodeId> = belief_nodes.values().copied().collect();
            let belief_concat = g.concat(&belief_parts);
            let z = policy::policy(g, model, belief_concat, enc.final_state, &q)?;
            let gate0 = policy::init_gate_memory_nodes(g, &pred, &model.index);
            let logits = policy::decode_teacher(g, model, z, gate0, &turn.system_ids)?;
            for (&node, &target) in logits.iter().zip(turn.system_ids.iter()) {
                let probs = g.softmax(node);
                gen_terms.push(g.neg_log_pick(probs, target));
            }
        }
    }

    let inv_n = 1.0 / dialogues.len() as f64;
    let dst_sum = scalar_sum(g, &dst_terms);
    let l_dst = g.scale(dst_sum, inv_n);
    let gen_sum = scalar_sum(g, &gen_terms);
    let l_gen = g.scale(gen_sum, inv_n);
    let pi_sum = scalar_sum(g, &pi_terms);
    let l_pi = g.scale(pi_sum, cfg.alpha * inv_n);
    let partial = g.add(l_dst, l_gen);
    let total = g.add(partial, l_pi);
    Ok(BatchLoss {
        l_dst,
        l_gen,
        l_pi,
        total,
        pseudo_labels_used,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_dst: f64,
    pub l_gen: f64,
    pub l_pi: f64,
    pub pseudo_count: usize,
    pub valid_joint_acc: f64,
    pub valid_success: f64,
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_joint_acc: f64,
}

/// Full training loop: shuffled mini-batches, SGD with global-norm
/// clipping, early stopping on validation joint goal accuracy with
/// best-checkpoint restore. `log_sink` receives one JSON line per epoch.
pub fn train(
    cfg: &TrainingConfig,
    corpus: &Corpus,
    db: &EntityDb,
    mut log_sink: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let corpus = split_labelled(corpus, cfg.labelled_fraction, cfg.seed)?;
    let mut model = Model::new(
        corpus.ontology.clone(),
        corpus.vocab.clone(),
        cfg.model.clone(),
        cfg.seed,
    );
    let train_ids: Vec<usize> = corpus
        .dialogues
        .iter()
        .enumerate()
        .filter(|(_, d)| d.split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    if train_ids.is_empty() {
        return Err(Error::Config("no training dialogues".into()));
    }

    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let mut log = Vec::new();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut best_params = model.store.snapshot();
    let mut since_best = 0usize;

    for epoch in 1..=cfg.epochs {
        let mut order = train_ids.clone();
        order.shuffle(&mut order_rng);
        let mut epoch_loss = LossBreakdown {
            l_dst: 0.0,
            l_gen: 0.0,
            l_pi: 0.0,
            total: 0.0,
            pseudo_labels_used: 0,
        };
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let dialogues: Vec<&Dialogue> = chunk.iter().map(|&i| &corpus.dialogues[i]).collect();
            let mut g = Graph::new();
            let loss = batch_loss(&mut g, &model, db, &dialogues, cfg, &mut noise_rng)?;
            let b = loss.breakdown(&g);
            if !b.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    detail: format!(
                        "l_dst={} l_gen={} l_pi={}",
                        b.l_dst, b.l_gen, b.l_pi
                    ),
                });
            }
            g.backward(loss.total);
            model.store.zero_grads();
            model.store.accumulate_grads(&g);
            model.store.sgd_step(cfg.learning_rate, cfg.grad_clip);
            epoch_loss.l_dst += b.l_dst;
            epoch_loss.l_gen += b.l_gen;
            epoch_loss.l_pi += b.l_pi;
            epoch_loss.total += b.total;
            epoch_loss.pseudo_labels_used += b.pseudo_labels_used;
            batches += 1;
        }

        let report = crate::eval::evaluate(&model, &corpus, db, Split::Valid)?;
        let record = EpochRecord {
            epoch,
            l_dst: epoch_loss.l_dst / batches as f64,
            l_gen: epoch_loss.l_gen / batches as f64,
            l_pi: epoch_loss.l_pi / batches as f64,
            pseudo_count: epoch_loss.pseudo_labels_used,
            valid_joint_acc: report.joint_goal_accuracy,
            valid_success: report.success_rate,
        };
        if let Some(sink) = log_sink.as_deref_mut() {
            writeln!(sink, "{}", serde_json::to_string(&record)?)?;
        }
        log.push(record);

        if report.joint_goal_accuracy > best_acc {
            best_acc = report.joint_goal_accuracy;
            best_epoch = epoch;
            best_params = model.store.snapshot();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    model.store.restore(&best_params);
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        best_valid_joint_acc: best_acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::{generate_toy_corpus, ToyConfig};

    fn tiny_cfg(mode: TrainMode) -> TrainingConfig {
        TrainingConfig {
            mode,
            epochs: 2,
            batch_size: 4,
            model: ModelConfig::tiny(),
            ..TrainingConfig::default()
        }
    }

    fn tiny_data() -> (Corpus, EntityDb) {
        let cfg = ToyConfig {
            dialogues: 20,
            entities_per_domain: 6,
            ..ToyConfig::default()
        };
        generate_toy_corpus(&cfg, 33).unwrap()
    }

    fn batch_breakdown(
        corpus: &Corpus,
        db: &EntityDb,
        cfg: &TrainingConfig,
        noise_seed: u64,
    ) -> LossBreakdown {
        let labelled = split_labelled(corpus, cfg.labelled_fraction, cfg.seed).unwrap();
        let model = Model::new(
            labelled.ontology.clone(),
            labelled.vocab.clone(),
            cfg.model.clone(),
            cfg.seed,
        );
        let dialogues: Vec<&Dialogue> = labelled.dialogues_in(Split::Train).take(4).collect();
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let loss = batch_loss(&mut g, &model, db, &dialogues, cfg, &mut rng).unwrap();
        loss.breakdown(&g)
    }

    #[test]
    fn total_is_component_sum() {
        let (corpus, db) = tiny_data();
        for mode in [TrainMode::Baseline, TrainMode::Pseudo, TrainMode::Pi] {
            let cfg = TrainingConfig {
                labelled_fraction: 0.5,
                ..tiny_cfg(mode)
            };
            let b = batch_breakdown(&corpus, &db, &cfg, 9);
            assert_eq!(b.total, b.l_dst + b.l_gen + b.l_pi);
            assert!(b.total.is_finite());
        }
    }

    #[test]
    fn baseline_and_pseudo_ignore_pi_loss() {
        let (corpus, db) = tiny_data();
        for mode in [TrainMode::Baseline, TrainMode::Pseudo] {
            let b = batch_breakdown(&corpus, &db, &tiny_cfg(mode), 9);
            assert_eq!(b.l_pi, 0.0);
        }
    }

    #[test]
    fn pi_loss_vanishes_without_noise_or_weight() {
        let (corpus, db) = tiny_data();
        let zero_sigma = TrainingConfig {
            sigma: 0.0,
            ..tiny_cfg(TrainMode::Pi)
        };
        assert_eq!(batch_breakdown(&corpus, &db, &zero_sigma, 9).l_pi, 0.0);
        let zero_alpha = TrainingConfig {
            alpha: 0.0,
            ..tiny_cfg(TrainMode::Pi)
        };
        assert_eq!(batch_breakdown(&corpus, &db, &zero_alpha, 9).l_pi, 0.0);
        let live = TrainingConfig {
            sigma: 0.5,
            ..tiny_cfg(TrainMode::Pi)
        };
        assert!(batch_breakdown(&corpus, &db, &live, 9).l_pi > 0.0);
    }

    #[test]
    fn full_threshold_pseudo_matches_baseline() {
        let (corpus, db) = tiny_data();
        let base = TrainingConfig {
            labelled_fraction: 0.5,
            ..tiny_cfg(TrainMode::Baseline)
        };
        let pseudo = TrainingConfig {
            nu: 1.0,
            mode: TrainMode::Pseudo,
            ..base.clone()
        };
        let a = batch_breakdown(&corpus, &db, &base, 9);
        let b = batch_breakdown(&corpus, &db, &pseudo, 9);
        assert_eq!(b.pseudo_labels_used, 0);
        assert_eq!(a.l_dst, b.l_dst);
        assert_eq!(a.total, b.total);
    }

    #[test]
    fn pseudo_count_monotone_in_threshold() {
        let (corpus, db) = tiny_data();
        let mut last = usize::MAX;
        for nu in [0.0, 0.3, 0.6, 0.9, 1.0] {
            let cfg = TrainingConfig {
                nu,
                labelled_fraction: 0.3,
                ..tiny_cfg(TrainMode::Pseudo)
            };
            let b = batch_breakdown(&corpus, &db, &cfg, 9);
            assert!(b.pseudo_labels_used <= last);
            last = b.pseudo_labels_used;
        }
        assert_eq!(last, 0);
    }

    #[test]
    fn train_two_epochs_logs_and_restores_best() {
        let (corpus, db) = tiny_data();
        let cfg = tiny_cfg(TrainMode::Baseline);
        let mut sink = Vec::new();
        let out = train(&cfg, &corpus, &db, Some(&mut sink)).unwrap();
        assert_eq!(out.log.len(), 2);
        let lines: Vec<&str> = std::str::from_utf8(&sink).unwrap().lines().collect();
        assert_eq!(lines.len(), 2);
        let parsed: EpochRecord = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(parsed, out.log[0]);
        assert!(out.best_epoch >= 1 && out.best_epoch <= 2);
    }

    #[test]
    fn train_is_deterministic() {
        let (corpus, db) = tiny_data();
        let cfg = TrainingConfig {
            labelled_fraction: 0.5,
            ..tiny_cfg(TrainMode::Pi)
        };
        let a = train(&cfg, &corpus, &db, None).unwrap();
        let b = train(&cfg, &corpus, &db, None).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(
            a.model.store.snapshot(),
            b.model.store.snapshot()
        );
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            TrainingConfig {
                nu: 1.5,
                ..TrainingConfig::default()
            },
            TrainingConfig {
                sigma: -0.1,
                ..TrainingConfig::default()
            },
            TrainingConfig {
                labelled_fraction: -0.2,
                ..TrainingConfig::default()
            },
            TrainingConfig {
                batch_size: 0,
                ..TrainingConfig::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
