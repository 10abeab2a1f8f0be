//! Dialogue state tracker: slot-value attention scoring, informable and
//! requestable turn predictions, and the turn-level belief-state update.

use std::collections::BTreeMap;

use crate::corpus::{Ontology, SlotKey, DONT_CARE_IDX, NOT_MENTIONED_IDX};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::model::{AttnNorm, BeliefKeep, ModelIndex};
use crate::neural::{EncoderOutput, ParameterStore};

/// Per-slot probability distributions over values, carried across turns.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefState {
    pub dists: BTreeMap<SlotKey, Vec<f64>>,
}

impl BeliefState {
    /// Every slot one-hot on `not-mentioned`.
    pub fn initial(ontology: &Ontology) -> Self {
        let mut dists = BTreeMap::new();
        for ((d, s), values) in ontology.informable_slots() {
            let mut dist = vec![0.0; values.len()];
            dist[NOT_MENTIONED_IDX] = 1.0;
            dists.insert((d.clone(), s.clone()), dist);
        }
        Self { dists }
    }

    pub fn argmax(&self, domain: &str, slot: &str) -> usize {
        let dist = &self.dists[&(domain.to_string(), slot.to_string())];
        argmax(dist)
    }

    /// Concatenation of all slot distributions in key order (b_t).
    pub fn concat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for dist in self.dists.values() {
            out.extend_from_slice(dist);
        }
        out
    }

    /// Test helper: force a slot's distribution one-hot on `index`.
    pub fn set_argmax(&mut self, domain: &str, slot: &str, index: usize) {
        let dist = self
            .dists
            .get_mut(&(domain.to_string(), slot.to_string()))
            .expect("unknown slot");
        dist.iter_mut().for_each(|p| *p = 0.0);
        dist[index] = 1.0;
    }

    /// Debug dump: JSON map "domain-slot" -> {value: probability}.
    pub fn dump_json(&self, ontology: &Ontology) -> serde_json::Value {
        let mut out = serde_json::Map::new();
        for ((d, s), dist) in &self.dists {
            let mut slot_map = serde_json::Map::new();
            for (k, p) in dist.iter().enumerate() {
                if let Some(v) = ontology.value_name(d, s, k) {
                    slot_map.insert(v.to_string(), serde_json::json!(p));
                }
            }
            out.insert(format!("{d}-{s}"), serde_json::Value::Object(slot_map));
        }
        serde_json::Value::Object(out)
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Turn-level prediction values extracted from the tape.
#[derive(Clone, Debug, PartialEq)]
pub struct TurnPrediction {
    pub informable: BTreeMap<SlotKey, Vec<f64>>,
    pub requestable: BTreeMap<SlotKey, f64>,
}

/// Tape nodes of a turn prediction (still differentiable).
pub struct GraphPrediction {
    pub informable: BTreeMap<SlotKey, NodeId>,
    pub requestable: BTreeMap<SlotKey, NodeId>,
}

impl GraphPrediction {
    pub fn extract(&self, g: &Graph) -> TurnPrediction {
        TurnPrediction {
            informable: self
                .informable
                .iter()
                .map(|(k, &n)| (k.clone(), g.value(n).to_vec()))
                .collect(),
            requestable: self
                .requestable
                .iter()
                .map(|(k, &n)| (k.clone(), g.value(n)[0]))
                .collect(),
        }
    }
}

/// Slot-value encodings: one vector per ontology value (and one per
/// requestable slot), each the affine image of the concatenated domain,
/// slot and value embeddings. Built once per tape.
pub struct SvEmbeddings {
    pub informable: BTreeMap<SlotKey, Vec<NodeId>>,
    pub requestable: BTreeMap<SlotKey, NodeId>,
}

pub fn build_sv_embeddings(
    g: &mut Graph,
    store: &ParameterStore,
    ontology: &Ontology,
    index: &ModelIndex,
    embed_dim: usize,
) -> Result<SvEmbeddings> {
    let dom_table = store.bind(g, "embed.domain");
    let slot_table = store.bind(g, "embed.slot");
    let val_table = store.bind(g, "embed.value");

    let mut informable = BTreeMap::new();
    for ((d, s), values) in ontology.informable_slots() {
        let de = g.embed_row(dom_table, index.domain(d), embed_dim);
        let se = g.embed_row(slot_table, index.slot(s), embed_dim);
        let mut svs = Vec::with_capacity(values.len());
        for v in values {
            let ve = g.embed_row(val_table, index.value(v), embed_dim);
            let cat = g.concat(&[de, se, ve]);
            let sv = crate::neural::affine(g, store, "sv", cat)?;
            svs.push(sv);
        }
        informable.insert((d.clone(), s.clone()), svs);
    }

    let mut requestable = BTreeMap::new();
    let req_ve = g.embed_row(val_table, index.value(crate::model::REQ_VALUE), embed_dim);
    for (d, s) in index.req_pairs.iter() {
        let de = g.embed_row(dom_table, index.domain(d), embed_dim);
        let se = g.embed_row(slot_table, index.slot(s), embed_dim);
        let cat = g.concat(&[de, se, req_ve]);
        let sv = crate::neural::affine(g, store, "sv", cat)?;
        requestable.insert((d.clone(), s.clone()), sv);
    }
    Ok(SvEmbeddings {
        informable,
        requestable,
    })
}

/// Dot-product attention of a slot-value encoding over the encoder's
/// hidden states. Returns (context, weights).
pub fn attend(
    g: &mut Graph,
    hidden_states: &[NodeId],
    sv: NodeId,
    normalize: AttnNorm,
) -> (NodeId, NodeId) {
    debug_assert!(!hidden_states.is_empty());
    let scores: Vec<NodeId> = hidden_states.iter().map(|&h| g.dot(h, sv)).collect();
    let raw = g.concat(&scores);
    let weights = match normalize {
        AttnNorm::Softmax => g.softmax(raw),
        AttnNorm::None => raw,
    };
    let context = g.weighted_sum(weights, hidden_states);
    (context, weights)
}

/// Score every slot-value pair against the encoded utterance: softmax
/// over values per informable slot, sigmoid per requestable slot.
pub fn predict_turn(
    g: &mut Graph,
    encoder_out: &EncoderOutput,
    sv: &SvEmbeddings,
    normalize: AttnNorm,
) -> GraphPrediction {
    let mut informable = BTreeMap::new();
    for (key, svs) in &sv.informable {
        let scores: Vec<NodeId> = svs
            .iter()
            .map(|&svk| {
                let (ctx, _) = attend(g, &encoder_out.hidden_states, svk, normalize);
                g.dot(ctx, svk)
            })
            .collect();
        let cat = g.concat(&scores);
        let p = g.softmax(cat);
        informable.insert(key.clone(), p);
    }
    let mut requestable = BTreeMap::new();
    for (key, &svr) in &sv.requestable {
        let (ctx, _) = attend(g, &encoder_out.hidden_states, svr, normalize);
        let score = g.dot(ctx, svr);
        let p = g.sigmoid(score);
        requestable.insert(key.clone(), p);
    }
    GraphPrediction {
        informable,
        requestable,
    }
}

fn keeps(pred_argmax: usize, keep: BeliefKeep) -> bool {
    match keep {
        BeliefKeep::Both => pred_argmax == NOT_MENTIONED_IDX || pred_argmax == DONT_CARE_IDX,
        BeliefKeep::NotMentionedOnly => pred_argmax == NOT_MENTIONED_IDX,
    }
}

/// Keep/replace rule over value distributions: a slot whose predicted
/// argmax is a special value keeps its previous distribution, any other
/// argmax replaces it with the new one.
pub fn update_belief(
    prev: &BeliefState,
    pred: &TurnPrediction,
    keep: BeliefKeep,
) -> Result<BeliefState> {
    if prev.dists.len() != pred.informable.len()
        || !prev.dists.keys().eq(pred.informable.keys())
    {
        return Err(Error::Contract(
            "update_belief: prediction keys do not match belief keys".into(),
        ));
    }
    let mut dists = BTreeMap::new();
    for (key, prev_dist) in &prev.dists {
        let pred_dist = &pred.informable[key];
        let chosen = if keeps(argmax(pred_dist), keep) {
            prev_dist.clone()
        } else {
            pred_dist.clone()
        };
        dists.insert(key.clone(), chosen);
    }
    Ok(BeliefState { dists })
}

/// Same rule over tape nodes: selects which node each slot carries
/// forward, so gradients flow through whichever branch was chosen.
pub fn update_belief_nodes(
    g: &Graph,
    prev: &BTreeMap<SlotKey, NodeId>,
    pred: &GraphPrediction,
    keep: BeliefKeep,
) -> BTreeMap<SlotKey, NodeId> {
    let mut out = BTreeMap::new();
    for (key, &prev_node) in prev {
        let pred_node = pred.informable[key];
        let chosen = if keeps(argmax(g.value(pred_node)), keep) {
            prev_node
        } else {
            pred_node
        };
        out.insert(key.clone(), chosen);
    }
    out
}

/// Graph-level initial belief: one constant one-hot node per slot.
pub fn initial_belief_nodes(g: &mut Graph, ontology: &Ontology) -> BTreeMap<SlotKey, NodeId> {
    let mut out = BTreeMap::new();
    for ((d, s), values) in ontology.informable_slots() {
        let mut dist = vec![0.0; values.len()];
        dist[NOT_MENTIONED_IDX] = 1.0;
        out.insert((d.clone(), s.clone()), g.input(dist));
    }
    out
}
