//! Policy fusion layer and the semantically-conditioned response
//! generator with greedy decoding and lexicalization.

use crate::dst::{GraphPrediction, TurnPrediction};
use crate::error::Result;
use crate::graph::{Graph, NodeId};
use crate::kb::DbQueryVector;
use crate::model::{Model, ModelIndex, PolicyInjection};
use crate::neural::{self, ScLstmState};

/// z_t = tanh(W^z . [b_t, h^t_L, q_t]); concatenation order is belief,
/// utterance encoding, query vector.
pub fn policy(
    g: &mut Graph,
    model: &Model,
    belief_concat: NodeId,
    final_state: NodeId,
    q: &DbQueryVector,
) -> Result<NodeId> {
    let qn = g.input(q.bins.to_vec());
    let cat = g.concat(&[belief_concat, final_state, qn]);
    let pre = neural::affine(g, &model.store, "policy", cat)?;
    Ok(g.tanh(pre))
}

/// Gate-memory initialization from the tracker's requestable-slot
/// probabilities, ordered by the ontology's requestable pairs.
pub fn init_gate_memory(pred: &TurnPrediction, index: &ModelIndex) -> Vec<f64> {
    index
        .req_pairs
        .iter()
        .map(|k| pred.requestable.get(k).copied().unwrap_or(0.0))
        .collect()
}

/// Differentiable version: concatenates the requestable prediction nodes
/// so generation loss backpropagates into the tracker.
pub fn init_gate_memory_nodes(
    g: &mut Graph,
    pred: &GraphPrediction,
    index: &ModelIndex,
) -> NodeId {
    let parts: Vec<NodeId> = index
        .req_pairs
        .iter()
        .map(|k| pred.requestable[k])
        .collect();
    g.concat(&parts)
}

/// Mask that zeroes gate-memory entries whose slot placeholder is the
/// current input token; `None` when the token is not a placeholder.
fn consumed_mask(token: &str, index: &ModelIndex) -> Option<Vec<f64>> {
    let slot = crate::corpus::placeholder_slot(token)?;
    let mask: Vec<f64> = index
        .req_pairs
        .iter()
        .map(|(_, s)| if s == slot { 0.0 } else { 1.0 })
        .collect();
    Some(mask)
}

fn decoder_input(g: &mut Graph, model: &Model, token_emb: NodeId, z: NodeId) -> NodeId {
    match model.config.policy_injection {
        PolicyInjection::Init => token_emb,
        PolicyInjection::EveryStep => g.concat(&[token_emb, z]),
    }
}

fn decoder_init(g: &mut Graph, model: &Model, z: NodeId, gate0: NodeId) -> Result<ScLstmState> {
    let pre = neural::affine(g, &model.store, "dec_init", z)?;
    let h0 = g.tanh(pre);
    let c0 = g.zeros(model.config.hidden_dim);
    Ok(ScLstmState {
        h: h0,
        c: c0,
        gate_memory: gate0,
    })
}

/// Teacher-forced decode over the target system tokens; returns one
/// logits node per target position.
pub fn decode_teacher(
    g: &mut Graph,
    model: &Model,
    z: NodeId,
    gate0: NodeId,
    system_ids: &[usize],
) -> Result<Vec<NodeId>> {
    let table = model.store.bind(g, "embed.token");
    let dec = neural::bind_sclstm(g, &model.store, "dec");
    let mut state = decoder_init(g, model, z, gate0)?;
    let mut logits = Vec::with_capacity(system_ids.len());
    let mut prev = model.vocab.bos_id();
    for &target in system_ids {
        let emb = g.embed_row(table, prev, model.config.embed_dim);
        let x = decoder_input(g, model, emb, z);
        let mask = consumed_mask(model.vocab.token(prev), &model.index);
        let (next, step_logits) = neural::sclstm_step(g, &dec, &state, x, mask.as_deref());
        logits.push(step_logits);
        state = next;
        prev = target;
    }
    Ok(logits)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationResult {
    /// Delexicalized output, ending in `</s>` unless truncated.
    pub delex_tokens: Vec<String>,
    /// Filled-in surface form, when an entity was available.
    pub lexicalized: Option<Vec<String>>,
    /// Gate-memory snapshot after every step.
    pub gate_trace: Vec<Vec<f64>>,
    pub truncated: bool,
}

impl GenerationResult {
    pub fn mentions_placeholder(&self, slot: &str) -> bool {
        let ph = crate::corpus::placeholder(slot);
        self.delex_tokens.iter().any(|t| *t == ph)
    }
}

/// Greedy argmax decoding conditioned on the policy vector and the
/// initial gate memory; stops at `</s>` or `max_len`.
pub fn generate(
    g: &mut Graph,
    model: &Model,
    z: NodeId,
    gate0: &[f64],
    max_len: usize,
) -> Result<GenerationResult> {
    debug_assert!(max_len >= 1);
    let table = model.store.bind(g, "embed.token");
    let dec = neural::bind_sclstm(g, &model.store, "dec");
    let gate0_node = g.input(gate0.to_vec());
    let mut state = decoder_init(g, model, z, gate0_node)?;
    let mut tokens = Vec::new();
    let mut gate_trace = Vec::new();
    let mut prev = model.vocab.bos_id();
    let mut truncated = true;
    for _ in 0..max_len {
        let emb = g.embed_row(table, prev, model.config.embed_dim);
        let x = decoder_input(g, model, emb, z);
        let mask = consumed_mask(model.vocab.token(prev), &model.index);
        let (next, logits) = neural::sclstm_step(g, &dec, &state, x, mask.as_deref());
        let chosen = crate::dst::argmax(g.value(logits));
        tokens.push(model.vocab.token(chosen).to_string());
        gate_trace.push(g.value(next.gate_memory).to_vec());
        state = next;
        prev = chosen;
        if chosen == model.vocab.eos_id() {
            truncated = false;
            break;
        }
    }
    Ok(GenerationResult {
        delex_tokens: tokens,
        lexicalized: None,
        gate_trace,
        truncated,
    })
}
