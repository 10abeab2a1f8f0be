//! Assembly of the end-to-end model: embedding index maps, configuration,
//! parameter registration and checkpointing.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Ontology, SlotKey, Vocab};
use crate::error::{Error, Result};
use crate::neural::{self, ParameterStore, StoreCheckpoint};

/// Reserved value-embedding slot used when scoring requestable slots.
pub const REQ_VALUE: &str = "<req>";

/// How attention scores are turned into weights. `Softmax` is the
/// default; `None` uses the raw similarity scores as weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AttnNorm {
    #[default]
    Softmax,
    None,
}

/// Which predicted special values leave the previous belief distribution
/// in place during the update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BeliefKeep {
    /// Keep on both `not-mentioned` and `dont-care` argmax.
    #[default]
    Both,
    /// Keep only on `not-mentioned`; `dont-care` enters the state.
    NotMentionedOnly,
}

/// Where the policy vector enters the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicyInjection {
    /// Only seeds the initial decoder hidden state.
    #[default]
    Init,
    /// Additionally concatenated to the input embedding at every step.
    EveryStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub policy_dim: usize,
    pub max_decode_len: usize,
    pub attention_normalize: AttnNorm,
    pub belief_keep: BeliefKeep,
    pub policy_injection: PolicyInjection,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            hidden_dim: 64,
            policy_dim: 32,
            max_decode_len: 50,
            attention_normalize: AttnNorm::Softmax,
            belief_keep: BeliefKeep::Both,
            policy_injection: PolicyInjection::Init,
        }
    }
}

impl ModelConfig {
    /// Small dimensions for tests and gradient checks.
    pub fn tiny() -> Self {
        Self {
            embed_dim: 4,
            hidden_dim: 5,
            policy_dim: 4,
            max_decode_len: 20,
            ..Self::default()
        }
    }
}

/// Deterministic index maps for domains, slot names and value strings.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelIndex {
    pub domains: Vec<String>,
    pub slots: Vec<String>,
    pub values: Vec<String>,
    domain_idx: BTreeMap<String, usize>,
    slot_idx: BTreeMap<String, usize>,
    value_idx: BTreeMap<String, usize>,
    /// Gate-memory ordering of requestable (domain, slot) pairs.
    pub req_pairs: Vec<SlotKey>,
    req_idx: BTreeMap<SlotKey, usize>,
}

impl ModelIndex {
    pub fn new(ontology: &Ontology) -> Self {
        let domains = ontology.domains.clone();
        let mut slots: Vec<String> = Vec::new();
        let mut values: Vec<String> = vec![REQ_VALUE.to_string()];
        let mut seen_slots = std::collections::BTreeSet::new();
        let mut seen_values = std::collections::BTreeSet::new();
        seen_values.insert(REQ_VALUE.to_string());
        for ((_, s), vals) in ontology.informable_slots() {
            if seen_slots.insert(s.clone()) {
                slots.push(s.clone());
            }
            for v in vals {
                if seen_values.insert(v.clone()) {
                    values.push(v.clone());
                }
            }
        }
        for (_, rs) in &ontology.requestable {
            for s in rs {
                if seen_slots.insert(s.clone()) {
                    slots.push(s.clone());
                }
            }
        }
        let req_pairs = ontology.requestable_pairs();
        let req_idx = req_pairs
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i))
            .collect();
        Self {
            domain_idx: domains.iter().enumerate().map(|(i, d)| (d.clone(), i)).collect(),
            slot_idx: slots.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect(),
            value_idx: values.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect(),
            domains,
            slots,
            values,
            req_pairs,
            req_idx,
        }
    }

    pub fn domain(&self, name: &str) -> usize {
        self.domain_idx[name]
    }
    pub fn slot(&self, name: &str) -> usize {
        self.slot_idx[name]
    }
    pub fn value(&self, name: &str) -> usize {
        self.value_idx[name]
    }
    pub fn req_pair(&self, key: &SlotKey) -> Option<usize> {
        self.req_idx.get(key).copied()
    }
    pub fn gate_dim(&self) -> usize {
        self.req_pairs.len()
    }
}

/// The full parameter set plus everything needed to run it: ontology,
/// vocabulary and dimensions.
#[derive(Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub ontology: Ontology,
    pub vocab: Vocab,
    pub index: ModelIndex,
    pub store: ParameterStore,
}

impl Model {
    pub fn new(ontology: Ontology, vocab: Vocab, config: ModelConfig, seed: u64) -> Self {
        let index = ModelIndex::new(&ontology);
        let mut store = ParameterStore::new(seed);
        let e = config.embed_dim;
        let h = config.hidden_dim;
        let dh = 2 * h; // BiLSTM output size
        let p = config.policy_dim;
        let gate_dim = index.gate_dim();
        let belief_dim = ontology.belief_dim();

        store.add("embed.token", &[vocab.len(), e]);
        store.add("embed.domain", &[index.domains.len(), e]);
        store.add("embed.slot", &[index.slots.len(), e]);
        store.add("embed.value", &[index.values.len(), e]);
        neural::register_encoder(&mut store, h, e);
        store.add("sv.w", &[dh, 3 * e]);
        store.add("sv.b", &[dh]);
        store.add("policy.w", &[p, belief_dim + dh + 5]);
        store.add("policy.b", &[p]);
        store.add("dec_init.w", &[h, p]);
        store.add("dec_init.b", &[h]);
        let dec_input = match config.policy_injection {
            PolicyInjection::Init => e,
            PolicyInjection::EveryStep => e + p,
        };
        neural::register_sclstm(&mut store, "dec", h, dec_input, gate_dim, vocab.len());

        Self {
            config,
            ontology,
            vocab,
            index,
            store,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ckpt = ModelCheckpoint {
            version: neural::CHECKPOINT_VERSION,
            config: self.config.clone(),
            ontology: self.ontology.clone(),
            vocab_tokens: self.vocab.tokens.clone(),
            store: self.store.to_checkpoint(),
        };
        std::fs::write(path, serde_json::to_string(&ckpt)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: ModelCheckpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ckpt.version != neural::CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        let vocab = Vocab::from_token_list(ckpt.vocab_tokens);
        let index = ModelIndex::new(&ckpt.ontology);
        Ok(Self {
            config: ckpt.config,
            ontology: ckpt.ontology,
            vocab,
            index,
            store: ParameterStore::from_checkpoint(ckpt.store)?,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelCheckpoint {
    version: u32,
    config: ModelConfig,
    ontology: Ontology,
    vocab_tokens: Vec<String>,
    store: StoreCheckpoint,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    pub fn tiny_ontology() -> Ontology {
        let mut informable = BTreeMap::new();
        informable.insert(
            ("hotel".to_string(), "pricerange".to_string()),
            vec!["cheap".to_string(), "expensive".to_string()],
        );
        informable.insert(
            ("rest".to_string(), "food".to_string()),
            vec!["thai".to_string(), "greek".to_string(), "indian".to_string()],
        );
        let mut requestable = BTreeMap::new();
        requestable.insert("hotel".to_string(), vec!["phone".to_string()]);
        requestable.insert("rest".to_string(), vec!["address".to_string()]);
        Ontology::new(informable, requestable).unwrap()
    }

    #[test]
    fn index_covers_ontology() {
        let ont = tiny_ontology();
        let idx = ModelIndex::new(&ont);
        assert_eq!(idx.domains.len(), 2);
        assert!(idx.slot_idx.contains_key("pricerange"));
        assert!(idx.slot_idx.contains_key("phone"));
        assert!(idx.value_idx.contains_key("cheap"));
        assert!(idx.value_idx.contains_key(crate::corpus::NOT_MENTIONED));
        assert_eq!(idx.gate_dim(), 2);
    }

    #[test]
    fn model_checkpoint_round_trip() {
        let ont = tiny_ontology();
        let vocab = Vocab::from_tokens(["hello".to_string(), "world".to_string()]);
        let model = Model::new(ont, vocab, ModelConfig::tiny(), 7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = Model::load(&path).unwrap();
        assert_eq!(loaded.config, model.config);
        assert_eq!(loaded.vocab, model.vocab);
        assert_eq!(
            loaded.store.get("embed.token").values,
            model.store.get("embed.token").values
        );
    }
}
