//! Differentiable building blocks: named parameter tensors, a bidirectional
//! LSTM encoder, the semantically-conditioned decoder cell, and a
//! finite-difference gradient checker.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

const INIT_RANGE: f64 = 0.08;
const FD_STEP: f64 = 1e-5;

pub const CHECKPOINT_VERSION: u32 = 1;

/// A named differentiable array with a same-shape gradient slot.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
}

impl Tensor {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Named parameter map with deterministic iteration order and seeded
/// initialization (uniform in [-0.08, 0.08], drawn in insertion order).
#[derive(Clone)]
pub struct ParameterStore {
    params: BTreeMap<String, Tensor>,
    rng: ChaCha8Rng,
    pub seed: u64,
}

impl ParameterStore {
    pub fn new(seed: u64) -> Self {
        Self {
            params: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    pub fn add(&mut self, name: &str, shape: &[usize]) {
        let n: usize = shape.iter().product();
        let values: Vec<f64> = (0..n)
            .map(|_| self.rng.gen_range(-INIT_RANGE..INIT_RANGE))
            .collect();
        self.params.insert(
            name.to_string(),
            Tensor {
                shape: shape.to_vec(),
                values,
                grad: vec![0.0; n],
            },
        );
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) {
        let n: usize = shape.iter().product();
        self.params.insert(
            name.to_string(),
            Tensor {
                shape: shape.to_vec(),
                values: vec![0.0; n],
                grad: vec![0.0; n],
            },
        );
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// Bind a parameter into a graph as a leaf node.
    pub fn bind(&self, g: &mut Graph, name: &str) -> NodeId {
        g.param(name, &self.get(name).values)
    }

    pub fn zero_grads(&mut self) {
        for t in self.params.values_mut() {
            t.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Accumulate the gradients a finished backward pass left on the tape.
    pub fn accumulate_grads(&mut self, g: &Graph) {
        let bound: Vec<(String, NodeId)> = g
            .param_nodes()
            .map(|(n, id)| (n.to_string(), id))
            .collect();
        for (name, id) in bound {
            let src = g.grad(id).to_vec();
            let t = self.get_mut(&name);
            for (dst, s) in t.grad.iter_mut().zip(src.iter()) {
                *dst += s;
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .values()
            .map(|t| t.grad.iter().map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// SGD update with global gradient-norm clipping.
    pub fn sgd_step(&mut self, lr: f64, clip: f64) {
        let norm = self.grad_norm();
        let scale = if norm > clip { clip / norm } else { 1.0 };
        for t in self.params.values_mut() {
            for (v, g) in t.values.iter_mut().zip(t.grad.iter()) {
                *v -= lr * scale * g;
            }
        }
    }

    pub fn snapshot(&self) -> BTreeMap<String, Vec<f64>> {
        self.params
            .iter()
            .map(|(n, t)| (n.clone(), t.values.clone()))
            .collect()
    }

    pub fn restore(&mut self, snap: &BTreeMap<String, Vec<f64>>) {
        for (n, vals) in snap {
            self.get_mut(n).values.clone_from(vals);
        }
    }
}

#[derive(Serialize, Deserialize)]
pub struct StoreCheckpoint {
    pub version: u32,
    pub seed: u64,
    pub params: BTreeMap<String, Tensor>,
}

impl ParameterStore {
    pub fn to_checkpoint(&self) -> StoreCheckpoint {
        StoreCheckpoint {
            version: CHECKPOINT_VERSION,
            seed: self.seed,
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: StoreCheckpoint) -> Result<Self> {
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        let mut params = ckpt.params;
        for t in params.values_mut() {
            t.grad = vec![0.0; t.numel()];
        }
        Ok(Self {
            params,
            rng: ChaCha8Rng::seed_from_u64(ckpt.seed),
            seed: ckpt.seed,
        })
    }
}

/// y = W x + b using parameters `<name>.w` (rows x cols) and `<name>.b`.
pub fn affine(g: &mut Graph, store: &ParameterStore, name: &str, input: NodeId) -> Result<NodeId> {
    let w = store.get(&format!("{name}.w"));
    let (rows, cols) = (w.shape[0], w.shape[1]);
    if g.len(input) != cols {
        return Err(Error::Contract(format!(
            "affine '{name}': input length {} does not match weight columns {}",
            g.len(input),
            cols
        )));
    }
    let wn = store.bind(g, &format!("{name}.w"));
    let bn = store.bind(g, &format!("{name}.b"));
    let mv = g.matvec(wn, rows, cols, input);
    Ok(g.add(mv, bn))
}

/// Parameter nodes for one LSTM direction, bound once per tape.
pub struct BoundLstm {
    wx: Vec<NodeId>,
    wh: Vec<NodeId>,
    b: Vec<NodeId>,
    pub hidden: usize,
    input: usize,
}

pub const LSTM_GATES: [&str; 4] = ["i", "f", "o", "g"];

pub fn register_lstm(store: &mut ParameterStore, prefix: &str, hidden: usize, input: usize) {
    for gate in LSTM_GATES {
        store.add(&format!("{prefix}.{gate}.wx"), &[hidden, input]);
        store.add(&format!("{prefix}.{gate}.wh"), &[hidden, hidden]);
        store.add(&format!("{prefix}.{gate}.b"), &[hidden]);
    }
}

pub fn bind_lstm(g: &mut Graph, store: &ParameterStore, prefix: &str) -> BoundLstm {
    let hidden = store.get(&format!("{prefix}.i.wx")).shape[0];
    let input = store.get(&format!("{prefix}.i.wx")).shape[1];
    let mut wx = Vec::with_capacity(4);
    let mut wh = Vec::with_capacity(4);
    let mut b = Vec::with_capacity(4);
    for gate in LSTM_GATES {
        wx.push(store.bind(g, &format!("{prefix}.{gate}.wx")));
        wh.push(store.bind(g, &format!("{prefix}.{gate}.wh")));
        b.push(store.bind(g, &format!("{prefix}.{gate}.b")));
    }
    BoundLstm {
        wx,
        wh,
        b,
        hidden,
        input,
    }
}

fn lstm_gate(g: &mut Graph, p: &BoundLstm, k: usize, x: NodeId, h: NodeId) -> NodeId {
    let a = g.matvec(p.wx[k], p.hidden, p.input, x);
    let b = g.matvec(p.wh[k], p.hidden, p.hidden, h);
    let s = g.add(a, b);
    g.add(s, p.b[k])
}

/// One plain LSTM step: returns (h', c').
pub fn lstm_step(
    g: &mut Graph,
    p: &BoundLstm,
    x: NodeId,
    h: NodeId,
    c: NodeId,
) -> (NodeId, NodeId) {
    let i_pre = lstm_gate(g, p, 0, x, h);
    let i = g.sigmoid(i_pre);
    let f_pre = lstm_gate(g, p, 1, x, h);
    let f = g.sigmoid(f_pre);
    let o_pre = lstm_gate(g, p, 2, x, h);
    let o = g.sigmoid(o_pre);
    let gg_pre = lstm_gate(g, p, 3, x, h);
    let gg = g.tanh(gg_pre);
    let fc = g.mul(f, c);
    let ig = g.mul(i, gg);
    let c_next = g.add(fc, ig);
    let ct = g.tanh(c_next);
    let h_next = g.mul(o, ct);
    (h_next, c_next)
}

/// Output of the bidirectional sequence encoder. Hidden state at position l
/// is the concatenation of the forward state after token l and the backward
/// state after scanning back to l; `final_state` concatenates the forward
/// pass's last state with the backward pass's first-position state.
pub struct EncoderOutput {
    pub hidden_states: Vec<NodeId>,
    pub final_state: NodeId,
}

pub fn register_encoder(store: &mut ParameterStore, hidden: usize, embed: usize) {
    register_lstm(store, "enc.fwd", hidden, embed);
    register_lstm(store, "enc.bwd", hidden, embed);
}

/// Encode a token sequence with the BiLSTM. `noise` optionally perturbs
/// each token's embedding (one vector per position) before encoding.
pub fn encode_sequence(
    g: &mut Graph,
    store: &ParameterStore,
    token_table: NodeId,
    embed_dim: usize,
    tokens: &[usize],
    noise: Option<&[Vec<f64>]>,
) -> Result<EncoderOutput> {
    if tokens.is_empty() {
        return Err(Error::Contract("encode_sequence: empty input".into()));
    }
    let embeds: Vec<NodeId> = tokens
        .iter()
        .enumerate()
        .map(|(l, &t)| {
            let e = g.embed_row(token_table, t, embed_dim);
            match noise {
                Some(eps) => {
                    let n = g.input(eps[l].clone());
                    g.add(e, n)
                }
                None => e,
            }
        })
        .collect();

    let fwd = bind_lstm(g, store, "enc.fwd");
    let bwd = bind_lstm(g, store, "enc.bwd");
    let hdim = fwd.hidden;

    let mut fwd_states = Vec::with_capacity(tokens.len());
    let mut h = g.zeros(hdim);
    let mut c = g.zeros(hdim);
    for &x in &embeds {
        let (h2, c2) = lstm_step(g, &fwd, x, h, c);
        h = h2;
        c = c2;
        fwd_states.push(h);
    }

    let mut bwd_states = vec![h; tokens.len()];
    let mut hb = g.zeros(hdim);
    let mut cb = g.zeros(hdim);
    for (l, &x) in embeds.iter().enumerate().rev() {
        let (h2, c2) = lstm_step(g, &bwd, x, hb, cb);
        hb = h2;
        cb = c2;
        bwd_states[l] = hb;
    }

    let hidden_states: Vec<NodeId> = fwd_states
        .iter()
        .zip(bwd_states.iter())
        .map(|(&f, &b)| g.concat(&[f, b]))
        .collect();
    let final_state = g.concat(&[*fwd_states.last().unwrap(), bwd_states[0]]);
    Ok(EncoderOutput {
        hidden_states,
        final_state,
    })
}

/// Decoder-cell parameters: a plain LSTM plus the semantic reading gate
/// and the gate-memory injection into the cell state.
pub struct BoundScLstm {
    pub lstm: BoundLstm,
    read_wx: NodeId,
    read_wh: NodeId,
    read_b: NodeId,
    gate_w: NodeId,
    out_w: NodeId,
    out_b: NodeId,
    pub gate_dim: usize,
    vocab: usize,
}

pub fn register_sclstm(
    store: &mut ParameterStore,
    prefix: &str,
    hidden: usize,
    embed: usize,
    gate_dim: usize,
    vocab: usize,
) {
    register_lstm(store, prefix, hidden, embed);
    store.add(&format!("{prefix}.read.wx"), &[gate_dim, embed]);
    store.add(&format!("{prefix}.read.wh"), &[gate_dim, hidden]);
    store.add(&format!("{prefix}.read.b"), &[gate_dim]);
    store.add(&format!("{prefix}.gate.w"), &[hidden, gate_dim]);
    store.add(&format!("{prefix}.out.w"), &[vocab, hidden]);
    store.add(&format!("{prefix}.out.b"), &[vocab]);
}

pub fn bind_sclstm(g: &mut Graph, store: &ParameterStore, prefix: &str) -> BoundScLstm {
    let lstm = bind_lstm(g, store, prefix);
    let gate_dim = store.get(&format!("{prefix}.read.b")).shape[0];
    let vocab = store.get(&format!("{prefix}.out.b")).shape[0];
    BoundScLstm {
        lstm,
        read_wx: store.bind(g, &format!("{prefix}.read.wx")),
        read_wh: store.bind(g, &format!("{prefix}.read.wh")),
        read_b: store.bind(g, &format!("{prefix}.read.b")),
        gate_w: store.bind(g, &format!("{prefix}.gate.w")),
        out_w: store.bind(g, &format!("{prefix}.out.w")),
        out_b: store.bind(g, &format!("{prefix}.out.b")),
        gate_dim,
        vocab,
    }
}

pub struct ScLstmState {
    pub h: NodeId,
    pub c: NodeId,
    pub gate_memory: NodeId,
}

/// One semantically-conditioned decoder step.
///
/// The reading gate (sigmoid of input and hidden) multiplicatively decays
/// the gate memory; `consumed_mask` additionally zeroes entries whose slot
/// placeholder is the current input token. The decayed memory feeds the
/// cell state through a tanh projection.
pub fn sclstm_step(
    g: &mut Graph,
    p: &BoundScLstm,
    state: &ScLstmState,
    x_embed: NodeId,
    consumed_mask: Option<&[f64]>,
) -> (ScLstmState, NodeId) {
    let gd = p.gate_dim;
    let hd = p.lstm.hidden;

    let ra = g.matvec(p.read_wx, gd, p.lstm.input, x_embed);
    let rb = g.matvec(p.read_wh, gd, hd, state.h);
    let rs = g.add(ra, rb);
    let rs = g.add(rs, p.read_b);
    let r = g.sigmoid(rs);
    let mut d_next = g.mul(r, state.gate_memory);
    if let Some(mask) = consumed_mask {
        let m = g.input(mask.to_vec());
        d_next = g.mul(d_next, m);
    }

    let i_pre = lstm_gate(g, &p.lstm, 0, x_embed, state.h);
    let i = g.sigmoid(i_pre);
    let f_pre = lstm_gate(g, &p.lstm, 1, x_embed, state.h);
    let f = g.sigmoid(f_pre);
    let o_pre = lstm_gate(g, &p.lstm, 2, x_embed, state.h);
    let o = g.sigmoid(o_pre);
    let gg_pre = lstm_gate(g, &p.lstm, 3, x_embed, state.h);
    let gg = g.tanh(gg_pre);

    let fc = g.mul(f, state.c);
    let ig = g.mul(i, gg);
    let cell = g.add(fc, ig);
    let dproj = g.matvec(p.gate_w, hd, gd, d_next);
    let dinj = g.tanh(dproj);
    let c_next = g.add(cell, dinj);
    let ct = g.tanh(c_next);
    let h_next = g.mul(o, ct);

    let logits_mv = g.matvec(p.out_w, p.vocab, hd, h_next);
    let logits = g.add(logits_mv, p.out_b);
    (
        ScLstmState {
            h: h_next,
            c: c_next,
            gate_memory: d_next,
        },
        logits,
    )
}

/// Result of comparing reverse-mode gradients against central finite
/// differences over every parameter entry.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub entries_checked: usize,
    pub passed: bool,
}

/// Compare the gradients currently stored in `store` against central
/// finite differences of `loss_fn` (step 1e-5). `loss_fn` must be a pure
/// function of the parameter values.
pub fn grad_check<F>(store: &ParameterStore, mut loss_fn: F, tolerance: f64) -> Result<GradCheckReport>
where
    F: FnMut(&ParameterStore) -> Result<f64>,
{
    let mut probe = ParameterStore::new(store.seed);
    for (name, t) in store.iter() {
        probe.params.insert(name.to_string(), t.clone());
    }

    let mut max_rel = 0.0f64;
    let mut worst = String::new();
    let mut checked = 0usize;
    let names: Vec<String> = store.names().map(|s| s.to_string()).collect();
    for name in &names {
        let n = store.get(name).numel();
        for k in 0..n {
            let orig = store.get(name).values[k];
            probe.get_mut(name).values[k] = orig + FD_STEP;
            let up = loss_fn(&probe)?;
            probe.get_mut(name).values[k] = orig - FD_STEP;
            let down = loss_fn(&probe)?;
            probe.get_mut(name).values[k] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::GradCheck(format!(
                    "non-finite loss while probing {name}[{k}]"
                )));
            }
            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = store.get(name).grad[k];
            let denom = (analytic.abs() + numeric.abs()).max(1.0);
            let rel = (analytic - numeric).abs() / denom;
            if rel > max_rel {
                max_rel = rel;
                worst = format!("{name}[{k}]");
            }
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        worst_param: worst,
        entries_checked: checked,
        passed: max_rel < tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity() {
        let mut store = ParameterStore::new(0);
        store.add_zeros("id.w", &[2, 2]);
        store.add_zeros("id.b", &[2]);
        store.get_mut("id.w").values = vec![1.0, 0.0, 0.0, 1.0];
        let mut g = Graph::new();
        let x = g.input(vec![0.3, -0.7]);
        let y = affine(&mut g, &store, "id", x).unwrap();
        assert_eq!(g.value(y), &[0.3, -0.7]);
    }

    #[test]
    fn affine_hand_computed() {
        let mut store = ParameterStore::new(0);
        store.add_zeros("a.w", &[1, 2]);
        store.add_zeros("a.b", &[1]);
        store.get_mut("a.w").values = vec![1.0, 2.0];
        store.get_mut("a.b").values = vec![0.5];
        let mut g = Graph::new();
        let x = g.input(vec![1.0, 1.0]);
        let y = affine(&mut g, &store, "a", x).unwrap();
        assert!((g.scalar(y) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn affine_shape_mismatch() {
        let mut store = ParameterStore::new(0);
        store.add("a.w", &[2, 3]);
        store.add("a.b", &[2]);
        let mut g = Graph::new();
        let x = g.input(vec![1.0, 1.0]);
        assert!(affine(&mut g, &store, "a", x).is_err());
    }

    #[test]
    fn encoder_shapes_and_determinism() {
        let mut store = ParameterStore::new(3);
        store.add("embed.token", &[10, 4]);
        register_encoder(&mut store, 5, 4);
        let run = |store: &ParameterStore| {
            let mut g = Graph::new();
            let table = store.bind(&mut g, "embed.token");
            let out = encode_sequence(&mut g, store, table, 4, &[1, 2, 3], None).unwrap();
            assert_eq!(out.hidden_states.len(), 3);
            assert_eq!(g.len(out.hidden_states[0]), 10);
            g.value(out.final_state).to_vec()
        };
        assert_eq!(run(&store), run(&store));
    }

    #[test]
    fn encoder_single_token() {
        let mut store = ParameterStore::new(4);
        store.add("embed.token", &[10, 4]);
        register_encoder(&mut store, 5, 4);
        let mut g = Graph::new();
        let table = store.bind(&mut g, "embed.token");
        let out = encode_sequence(&mut g, &store, table, 4, &[7], None).unwrap();
        assert_eq!(out.hidden_states.len(), 1);
        assert_eq!(g.len(out.final_state), 10);
    }

    #[test]
    fn encoder_empty_input_rejected() {
        let mut store = ParameterStore::new(4);
        store.add("embed.token", &[10, 4]);
        register_encoder(&mut store, 5, 4);
        let mut g = Graph::new();
        let table = store.bind(&mut g, "embed.token");
        assert!(encode_sequence(&mut g, &store, table, 4, &[], None).is_err());
    }

    #[test]
    fn encoder_zero_params_fixed_point() {
        let mut store = ParameterStore::new(0);
        store.add_zeros("embed.token", &[10, 4]);
        for gate in LSTM_GATES {
            for dir in ["fwd", "bwd"] {
                store.add_zeros(&format!("enc.{dir}.{gate}.wx"), &[5, 4]);
                store.add_zeros(&format!("enc.{dir}.{gate}.wh"), &[5, 5]);
                store.add_zeros(&format!("enc.{dir}.{gate}.b"), &[5]);
            }
        }
        let mut g = Graph::new();
        let table = store.bind(&mut g, "embed.token");
        let out = encode_sequence(&mut g, &store, table, 4, &[1, 2], None).unwrap();
        // All gates sigmoid(0)=0.5, candidate tanh(0)=0 -> cell stays 0, h stays 0.
        for &h in &out.hidden_states {
            assert!(g.value(h).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn encoder_sensitive_to_token_order() {
        let mut store = ParameterStore::new(11);
        store.add("embed.token", &[10, 4]);
        register_encoder(&mut store, 5, 4);
        let run = |tokens: &[usize]| {
            let mut g = Graph::new();
            let table = store.bind(&mut g, "embed.token");
            let out = encode_sequence(&mut g, &store, table, 4, tokens, None).unwrap();
            g.value(out.hidden_states[0]).to_vec()
        };
        assert_ne!(run(&[1, 2, 3, 4]), run(&[1, 3, 2, 4]));
    }

    #[test]
    fn sclstm_gate_memory_never_increases() {
        let mut store = ParameterStore::new(9);
        store.add("embed.token", &[10, 4]);
        register_sclstm(&mut store, "dec", 5, 4, 3, 10);
        let mut g = Graph::new();
        let table = store.bind(&mut g, "embed.token");
        let p = bind_sclstm(&mut g, &store, "dec");
        let mut state = ScLstmState {
            h: g.zeros(5),
            c: g.zeros(5),
            gate_memory: g.input(vec![0.9, 0.5, 1.0]),
        };
        let mut prev = g.value(state.gate_memory).to_vec();
        for t in 0..4 {
            let x = g.embed_row(table, t, 4);
            let (next, _logits) = sclstm_step(&mut g, &p, &state, x, None);
            let cur = g.value(next.gate_memory).to_vec();
            for (a, b) in cur.iter().zip(prev.iter()) {
                assert!(a <= b, "gate memory increased: {a} > {b}");
            }
            prev = cur;
            state = next;
        }
    }

    #[test]
    fn sclstm_zero_gate_memory_is_plain_lstm() {
        let mut store = ParameterStore::new(2);
        store.add("embed.token", &[10, 4]);
        register_sclstm(&mut store, "dec", 5, 4, 3, 10);
        let mut g = Graph::new();
        let table = store.bind(&mut g, "embed.token");
        let p = bind_sclstm(&mut g, &store, "dec");
        let state = ScLstmState {
            h: g.zeros(5),
            c: g.zeros(5),
            gate_memory: g.zeros(3),
        };
        let x = g.embed_row(table, 1, 4);
        let (next, _) = sclstm_step(&mut g, &p, &state, x, None);
        // Same step through the plain cell.
        let h0 = g.zeros(5);
        let c0 = g.zeros(5);
        let (h_plain, _c_plain) = lstm_step(&mut g, &p.lstm, x, h0, c0);
        // Gate memory zero => tanh(W*0)=0 injection, cell identical.
        assert_eq!(g.value(next.h), g.value(h_plain));
    }

    #[test]
    fn grad_check_quadratic() {
        // f(x) = x^2 at x=3: analytic gradient 6.
        let mut store = ParameterStore::new(0);
        store.add_zeros("x", &[1]);
        store.get_mut("x").values = vec![3.0];
        store.get_mut("x").grad = vec![6.0];
        let report = grad_check(
            &store,
            |s| {
                let v = s.get("x").values[0];
                Ok(v * v)
            },
            1e-8,
        )
        .unwrap();
        assert!(report.passed, "rel err {}", report.max_rel_error);
    }

    #[test]
    fn grad_check_detects_wrong_gradient() {
        let mut store = ParameterStore::new(0);
        store.add_zeros("x", &[1]);
        store.get_mut("x").values = vec![3.0];
        store.get_mut("x").grad = vec![5.0]; // wrong on purpose
        let report = grad_check(
            &store,
            |s| {
                let v = s.get("x").values[0];
                Ok(v * v)
            },
            1e-4,
        )
        .unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut store = ParameterStore::new(5);
        store.add("a", &[2, 2]);
        store.add("b", &[3]);
        let json = serde_json::to_string(&store.to_checkpoint()).unwrap();
        let loaded: StoreCheckpoint = serde_json::from_str(&json).unwrap();
        let restored = ParameterStore::from_checkpoint(loaded).unwrap();
        assert_eq!(restored.get("a").values, store.get("a").values);
        assert_eq!(restored.get("b").shape, vec![3]);
    }
}
