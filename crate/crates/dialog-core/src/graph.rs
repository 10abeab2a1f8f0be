//! Reverse-mode autodiff over a flat tape of vector-valued nodes.
//!
//! Every forward pass builds a fresh `Graph`. Nodes hold `f64` vectors;
//! operations record their parents so `backward` can sweep the tape in
//! reverse creation order. Parameters enter the tape as named leaves and
//! their accumulated gradients are read back after the sweep.

use std::collections::BTreeMap;

/// Floor applied to probabilities before taking logs.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    /// Constant input or named parameter leaf.
    Leaf,
    /// y = M v, with M a row-major `rows x cols` leaf.
    MatVec {
        m: NodeId,
        v: NodeId,
        rows: usize,
        cols: usize,
    },
    /// y = table[row], table a row-major `_ x dim` matrix.
    EmbedRow {
        table: NodeId,
        row: usize,
        dim: usize,
    },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId),
    /// Scalar dot product of two equal-length vectors.
    Dot(NodeId, NodeId),
    Concat(Vec<NodeId>),
    /// y = sum_l weights[l] * items[l], items all equal-length.
    WeightedSum { weights: NodeId, items: Vec<NodeId> },
    /// Scalar -ln(max(p[idx], eps)).
    NegLogPick { p: NodeId, idx: usize },
    /// Scalar binary cross-entropy of a probability against a constant target.
    Bce { p: NodeId, target: f64 },
    /// Scalar sum of squared differences against a constant target vector.
    MseConst { a: NodeId, target: Vec<f64> },
    /// Elementwise sum of equal-length nodes (used mostly for scalars).
    SumList(Vec<NodeId>),
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
    params: BTreeMap<String, NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value[0]
    }

    pub fn len(&self, id: NodeId) -> usize {
        self.nodes[id.0].value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input node; receives no gradient of interest.
    pub fn input(&mut self, values: Vec<f64>) -> NodeId {
        self.push(values, Op::Leaf)
    }

    /// Named parameter leaf. Binding the same name twice returns the
    /// existing node so each parameter appears once per tape.
    pub fn param(&mut self, name: &str, values: &[f64]) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        let id = self.push(values.to_vec(), Op::Leaf);
        self.params.insert(name.to_string(), id);
        id
    }

    pub fn param_nodes(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.params.iter().map(|(n, &id)| (n.as_str(), id))
    }

    pub fn matvec(&mut self, m: NodeId, rows: usize, cols: usize, v: NodeId) -> NodeId {
        debug_assert_eq!(self.len(m), rows * cols);
        debug_assert_eq!(self.len(v), cols);
        let mut out = vec![0.0; rows];
        {
            let mat = &self.nodes[m.0].value;
            let vec = &self.nodes[v.0].value;
            for (r, o) in out.iter_mut().enumerate() {
                let row = &mat[r * cols..(r + 1) * cols];
                let mut acc = 0.0;
                for (a, b) in row.iter().zip(vec.iter()) {
                    acc += a * b;
                }
                *o = acc;
            }
        }
        self.push(out, Op::MatVec { m, v, rows, cols })
    }

    pub fn embed_row(&mut self, table: NodeId, row: usize, dim: usize) -> NodeId {
        let out = self.nodes[table.0].value[row * dim..(row + 1) * dim].to_vec();
        self.push(out, Op::EmbedRow { table, row, dim })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.len(a), self.len(b));
        let out: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(self.nodes[b.0].value.iter())
            .map(|(x, y)| x + y)
            .collect();
        self.push(out, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.len(a), self.len(b));
        let out: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(self.nodes[b.0].value.iter())
            .map(|(x, y)| x * y)
            .collect();
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let out: Vec<f64> = self.nodes[a.0].value.iter().map(|x| x * c).collect();
        self.push(out, Op::Scale(a, c))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let out: Vec<f64> = self.nodes[a.0].value.iter().map(|x| x.tanh()).collect();
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .map(|x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        self.push(out, Op::Sigmoid(a))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let vals = &self.nodes[a.0].value;
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = vals.iter().map(|x| (x - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let out: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        self.push(out, Op::Softmax(a))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.len(a), self.len(b));
        let out: f64 = self.nodes[a.0]
            .value
            .iter()
            .zip(self.nodes[b.0].value.iter())
            .map(|(x, y)| x * y)
            .sum();
        self.push(vec![out], Op::Dot(a, b))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(&self.nodes[p.0].value);
        }
        self.push(out, Op::Concat(parts.to_vec()))
    }

    pub fn weighted_sum(&mut self, weights: NodeId, items: &[NodeId]) -> NodeId {
        debug_assert_eq!(self.len(weights), items.len());
        let dim = self.len(items[0]);
        let mut out = vec![0.0; dim];
        for (l, &item) in items.iter().enumerate() {
            let w = self.nodes[weights.0].value[l];
            for (o, x) in out.iter_mut().zip(self.nodes[item.0].value.iter()) {
                *o += w * x;
            }
        }
        self.push(
            out,
            Op::WeightedSum {
                weights,
                items: items.to_vec(),
            },
        )
    }

    pub fn neg_log_pick(&mut self, p: NodeId, idx: usize) -> NodeId {
        let v = self.nodes[p.0].value[idx].max(PROB_EPS);
        self.push(vec![-v.ln()], Op::NegLogPick { p, idx })
    }

    pub fn bce(&mut self, p: NodeId, target: f64) -> NodeId {
        debug_assert_eq!(self.len(p), 1);
        let v = self.nodes[p.0].value[0];
        let loss =
            -(target * v.max(PROB_EPS).ln() + (1.0 - target) * (1.0 - v).max(PROB_EPS).ln());
        self.push(vec![loss], Op::Bce { p, target })
    }

    pub fn mse_const(&mut self, a: NodeId, target: Vec<f64>) -> NodeId {
        debug_assert_eq!(self.len(a), target.len());
        let loss: f64 = self.nodes[a.0]
            .value
            .iter()
            .zip(target.iter())
            .map(|(x, t)| (x - t) * (x - t))
            .sum();
        self.push(vec![loss], Op::MseConst { a, target })
    }

    pub fn sum_list(&mut self, parts: &[NodeId]) -> NodeId {
        debug_assert!(!parts.is_empty());
        let dim = self.len(parts[0]);
        let mut out = vec![0.0; dim];
        for &p in parts {
            for (o, x) in out.iter_mut().zip(self.nodes[p.0].value.iter()) {
                *o += x;
            }
        }
        self.push(out, Op::SumList(parts.to_vec()))
    }

    pub fn zeros(&mut self, dim: usize) -> NodeId {
        self.input(vec![0.0; dim])
    }

    /// Reverse sweep from a scalar loss node. Gradients of every node are
    /// available through `grad` until the next call.
    pub fn backward(&mut self, loss: NodeId) {
        assert_eq!(self.len(loss), 1, "backward requires a scalar loss");
        self.grads = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        self.grads[loss.0][0] = 1.0;
        for i in (0..self.nodes.len()).rev() {
            let g = std::mem::take(&mut self.grads[i]);
            if g.iter().all(|&x| x == 0.0) {
                self.grads[i] = g;
                continue;
            }
            self.apply_node_grad(i, &g);
            self.grads[i] = g;
        }
    }

    fn apply_node_grad(&mut self, i: usize, g: &[f64]) {
        match &self.nodes[i].op {
                Op::Leaf => {}
                Op::MatVec { m, v, rows, cols } => {
                    let (m, v, rows, cols) = (*m, *v, *rows, *cols);
                    let vv = self.nodes[v.0].value.clone();
                    let mv = &self.nodes[m.0].value;
                    let mut dv = vec![0.0; cols];
                    for r in 0..rows {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        let row = &mv[r * cols..(r + 1) * cols];
                        for (c, &w) in row.iter().enumerate() {
                            dv[c] += gr * w;
                        }
                    }
                    {
                        let dm = &mut self.grads[m.0];
                        for r in 0..rows {
                            let gr = g[r];
                            if gr == 0.0 {
                                continue;
                            }
                            for c in 0..cols {
                                dm[r * cols + c] += gr * vv[c];
                            }
                        }
                    }
                    for (c, d) in dv.into_iter().enumerate() {
                        self.grads[v.0][c] += d;
                    }
                }
                Op::EmbedRow { table, row, dim } => {
                    let (table, row, dim) = (*table, *row, *dim);
                    for (k, gv) in g.iter().enumerate() {
                        self.grads[table.0][row * dim + k] += gv;
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    for (k, gv) in g.iter().enumerate() {
                        self.grads[a.0][k] += gv;
                    }
                    for (k, gv) in g.iter().enumerate() {
                        self.grads[b.0][k] += gv;
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    for (k, gv) in g.iter().enumerate() {
                        self.grads[a.0][k] += gv * bv[k];
                    }
                    for (k, gv) in g.iter().enumerate() {
                        self.grads[b.0][k] += gv * av[k];
                    }
                }
                Op::Scale(a, c) => {
                    let (a, c) = (*a, *c);
                    for (k, gv) in g.iter().enumerate() {
                        self.grads[a.0][k] += gv * c;
                    }
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let yv = self.nodes[i].value.clone();
                    for (k, gv) in g.iter().enumerate() {
                        self.grads[a.0][k] += gv * (1.0 - yv[k] * yv[k]);
                    }
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let yv = self.nodes[i].value.clone();
                    for (k, gv) in g.iter().enumerate() {
                        self.grads[a.0][k] += gv * yv[k] * (1.0 - yv[k]);
                    }
                }
                Op::Softmax(a) => {
                    let a = *a;
                    let yv = self.nodes[i].value.clone();
                    let inner: f64 = g.iter().zip(yv.iter()).map(|(gv, y)| gv * y).sum();
                    for (k, y) in yv.iter().enumerate() {
                        self.grads[a.0][k] += y * (g[k] - inner);
                    }
                }
                Op::Dot(a, b) => {
                    let (a, b) = (*a, *b);
                    let g0 = g[0];
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    for (k, y) in bv.iter().enumerate() {
                        self.grads[a.0][k] += g0 * y;
                    }
                    for (k, x) in av.iter().enumerate() {
                        self.grads[b.0][k] += g0 * x;
                    }
                }
                Op::Concat(parts) => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        for k in 0..len {
                            self.grads[p.0][k] += g[off + k];
                        }
                        off += len;
                    }
                }
                Op::WeightedSum { weights, items } => {
                    let weights = *weights;
                    let items = items.clone();
                    let wv = self.nodes[weights.0].value.clone();
                    for (l, item) in items.iter().enumerate() {
                        let dw: f64 = g
                            .iter()
                            .zip(self.nodes[item.0].value.iter())
                            .map(|(gv, x)| gv * x)
                            .sum();
                        self.grads[weights.0][l] += dw;
                        let w = wv[l];
                        for (k, gv) in g.iter().enumerate() {
                            self.grads[item.0][k] += w * gv;
                        }
                    }
                }
                Op::NegLogPick { p, idx } => {
                    let (p, idx) = (*p, *idx);
                    let v = self.nodes[p.0].value[idx];
                    if v > PROB_EPS {
                        self.grads[p.0][idx] += -g[0] / v;
                    }
                }
                Op::Bce { p, target } => {
                    let (p, t) = (*p, *target);
                    let v = self.nodes[p.0].value[0];
                    let mut d = 0.0;
                    if v > PROB_EPS {
                        d -= t / v;
                    }
                    if 1.0 - v > PROB_EPS {
                        d += (1.0 - t) / (1.0 - v);
                    }
                    self.grads[p.0][0] += g[0] * d;
                }
                Op::MseConst { a, target } => {
                    let a = *a;
                    let target = target.clone();
                    let av = self.nodes[a.0].value.clone();
                    for (k, t) in target.iter().enumerate() {
                        self.grads[a.0][k] += g[0] * 2.0 * (av[k] - t);
                    }
                }
                Op::SumList(parts) => {
                    let parts = parts.clone();
                    for p in parts {
                        for (k, gv) in g.iter().enumerate() {
                            self.grads[p.0][k] += gv;
                        }
                    }
                }
            }
    }

    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.grads[id.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Finite-difference check of a scalar function of a flat input vector.
    fn fd_check(build: impl Fn(&mut Graph, &[f64]) -> (NodeId, NodeId), x0: Vec<f64>) {
        let mut g = Graph::new();
        let (leaf, loss) = build(&mut g, &x0);
        g.backward(loss);
        let analytic = g.grad(leaf).to_vec();
        let h = 1e-6;
        for k in 0..x0.len() {
            let mut xp = x0.clone();
            xp[k] += h;
            let mut xm = x0.clone();
            xm[k] -= h;
            let mut gp = Graph::new();
            let (_, lp) = build(&mut gp, &xp);
            let mut gm = Graph::new();
            let (_, lm) = build(&mut gm, &xm);
            let numeric = (gp.scalar(lp) - gm.scalar(lm)) / (2.0 * h);
            let denom = (analytic[k].abs() + numeric.abs()).max(1e-8);
            assert!(
                (analytic[k] - numeric).abs() / denom < 1e-5,
                "entry {k}: analytic {} vs numeric {}",
                analytic[k],
                numeric
            );
        }
    }

    #[test]
    fn matvec_forward() {
        let mut g = Graph::new();
        let m = g.input(vec![1.0, 2.0, 3.0, 4.0]);
        let v = g.input(vec![1.0, 1.0]);
        let y = g.matvec(m, 2, 2, v);
        assert_eq!(g.value(y), &[3.0, 7.0]);
    }

    #[test]
    fn softmax_normalizes() {
        let mut g = Graph::new();
        let x = g.input(vec![1.0, 2.0, 3.0]);
        let y = g.softmax(x);
        let sum: f64 = g.value(y).iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grad_through_composite() {
        fd_check(
            |g, x| {
                let leaf = g.param("x", x);
                let m = g.input(vec![0.3, -0.2, 0.1, 0.5, 0.4, -0.6]);
                let h = g.matvec(m, 3, 2, leaf);
                let t = g.tanh(h);
                let s = g.softmax(t);
                let loss = g.neg_log_pick(s, 1);
                (leaf, loss)
            },
            vec![0.7, -0.4],
        );
    }

    #[test]
    fn grad_through_attention_shape() {
        fd_check(
            |g, x| {
                let leaf = g.param("x", x);
                let h1 = g.input(vec![0.2, -0.1]);
                let h2 = g.input(vec![-0.3, 0.4]);
                let e1 = g.dot(h1, leaf);
                let e2 = g.dot(h2, leaf);
                let scores = g.concat(&[e1, e2]);
                let w = g.softmax(scores);
                let ctx = g.weighted_sum(w, &[h1, h2]);
                let score = g.dot(ctx, leaf);
                let p = g.sigmoid(score);
                let loss = g.bce(p, 1.0);
                (leaf, loss)
            },
            vec![0.5, -0.2],
        );
    }

    #[test]
    fn grad_through_mse_and_mul() {
        fd_check(
            |g, x| {
                let leaf = g.param("x", x);
                let gate = g.sigmoid(leaf);
                let two = g.input(vec![2.0, -1.0, 0.5]);
                let y = g.mul(gate, two);
                let loss = g.mse_const(y, vec![0.3, 0.1, -0.2]);
                (leaf, loss)
            },
            vec![0.1, 0.9, -0.5],
        );
    }

    #[test]
    fn grad_through_embed_row() {
        fd_check(
            |g, x| {
                let table = g.param("emb", x);
                let e = g.embed_row(table, 1, 2);
                let s = g.dot(e, e);
                let sc = g.scale(s, 0.5);
                let parts = [sc, sc];
                let loss = g.sum_list(&parts);
                (table, loss)
            },
            vec![0.3, -0.4, 0.8, 0.2],
        );
    }
}
