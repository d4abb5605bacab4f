//! Reverse-mode differentiation over vectors.
//!
//! A [`Tape`] records every operation of a forward pass. Parameters are read
//! straight from the [`ParamStore`] by id and are never copied onto the tape
//! except for embedding rows. [`Tape::backward`] walks the record in reverse
//! and accumulates parameter gradients into a [`Grads`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{Grads, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    Row { p: ParamId, row: usize },
    Linear { w: ParamId, x: NodeId, b: Option<ParamId> },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Shift(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Concat(Vec<NodeId>),
    Sum(NodeId),
    Softmax(NodeId),
    WeightedSum { weights: NodeId, items: Vec<NodeId> },
    Mask { x: NodeId, mask: Vec<f64> },
    Xent { logits: NodeId, target: usize, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    dropout: f64,
    rng: Option<ChaCha8Rng>,
}

impl<'p> Tape<'p> {
    /// Evaluation tape: dropout is the identity.
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            dropout: 0.0,
            rng: None,
        }
    }

    /// Training tape with inverted dropout at `rate`.
    pub fn training(params: &'p ParamStore, rate: f64, rng: ChaCha8Rng) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            dropout: rate,
            rng: Some(rng),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some() && self.dropout > 0.0
    }

    pub fn value(&self, n: NodeId) -> &[f64] {
        &self.nodes[n.0].value
    }

    pub fn scalar(&self, n: NodeId) -> f64 {
        self.nodes[n.0].value[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        debug_assert!(value.iter().all(|x| x.is_finite()), "non-finite value from {op:?}");
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant input (no gradient flows out of the tape through it).
    pub fn input(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Input)
    }

    /// Row `row` of a parameter matrix, e.g. an embedding lookup.
    pub fn row(&mut self, p: ParamId, row: usize) -> NodeId {
        let t = self.params.get(p);
        assert!(row < t.rows(), "row {row} out of range for {}", self.params.name(p));
        let v = t.row(row).to_vec();
        self.push(v, Op::Row { p, row })
    }

    /// A whole vector-shaped parameter.
    pub fn param_vector(&mut self, p: ParamId) -> NodeId {
        let t = self.params.get(p);
        let v = t.data.clone();
        self.push(v, Op::Row { p, row: 0 })
    }

    /// `W x + b` with `W` of shape `(out, in)`.
    pub fn linear(&mut self, w: ParamId, x: NodeId, b: Option<ParamId>) -> NodeId {
        let wt = self.params.get(w);
        let (rows, cols) = (wt.rows(), wt.cols());
        let xv = &self.nodes[x.0].value;
        assert_eq!(
            xv.len(),
            cols,
            "linear {}: input has {} values, weight expects {}",
            self.params.name(w),
            xv.len(),
            cols
        );
        let mut out = match b {
            Some(b) => {
                let bt = self.params.get(b);
                assert_eq!(bt.len(), rows, "bias {} has wrong length", self.params.name(b));
                bt.data.clone()
            }
            None => vec![0.0; rows],
        };
        for (i, o) in out.iter_mut().enumerate() {
            let r = &wt.data[i * cols..(i + 1) * cols];
            *o += r.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
        }
        self.push(out, Op::Linear { w, x, b })
    }

    fn zip(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "elementwise op on vectors of different length");
        av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect()
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip(a, b, |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    /// `x + c` for a constant vector `c`.
    pub fn shift(&mut self, x: NodeId, c: &[f64]) -> NodeId {
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.len(), c.len());
        let v = xv.iter().zip(c).map(|(a, b)| a + b).collect();
        self.push(v, Op::Shift(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x.0].value.iter().map(|&a| sigmoid(a)).collect();
        self.push(v, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x.0].value.iter().map(|a| a.tanh()).collect();
        self.push(v, Op::Tanh(x))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut v = Vec::new();
        for p in parts {
            v.extend_from_slice(&self.nodes[p.0].value);
        }
        self.push(v, Op::Concat(parts.to_vec()))
    }

    /// Sum of all entries as a scalar node.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x.0].value.iter().sum();
        self.push(vec![v], Op::Sum(x))
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let v = softmax(&self.nodes[x.0].value);
        self.push(v, Op::Softmax(x))
    }

    /// `sum_k weights[k] * items[k]`.
    pub fn weighted_sum(&mut self, weights: NodeId, items: &[NodeId]) -> NodeId {
        let w = &self.nodes[weights.0].value;
        assert_eq!(w.len(), items.len());
        let n = self.nodes[items[0].0].value.len();
        let mut out = vec![0.0; n];
        for (k, it) in items.iter().enumerate() {
            let iv = &self.nodes[it.0].value;
            assert_eq!(iv.len(), n);
            out.iter_mut().zip(iv).for_each(|(o, x)| *o += w[k] * x);
        }
        self.push(out, Op::WeightedSum {
            weights,
            items: items.to_vec(),
        })
    }

    /// Inverted dropout; identity on evaluation tapes.
    pub fn dropout(&mut self, x: NodeId) -> NodeId {
        if !self.is_training() {
            return x;
        }
        let keep = 1.0 - self.dropout;
        let rng = self.rng.as_mut().expect("training tape has an rng");
        let n = self.nodes[x.0].value.len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let v = self.nodes[x.0]
            .value
            .iter()
            .zip(&mask)
            .map(|(a, m)| a * m)
            .collect();
        self.push(v, Op::Mask { x, mask })
    }

    /// Cross-entropy `-log softmax(logits)[target]` as a scalar node.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> NodeId {
        let lv = &self.nodes[logits.0].value;
        assert!(target < lv.len(), "target {target} out of range for {} classes", lv.len());
        let probs = softmax(lv);
        let loss = -log_softmax_at(lv, target);
        self.push(vec![loss], Op::Xent {
            logits,
            target,
            probs,
        })
    }

    /// Accumulate `d(sum_i weight_i * node_i)/d(params)` into `grads`.
    /// Seed nodes must be scalars.
    pub fn backward(&self, seeds: &[(NodeId, f64)], grads: &mut Grads) {
        let mut g: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        g.resize_with(self.nodes.len(), || None);
        for &(n, w) in seeds {
            assert_eq!(self.nodes[n.0].value.len(), 1, "backward seed must be a scalar");
            acc(&mut g, n, &[w], 1.0);
        }
        let params = self.params;
        for i in (0..self.nodes.len()).rev() {
            let Some(gi) = g[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Row { p, row } => {
                    let t = params.get(*p);
                    let c = gi.len();
                    let buf = grads.buf(*p, t.len());
                    buf[row * c..(row + 1) * c]
                        .iter_mut()
                        .zip(&gi)
                        .for_each(|(b, x)| *b += x);
                }
                Op::Linear { w, x, b } => {
                    let wt = params.get(*w);
                    let cols = wt.cols();
                    let xv = &self.nodes[x.0].value;
                    {
                        let gw = grads.buf(*w, wt.len());
                        for (r, &gr) in gi.iter().enumerate() {
                            if gr != 0.0 {
                                gw[r * cols..(r + 1) * cols]
                                    .iter_mut()
                                    .zip(xv)
                                    .for_each(|(a, &xx)| *a += gr * xx);
                            }
                        }
                    }
                    if let Some(b) = b {
                        let gb = grads.buf(*b, gi.len());
                        gb.iter_mut().zip(&gi).for_each(|(a, x)| *a += x);
                    }
                    let mut gx = vec![0.0; cols];
                    for (r, &gr) in gi.iter().enumerate() {
                        if gr != 0.0 {
                            gx.iter_mut()
                                .zip(&wt.data[r * cols..(r + 1) * cols])
                                .for_each(|(a, &ww)| *a += gr * ww);
                        }
                    }
                    acc(&mut g, *x, &gx, 1.0);
                }
                Op::Add(a, b) => {
                    acc(&mut g, *a, &gi, 1.0);
                    acc(&mut g, *b, &gi, 1.0);
                }
                Op::Sub(a, b) => {
                    acc(&mut g, *a, &gi, 1.0);
                    acc(&mut g, *b, &gi, -1.0);
                }
                Op::Mul(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let ga: Vec<f64> = gi.iter().zip(bv).map(|(x, y)| x * y).collect();
                    let gb: Vec<f64> = gi.iter().zip(av).map(|(x, y)| x * y).collect();
                    acc(&mut g, *a, &ga, 1.0);
                    acc(&mut g, *b, &gb, 1.0);
                }
                Op::Shift(x) => acc(&mut g, *x, &gi, 1.0),
                Op::Sigmoid(x) => {
                    let gx: Vec<f64> = gi
                        .iter()
                        .zip(&node.value)
                        .map(|(gg, s)| gg * s * (1.0 - s))
                        .collect();
                    acc(&mut g, *x, &gx, 1.0);
                }
                Op::Tanh(x) => {
                    let gx: Vec<f64> = gi
                        .iter()
                        .zip(&node.value)
                        .map(|(gg, t)| gg * (1.0 - t * t))
                        .collect();
                    acc(&mut g, *x, &gx, 1.0);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        acc(&mut g, *p, &gi[off..off + n], 1.0);
                        off += n;
                    }
                }
                Op::Sum(x) => {
                    let n = self.nodes[x.0].value.len();
                    acc(&mut g, *x, &vec![gi[0]; n], 1.0);
                }
                Op::Softmax(x) => {
                    let s = &node.value;
                    let dot: f64 = gi.iter().zip(s).map(|(a, b)| a * b).sum();
                    let gx: Vec<f64> = s.iter().zip(&gi).map(|(si, gg)| si * (gg - dot)).collect();
                    acc(&mut g, *x, &gx, 1.0);
                }
                Op::WeightedSum { weights, items } => {
                    let w = &self.nodes[weights.0].value;
                    let mut gw = vec![0.0; items.len()];
                    for (k, it) in items.iter().enumerate() {
                        let iv = &self.nodes[it.0].value;
                        gw[k] = gi.iter().zip(iv).map(|(a, b)| a * b).sum();
                        acc(&mut g, *it, &gi, w[k]);
                    }
                    acc(&mut g, *weights, &gw, 1.0);
                }
                Op::Mask { x, mask } => {
                    let gx: Vec<f64> = gi.iter().zip(mask).map(|(a, m)| a * m).collect();
                    acc(&mut g, *x, &gx, 1.0);
                }
                Op::Xent {
                    logits,
                    target,
                    probs,
                } => {
                    let scale = gi[0];
                    let mut gx: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                    gx[*target] -= scale;
                    acc(&mut g, *logits, &gx, 1.0);
                }
            }
        }
    }
}

fn acc(g: &mut [Option<Vec<f64>>], n: NodeId, v: &[f64], scale: f64) {
    match &mut g[n.0] {
        Some(buf) => buf.iter_mut().zip(v).for_each(|(a, b)| *a += scale * b),
        slot @ None => *slot = Some(v.iter().map(|b| scale * b).collect()),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

fn log_softmax_at(x: &[f64], i: usize) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    x[i] - lse
}

/// Softmax probabilities and cross-entropy loss for `target`.
pub fn softmax_xent(logits: &[f64], target: usize) -> crate::Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(crate::Error::data(format!(
            "target {target} out of range for {} classes",
            logits.len()
        )));
    }
    Ok((-log_softmax_at(logits, target), softmax(logits)))
}
