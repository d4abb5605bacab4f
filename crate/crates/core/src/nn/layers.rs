use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GruLayer {
    pub wz: ParamId,
    pub uz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub ur: ParamId,
    pub br: ParamId,
    pub wh: ParamId,
    pub uh: ParamId,
    pub bh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// Stacked GRU. Layer `l` reads the output of layer `l - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gru {
    pub layers: Vec<GruLayer>,
}

impl Gru {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        num_layers: usize,
        rng: &mut R,
    ) -> Self {
        assert!(num_layers >= 1, "a GRU needs at least one layer");
        let layers = (0..num_layers)
            .map(|l| {
                let inp = if l == 0 { input } else { hidden };
                let p = |s: &str| format!("{prefix}.l{l}.{s}");
                GruLayer {
                    wz: store.add_matrix(&p("wz"), hidden, inp, rng),
                    uz: store.add_matrix(&p("uz"), hidden, hidden, rng),
                    bz: store.add_bias(&p("bz"), hidden),
                    wr: store.add_matrix(&p("wr"), hidden, inp, rng),
                    ur: store.add_matrix(&p("ur"), hidden, hidden, rng),
                    br: store.add_bias(&p("br"), hidden),
                    wh: store.add_matrix(&p("wh"), hidden, inp, rng),
                    uh: store.add_matrix(&p("uh"), hidden, hidden, rng),
                    bh: store.add_bias(&p("bh"), hidden),
                    input: inp,
                    hidden,
                }
            })
            .collect();
        Gru { layers }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .flat_map(|l| [l.wz, l.uz, l.bz, l.wr, l.ur, l.br, l.wh, l.uh, l.bh])
            .collect()
    }

    /// One time step. `h` holds one state per layer; the last returned state
    /// is the top-layer output. Dropout touches only the layer inputs.
    pub fn step(&self, tape: &mut Tape, h: &[NodeId], x: NodeId) -> Vec<NodeId> {
        assert_eq!(h.len(), self.layers.len(), "GRU expects one state per layer");
        let mut out = Vec::with_capacity(h.len());
        let mut input = x;
        for (layer, &hp) in self.layers.iter().zip(h) {
            let xin = tape.dropout(input);
            let hn = gru_cell(tape, layer, hp, xin);
            out.push(hn);
            input = hn;
        }
        out
    }

    /// Initial states: `first` for layer 1, zeros above.
    pub fn initial(&self, tape: &mut Tape, first: NodeId) -> Vec<NodeId> {
        let mut h = vec![first];
        for l in &self.layers[1..] {
            h.push(tape.input(vec![0.0; l.hidden]));
        }
        h
    }
}

fn gru_cell(tape: &mut Tape, p: &GruLayer, h: NodeId, x: NodeId) -> NodeId {
    let a = tape.linear(p.wz, x, Some(p.bz));
    let b = tape.linear(p.uz, h, None);
    let z = tape.add(a, b);
    let z = tape.sigmoid(z);

    let a = tape.linear(p.wr, x, Some(p.br));
    let b = tape.linear(p.ur, h, None);
    let r = tape.add(a, b);
    let r = tape.sigmoid(r);

    let rh = tape.mul(r, h);
    let a = tape.linear(p.wh, x, Some(p.bh));
    let b = tape.linear(p.uh, rh, None);
    let c = tape.add(a, b);
    let c = tape.tanh(c);

    // (1 - z) h + z c = h + z (c - h)
    let d = tape.sub(c, h);
    let zd = tape.mul(z, d);
    tape.add(h, zd)
}

/// Context attention: a scalar score `tanh(w1 . [h; v_k])` per context,
/// softmax weights, and the enhanced state `tanh(W2 c + W3 h)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attention {
    pub w1: ParamId,
    pub w2: ParamId,
    pub w3: ParamId,
}

pub struct Attended {
    pub weights: NodeId,
    pub mixed: NodeId,
    pub enhanced: NodeId,
}

impl Attention {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, hidden: usize, ctx: usize, rng: &mut R) -> Self {
        Attention {
            w1: store.add_matrix(&format!("{prefix}.w1"), 1, hidden + ctx, rng),
            w2: store.add_matrix(&format!("{prefix}.w2"), hidden, ctx, rng),
            w3: store.add_matrix(&format!("{prefix}.w3"), hidden, hidden, rng),
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.w1, self.w2, self.w3]
    }

    pub fn attend(&self, tape: &mut Tape, query: NodeId, contexts: &[NodeId]) -> Result<Attended> {
        if contexts.is_empty() {
            return Err(Error::data("attention over an empty context set"));
        }
        let scores: Vec<NodeId> = contexts
            .iter()
            .map(|&v| {
                let qv = tape.concat(&[query, v]);
                let s = tape.linear(self.w1, qv, None);
                tape.tanh(s)
            })
            .collect();
        let s = tape.concat(&scores);
        let weights = tape.softmax(s);
        let mixed = tape.weighted_sum(weights, contexts);
        let a = tape.linear(self.w2, mixed, None);
        let b = tape.linear(self.w3, query, None);
        let e = tape.add(a, b);
        let enhanced = tape.tanh(e);
        Ok(Attended {
            weights,
            mixed,
            enhanced,
        })
    }
}

/// `W2 tanh(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl Mlp {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        Mlp {
            w1: store.add_matrix(&format!("{prefix}.w1"), hidden, input, rng),
            b1: store.add_bias(&format!("{prefix}.b1"), hidden),
            w2: store.add_matrix(&format!("{prefix}.w2"), output, hidden, rng),
            b2: store.add_bias(&format!("{prefix}.b2"), output),
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.w1, self.b1, self.w2, self.b2]
    }

    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        let h = tape.linear(self.w1, x, Some(self.b1));
        let h = tape.tanh(h);
        tape.linear(self.w2, h, Some(self.b2))
    }
}
