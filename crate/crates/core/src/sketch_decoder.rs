//! Aspect-aware sketch decoder with hidden-state chaining across sentences.

use rand::Rng;

use crate::aspect_decoder::{initial_state, state_nodes, state_values, AspectDecoder, ContextNodes, ContextValues};
use crate::beam::{beam_search, BeamConfig, Stepper};
use crate::nn::{log_softmax, Attention, Gru, NodeId, ParamId, ParamStore, Tape};
use crate::sketch::{SKETCH_END, SKETCH_START};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchDecoder {
    pub embed: ParamId,
    pub gru: Gru,
    pub attention: Attention,
    pub w5: ParamId,
    pub w6: ParamId,
    pub b2: ParamId,
    pub num_symbols: usize,
}

/// One generated sketch.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchOutput {
    /// Sketch symbol ids, END excluded.
    pub symbols: Vec<usize>,
    pub log_prob: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchTrace {
    pub sketches: Vec<SketchOutput>,
    /// Decoder state each sentence started from.
    pub initial_states: Vec<Vec<Vec<f64>>>,
}

impl SketchDecoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        num_symbols: usize,
        symbol_dim: usize,
        hidden: usize,
        layers: usize,
        embed_dim: usize,
        rng: &mut R,
    ) -> Self {
        SketchDecoder {
            embed: store.add_matrix("sketch.embed", num_symbols, symbol_dim, rng),
            gru: Gru::new(store, "sketch.gru", symbol_dim, hidden, layers, rng),
            attention: Attention::new(store, "sketch.att", hidden, embed_dim, rng),
            w5: store.add_matrix("sketch.w5", num_symbols, hidden, rng),
            w6: store.add_matrix("sketch.w6", num_symbols, symbol_dim, rng),
            b2: store.add_bias("sketch.b2", num_symbols),
            num_symbols,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = vec![self.embed];
        p.extend(self.gru.params());
        p.extend(self.attention.params());
        p.extend([self.w5, self.w6, self.b2]);
        p
    }

    /// GRU input `v_s * v_a`.
    pub fn fused_input(&self, tape: &mut Tape, prev: usize, aspect: NodeId) -> Result<NodeId> {
        if prev >= self.num_symbols {
            return Err(Error::data(format!("sketch symbol {prev} out of range")));
        }
        let s = tape.row(self.embed, prev);
        Ok(tape.mul(s, aspect))
    }

    pub fn step(
        &self,
        tape: &mut Tape,
        h: &[NodeId],
        prev: usize,
        aspect: NodeId,
        ctx: &ContextNodes,
    ) -> Result<(Vec<NodeId>, NodeId)> {
        let x = self.fused_input(tape, prev, aspect)?;
        let h = self.gru.step(tape, h, x);
        let top = *h.last().unwrap();
        let att = self.attention.attend(tape, top, &ctx.attention_set())?;
        let e = tape.dropout(att.enhanced);
        let a = tape.linear(self.w5, e, Some(self.b2));
        let va = tape.dropout(aspect);
        let b = tape.linear(self.w6, va, None);
        Ok((h, tape.add(a, b)))
    }

    /// Teacher-forced losses over all sketches of a review, each followed by
    /// END. With `chain` the state carries over from one sentence to the
    /// next; otherwise every sentence restarts from `v_c`.
    pub fn review_loss(
        &self,
        tape: &mut Tape,
        sketches: &[Vec<usize>],
        aspects: &[NodeId],
        ctx: &ContextNodes,
        chain: bool,
    ) -> Result<Vec<NodeId>> {
        if sketches.len() != aspects.len() {
            return Err(Error::data(format!(
                "{} sketches for {} aspects",
                sketches.len(),
                aspects.len()
            )));
        }
        let mut h = self.gru.initial(tape, ctx.encoded);
        let mut losses = Vec::new();
        for (sk, &va) in sketches.iter().zip(aspects) {
            if !chain {
                h = self.gru.initial(tape, ctx.encoded);
            }
            let mut prev = SKETCH_START;
            for &target in sk.iter().chain(std::iter::once(&SKETCH_END)) {
                let (hn, logits) = self.step(tape, &h, prev, va, ctx)?;
                losses.push(tape.cross_entropy(logits, target));
                h = hn;
                prev = target;
            }
        }
        Ok(losses)
    }

    /// One sketch per aspect by beam search. The state that ended the best
    /// hypothesis of sentence `j` starts sentence `j + 1`.
    #[allow(clippy::too_many_arguments)]
    pub fn generate(
        &self,
        store: &ParamStore,
        aspect_dec: &AspectDecoder,
        aspects: &[usize],
        ctx: &ContextValues,
        width: usize,
        max_len: usize,
        chain: bool,
    ) -> Result<SketchTrace> {
        let cfg = BeamConfig {
            width,
            max_len,
            end: Some(SKETCH_END),
            banned: vec![SKETCH_START],
            length_norm: false,
            min_len: 1,
        };
        let mut trace = SketchTrace {
            sketches: Vec::new(),
            initial_states: Vec::new(),
        };
        let mut state = initial_state(&self.gru, &ctx.encoded);
        for &a in aspects {
            if a >= aspect_dec.num_aspects {
                return Err(Error::data(format!("aspect id {a} out of range")));
            }
            if !chain {
                state = initial_state(&self.gru, &ctx.encoded);
            }
            let aspect = store.get(aspect_dec.embed).row(a).to_vec();
            let stepper = SketchStepper {
                store,
                dec: self,
                ctx,
                aspect: &aspect,
            };
            trace.initial_states.push(state.clone());
            let best = beam_search(&stepper, state, SKETCH_START, &cfg, &|_| None)
                .into_iter()
                .next()
                .expect("beam search always returns a hypothesis");
            let truncated = best.truncated();
            trace.sketches.push(SketchOutput {
                symbols: best.tokens,
                log_prob: best.score,
                truncated,
            });
            state = best.state;
        }
        Ok(trace)
    }
}

pub struct SketchStepper<'a> {
    pub store: &'a ParamStore,
    pub dec: &'a SketchDecoder,
    pub ctx: &'a ContextValues,
    pub aspect: &'a [f64],
}

impl Stepper for SketchStepper<'_> {
    type State = Vec<Vec<f64>>;

    fn step(&self, state: &Self::State, prev: usize, _pos: usize) -> (Self::State, Vec<f64>) {
        let mut tape = Tape::new(self.store);
        let h = state_nodes(&mut tape, state);
        let ctx = self.ctx.nodes(&mut tape);
        let va = tape.input(self.aspect.to_vec());
        let (h, logits) = self.dec.step(&mut tape, &h, prev, va, &ctx).expect("ids checked by beam search");
        (state_values(&tape, &h), log_softmax(tape.value(logits)))
    }
}
