//! Sketch encoder and word decoder with the aspect-boosted softmax.

use rand::Rng;

use crate::aspect_decoder::{initial_state, state_nodes, state_values, ContextNodes, ContextValues};
use crate::beam::{beam_search, BeamConfig, Stepper};
use crate::corpus::{END, OOV, PAD, START};
use crate::nn::{log_softmax, Attention, Gru, NodeId, ParamId, ParamStore, Tape};
use crate::sketch::{SketchToken, SketchVocab, SKETCH_END};
use crate::{Error, Result};

/// Aspect word distributions added to the word logits. Frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostTable {
    rows: Vec<Vec<f64>>,
}

impl BoostTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        for (a, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::shape(format!("boost row {a}"), &[n], &[r.len()]));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-9 || r.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::data(format!("boost row {a} is not a distribution")));
            }
        }
        Ok(BoostTable { rows })
    }

    /// A table that adds nothing, for `num_aspects` aspects.
    pub fn zeros(num_aspects: usize, vocab: usize) -> Self {
        BoostTable {
            rows: vec![vec![0.0; vocab]; num_aspects],
        }
    }

    pub fn num_aspects(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, aspect: usize) -> Option<&[f64]> {
        self.rows.get(aspect).map(Vec::as_slice)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewDecoder {
    pub words: ParamId,
    pub symbols: ParamId,
    pub enc_fwd: Gru,
    pub enc_bwd: Gru,
    pub w_enc: ParamId,
    pub gru: Gru,
    pub attention: Attention,
    pub w7: ParamId,
    pub b3: ParamId,
    pub lambda: f64,
    pub boost: BoostTable,
    pub vocab_size: usize,
    pub num_symbols: usize,
}

/// Teacher-forced losses of one sentence and the decoder state it ended in.
pub struct SentenceLoss {
    pub losses: Vec<NodeId>,
    pub final_state: Vec<NodeId>,
}

/// A generated sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceOutput {
    pub words: Vec<usize>,
    /// Sum of log-probabilities at predicted positions; copies count 0.
    pub log_prob: f64,
    pub truncated: bool,
}

/// Per-position plan of a sketch: the forced word (if any) and the encoder
/// slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotPlan {
    pub forced: Vec<Option<usize>>,
    pub slots: Vec<usize>,
}

impl SlotPlan {
    pub fn new(sketch: &[usize], vocab: &SketchVocab) -> Result<Self> {
        let mut plan = SlotPlan {
            forced: Vec::new(),
            slots: Vec::new(),
        };
        for (i, &id) in sketch.iter().enumerate() {
            if id >= vocab.len() {
                return Err(Error::data(format!("sketch symbol {id} out of range")));
            }
            match vocab.symbol(id) {
                SketchToken::Word(w) => plan.push(i, Some(*w)),
                SketchToken::Ngram(ws) => ws.iter().for_each(|&w| plan.push(i, Some(w))),
                SketchToken::Pos(_) => plan.push(i, None),
                SketchToken::Start | SketchToken::End => {
                    return Err(Error::data("START or END inside a sketch"));
                }
            }
        }
        Ok(plan)
    }

    fn push(&mut self, slot: usize, word: Option<usize>) {
        self.forced.push(word);
        self.slots.push(slot);
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

impl ReviewDecoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        vocab_size: usize,
        num_symbols: usize,
        word_dim: usize,
        symbol_dim: usize,
        enc_hidden: usize,
        hidden: usize,
        layers: usize,
        embed_dim: usize,
        boost: BoostTable,
        lambda: f64,
        rng: &mut R,
    ) -> Self {
        ReviewDecoder {
            words: store.add_matrix("review.words", vocab_size, word_dim, rng),
            symbols: store.add_matrix("review.symbols", num_symbols, symbol_dim, rng),
            enc_fwd: Gru::new(store, "review.enc_fwd", symbol_dim, enc_hidden, 1, rng),
            enc_bwd: Gru::new(store, "review.enc_bwd", symbol_dim, enc_hidden, 1, rng),
            w_enc: store.add_matrix("review.w_enc", enc_hidden, 2 * enc_hidden, rng),
            gru: Gru::new(store, "review.gru", enc_hidden + word_dim, hidden, layers, rng),
            attention: Attention::new(store, "review.att", hidden, embed_dim, rng),
            w7: store.add_matrix("review.w7", vocab_size, hidden + symbol_dim, rng),
            b3: store.add_bias("review.b3", vocab_size),
            lambda,
            boost,
            vocab_size,
            num_symbols,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = vec![self.words, self.symbols];
        p.extend(self.enc_fwd.params());
        p.extend(self.enc_bwd.params());
        p.push(self.w_enc);
        p.extend(self.gru.params());
        p.extend(self.attention.params());
        p.extend([self.w7, self.b3]);
        p
    }

    /// Bidirectional encoding of `symbols`, one vector per symbol:
    /// `W_enc [fwd_t; bwd_t]`.
    pub fn encode_sketch(&self, tape: &mut Tape, symbols: &[usize]) -> Result<Vec<NodeId>> {
        if symbols.is_empty() {
            return Err(Error::data("cannot encode an empty sketch"));
        }
        if let Some(&s) = symbols.iter().find(|&&s| s >= self.num_symbols) {
            return Err(Error::data(format!("sketch symbol {s} out of range")));
        }
        let emb: Vec<NodeId> = symbols.iter().map(|&s| tape.row(self.symbols, s)).collect();
        let zero = tape.input(vec![0.0; self.enc_fwd.hidden()]);
        let mut fwd = Vec::with_capacity(emb.len());
        let mut h = zero;
        for &e in &emb {
            h = self.enc_fwd.step(tape, &[h], e)[0];
            fwd.push(h);
        }
        let mut bwd = vec![zero; emb.len()];
        let mut h = zero;
        for (t, &e) in emb.iter().enumerate().rev() {
            h = self.enc_bwd.step(tape, &[h], e)[0];
            bwd[t] = h;
        }
        Ok(fwd
            .into_iter()
            .zip(bwd)
            .map(|(f, b)| {
                let fb = tape.concat(&[f, b]);
                tape.linear(self.w_enc, fb, None)
            })
            .collect())
    }

    /// `tanh(W7 [h~; v_s] + b3)` on top of a GRU step, plus `lambda * theta_a`.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &self,
        tape: &mut Tape,
        h: &[NodeId],
        prev: usize,
        slot: NodeId,
        symbol: usize,
        aspect: usize,
        ctx: &ContextNodes,
    ) -> Result<(Vec<NodeId>, NodeId)> {
        if prev >= self.vocab_size {
            return Err(Error::data(format!("word id {prev} out of range")));
        }
        let boost = self
            .boost
            .row(aspect)
            .ok_or_else(|| Error::data(format!("aspect id {aspect} out of range")))?;
        let y = tape.row(self.words, prev);
        let x = tape.concat(&[slot, y]);
        let h = self.gru.step(tape, h, x);
        let top = *h.last().unwrap();
        let att = self.attention.attend(tape, top, &ctx.attention_set())?;
        let e = tape.dropout(att.enhanced);
        let vs = tape.row(self.symbols, symbol);
        let es = tape.concat(&[e, vs]);
        let z = tape.linear(self.w7, es, Some(self.b3));
        let z = tape.tanh(z);
        if self.lambda == 0.0 {
            return Ok((h, z));
        }
        let shift: Vec<f64> = boost.iter().map(|t| self.lambda * t).collect();
        Ok((h, tape.shift(z, &shift)))
    }

    /// Teacher-forced losses for `words` followed by END. Position `t` reads
    /// the encoder state and embedding of its covering symbol
    /// `alignment[t]`; the END step reads those of an appended END symbol.
    #[allow(clippy::too_many_arguments)]
    pub fn sentence_loss(
        &self,
        tape: &mut Tape,
        words: &[usize],
        sketch: &[usize],
        alignment: &[usize],
        aspect: usize,
        ctx: &ContextNodes,
        h0: Vec<NodeId>,
    ) -> Result<SentenceLoss> {
        if alignment.len() != words.len() {
            return Err(Error::data(format!(
                "alignment covers {} positions but the sentence has {} words",
                alignment.len(),
                words.len()
            )));
        }
        let mut symbols = sketch.to_vec();
        symbols.push(SKETCH_END);
        if alignment.iter().any(|&s| s >= symbols.len()) {
            return Err(Error::data("alignment points past the sketch"));
        }
        let enc = self.encode_sketch(tape, &symbols)?;
        let mut h = h0;
        let mut prev = START;
        let mut losses = Vec::with_capacity(words.len() + 1);
        let end_slot = symbols.len() - 1;
        for (t, &target) in words.iter().chain(std::iter::once(&END)).enumerate() {
            let slot = alignment.get(t).copied().unwrap_or(end_slot);
            let (hn, logits) = self.step(tape, &h, prev, enc[slot], symbols[slot], aspect, ctx)?;
            losses.push(tape.cross_entropy(logits, target));
            h = hn;
            prev = target;
        }
        Ok(SentenceLoss {
            losses,
            final_state: h,
        })
    }

    /// Fill a sketch. Lexical and n-gram positions are copied; POS positions
    /// are chosen by beam search over all words but PAD, OOV, START and END.
    /// The sentence ends when the sketch is exhausted.
    #[allow(clippy::too_many_arguments)]
    pub fn generate_sentence(
        &self,
        store: &ParamStore,
        sketch: &[usize],
        vocab: &SketchVocab,
        aspect: usize,
        ctx: &ContextValues,
        h0: Vec<Vec<f64>>,
        width: usize,
    ) -> Result<(SentenceOutput, Vec<Vec<f64>>)> {
        let plan = SlotPlan::new(sketch, vocab)?;
        let mut symbols = sketch.to_vec();
        symbols.push(SKETCH_END);
        let cfg = BeamConfig {
            width,
            max_len: plan.len(),
            end: None,
            banned: vec![PAD, OOV, START, END],
            length_norm: false,
            min_len: 0,
        };
        self.run_beam(store, &symbols, plan.slots.clone(), &plan.forced, aspect, ctx, h0, &cfg)
    }

    /// Free generation conditioned on the aspect only (no sketch): words
    /// until END or `max_len`.
    #[allow(clippy::too_many_arguments)]
    pub fn generate_free(
        &self,
        store: &ParamStore,
        aspect: usize,
        ctx: &ContextValues,
        h0: Vec<Vec<f64>>,
        width: usize,
        max_len: usize,
    ) -> Result<(SentenceOutput, Vec<Vec<f64>>)> {
        let cfg = BeamConfig {
            width,
            max_len,
            end: Some(END),
            banned: vec![PAD, OOV, START],
            length_norm: false,
            min_len: 1,
        };
        self.run_beam(store, &[SKETCH_END], vec![0; max_len], &vec![None; max_len], aspect, ctx, h0, &cfg)
    }

    #[allow(clippy::too_many_arguments)]
    fn run_beam(
        &self,
        store: &ParamStore,
        symbols: &[usize],
        slots: Vec<usize>,
        forced: &[Option<usize>],
        aspect: usize,
        ctx: &ContextValues,
        h0: Vec<Vec<f64>>,
        cfg: &BeamConfig,
    ) -> Result<(SentenceOutput, Vec<Vec<f64>>)> {
        if self.boost.row(aspect).is_none() {
            return Err(Error::data(format!("aspect id {aspect} out of range")));
        }
        let enc = {
            let mut tape = Tape::new(store);
            let nodes = self.encode_sketch(&mut tape, symbols)?;
            nodes.iter().map(|&n| tape.value(n).to_vec()).collect()
        };
        let stepper = WordStepper {
            store,
            dec: self,
            ctx,
            enc,
            symbols: symbols.to_vec(),
            slots,
            aspect,
        };
        let best = beam_search(&stepper, h0, START, cfg, &|p| forced.get(p).copied().flatten())
            .into_iter()
            .next()
            .expect("beam search always returns a hypothesis");
        Ok((
            SentenceOutput {
                words: best.tokens,
                log_prob: best.score,
                truncated: cfg.end.is_some() && !best.ended,
            },
            best.state,
        ))
    }

    pub fn initial_state(&self, ctx: &ContextValues) -> Vec<Vec<f64>> {
        initial_state(&self.gru, &ctx.encoded)
    }
}

pub struct WordStepper<'a> {
    store: &'a ParamStore,
    dec: &'a ReviewDecoder,
    ctx: &'a ContextValues,
    enc: Vec<Vec<f64>>,
    symbols: Vec<usize>,
    slots: Vec<usize>,
    aspect: usize,
}

impl Stepper for WordStepper<'_> {
    type State = Vec<Vec<f64>>;

    fn step(&self, state: &Self::State, prev: usize, pos: usize) -> (Self::State, Vec<f64>) {
        let mut tape = Tape::new(self.store);
        let h = state_nodes(&mut tape, state);
        let ctx = self.ctx.nodes(&mut tape);
        let slot = self.slots.get(pos).copied().unwrap_or(self.symbols.len() - 1);
        let sv = tape.input(self.enc[slot].clone());
        let (h, logits) = self
            .dec
            .step(&mut tape, &h, prev, sv, self.symbols[slot], self.aspect, &ctx)
            .expect("ids checked before beam search");
        (state_values(&tape, &h), log_softmax(tape.value(logits)))
    }
}
