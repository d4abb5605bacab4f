//! Context encoder and aspect sequence decoder.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beam::{beam_search, BeamConfig, Hypothesis, Stepper};
use crate::nn::{log_softmax, Attention, Gru, Mlp, NodeId, ParamId, ParamStore, Tape};
use crate::{Error, Result};

/// A generation or training context. Unknown users or items are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Context {
    pub user: Option<usize>,
    pub item: Option<usize>,
    /// Zero-based rating id.
    pub rating: usize,
}

impl Context {
    pub fn known(user: usize, item: usize, rating: usize) -> Self {
        Context {
            user: Some(user),
            item: Some(item),
            rating,
        }
    }
}

/// Context vectors on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ContextNodes {
    pub user: NodeId,
    pub item: NodeId,
    pub rating: NodeId,
    pub encoded: NodeId,
}

impl ContextNodes {
    pub fn attention_set(&self) -> [NodeId; 3] {
        [self.user, self.item, self.rating]
    }
}

/// Context vectors as plain values, for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextValues {
    pub user: Vec<f64>,
    pub item: Vec<f64>,
    pub rating: Vec<f64>,
    pub encoded: Vec<f64>,
    /// Set when the user or item fell back to the UNK row.
    pub unk: bool,
}

impl ContextValues {
    pub fn nodes(&self, tape: &mut Tape) -> ContextNodes {
        ContextNodes {
            user: tape.input(self.user.clone()),
            item: tape.input(self.item.clone()),
            rating: tape.input(self.rating.clone()),
            encoded: tape.input(self.encoded.clone()),
        }
    }
}

/// User, item and rating embeddings and the MLP producing `v_c`. The last
/// row of the user and item tables is the UNK embedding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextEncoder {
    pub users: ParamId,
    pub items: ParamId,
    pub ratings: ParamId,
    pub mlp: Mlp,
    pub num_users: usize,
    pub num_items: usize,
    pub num_ratings: usize,
    pub embed_dim: usize,
    pub context_dim: usize,
}

impl ContextEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        num_users: usize,
        num_items: usize,
        num_ratings: usize,
        embed_dim: usize,
        context_dim: usize,
        rng: &mut R,
    ) -> Self {
        ContextEncoder {
            users: store.add_matrix("ctx.user", num_users + 1, embed_dim, rng),
            items: store.add_matrix("ctx.item", num_items + 1, embed_dim, rng),
            ratings: store.add_matrix("ctx.rating", num_ratings, embed_dim, rng),
            mlp: Mlp::new(store, "ctx.mlp", 3 * embed_dim, context_dim, context_dim, rng),
            num_users,
            num_items,
            num_ratings,
            embed_dim,
            context_dim,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = vec![self.users, self.items, self.ratings];
        p.extend(self.mlp.params());
        p
    }

    fn rows(&self, ctx: &Context) -> Result<(usize, usize, bool)> {
        if ctx.rating >= self.num_ratings {
            return Err(Error::data(format!(
                "rating id {} out of range for {} ratings",
                ctx.rating, self.num_ratings
            )));
        }
        let u = ctx.user.filter(|&u| u < self.num_users);
        let i = ctx.item.filter(|&i| i < self.num_items);
        let unk = u.is_none() || i.is_none();
        Ok((u.unwrap_or(self.num_users), i.unwrap_or(self.num_items), unk))
    }

    pub fn encode(&self, tape: &mut Tape, ctx: &Context) -> Result<ContextNodes> {
        let (u, i, _) = self.rows(ctx)?;
        let user = tape.row(self.users, u);
        let item = tape.row(self.items, i);
        let rating = tape.row(self.ratings, ctx.rating);
        let x = tape.concat(&[user, item, rating]);
        let encoded = self.mlp.forward(tape, x);
        Ok(ContextNodes {
            user,
            item,
            rating,
            encoded,
        })
    }

    pub fn values(&self, store: &ParamStore, ctx: &Context) -> Result<ContextValues> {
        let (_, _, unk) = self.rows(ctx)?;
        let mut tape = Tape::new(store);
        let n = self.encode(&mut tape, ctx)?;
        Ok(ContextValues {
            user: tape.value(n.user).to_vec(),
            item: tape.value(n.item).to_vec(),
            rating: tape.value(n.rating).to_vec(),
            encoded: tape.value(n.encoded).to_vec(),
            unk,
        })
    }
}

/// GRU decoder over aspect ids. Output classes are the `A` aspects plus END
/// (`= A`); START (`= A + 1`) exists only as an input embedding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AspectDecoder {
    pub embed: ParamId,
    pub gru: Gru,
    pub attention: Attention,
    pub w4: ParamId,
    pub b1: ParamId,
    pub num_aspects: usize,
}

impl AspectDecoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        num_aspects: usize,
        aspect_dim: usize,
        hidden: usize,
        layers: usize,
        embed_dim: usize,
        rng: &mut R,
    ) -> Self {
        AspectDecoder {
            embed: store.add_matrix("aspect.embed", num_aspects + 2, aspect_dim, rng),
            gru: Gru::new(store, "aspect.gru", aspect_dim, hidden, layers, rng),
            attention: Attention::new(store, "aspect.att", hidden, embed_dim, rng),
            w4: store.add_matrix("aspect.w4", num_aspects + 1, hidden, rng),
            b1: store.add_bias("aspect.b1", num_aspects + 1),
            num_aspects,
        }
    }

    pub fn end(&self) -> usize {
        self.num_aspects
    }

    pub fn start(&self) -> usize {
        self.num_aspects + 1
    }

    /// Parameters owned by the decoder, aspect embeddings included.
    pub fn params(&self) -> Vec<ParamId> {
        let mut p = vec![self.embed];
        p.extend(self.gru.params());
        p.extend(self.attention.params());
        p.extend([self.w4, self.b1]);
        p
    }

    /// Embedding `v_a` of an aspect id (or START / END).
    pub fn aspect_vector(&self, tape: &mut Tape, aspect: usize) -> Result<NodeId> {
        if aspect > self.start() {
            return Err(Error::data(format!("aspect id {aspect} out of range")));
        }
        Ok(tape.row(self.embed, aspect))
    }

    /// Consume `prev` and return the new states and the logits over `A + 1`
    /// classes.
    pub fn step(
        &self,
        tape: &mut Tape,
        h: &[NodeId],
        prev: usize,
        ctx: &ContextNodes,
    ) -> Result<(Vec<NodeId>, NodeId)> {
        let x = self.aspect_vector(tape, prev)?;
        let h = self.gru.step(tape, h, x);
        let top = *h.last().unwrap();
        let att = self.attention.attend(tape, top, &ctx.attention_set())?;
        let e = tape.dropout(att.enhanced);
        let logits = tape.linear(self.w4, e, Some(self.b1));
        Ok((h, logits))
    }

    /// Teacher-forced per-token losses for `aspects` followed by END.
    pub fn sequence_loss(&self, tape: &mut Tape, aspects: &[usize], ctx: &ContextNodes) -> Result<Vec<NodeId>> {
        if aspects.is_empty() {
            return Err(Error::data("empty aspect sequence"));
        }
        if let Some(&a) = aspects.iter().find(|&&a| a >= self.num_aspects) {
            return Err(Error::data(format!("aspect id {a} out of range")));
        }
        let mut h = self.gru.initial(tape, ctx.encoded);
        let mut prev = self.start();
        let mut losses = Vec::with_capacity(aspects.len() + 1);
        for &target in aspects.iter().chain(std::iter::once(&self.end())) {
            let (hn, logits) = self.step(tape, &h, prev, ctx)?;
            losses.push(tape.cross_entropy(logits, target));
            h = hn;
            prev = target;
        }
        Ok(losses)
    }

    /// Beam search from `h_0 = v_c`.
    pub fn generate(
        &self,
        store: &ParamStore,
        ctx: &ContextValues,
        width: usize,
        max_len: usize,
    ) -> Vec<Hypothesis<Vec<Vec<f64>>>> {
        let cfg = BeamConfig {
            width,
            max_len,
            end: Some(self.end()),
            banned: vec![self.start()],
            length_norm: false,
            min_len: 1,
        };
        let stepper = AspectStepper {
            store,
            dec: self,
            ctx,
        };
        beam_search(&stepper, initial_state(&self.gru, &ctx.encoded), self.start(), &cfg, &|_| None)
    }
}

/// Layer-1 state `first`, zeros above.
pub(crate) fn initial_state(gru: &Gru, first: &[f64]) -> Vec<Vec<f64>> {
    let mut h = vec![first.to_vec()];
    h.extend(gru.layers[1..].iter().map(|l| vec![0.0; l.hidden]));
    h
}

pub(crate) fn state_nodes(tape: &mut Tape, h: &[Vec<f64>]) -> Vec<NodeId> {
    h.iter().map(|v| tape.input(v.clone())).collect()
}

pub(crate) fn state_values(tape: &Tape, h: &[NodeId]) -> Vec<Vec<f64>> {
    h.iter().map(|&n| tape.value(n).to_vec()).collect()
}

pub struct AspectStepper<'a> {
    pub store: &'a ParamStore,
    pub dec: &'a AspectDecoder,
    pub ctx: &'a ContextValues,
}

impl Stepper for AspectStepper<'_> {
    type State = Vec<Vec<f64>>;

    fn step(&self, state: &Self::State, prev: usize, _pos: usize) -> (Self::State, Vec<f64>) {
        let mut tape = Tape::new(self.store);
        let h = state_nodes(&mut tape, state);
        let ctx = self.ctx.nodes(&mut tape);
        let (h, logits) = self.dec.step(&mut tape, &h, prev, &ctx).expect("ids checked by beam search");
        (state_values(&tape, &h), log_softmax(tape.value(logits)))
    }
}
