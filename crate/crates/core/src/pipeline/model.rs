//! The full model: one parameter store shared by the context encoder and the
//! three decoders.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::triples::TrainingTriple;
use crate::aspect_decoder::{AspectDecoder, ContextEncoder, ContextNodes};
use crate::nn::{Adam, Checkpoint, NodeId, ParamId, ParamStore, Tape, Tensor};
use crate::review_decoder::{BoostTable, ReviewDecoder};
use crate::sketch::PosTag;
use crate::sketch_decoder::SketchDecoder;
use crate::{Error, Result};

const BOOST: &str = "fixed.boost";

/// Data-dependent sizes needed to rebuild a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub aspects: usize,
    pub vocab: usize,
    pub symbols: usize,
    /// Most common sentence count in training, used when aspects are not
    /// predicted.
    pub mode_sentences: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: RunConfig,
    pub sizes: Sizes,
    pub store: ParamStore,
    pub encoder: ContextEncoder,
    pub aspect: AspectDecoder,
    pub sketch: SketchDecoder,
    pub review: ReviewDecoder,
}

/// Word perplexity two ways. `slots` averages over every word and END but
/// scores copied positions at probability one, which is what the decoder
/// assigns them at generation time. `softmax` scores every position by the
/// teacher-forced softmax.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordPerplexity {
    pub slots: f64,
    pub softmax: f64,
}

/// Loss nodes of one review, split by factor.
#[derive(Debug, Clone, Default)]
pub struct ReviewLosses {
    pub aspect: Vec<NodeId>,
    pub sketch: Vec<NodeId>,
    pub word: Vec<NodeId>,
}

/// Which factors to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Factors {
    pub aspect: bool,
    pub sketch: bool,
    pub word: bool,
}

impl Factors {
    pub const ALL: Factors = Factors {
        aspect: true,
        sketch: true,
        word: true,
    };
}

/// Summed teacher-forced NLL and token counts per factor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FactorTotals {
    pub aspect_nll: f64,
    pub aspect_tokens: usize,
    pub sketch_nll: f64,
    pub sketch_tokens: usize,
    pub word_nll: f64,
    pub word_tokens: usize,
}

fn mean(nll: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        nll / n as f64
    }
}

impl FactorTotals {
    pub fn aspect(&self) -> f64 {
        mean(self.aspect_nll, self.aspect_tokens)
    }

    pub fn sketch(&self) -> f64 {
        mean(self.sketch_nll, self.sketch_tokens)
    }

    pub fn word(&self) -> f64 {
        mean(self.word_nll, self.word_tokens)
    }

    /// Sum of the per-token means of the factors that have tokens.
    pub fn joint(&self) -> f64 {
        self.aspect() + self.sketch() + self.word()
    }

    pub fn add(&mut self, o: &FactorTotals) {
        self.aspect_nll += o.aspect_nll;
        self.aspect_tokens += o.aspect_tokens;
        self.sketch_nll += o.sketch_nll;
        self.sketch_tokens += o.sketch_tokens;
        self.word_nll += o.word_nll;
        self.word_tokens += o.word_tokens;
    }
}

impl Model {
    /// Fresh parameters drawn from the run seed. `boost` rows are the aspect
    /// word distributions over the whole vocabulary.
    pub fn new(config: &RunConfig, sizes: Sizes, boost: BoostTable) -> Result<Self> {
        config.validate()?;
        let a = &config.aspect_decoder;
        let s = &config.sketch_decoder;
        let r = &config.review_decoder;
        if boost.num_aspects() != sizes.aspects || boost.rows().iter().any(|row| row.len() != sizes.vocab) {
            return Err(Error::shape(
                "boost table",
                &[sizes.aspects, sizes.vocab],
                &[boost.num_aspects(), boost.rows().first().map_or(0, Vec::len)],
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let encoder = ContextEncoder::new(
            &mut store,
            sizes.users,
            sizes.items,
            sizes.ratings,
            a.embed_dim,
            a.context_dim,
            &mut rng,
        );
        let aspect = AspectDecoder::new(&mut store, sizes.aspects, a.aspect_dim, a.hidden, a.layers, a.embed_dim, &mut rng);
        let sketch = SketchDecoder::new(&mut store, sizes.symbols, s.symbol_dim, s.hidden, s.layers, a.embed_dim, &mut rng);
        let (boost, lambda) = if config.orchestrator.no_aspect {
            (BoostTable::zeros(sizes.aspects, sizes.vocab), 0.0)
        } else {
            (boost, r.lambda)
        };
        let review = ReviewDecoder::new(
            &mut store,
            sizes.vocab,
            sizes.symbols,
            r.word_dim,
            s.symbol_dim,
            r.encoder_hidden,
            r.hidden,
            r.layers,
            a.embed_dim,
            boost.clone(),
            lambda,
            &mut rng,
        );
        let rows: Vec<f64> = boost.rows().iter().flatten().copied().collect();
        store.add(BOOST, Tensor::from_vec(&[sizes.aspects, sizes.vocab], rows)?);
        if config.orchestrator.no_aspect {
            // A constant aspect: the fused sketch input is the symbol itself.
            let e = store.get_mut(aspect.embed);
            let cols = e.cols();
            e.data[..cols].iter_mut().for_each(|x| *x = 1.0);
        }
        Ok(Model {
            config: config.clone(),
            sizes,
            store,
            encoder,
            aspect,
            sketch,
            review,
        })
    }

    /// Parameters updated when training the given factors.
    pub fn params_for(&self, f: Factors, with_encoder: bool) -> Vec<ParamId> {
        let o = &self.config.orchestrator;
        let mut p = Vec::new();
        if with_encoder {
            p.extend(self.encoder.params());
        }
        if f.aspect && !o.no_aspect {
            p.extend(self.aspect.params());
        }
        if f.sketch && !o.no_sketch {
            p.extend(self.sketch.params());
        }
        if f.word {
            p.extend(self.review.params());
        }
        p
    }

    /// The aspect ids the model is trained on: the tagged ones, or all zero
    /// when aspects are ablated.
    pub fn effective_aspects(&self, t: &TrainingTriple) -> Vec<usize> {
        if self.config.orchestrator.no_aspect {
            vec![0; t.aspects.len()]
        } else {
            t.aspects.clone()
        }
    }

    /// Sketch and alignment of sentence `j` as the word decoder sees them.
    /// Without sketches every word reads the END slot.
    pub fn effective_sketch<'t>(&self, t: &'t TrainingTriple, j: usize) -> (&'t [usize], Vec<usize>) {
        if self.config.orchestrator.no_sketch {
            (&[], vec![0; t.sentences[j].len()])
        } else {
            (&t.sketches[j], t.alignments[j].clone())
        }
    }

    /// Teacher-forced loss nodes of one review.
    pub fn review_losses(&self, tape: &mut Tape, t: &TrainingTriple, f: Factors) -> Result<ReviewLosses> {
        let o = &self.config.orchestrator;
        let ctx: ContextNodes = self.encoder.encode(tape, &t.context)?;
        let aspects = self.effective_aspects(t);
        let mut out = ReviewLosses::default();
        if f.aspect && !o.no_aspect {
            out.aspect = self.aspect.sequence_loss(tape, &aspects, &ctx)?;
        }
        if f.sketch && !o.no_sketch {
            let va = aspects
                .iter()
                .map(|&a| self.aspect.aspect_vector(tape, a))
                .collect::<Result<Vec<_>>>()?;
            out.sketch = self
                .sketch
                .review_loss(tape, &t.sketches, &va, &ctx, self.config.sketch_decoder.chain)?;
        }
        if f.word {
            let mut h = self.review.gru.initial(tape, ctx.encoded);
            for (j, words) in t.sentences.iter().enumerate() {
                if j > 0 && !self.config.review_decoder.chain {
                    h = self.review.gru.initial(tape, ctx.encoded);
                }
                let (sketch, alignment) = self.effective_sketch(t, j);
                let sl = self.review.sentence_loss(tape, words, sketch, &alignment, aspects[j], &ctx, h)?;
                out.word.extend(sl.losses);
                h = sl.final_state;
            }
        }
        Ok(out)
    }

    /// Evaluation-mode loss totals over `triples`.
    pub fn totals(&self, triples: &[TrainingTriple], f: Factors) -> Result<FactorTotals> {
        let mut tot = FactorTotals::default();
        for t in triples {
            let mut tape = Tape::new(&self.store);
            let l = self.review_losses(&mut tape, t, f)?;
            let sum = |v: &[NodeId]| v.iter().map(|&n| tape.scalar(n)).sum::<f64>();
            tot.add(&FactorTotals {
                aspect_nll: sum(&l.aspect),
                aspect_tokens: l.aspect.len(),
                sketch_nll: sum(&l.sketch),
                sketch_tokens: l.sketch.len(),
                word_nll: sum(&l.word),
                word_tokens: l.word.len(),
            });
        }
        Ok(tot)
    }

    /// Which word positions (each sentence's words, then END) the softmax
    /// actually decides. Words under a kept-word or n-gram slot are copied
    /// and END follows from the sketch running out; without sketches every
    /// position is predicted.
    pub fn predicted_positions(&self, t: &TrainingTriple) -> Vec<bool> {
        let no_sketch = self.config.orchestrator.no_sketch;
        let pos_ids = 2..2 + PosTag::ALL.len();
        let mut out = Vec::with_capacity(t.word_count() + t.len());
        for (j, a) in t.alignments.iter().enumerate() {
            out.extend(a.iter().map(|&k| no_sketch || pos_ids.contains(&t.sketches[j][k])));
            out.push(no_sketch);
        }
        out
    }

    /// Word perplexity under teacher forcing with gold aspects and sketches.
    pub fn perplexity(&self, triples: &[TrainingTriple]) -> Result<WordPerplexity> {
        let f = Factors {
            aspect: false,
            sketch: false,
            word: true,
        };
        let (mut all, mut all_n, mut pred, mut pred_n) = (0.0, 0, 0.0, 0);
        for t in triples {
            let mut tape = Tape::new(&self.store);
            let l = self.review_losses(&mut tape, t, f)?;
            let mask = self.predicted_positions(t);
            debug_assert_eq!(mask.len(), l.word.len());
            for (&n, &m) in l.word.iter().zip(&mask) {
                let v = tape.scalar(n);
                all += v;
                all_n += 1;
                if m {
                    pred += v;
                    pred_n += 1;
                }
            }
        }
        let softmax = crate::eval::perplexity(all, all_n)?;
        // every position copied: the word model is deterministic
        let slots = if pred_n == 0 { 1.0 } else { (pred / all_n as f64).exp() };
        Ok(WordPerplexity { slots, softmax })
    }

    fn meta(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("config".into(), self.config.to_toml());
        m.insert("sizes".into(), serde_json::to_string(&self.sizes).expect("sizes serialize"));
        m
    }

    pub fn checkpoint(&self, adam: Option<&Adam>, extra: &[(&str, String)]) -> Checkpoint {
        let mut meta = self.meta();
        for (k, v) in extra {
            meta.insert((*k).into(), v.clone());
        }
        Checkpoint::new(meta, self.store.clone(), adam)
    }

    /// Rebuild the model recorded in a checkpoint.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let field = |k: &str| {
            ckpt.meta
                .get(k)
                .ok_or_else(|| Error::data(format!("checkpoint has no {k:?} record")))
        };
        let config = RunConfig::from_toml(field("config")?)?;
        let sizes: Sizes = serde_json::from_str(field("sizes")?)
            .map_err(|e| Error::data(format!("checkpoint sizes: {e}")))?;
        let boost_id = ckpt
            .params
            .id(BOOST)
            .ok_or_else(|| Error::data("checkpoint has no boost table"))?;
        let bt = ckpt.params.get(boost_id);
        if bt.shape != [sizes.aspects, sizes.vocab] {
            return Err(Error::shape("boost table", &[sizes.aspects, sizes.vocab], &bt.shape));
        }
        let rows: Vec<Vec<f64>> = bt.data.chunks(sizes.vocab.max(1)).map(<[f64]>::to_vec).collect();
        let boost = if rows.iter().flatten().all(|&x| x == 0.0) {
            BoostTable::zeros(sizes.aspects, sizes.vocab)
        } else {
            BoostTable::new(rows)?
        };
        let mut model = Model::new(&config, sizes, boost)?;
        ckpt.restore_into(&mut model.store)?;
        Ok(model)
    }
}

/// The most common value, smallest on ties; 1 for an empty input.
pub fn mode(values: impl IntoIterator<Item = usize>) -> usize {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map_or(1, |(v, _)| v)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::aspect_decoder::Context;

    /// A tiny model and hand-made triples over 12 words and 8 symbols.
    pub(crate) fn toy(mut cfg: RunConfig) -> (Model, Vec<TrainingTriple>) {
        let d = 6;
        let a = &mut cfg.aspect_decoder;
        a.embed_dim = d;
        a.context_dim = d;
        a.aspect_dim = d;
        a.hidden = d;
        cfg.sketch_decoder.symbol_dim = d;
        cfg.sketch_decoder.hidden = d;
        cfg.review_decoder.word_dim = d;
        cfg.review_decoder.hidden = d;
        cfg.review_decoder.encoder_hidden = d;
        let sizes = Sizes {
            users: 3,
            items: 3,
            ratings: 5,
            aspects: 2,
            vocab: 12,
            symbols: 8,
            mode_sentences: 2,
        };
        let row = |hot: &[usize]| {
            let mut r = vec![0.0; 12];
            hot.iter().for_each(|&w| r[w] = 1.0 / hot.len() as f64);
            r
        };
        let boost = BoostTable::new(vec![row(&[4, 5]), row(&[6, 7, 8])]).unwrap();
        let model = Model::new(&cfg, sizes, boost).unwrap();
        let triples = vec![
            TrainingTriple {
                context: Context::known(0, 1, 4),
                aspects: vec![0, 1],
                sketches: vec![vec![2, 3], vec![4, 5, 2]],
                alignments: vec![vec![0, 1, 1], vec![0, 1, 2]],
                sentences: vec![vec![4, 9, 10], vec![6, 11, 5]],
            },
            TrainingTriple {
                context: Context::known(2, 0, 0),
                aspects: vec![1],
                sketches: vec![vec![6, 7]],
                alignments: vec![vec![0, 1]],
                sentences: vec![vec![7, 8]],
            },
        ];
        (model, triples)
    }

    #[test]
    fn joint_value_is_sum_of_factor_losses() {
        let (model, triples) = toy(RunConfig::desk());
        let joint = model.totals(&triples, Factors::ALL).unwrap();
        let only = |aspect, sketch, word| model.totals(&triples, Factors { aspect, sketch, word }).unwrap();
        let sum = only(true, false, false).aspect() + only(false, true, false).sketch() + only(false, false, true).word();
        assert!((joint.joint() - sum).abs() < 1e-9);
        assert_eq!(joint.aspect_tokens, 2 + 1 + 1 + 1);
        assert_eq!(joint.sketch_tokens, 3 + 4 + 3);
        assert_eq!(joint.word_tokens, 4 + 4 + 3);
    }

    #[test]
    fn checkpoint_rebuilds_identical_model() {
        let (model, _) = toy(RunConfig::desk());
        let bytes = model.checkpoint(None, &[]).to_bytes();
        let back = Model::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.checkpoint(None, &[]).to_bytes(), bytes);
    }

    #[test]
    fn ablations_change_the_factors() {
        let mut cfg = RunConfig::desk();
        cfg.orchestrator.no_aspect = true;
        let (m, triples) = toy(cfg);
        assert_eq!(m.review.lambda, 0.0);
        assert!(m.store.get(m.aspect.embed).row(0).iter().all(|&x| x == 1.0));
        let t = m.totals(&triples, Factors::ALL).unwrap();
        assert_eq!(t.aspect_tokens, 0);
        let back = Model::from_checkpoint(&m.checkpoint(None, &[])).unwrap();
        assert_eq!(back, m);

        let mut cfg = RunConfig::desk();
        cfg.orchestrator.no_sketch = true;
        let (m, triples) = toy(cfg);
        let t = m.totals(&triples, Factors::ALL).unwrap();
        assert_eq!(t.sketch_tokens, 0);
        assert_eq!(t.word_tokens, 11);
        assert!(m.params_for(Factors::ALL, true).iter().all(|p| !m.sketch.params().contains(p)));
    }

    #[test]
    fn mode_prefers_smaller_on_ties() {
        assert_eq!(mode([3, 1, 3, 1, 2]), 1);
        assert_eq!(mode([4, 4, 2]), 4);
        assert_eq!(mode([]), 1);
    }
}
