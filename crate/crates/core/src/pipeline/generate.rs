//! Three-stage inference: aspects, then sketches, then words.

use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::aspect_decoder::Context;
use crate::corpus::text::detokenize;
use crate::corpus::Vocabulary;
use crate::sketch::SketchVocab;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSketch {
    pub symbols: Vec<usize>,
    pub text: String,
    pub log_prob: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSentence {
    pub words: Vec<usize>,
    pub text: String,
    pub log_prob: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub context: Context,
    /// The user or item was unknown and the UNK embedding was used.
    pub unk: bool,
    pub aspects: Vec<usize>,
    pub aspect_log_prob: f64,
    pub aspect_truncated: bool,
    pub sketches: Vec<GeneratedSketch>,
    pub sentences: Vec<GeneratedSentence>,
    pub text: String,
}

impl GenerationResult {
    pub fn words(&self) -> Vec<usize> {
        self.sentences.iter().flat_map(|s| s.words.iter().copied()).collect()
    }

    pub fn truncated(&self) -> bool {
        self.aspect_truncated || self.sketches.iter().any(|s| s.truncated) || self.sentences.iter().any(|s| s.truncated)
    }
}

/// A model with the vocabularies needed to turn ids into text.
pub struct Generator<'a> {
    pub model: &'a Model,
    pub vocab: &'a Vocabulary,
    pub symbols: &'a SketchVocab,
}

impl Generator<'_> {
    pub fn new<'a>(model: &'a Model, vocab: &'a Vocabulary, symbols: &'a SketchVocab) -> Result<Generator<'a>> {
        if vocab.len() != model.sizes.vocab || symbols.len() != model.sizes.symbols {
            return Err(Error::shape(
                "generator vocabularies",
                &[model.sizes.vocab, model.sizes.symbols],
                &[vocab.len(), symbols.len()],
            ));
        }
        Ok(Generator { model, vocab, symbols })
    }

    /// Generate with the configured beam width.
    pub fn generate(&self, ctx: &Context) -> Result<GenerationResult> {
        self.generate_with(ctx, self.model.config.orchestrator.beam)
    }

    pub fn generate_with(&self, ctx: &Context, width: usize) -> Result<GenerationResult> {
        if width == 0 {
            return Err(Error::Usage("beam width must be at least 1".into()));
        }
        let m = self.model;
        let o = &m.config.orchestrator;
        let store = &m.store;
        let cv = m.encoder.values(store, ctx)?;

        let (aspects, aspect_log_prob, aspect_truncated) = if o.no_aspect {
            (vec![0; m.sizes.mode_sentences.clamp(1, o.max_aspects)], 0.0, false)
        } else {
            let best = m
                .aspect
                .generate(store, &cv, width, o.max_aspects)
                .into_iter()
                .next()
                .expect("beam search always returns a hypothesis");
            let truncated = best.truncated();
            (best.tokens, best.score, truncated)
        };

        let mut sketches = Vec::with_capacity(aspects.len());
        if !o.no_sketch {
            let trace = m.sketch.generate(
                store,
                &m.aspect,
                &aspects,
                &cv,
                width,
                o.max_sketch_len,
                m.config.sketch_decoder.chain,
            )?;
            for s in trace.sketches {
                sketches.push(GeneratedSketch {
                    text: self.symbols.decode(&s.symbols).display(self.vocab),
                    symbols: s.symbols,
                    log_prob: s.log_prob,
                    truncated: s.truncated,
                });
            }
        }

        let mut sentences = Vec::with_capacity(aspects.len());
        let mut h = m.review.initial_state(&cv);
        for (j, &a) in aspects.iter().enumerate() {
            if j > 0 && !m.config.review_decoder.chain {
                h = m.review.initial_state(&cv);
            }
            let (out, next) = if o.no_sketch {
                m.review.generate_free(store, a, &cv, h, width, o.max_words)?
            } else {
                m.review
                    .generate_sentence(store, &sketches[j].symbols, self.symbols, a, &cv, h, width)?
            };
            h = next;
            sentences.push(GeneratedSentence {
                text: detokenize(&self.vocab.decode(&out.words)),
                words: out.words,
                log_prob: out.log_prob,
                truncated: out.truncated,
            });
        }
        let text = sentences.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ");
        Ok(GenerationResult {
            context: *ctx,
            unk: cv.unk,
            aspects,
            aspect_log_prob,
            aspect_truncated,
            sketches,
            sentences,
            text,
        })
    }
}
