//! Run configuration. Stored as TOML with one section per module.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{PreprocessConfig, SplitRatios};
use crate::lda::LdaConfig;
use crate::{Error, Result};

/// Optimizer schedule of one training phase. The learning rate is
/// `lr * decay_factor ^ (epoch / decay_every)`; `decay_every = 0` disables
/// decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
}

impl StageConfig {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.decay_every == 0 {
            self.lr
        } else {
            self.lr * self.decay_factor.powi((epoch / self.decay_every) as i32)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SketcherConfig {
    pub ngrams: usize,
    pub keep_per_aspect: usize,
    pub keep_global: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AspectDecoderConfig {
    /// `d_E`: user, item and rating embeddings.
    pub embed_dim: usize,
    /// `d_C`: encoded context, also the first decoder state.
    pub context_dim: usize,
    /// `d_A`
    pub aspect_dim: usize,
    /// `d_{H_A}`
    pub hidden: usize,
    pub layers: usize,
    pub train: StageConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SketchDecoderConfig {
    /// `d_S`
    pub symbol_dim: usize,
    /// `d_{H_S}`
    pub hidden: usize,
    pub layers: usize,
    /// Carry the decoder state from one sentence's sketch to the next.
    pub chain: bool,
    pub train: StageConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewDecoderConfig {
    /// `d_Y`
    pub word_dim: usize,
    /// `d_{H_Y}`
    pub hidden: usize,
    /// Per-direction sketch encoder state.
    pub encoder_hidden: usize,
    pub layers: usize,
    /// Weight of the aspect word distribution added to the word logits.
    pub lambda: f64,
    pub chain: bool,
    pub train: StageConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrchestratorConfig {
    pub dropout: f64,
    pub beam: usize,
    pub max_aspects: usize,
    pub max_sketch_len: usize,
    /// Sentence cap when generating without sketches.
    pub max_words: usize,
    pub clip_norm: f64,
    /// Update the context encoder during the sketch and review stages.
    pub tune_context_in_stages: bool,
    pub joint: StageConfig,
    pub no_aspect: bool,
    pub no_sketch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the split, the topic model, initialization and training.
    pub seed: u64,
    pub corpus: PreprocessConfig,
    pub split: SplitRatios,
    pub aspect_lda: LdaConfig,
    pub sketcher: SketcherConfig,
    pub aspect_decoder: AspectDecoderConfig,
    pub sketch_decoder: SketchDecoderConfig,
    pub review_decoder: ReviewDecoderConfig,
    pub orchestrator: OrchestratorConfig,
}

impl Default for RunConfig {
    /// Full-scale settings.
    fn default() -> Self {
        let decaying = |epochs| StageConfig {
            epochs,
            batch: 64,
            lr: 2e-4,
            decay_factor: 0.8,
            decay_every: 2,
        };
        RunConfig {
            seed: 1,
            corpus: PreprocessConfig::default(),
            split: SplitRatios::default(),
            aspect_lda: LdaConfig::default(),
            sketcher: SketcherConfig {
                ngrams: 200,
                keep_per_aspect: 50,
                keep_global: 50,
            },
            aspect_decoder: AspectDecoderConfig {
                embed_dim: 512,
                context_dim: 512,
                aspect_dim: 512,
                hidden: 512,
                layers: 2,
                train: StageConfig {
                    epochs: 20,
                    batch: 1024,
                    lr: 2e-5,
                    decay_factor: 1.0,
                    decay_every: 0,
                },
            },
            sketch_decoder: SketchDecoderConfig {
                symbol_dim: 512,
                hidden: 512,
                layers: 2,
                chain: true,
                train: decaying(10),
            },
            review_decoder: ReviewDecoderConfig {
                word_dim: 512,
                hidden: 512,
                encoder_hidden: 512,
                layers: 2,
                lambda: 1.0,
                chain: false,
                train: decaying(10),
            },
            orchestrator: OrchestratorConfig {
                dropout: 0.2,
                beam: 4,
                max_aspects: 5,
                max_sketch_len: 50,
                max_words: 50,
                clip_norm: 5.0,
                tune_context_in_stages: false,
                joint: decaying(2),
                no_aspect: false,
                no_sketch: false,
            },
        }
    }
}

impl RunConfig {
    /// Desk scale: dimensions divided by 16 and batches by 8. The learning
    /// rates are raised so that the small model trains in minutes.
    pub fn desk() -> Self {
        let mut c = RunConfig::default();
        c.corpus = crate::synth::desk_preprocess();
        c.aspect_lda.iterations = 200;
        c.aspect_lda.burn_in = 100;
        // small keep sets so a desk corpus still leaves POS slots to fill
        c.sketcher.ngrams = 50;
        c.sketcher.keep_per_aspect = 10;
        c.sketcher.keep_global = 20;
        let a = &mut c.aspect_decoder;
        a.embed_dim = 32;
        a.context_dim = 32;
        a.aspect_dim = 32;
        a.hidden = 32;
        a.train.batch = 128;
        a.train.lr = 1e-2;
        a.train.epochs = 200;
        let s = &mut c.sketch_decoder;
        s.symbol_dim = 32;
        s.hidden = 32;
        s.train.batch = 8;
        s.train.lr = 5e-3;
        s.train.epochs = 60;
        s.train.decay_factor = 1.0;
        let r = &mut c.review_decoder;
        r.word_dim = 32;
        r.hidden = 32;
        r.encoder_hidden = 32;
        r.train.batch = 8;
        r.train.lr = 5e-3;
        r.train.epochs = 60;
        r.train.decay_factor = 1.0;
        let j = &mut c.orchestrator.joint;
        j.batch = 8;
        j.lr = 1e-3;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.aspect_decoder;
        let s = &self.sketch_decoder;
        let r = &self.review_decoder;
        if s.symbol_dim != a.aspect_dim {
            return Err(Error::config("sketch_decoder.symbol_dim must equal aspect_decoder.aspect_dim"));
        }
        if a.hidden != a.context_dim || s.hidden != a.context_dim || r.hidden != a.context_dim {
            return Err(Error::config(
                "aspect_decoder.hidden, sketch_decoder.hidden and review_decoder.hidden must equal context_dim",
            ));
        }
        if self.orchestrator.beam == 0 {
            return Err(Error::config("orchestrator.beam must be at least 1"));
        }
        if a.layers == 0 || s.layers == 0 || r.layers == 0 {
            return Err(Error::config("GRU layer counts must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.orchestrator.dropout) {
            return Err(Error::config("orchestrator.dropout must be in [0, 1)"));
        }
        for (name, st) in [
            ("aspect_decoder", &a.train),
            ("sketch_decoder", &s.train),
            ("review_decoder", &r.train),
            ("orchestrator.joint", &self.orchestrator.joint),
        ] {
            if st.batch == 0 || !(st.lr > 0.0) {
                return Err(Error::config(format!("{name}.train needs batch >= 1 and lr > 0")));
            }
        }
        Ok(())
    }

    /// Apply the `SEED` environment variable, if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var("SEED") {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("SEED={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn lda(&self) -> LdaConfig {
        LdaConfig {
            seed: self.seed,
            ..self.aspect_lda.clone()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}
