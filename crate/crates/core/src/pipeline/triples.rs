//! Training triples: a review's context with its aspect sequence, sketches
//! and sentences.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::SketcherConfig;
use crate::aspect_decoder::Context;
use crate::corpus::{Review, Vocabulary};
use crate::lda::AspectModel;
use crate::sketch::{derive_sketch, mine_ngrams, KeepSets, PosTagger, SketchTables, SketchVocab};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingTriple {
    pub context: Context,
    pub aspects: Vec<usize>,
    /// Sketch symbol ids per sentence.
    pub sketches: Vec<Vec<usize>>,
    /// Per-word covering symbol per sentence.
    pub alignments: Vec<Vec<usize>>,
    pub sentences: Vec<Vec<usize>>,
}

impl TrainingTriple {
    pub fn len(&self) -> usize {
        self.aspects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aspects.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.aspects.len();
        if m == 0 || self.sketches.len() != m || self.sentences.len() != m || self.alignments.len() != m {
            return Err(Error::data(format!(
                "triple has {} aspects, {} sketches, {} alignments, {} sentences",
                m,
                self.sketches.len(),
                self.alignments.len(),
                self.sentences.len()
            )));
        }
        for (j, (a, s)) in self.alignments.iter().zip(&self.sentences).enumerate() {
            if a.len() != s.len() || s.is_empty() {
                return Err(Error::data(format!(
                    "sentence {j}: alignment width {} for {} words",
                    a.len(),
                    s.len()
                )));
            }
            if a.iter().any(|&k| k >= self.sketches[j].len()) {
                return Err(Error::data(format!("sentence {j}: alignment points past the sketch")));
            }
        }
        Ok(())
    }

    pub fn word_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}

/// Mine n-grams from the training sentences and take keep sets from the
/// aspect model.
pub fn build_tables(
    train: &[Review],
    model: &AspectModel,
    vocab: &Vocabulary,
    cfg: &SketcherConfig,
    stoplist: &[HashSet<usize>],
) -> SketchTables {
    let ngrams = mine_ngrams(
        train.iter().flat_map(|r| r.sentences.iter().map(Vec::as_slice)),
        vocab,
        cfg.ngrams,
    );
    let keep = KeepSets::build(model, vocab, cfg.keep_per_aspect, cfg.keep_global, stoplist);
    SketchTables { ngrams, keep }
}

/// Tag every sentence with its aspect and derive its sketch.
pub fn build_triples(
    reviews: &[Review],
    model: &AspectModel,
    tables: &SketchTables,
    symbols: &SketchVocab,
    vocab: &Vocabulary,
    tagger: &dyn PosTagger,
) -> Result<Vec<TrainingTriple>> {
    reviews
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let wrap = |e: Error| Error::data(format!("review {k}: {e}"));
            let mut t = TrainingTriple {
                context: Context::known(r.user, r.item, r.rating),
                aspects: Vec::with_capacity(r.sentences.len()),
                sketches: Vec::with_capacity(r.sentences.len()),
                alignments: Vec::with_capacity(r.sentences.len()),
                sentences: r.sentences.clone(),
            };
            for s in &r.sentences {
                let a = model.assign_aspect(s).map_err(wrap)?.aspect;
                let sk = derive_sketch(s, a, tables, vocab, tagger).map_err(wrap)?;
                t.sketches.push(symbols.encode(&sk).map_err(wrap)?);
                t.alignments.push(sk.alignment);
                t.aspects.push(a);
            }
            t.validate().map_err(wrap)?;
            Ok(t)
        })
        .collect()
}

pub fn write_triples(path: &Path, triples: &[TrainingTriple]) -> Result<()> {
    let mut out = String::new();
    for t in triples {
        out.push_str(&serde_json::to_string(t).expect("triples serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_triples(path: &Path) -> Result<Vec<TrainingTriple>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let t: TrainingTriple = serde_json::from_str(l)
                .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), n + 1)))?;
            t.validate()
                .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), n + 1)))?;
            Ok(t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::{NgramEntry, NgramTable, PosTag, RuleTagger, SketchToken};

    fn vocab() -> Vocabulary {
        Vocabulary::from_entries(
            ["the", "vocals", "are", "pretty", "well", "price", "is", "great", "."]
                .iter()
                .map(|w| (w.to_string(), 10)),
        )
        .unwrap()
    }

    fn fixture() -> (Vocabulary, AspectModel, SketchTables, SketchVocab) {
        let v = vocab();
        let n = v.len();
        let id = |w| v.id(w);
        // aspect 0 = price, aspect 1 = sound
        let mut t0 = vec![0.0; n];
        t0[id("price")] = 0.6;
        t0[id("great")] = 0.4;
        let mut t1 = vec![0.0; n];
        t1[id("vocals")] = 0.7;
        t1[id("well")] = 0.3;
        let mut bg = vec![0.0; n];
        for w in ["the", "are", "pretty", "is", "."] {
            bg[id(w)] = 0.2;
        }
        let model = AspectModel::from_parts(vec![t0, t1], bg, 0.3, 4).unwrap();
        let ngrams = NgramTable::from_entries(vec![NgramEntry {
            words: vec![id("pretty"), id("well")],
            count: 5,
        }])
        .unwrap();
        let keep = KeepSets {
            aspects: vec![[id("price")].into(), [].into()],
            global: [id("the"), id("are"), id("is")].into(),
        };
        let tables = SketchTables { ngrams, keep };
        let symbols = SketchVocab::build(&tables);
        (v, model, tables, symbols)
    }

    fn review(v: &Vocabulary, text: &[&str]) -> Review {
        Review {
            user: 0,
            item: 1,
            rating: 4,
            sentences: text
                .iter()
                .map(|s| s.split(' ').map(|w| v.id(w)).collect())
                .collect(),
        }
    }

    #[test]
    fn three_sentences_three_aspects() {
        let (v, model, tables, symbols) = fixture();
        let tagger = RuleTagger::with_overrides([("vocals".to_string(), PosTag::NN)]);
        let r = review(&v, &["the vocals are pretty well", "the price is great", "the vocals are pretty well"]);
        let t = build_triples(&[r.clone()], &model, &tables, &symbols, &v, &tagger).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].len(), 3);
        assert_eq!(t[0].aspects, vec![1, 0, 1]);
        let sk = symbols.decode(&t[0].sketches[0]);
        assert_eq!(
            sk.symbols,
            vec![
                SketchToken::Word(v.id("the")),
                SketchToken::Pos(PosTag::NN),
                SketchToken::Word(v.id("are")),
                SketchToken::Ngram(vec![v.id("pretty"), v.id("well")]),
            ]
        );
        assert_eq!(t[0].alignments[0], vec![0, 1, 2, 3, 3]);
        let again = build_triples(&[r], &model, &tables, &symbols, &v, &tagger).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn jsonl_round_trip() {
        let (v, model, tables, symbols) = fixture();
        let r = review(&v, &["the price is great"]);
        let t = build_triples(&[r], &model, &tables, &symbols, &v, &RuleTagger::new()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        write_triples(&p, &t).unwrap();
        assert_eq!(read_triples(&p).unwrap(), t);
    }

    #[test]
    fn inconsistent_triple_rejected() {
        let mut t = TrainingTriple {
            context: Context::known(0, 0, 0),
            aspects: vec![0],
            sketches: vec![vec![2, 3]],
            alignments: vec![vec![0, 1]],
            sentences: vec![vec![5, 6]],
        };
        t.validate().unwrap();
        t.alignments[0].pop();
        assert!(t.validate().is_err());
        t.alignments[0] = vec![0, 2];
        assert!(t.validate().is_err());
    }
}
