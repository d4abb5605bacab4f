//! Sentence sketches: the syntactic skeleton a sentence is generated from.
//!
//! A sketch replaces frequent n-grams by a single symbol, keeps aspect and
//! global keep-set words verbatim, and replaces every other word by its POS
//! tag. Each word position of the source sentence is aligned to the symbol
//! that covers it, so a sketch can be realized back into words by copying
//! lexical and n-gram slots and filling POS slots.

mod tables;
mod tagger;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::{Error, Result};

pub use tables::{mine_ngrams, parse_stoplist, KeepSets, NgramEntry, NgramTable};
pub use tagger::{PosTag, PosTagger, RuleTagger};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SketchToken {
    Word(usize),
    Ngram(Vec<usize>),
    Pos(PosTag),
    Start,
    End,
}

impl SketchToken {
    /// Number of sentence words this symbol stands for.
    pub fn width(&self) -> usize {
        match self {
            SketchToken::Word(_) | SketchToken::Pos(_) => 1,
            SketchToken::Ngram(w) => w.len(),
            SketchToken::Start | SketchToken::End => 0,
        }
    }

    pub fn is_pos(&self) -> bool {
        matches!(self, SketchToken::Pos(_))
    }

    pub fn display(&self, vocab: &Vocabulary) -> String {
        match self {
            SketchToken::Word(w) => vocab.word(*w).to_string(),
            SketchToken::Ngram(ws) => vocab.decode(ws).join("_"),
            SketchToken::Pos(t) => t.to_string(),
            SketchToken::Start => "<s>".into(),
            SketchToken::End => "</s>".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sketch {
    pub symbols: Vec<SketchToken>,
    /// For each word position of the source sentence, the covering symbol.
    pub alignment: Vec<usize>,
}

impl Sketch {
    /// Build from symbols alone; the alignment follows from slot widths.
    pub fn from_symbols(symbols: Vec<SketchToken>) -> Self {
        let alignment = symbols
            .iter()
            .enumerate()
            .flat_map(|(i, s)| std::iter::repeat_n(i, s.width()))
            .collect();
        Sketch { symbols, alignment }
    }

    pub fn total_width(&self) -> usize {
        self.symbols.iter().map(SketchToken::width).sum()
    }

    pub fn pos_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.symbols
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_pos())
            .map(|(i, _)| i)
    }

    pub fn display(&self, vocab: &Vocabulary) -> String {
        self.symbols
            .iter()
            .map(|s| s.display(vocab))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// The original words standing at POS slots of `sentence`.
    pub fn pos_slot_words(&self, sentence: &[usize]) -> BTreeMap<usize, usize> {
        self.alignment
            .iter()
            .zip(sentence)
            .filter(|&(&slot, _)| self.symbols[slot].is_pos())
            .map(|(&slot, &w)| (slot, w))
            .collect()
    }
}

/// Everything needed to derive sketches.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SketchTables {
    pub ngrams: NgramTable,
    pub keep: KeepSets,
}

/// Derive the sketch of `sentence` for `aspect`.
///
/// Pass 1 scans left to right and replaces the longest table n-gram starting
/// at each position (tri-gram before bi-gram). Pass 2 keeps remaining words
/// found in the aspect or global keep sets and replaces the rest by their
/// POS tag.
pub fn derive_sketch(
    sentence: &[usize],
    aspect: usize,
    tables: &SketchTables,
    vocab: &Vocabulary,
    tagger: &dyn PosTagger,
) -> Result<Sketch> {
    if sentence.is_empty() {
        return Err(Error::data("cannot sketch an empty sentence"));
    }
    if aspect >= tables.keep.aspects.len().max(1) {
        return Err(Error::data(format!("aspect {aspect} has no keep set")));
    }
    let words = vocab.decode(sentence);
    let tags = tagger.tag(&words);
    let mut symbols = Vec::new();
    let mut alignment = Vec::with_capacity(sentence.len());
    let mut i = 0;
    while i < sentence.len() {
        let span = [3, 2]
            .into_iter()
            .find(|&n| i + n <= sentence.len() && tables.ngrams.contains(&sentence[i..i + n]));
        let sym = match span {
            Some(n) => SketchToken::Ngram(sentence[i..i + n].to_vec()),
            None if tables.keep.keeps(aspect, sentence[i]) => SketchToken::Word(sentence[i]),
            None => SketchToken::Pos(tags[i]),
        };
        let width = sym.width();
        alignment.extend(std::iter::repeat_n(symbols.len(), width));
        symbols.push(sym);
        i += width;
    }
    Ok(Sketch { symbols, alignment })
}

/// Expand a sketch into words. Lexical and n-gram slots copy their words;
/// POS slots take the word supplied for that slot index.
pub fn realize(sketch: &Sketch, per_slot_words: &BTreeMap<usize, usize>) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(sketch.total_width());
    for (i, sym) in sketch.symbols.iter().enumerate() {
        match sym {
            SketchToken::Word(w) => out.push(*w),
            SketchToken::Ngram(ws) => out.extend_from_slice(ws),
            SketchToken::Pos(_) => match per_slot_words.get(&i) {
                Some(&w) => out.push(w),
                None => return Err(Error::data(format!("no word supplied for POS slot {i}"))),
            },
            SketchToken::Start | SketchToken::End => {}
        }
    }
    Ok(out)
}

pub const SKETCH_START: usize = 0;
pub const SKETCH_END: usize = 1;

/// Dense ids for sketch symbols: `<s>`, `</s>`, the tagset, kept words, then
/// n-gram symbols. Frozen once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchVocab {
    symbols: Vec<SketchToken>,
    index: HashMap<SketchToken, usize>,
}

impl SketchVocab {
    pub fn build(tables: &SketchTables) -> Self {
        let mut symbols = vec![SketchToken::Start, SketchToken::End];
        symbols.extend(PosTag::ALL.iter().map(|&t| SketchToken::Pos(t)));
        symbols.extend(tables.keep.all_words().into_iter().map(SketchToken::Word));
        symbols.extend(
            tables
                .ngrams
                .entries()
                .iter()
                .map(|e| SketchToken::Ngram(e.words.clone())),
        );
        Self::from_symbols(symbols).expect("built symbols are unique")
    }

    pub fn from_symbols(symbols: Vec<SketchToken>) -> Result<Self> {
        if symbols.first() != Some(&SketchToken::Start) || symbols.get(1) != Some(&SketchToken::End) {
            return Err(Error::data("sketch vocabulary must start with <s> </s>"));
        }
        let mut index = HashMap::new();
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::data("duplicate sketch symbol"));
            }
        }
        Ok(SketchVocab { symbols, index })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, sym: &SketchToken) -> Option<usize> {
        self.index.get(sym).copied()
    }

    pub fn symbol(&self, id: usize) -> &SketchToken {
        &self.symbols[id]
    }

    pub fn encode(&self, sketch: &Sketch) -> Result<Vec<usize>> {
        sketch
            .symbols
            .iter()
            .map(|s| {
                self.id(s)
                    .ok_or_else(|| Error::data(format!("sketch symbol {s:?} not in sketch vocabulary")))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Sketch {
        Sketch::from_symbols(ids.iter().map(|&i| self.symbols[i].clone()).collect())
    }

    /// One symbol per line: `S <s>`, `E </s>`, `P NN`, `W word`,
    /// `G w1 w2 [w3]`.
    pub fn to_text(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        for s in &self.symbols {
            match s {
                SketchToken::Start => writeln!(out, "S\t<s>"),
                SketchToken::End => writeln!(out, "E\t</s>"),
                SketchToken::Pos(t) => writeln!(out, "P\t{t}"),
                SketchToken::Word(w) => writeln!(out, "W\t{}", vocab.word(*w)),
                SketchToken::Ngram(ws) => writeln!(out, "G\t{}", vocab.decode(ws).join(" ")),
            }
            .unwrap();
        }
        out
    }

    pub fn from_text(text: &str, vocab: &Vocabulary) -> Result<Self> {
        let word = |w: &str| {
            vocab
                .get(w)
                .ok_or_else(|| Error::data(format!("sketch vocabulary: unknown word {w:?}")))
        };
        let mut symbols = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let (kind, body) = line
                .split_once('\t')
                .ok_or_else(|| Error::data(format!("sketch vocabulary line {}: missing tab", n + 1)))?;
            symbols.push(match kind {
                "S" => SketchToken::Start,
                "E" => SketchToken::End,
                "P" => SketchToken::Pos(body.parse().map_err(Error::Data)?),
                "W" => SketchToken::Word(word(body)?),
                "G" => SketchToken::Ngram(body.split(' ').map(word).collect::<Result<_>>()?),
                _ => return Err(Error::data(format!("sketch vocabulary line {}: bad kind", n + 1))),
            });
        }
        Self::from_symbols(symbols)
    }
}
