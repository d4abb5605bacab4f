//! Review ingestion, normalization, filtering, vocabulary and splits.

mod bundle;
mod ingest;
mod preprocess;
mod split;
pub mod text;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use bundle::{read_bundle, write_bundle, CorpusBundle};
pub use ingest::{ingest, ingest_reader, IngestReport, IngestSchema};
pub use preprocess::{preprocess, PreprocessConfig};
pub use split::{split, CorpusSplit, SplitRatios};

/// A review as it appears in the input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawReview {
    pub user_id: String,
    pub item_id: String,
    pub rating: u32,
    pub text: String,
}

/// A preprocessed review. Ids are dense indices; `rating` is zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Review {
    pub user: usize,
    pub item: usize,
    pub rating: usize,
    pub sentences: Vec<Vec<usize>>,
}

impl Review {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn words(&self) -> impl Iterator<Item = usize> + '_ {
        self.sentences.iter().flatten().copied()
    }
}

pub const PAD: usize = 0;
pub const OOV: usize = 1;
pub const START: usize = 2;
pub const END: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Word vocabulary with the reserved block `<pad> <unk> <s> </s>` at
/// indices 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary {
            words: Vec::new(),
            counts: Vec::new(),
            index: HashMap::new(),
        };
        for w in RESERVED {
            v.push(w.to_string(), 0);
        }
        v
    }

    /// Build from `(word, count)` pairs in index order (after the reserved
    /// block). Duplicates and reserved names are rejected.
    pub fn from_entries<I>(entries: I) -> crate::Result<Self>
    where
        I: IntoIterator<Item = (String, u64)>,
    {
        let mut v = Self::new();
        for (w, c) in entries {
            if v.index.contains_key(&w) {
                return Err(crate::Error::data(format!("duplicate vocabulary entry {w:?}")));
            }
            v.push(w, c);
        }
        Ok(v)
    }

    fn push(&mut self, word: String, count: u64) {
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.counts.push(count);
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() == RESERVED.len()
    }

    pub fn num_reserved(&self) -> usize {
        RESERVED.len()
    }

    pub fn is_reserved(&self, id: usize) -> bool {
        id < RESERVED.len()
    }

    /// Index of `word`, or the OOV index.
    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(OOV)
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        self.words.get(id).map(String::as_str).unwrap_or(RESERVED[OOV])
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub(crate) fn set_count(&mut self, id: usize, count: u64) {
        self.counts[id] = count;
    }

    /// Non-reserved entries in index order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, u64)> {
        self.words
            .iter()
            .zip(&self.counts)
            .skip(RESERVED.len())
            .map(|(w, &c)| (w.as_str(), c))
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&i| self.word(i)).collect()
    }
}

/// The preprocessed corpus with its id maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub reviews: Vec<Review>,
    pub vocab: Vocabulary,
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub num_ratings: usize,
}

impl Corpus {
    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.users.iter().position(|u| u == id)
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|u| u == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_block_occupies_lowest_indices() {
        let v = Vocabulary::from_entries(vec![("good".to_string(), 12)]).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("<unk>"), OOV);
        assert_eq!(v.id("good"), 4);
        assert_eq!(v.id("missing"), OOV);
        assert_eq!(v.word(END), "</s>");
        assert!(Vocabulary::from_entries(vec![("<s>".to_string(), 1)]).is_err());
    }
}
