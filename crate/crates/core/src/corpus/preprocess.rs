use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::text::analyze;
use super::{Corpus, RawReview, Review, Vocabulary, OOV};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub max_review_tokens: usize,
    pub min_word_count: u64,
    pub min_user_count: usize,
    pub min_item_count: usize,
    pub max_rating: u32,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            max_review_tokens: 100,
            min_word_count: 10,
            min_user_count: 5,
            min_item_count: 5,
            max_rating: 5,
        }
    }
}

struct Tokenized<'a> {
    raw: &'a RawReview,
    sentences: Vec<Vec<String>>,
}

/// Normalize, filter and index raw reviews.
///
/// Order of filters: review length (all tokens, punctuation included), then
/// user/item frequency pruning repeated until nothing changes, then the
/// vocabulary is built from what survives.
pub fn preprocess(raw: &[RawReview], rules: &PreprocessConfig) -> Result<Corpus> {
    let mut kept: Vec<Tokenized> = raw
        .iter()
        .filter(|r| r.rating >= 1 && r.rating <= rules.max_rating)
        .map(|r| Tokenized {
            raw: r,
            sentences: analyze(&r.text),
        })
        .filter(|t| {
            let n: usize = t.sentences.iter().map(Vec::len).sum();
            n > 0 && n <= rules.max_review_tokens
        })
        .collect();

    loop {
        let mut users: HashMap<&str, usize> = HashMap::new();
        let mut items: HashMap<&str, usize> = HashMap::new();
        for t in &kept {
            *users.entry(&t.raw.user_id).or_default() += 1;
            *items.entry(&t.raw.item_id).or_default() += 1;
        }
        let before = kept.len();
        let keep: Vec<bool> = kept
            .iter()
            .map(|t| {
                users[t.raw.user_id.as_str()] >= rules.min_user_count
                    && items[t.raw.item_id.as_str()] >= rules.min_item_count
            })
            .collect();
        let mut flags = keep.into_iter();
        kept.retain(|_| flags.next().unwrap_or(false));
        if kept.len() == before {
            break;
        }
    }

    if kept.is_empty() {
        return Err(Error::data("corpus empty after filtering"));
    }

    let mut counts: HashMap<&str, u64> = HashMap::new();
    for t in &kept {
        for w in t.sentences.iter().flatten() {
            *counts.entry(w).or_default() += 1;
        }
    }
    let mut entries: Vec<(&str, u64)> = counts
        .iter()
        .filter(|(_, &c)| c >= rules.min_word_count)
        .map(|(&w, &c)| (w, c))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut vocab =
        Vocabulary::from_entries(entries.into_iter().map(|(w, c)| (w.to_string(), c)))?;

    let mut user_ids: Vec<String> = Vec::new();
    let mut item_ids: Vec<String> = Vec::new();
    let mut user_index: HashMap<&str, usize> = HashMap::new();
    let mut item_index: HashMap<&str, usize> = HashMap::new();
    let mut oov = 0u64;
    let mut reviews = Vec::with_capacity(kept.len());
    for t in &kept {
        let user = *user_index.entry(&t.raw.user_id).or_insert_with(|| {
            user_ids.push(t.raw.user_id.clone());
            user_ids.len() - 1
        });
        let item = *item_index.entry(&t.raw.item_id).or_insert_with(|| {
            item_ids.push(t.raw.item_id.clone());
            item_ids.len() - 1
        });
        let sentences = t
            .sentences
            .iter()
            .map(|s| {
                s.iter()
                    .map(|w| {
                        let id = vocab.id(w);
                        if id == OOV {
                            oov += 1;
                        }
                        id
                    })
                    .collect()
            })
            .collect();
        reviews.push(Review {
            user,
            item,
            rating: (t.raw.rating - 1) as usize,
            sentences,
        });
    }
    vocab.set_count(OOV, oov);

    Ok(Corpus {
        reviews,
        vocab,
        users: user_ids,
        items: item_ids,
        num_ratings: rules.max_rating as usize,
    })
}
