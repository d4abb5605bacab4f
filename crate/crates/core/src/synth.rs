//! Synthetic corpora for tests and desk-scale runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{PreprocessConfig, RawReview};
use crate::lda::Document;

/// A corpus sampled from a known sentence-level topic model.
#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub docs: Vec<Document>,
    /// True aspect of every sentence, in document order.
    pub truth: Vec<usize>,
    pub vocab_size: usize,
    pub reserved: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub reviews: usize,
    pub aspects: usize,
    pub words_per_aspect: usize,
    pub background_words: usize,
    pub background_rate: f64,
    pub sentences: (usize, usize),
    pub sentence_len: (usize, usize),
    pub reserved: usize,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            reviews: 500,
            aspects: 3,
            words_per_aspect: 30,
            background_words: 30,
            background_rate: 0.1,
            sentences: (2, 5),
            sentence_len: (6, 12),
            reserved: 4,
        }
    }
}

/// Sample a planted corpus. Aspect `a` owns word ids
/// `reserved + a * words_per_aspect ..` and the background words follow.
/// Every sentence draws one aspect uniformly; each token comes from the
/// background with probability `background_rate`, otherwise uniformly from
/// its aspect's words.
pub fn planted_corpus(cfg: &PlantedConfig, seed: u64) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg_start = cfg.reserved + cfg.aspects * cfg.words_per_aspect;
    let mut docs = Vec::with_capacity(cfg.reviews);
    let mut truth = Vec::new();
    for _ in 0..cfg.reviews {
        let m = rng.gen_range(cfg.sentences.0..=cfg.sentences.1);
        let mut doc = Vec::with_capacity(m);
        for _ in 0..m {
            let a = rng.gen_range(0..cfg.aspects);
            let len = rng.gen_range(cfg.sentence_len.0..=cfg.sentence_len.1);
            let sentence = (0..len)
                .map(|_| {
                    if rng.gen_bool(cfg.background_rate) {
                        bg_start + rng.gen_range(0..cfg.background_words)
                    } else {
                        cfg.reserved + a * cfg.words_per_aspect + rng.gen_range(0..cfg.words_per_aspect)
                    }
                })
                .collect();
            doc.push(sentence);
            truth.push(a);
        }
        docs.push(doc);
    }
    PlantedCorpus {
        docs,
        truth,
        vocab_size: bg_start + cfg.background_words,
        reserved: cfg.reserved,
    }
}

struct Topic {
    nouns: &'static [&'static str],
    good: &'static [&'static str],
    bad: &'static [&'static str],
}

const TOPICS: [Topic; 5] = [
    Topic {
        nouns: &["sound", "bass", "vocals", "speakers", "volume"],
        good: &["clear", "rich", "loud", "crisp"],
        bad: &["muddy", "tinny", "distorted", "quiet"],
    },
    Topic {
        nouns: &["battery", "charge", "charger", "power"],
        good: &["lasting", "reliable", "strong"],
        bad: &["dead", "short", "unreliable"],
    },
    Topic {
        nouns: &["price", "value", "cost", "deal"],
        good: &["cheap", "fair", "reasonable"],
        bad: &["expensive", "steep", "high"],
    },
    Topic {
        nouns: &["design", "case", "screen", "buttons"],
        good: &["sleek", "sturdy", "elegant"],
        bad: &["flimsy", "ugly", "bulky"],
    },
    Topic {
        nouns: &["shipping", "delivery", "package", "seller"],
        good: &["fast", "quick", "prompt"],
        bad: &["slow", "late", "damaged"],
    },
];

const ADVERBS: &[&str] = &["very", "pretty", "really", "quite"];

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("word lists are non-empty")
}

fn sentence<R: Rng>(rng: &mut R, topic: &Topic, positive: bool) -> String {
    let adj = |rng: &mut R| pick(rng, if positive { topic.good } else { topic.bad });
    let n = pick(rng, topic.nouns);
    match rng.gen_range(0..5) {
        0 => format!("the {n} is {} {} .", pick(rng, ADVERBS), adj(rng)),
        1 => format!("i think the {n} was {} .", adj(rng)),
        2 => format!("{} the {n} .", if positive { "i love" } else { "i hate" }),
        3 => {
            let n2 = pick(rng, topic.nouns);
            let a1 = adj(rng);
            format!("the {n} is {a1} and the {n2} is {} .", adj(rng))
        }
        _ => format!("overall the {n} feels {} for the money .", adj(rng)),
    }
}

/// Templated electronics reviews over five aspects. Review `k` belongs to
/// user `k / 4 % users` and item `k % items`, so with the defaults the first
/// `4 * users` contexts are distinct. Ratings 4-5 praise, 1-2 complain and
/// 3 mixes.
pub fn desk_reviews(count: usize, users: usize, items: usize, seed: u64) -> Vec<RawReview> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let rating: u32 = rng.gen_range(1..=5);
            let m = rng.gen_range(1..=4);
            let text = (0..m)
                .map(|_| {
                    let topic = &TOPICS[rng.gen_range(0..TOPICS.len())];
                    let positive = match rating {
                        4 | 5 => true,
                        1 | 2 => false,
                        _ => rng.gen_bool(0.5),
                    };
                    sentence(&mut rng, topic, positive)
                })
                .collect::<Vec<_>>()
                .join(" ");
            RawReview {
                user_id: format!("u{}", k / 4 % users),
                item_id: format!("i{}", k % items),
                rating,
                text,
            }
        })
        .collect()
}

/// Preprocessing thresholds suited to the small desk corpus.
pub fn desk_preprocess() -> PreprocessConfig {
    PreprocessConfig {
        min_word_count: 2,
        min_user_count: 1,
        min_item_count: 1,
        ..Default::default()
    }
}

/// The desk corpus as line-delimited JSON in the default ingest schema.
pub fn to_jsonl(reviews: &[RawReview]) -> String {
    reviews
        .iter()
        .map(|r| {
            serde_json::json!({
                "user_id": r.user_id,
                "item_id": r.item_id,
                "rating": r.rating,
                "text": r.text,
            })
            .to_string()
                + "\n"
        })
        .collect()
}
