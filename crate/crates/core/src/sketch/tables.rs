use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use crate::corpus::Vocabulary;
use crate::lda::AspectModel;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramEntry {
    pub words: Vec<usize>,
    pub count: u64,
}

/// Frequent bi-grams and tri-grams, ranked.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NgramTable {
    entries: Vec<NgramEntry>,
    index: HashMap<Vec<usize>, usize>,
}

impl NgramTable {
    pub fn from_entries(entries: Vec<NgramEntry>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if !(2..=3).contains(&e.words.len()) {
                return Err(Error::data("n-gram entries must have 2 or 3 words"));
            }
            if index.insert(e.words.clone(), i).is_some() {
                return Err(Error::data("duplicate n-gram entry"));
            }
        }
        Ok(NgramTable { entries, index })
    }

    pub fn entries(&self) -> &[NgramEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, words: &[usize]) -> bool {
        self.index.contains_key(words)
    }

    pub fn to_text(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        for e in &self.entries {
            writeln!(out, "{}\t{}", e.count, vocab.decode(&e.words).join(" ")).unwrap();
        }
        out
    }

    pub fn from_text(text: &str, vocab: &Vocabulary) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let (count, words) = line
                .split_once('\t')
                .ok_or_else(|| Error::data(format!("n-gram table line {}: missing tab", n + 1)))?;
            let count = count
                .parse()
                .map_err(|_| Error::data(format!("n-gram table line {}: bad count", n + 1)))?;
            let words = words
                .split(' ')
                .map(|w| {
                    vocab.get(w).ok_or_else(|| {
                        Error::data(format!("n-gram table line {}: unknown word {w:?}", n + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            entries.push(NgramEntry { words, count });
        }
        Self::from_entries(entries)
    }
}

/// Count every within-sentence bi-gram and tri-gram and keep the `top` most
/// frequent across both orders. Ties: count descending, then tri-grams
/// before bi-grams, then lexicographic on the surface form. N-grams with a
/// reserved token (OOV, markers) are never counted.
pub fn mine_ngrams<'a, I>(sentences: I, vocab: &Vocabulary, top: usize) -> NgramTable
where
    I: IntoIterator<Item = &'a [usize]>,
{
    let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
    for s in sentences {
        for n in 2..=3 {
            for w in s.windows(n) {
                if w.iter().any(|&id| vocab.is_reserved(id)) {
                    continue;
                }
                *counts.entry(w.to_vec()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(Vec<usize>, u64, String)> = counts
        .into_iter()
        .map(|(w, c)| {
            let surface = vocab.decode(&w).join(" ");
            (w, c, surface)
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then(b.0.len().cmp(&a.0.len()))
            .then_with(|| a.2.cmp(&b.2))
    });
    ranked.truncate(top);
    NgramTable::from_entries(
        ranked
            .into_iter()
            .map(|(words, count, _)| NgramEntry { words, count })
            .collect(),
    )
    .expect("mined n-grams are unique")
}

/// Words kept verbatim in sketches.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeepSets {
    pub aspects: Vec<BTreeSet<usize>>,
    pub global: BTreeSet<usize>,
}

impl KeepSets {
    /// Top `k_aspect` words per aspect (skipping reserved ids and any
    /// stop-listed words for that aspect) and top `k_global` corpus words by
    /// frequency.
    pub fn build(
        model: &AspectModel,
        vocab: &Vocabulary,
        k_aspect: usize,
        k_global: usize,
        stoplist: &[HashSet<usize>],
    ) -> Self {
        let aspects = (0..model.num_aspects)
            .map(|a| {
                let row = &model.theta[a];
                let mut ids: Vec<usize> = (vocab.num_reserved()..model.vocab_size.min(vocab.len()))
                    .filter(|w| stoplist.get(a).is_none_or(|s| !s.contains(w)))
                    .collect();
                ids.sort_by(|&x, &y| row[y].total_cmp(&row[x]).then(x.cmp(&y)));
                ids.into_iter().take(k_aspect).collect()
            })
            .collect();
        let mut ids: Vec<usize> = (vocab.num_reserved()..vocab.len()).collect();
        ids.sort_by(|&x, &y| vocab.count(y).cmp(&vocab.count(x)).then(x.cmp(&y)));
        let global = ids.into_iter().take(k_global).collect();
        KeepSets { aspects, global }
    }

    pub fn keeps(&self, aspect: usize, word: usize) -> bool {
        self.global.contains(&word) || self.aspects.get(aspect).is_some_and(|s| s.contains(&word))
    }

    /// All kept words across aspects and the global set.
    pub fn all_words(&self) -> BTreeSet<usize> {
        let mut all = self.global.clone();
        for s in &self.aspects {
            all.extend(s.iter().copied());
        }
        all
    }

    pub fn to_text(&self, vocab: &Vocabulary) -> String {
        let join = |s: &BTreeSet<usize>| {
            s.iter().map(|&w| vocab.word(w)).collect::<Vec<_>>().join(" ")
        };
        let mut out = format!("global\t{}\n", join(&self.global));
        for (a, s) in self.aspects.iter().enumerate() {
            writeln!(out, "aspect {a}\t{}", join(s)).unwrap();
        }
        out
    }

    pub fn from_text(text: &str, vocab: &Vocabulary) -> Result<Self> {
        let mut keep = KeepSets::default();
        for (n, line) in text.lines().enumerate() {
            let (head, words) = line
                .split_once('\t')
                .ok_or_else(|| Error::data(format!("keep sets line {}: missing tab", n + 1)))?;
            let set = words
                .split(' ')
                .filter(|w| !w.is_empty())
                .map(|w| {
                    vocab
                        .get(w)
                        .ok_or_else(|| Error::data(format!("keep sets: unknown word {w:?}")))
                })
                .collect::<Result<BTreeSet<_>>>()?;
            if head == "global" {
                keep.global = set;
            } else if head.starts_with("aspect ") {
                keep.aspects.push(set);
            } else {
                return Err(Error::data(format!("keep sets line {}: bad header", n + 1)));
            }
        }
        Ok(keep)
    }
}

/// Parse a stop-list file of `aspect<TAB>word` lines.
pub fn parse_stoplist(text: &str, vocab: &Vocabulary, num_aspects: usize) -> Result<Vec<HashSet<usize>>> {
    let mut out = vec![HashSet::new(); num_aspects];
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (a, w) = line
            .split_once('\t')
            .and_then(|(a, w)| Some((a.trim().parse::<usize>().ok()?, w.trim())))
            .ok_or_else(|| Error::data(format!("stop-list line {}: expected aspect<TAB>word", n + 1)))?;
        if a >= num_aspects {
            return Err(Error::data(format!("stop-list line {}: aspect {a} out of range", n + 1)));
        }
        if let Some(id) = vocab.get(w) {
            out[a].insert(id);
        }
    }
    Ok(out)
}
