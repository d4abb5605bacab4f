//! On-disk corpus bundle.
//!
//! ```text
//! vocab.tsv            word<TAB>count, one per line; index = 4 + line number
//! users.txt            raw user id per line; index = line number
//! items.txt            raw item id per line
//! reviews.train.tsv    user<TAB>item<TAB>rating<TAB>ids ids | ids ...
//! reviews.valid.tsv
//! reviews.test.tsv
//! split.txt            key=value manifest (seed, ratios, num_ratings)
//! ```

use std::fs;
use std::path::Path;

use super::{Corpus, CorpusSplit, Review, SplitRatios, Vocabulary};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusBundle {
    pub vocab: Vocabulary,
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub num_ratings: usize,
    pub split: CorpusSplit,
}

impl CorpusBundle {
    pub fn new(corpus: &Corpus, split: CorpusSplit) -> Self {
        CorpusBundle {
            vocab: corpus.vocab.clone(),
            users: corpus.users.clone(),
            items: corpus.items.clone(),
            num_ratings: corpus.num_ratings,
            split,
        }
    }
}

fn write(path: &Path, content: String) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn format_reviews(reviews: &[Review]) -> String {
    let mut out = String::new();
    for r in reviews {
        let sents: Vec<String> = r
            .sentences
            .iter()
            .map(|s| s.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "))
            .collect();
        out.push_str(&format!("{}\t{}\t{}\t{}\n", r.user, r.item, r.rating, sents.join(" | ")));
    }
    out
}

fn parse_reviews(path: &Path, text: &str) -> Result<Vec<Review>> {
    let bad = |n: usize, what: &str| Error::data(format!("{}:{}: {what}", path.display(), n + 1));
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(bad(n, "expected 4 tab-separated columns"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad(n, "bad integer"));
        let sentences = cols[3]
            .split(" | ")
            .map(|s| s.split(' ').map(num).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        out.push(Review {
            user: num(cols[0])?,
            item: num(cols[1])?,
            rating: num(cols[2])?,
            sentences,
        });
    }
    Ok(out)
}

pub fn write_bundle(dir: &Path, bundle: &CorpusBundle) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let vocab: String = bundle
        .vocab
        .entries()
        .map(|(w, c)| format!("{w}\t{c}\n"))
        .collect();
    write(&dir.join("vocab.tsv"), vocab)?;
    write(&dir.join("users.txt"), bundle.users.iter().map(|u| format!("{u}\n")).collect())?;
    write(&dir.join("items.txt"), bundle.items.iter().map(|u| format!("{u}\n")).collect())?;
    let s = &bundle.split;
    write(&dir.join("reviews.train.tsv"), format_reviews(&s.train))?;
    write(&dir.join("reviews.valid.tsv"), format_reviews(&s.valid))?;
    write(&dir.join("reviews.test.tsv"), format_reviews(&s.test))?;
    write(
        &dir.join("split.txt"),
        format!(
            "seed={}\ntrain={}\nvalid={}\ntest={}\nnum_ratings={}\n",
            s.seed, s.ratios.train, s.ratios.valid, s.ratios.test, bundle.num_ratings
        ),
    )
}

pub fn read_bundle(dir: &Path) -> Result<CorpusBundle> {
    let vocab_path = dir.join("vocab.tsv");
    let mut entries = Vec::new();
    for (n, line) in read(&vocab_path)?.lines().enumerate() {
        let (w, c) = line
            .split_once('\t')
            .and_then(|(w, c)| Some((w, c.parse::<u64>().ok()?)))
            .ok_or_else(|| Error::data(format!("{}:{}: bad entry", vocab_path.display(), n + 1)))?;
        entries.push((w.to_string(), c));
    }
    let vocab = Vocabulary::from_entries(entries)?;
    let lines = |name: &str| -> Result<Vec<String>> {
        Ok(read(&dir.join(name))?.lines().map(str::to_string).collect())
    };
    let users = lines("users.txt")?;
    let items = lines("items.txt")?;

    let manifest_path = dir.join("split.txt");
    let manifest = read(&manifest_path)?;
    let key = |k: &str| -> Result<&str> {
        manifest
            .lines()
            .find_map(|l| l.strip_prefix(k).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| Error::data(format!("{}: missing key {k}", manifest_path.display())))
    };
    let float = |k: &str| -> Result<f64> {
        key(k)?
            .parse()
            .map_err(|_| Error::data(format!("{}: bad value for {k}", manifest_path.display())))
    };
    let seed = key("seed")?
        .parse()
        .map_err(|_| Error::data("split.txt: bad seed"))?;
    let num_ratings = key("num_ratings")?
        .parse()
        .map_err(|_| Error::data("split.txt: bad num_ratings"))?;
    let ratios = SplitRatios {
        train: float("train")?,
        valid: float("valid")?,
        test: float("test")?,
    };
    let part = |name: &str| -> Result<Vec<Review>> {
        let p = dir.join(name);
        parse_reviews(&p, &read(&p)?)
    };
    let split = CorpusSplit {
        train: part("reviews.train.tsv")?,
        valid: part("reviews.valid.tsv")?,
        test: part("reviews.test.tsv")?,
        seed,
        ratios,
    };
    let bundle = CorpusBundle {
        vocab,
        users,
        items,
        num_ratings,
        split,
    };
    for r in bundle
        .split
        .train
        .iter()
        .chain(&bundle.split.valid)
        .chain(&bundle.split.test)
    {
        if r.user >= bundle.users.len()
            || r.item >= bundle.items.len()
            || r.rating >= num_ratings
            || r.words().any(|w| w >= bundle.vocab.len())
        {
            return Err(Error::data("review references ids outside the bundle's tables"));
        }
    }
    Ok(bundle)
}
