//! Sentence-level topic model with a background word distribution.
//!
//! Every sentence of a review draws a single aspect from the review's aspect
//! mixture; every word then flips a switch choosing between the background
//! distribution and the sentence's aspect distribution. Inference is
//! collapsed Gibbs sampling over sentence aspects and word switches, with
//! symmetric Dirichlet priors `alpha` (review-aspect), `beta` (words) and a
//! symmetric Beta prior `gamma` on the switch.
//!
//! Token ids below `reserved` (padding, OOV and sequence markers) are ignored
//! for sampling and scoring and receive zero probability mass.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A document is a list of sentences; a sentence is a list of word ids.
pub type Document = Vec<Vec<usize>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    pub num_aspects: usize,
    pub iterations: usize,
    pub burn_in: usize,
    /// Average the posterior over every `thin`-th sweep after burn-in.
    pub thin: usize,
    /// Review-aspect prior; `None` means `50 / num_aspects`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub gamma: f64,
    /// Taken from the run seed, never from a config file.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            num_aspects: 5,
            iterations: 500,
            burn_in: 200,
            thin: 10,
            alpha: None,
            beta: 0.01,
            gamma: 20.0,
            seed: 1,
        }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.num_aspects as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceAssignment {
    pub review: usize,
    pub sentence: usize,
    pub aspect: usize,
    /// `true` where the token was drawn from the background distribution.
    pub background: Vec<bool>,
}

/// Count tables of a sampler state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GibbsCounts {
    pub doc_aspect: Vec<Vec<u32>>,
    pub aspect_word: Vec<Vec<u32>>,
    pub aspect_total: Vec<u64>,
    pub background_word: Vec<u32>,
    pub background_total: u64,
    /// `[background, aspect]` switch totals.
    pub switch: [u64; 2],
}

impl GibbsCounts {
    fn new(docs: usize, aspects: usize, vocab: usize) -> Self {
        GibbsCounts {
            doc_aspect: vec![vec![0; aspects]; docs],
            aspect_word: vec![vec![0; vocab]; aspects],
            aspect_total: vec![0; aspects],
            background_word: vec![0; vocab],
            background_total: 0,
            switch: [0, 0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AspectModel {
    pub num_aspects: usize,
    pub vocab_size: usize,
    pub reserved: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// `theta[a][w]`: probability of word `w` under aspect `a`.
    pub theta: Vec<Vec<f64>>,
    pub background: Vec<f64>,
    /// Posterior mean probability that a token is a background word.
    pub p_background: f64,
    /// Number of sentences assigned to each aspect in the final sample.
    pub aspect_totals: Vec<u64>,
    /// Final sampler state; absent for models loaded from disk.
    pub counts: Option<GibbsCounts>,
    pub assignments: Vec<SentenceAssignment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AspectTag {
    pub aspect: usize,
    /// Set when no token could be scored and the most frequent aspect was
    /// returned instead.
    pub fallback: bool,
}

struct Sampler<'a> {
    docs: &'a [Document],
    aspects: usize,
    vocab: usize,
    reserved: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
    counts: GibbsCounts,
    z: Vec<Vec<usize>>,
    switch: Vec<Vec<Vec<bool>>>,
    rng: ChaCha8Rng,
    log_weights: Vec<f64>,
}

fn sample_log(rng: &mut ChaCha8Rng, log_weights: &[f64]) -> usize {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_weights.iter().map(|&l| (l - max).exp()).sum();
    let mut u = rng.gen::<f64>() * total;
    for (k, &l) in log_weights.iter().enumerate() {
        u -= (l - max).exp();
        if u <= 0.0 {
            return k;
        }
    }
    log_weights.len() - 1
}

impl<'a> Sampler<'a> {
    fn eligible(&self, w: usize) -> bool {
        w >= self.reserved && w < self.vocab
    }

    fn types(&self) -> f64 {
        (self.vocab - self.reserved) as f64
    }

    fn init(&mut self) {
        let docs = self.docs;
        for d in 0..docs.len() {
            let doc = &docs[d];
            let mut zs = Vec::with_capacity(doc.len());
            let mut sw = Vec::with_capacity(doc.len());
            for sent in doc {
                let a = self.rng.gen_range(0..self.aspects);
                self.counts.doc_aspect[d][a] += 1;
                let mut flags = Vec::with_capacity(sent.len());
                for &w in sent {
                    let bg = self.rng.gen::<bool>();
                    flags.push(bg);
                    if self.eligible(w) {
                        self.add_token(w, a, bg);
                    }
                }
                zs.push(a);
                sw.push(flags);
            }
            self.z.push(zs);
            self.switch.push(sw);
        }
    }

    fn add_token(&mut self, w: usize, a: usize, bg: bool) {
        let c = &mut self.counts;
        if bg {
            c.background_word[w] += 1;
            c.background_total += 1;
            c.switch[0] += 1;
        } else {
            c.aspect_word[a][w] += 1;
            c.aspect_total[a] += 1;
            c.switch[1] += 1;
        }
    }

    fn remove_token(&mut self, w: usize, a: usize, bg: bool) {
        let c = &mut self.counts;
        if bg {
            c.background_word[w] -= 1;
            c.background_total -= 1;
            c.switch[0] -= 1;
        } else {
            c.aspect_word[a][w] -= 1;
            c.aspect_total[a] -= 1;
            c.switch[1] -= 1;
        }
    }

    fn sweep(&mut self) {
        let v_beta = self.types() * self.beta;
        let docs = self.docs;
        for d in 0..docs.len() {
            for s in 0..docs[d].len() {
                let sent = &docs[d][s];
                let old = self.z[d][s];
                // Detach the sentence's aspect words.
                self.counts.doc_aspect[d][old] -= 1;
                let topic_words: Vec<usize> = sent
                    .iter()
                    .zip(&self.switch[d][s])
                    .filter(|&(&w, &bg)| !bg && self.eligible(w))
                    .map(|(&w, _)| w)
                    .collect();
                for &w in &topic_words {
                    self.counts.aspect_word[old][w] -= 1;
                    self.counts.aspect_total[old] -= 1;
                }
                let mut seen: Vec<(usize, u32)> = Vec::new();
                self.log_weights.clear();
                for a in 0..self.aspects {
                    let mut lw = (self.counts.doc_aspect[d][a] as f64 + self.alpha).ln();
                    seen.clear();
                    for (j, &w) in topic_words.iter().enumerate() {
                        let prev = match seen.iter_mut().find(|(x, _)| *x == w) {
                            Some((_, n)) => {
                                *n += 1;
                                *n - 1
                            }
                            None => {
                                seen.push((w, 1));
                                0
                            }
                        };
                        lw += ((self.counts.aspect_word[a][w] + prev) as f64 + self.beta).ln()
                            - (self.counts.aspect_total[a] as f64 + v_beta + j as f64).ln();
                    }
                    self.log_weights.push(lw);
                }
                let weights = std::mem::take(&mut self.log_weights);
                let new = sample_log(&mut self.rng, &weights);
                self.log_weights = weights;
                self.z[d][s] = new;
                self.counts.doc_aspect[d][new] += 1;
                for &w in &topic_words {
                    self.counts.aspect_word[new][w] += 1;
                    self.counts.aspect_total[new] += 1;
                }

                // Resample word switches given the sentence aspect.
                for t in 0..sent.len() {
                    let w = sent[t];
                    if !self.eligible(w) {
                        continue;
                    }
                    let bg = self.switch[d][s][t];
                    self.remove_token(w, new, bg);
                    let c = &self.counts;
                    let p_bg = (c.switch[0] as f64 + self.gamma)
                        * (c.background_word[w] as f64 + self.beta)
                        / (c.background_total as f64 + v_beta);
                    let p_topic = (c.switch[1] as f64 + self.gamma)
                        * (c.aspect_word[new][w] as f64 + self.beta)
                        / (c.aspect_total[new] as f64 + v_beta);
                    let now_bg = self.rng.gen::<f64>() * (p_bg + p_topic) < p_bg;
                    self.switch[d][s][t] = now_bg;
                    self.add_token(w, new, now_bg);
                }
            }
        }
    }

    /// Posterior mean estimates from the current state.
    fn estimate(&self) -> (Vec<Vec<f64>>, Vec<f64>, f64) {
        let v_beta = self.types() * self.beta;
        let c = &self.counts;
        let row = |counts: &[u32], total: u64| -> Vec<f64> {
            (0..self.vocab)
                .map(|w| {
                    if self.eligible(w) {
                        (counts[w] as f64 + self.beta) / (total as f64 + v_beta)
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let theta = (0..self.aspects)
            .map(|a| row(&c.aspect_word[a], c.aspect_total[a]))
            .collect();
        let background = row(&c.background_word, c.background_total);
        let p_bg = (c.switch[0] as f64 + self.gamma)
            / ((c.switch[0] + c.switch[1]) as f64 + 2.0 * self.gamma);
        (theta, background, p_bg)
    }
}

fn normalize(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    if s > 0.0 {
        row.iter_mut().for_each(|x| *x /= s);
    }
}

/// Fit the model by collapsed Gibbs sampling. `vocab_size` is the size of
/// the word id space; ids below `reserved` are skipped.
pub fn fit_gibbs(
    docs: &[Document],
    vocab_size: usize,
    reserved: usize,
    config: &LdaConfig,
) -> Result<AspectModel> {
    let aspects = config.num_aspects;
    if aspects == 0 {
        return Err(Error::config("num_aspects must be at least 1"));
    }
    if config.iterations <= config.burn_in {
        return Err(Error::config("iterations must exceed burn_in"));
    }
    if config.thin == 0 {
        return Err(Error::config("thin must be at least 1"));
    }
    if reserved >= vocab_size {
        return Err(Error::config("vocabulary has no scorable words"));
    }
    if docs.iter().all(|d| d.is_empty()) {
        return Err(Error::data("corpus has no sentences"));
    }
    if docs.iter().flatten().flatten().any(|&w| w >= vocab_size) {
        return Err(Error::data("word id outside vocabulary"));
    }

    let mut sampler = Sampler {
        docs,
        aspects,
        vocab: vocab_size,
        reserved,
        alpha: config.alpha(),
        beta: config.beta,
        gamma: config.gamma,
        counts: GibbsCounts::new(docs.len(), aspects, vocab_size),
        z: Vec::with_capacity(docs.len()),
        switch: Vec::with_capacity(docs.len()),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        log_weights: Vec::with_capacity(aspects),
    };
    sampler.init();

    let mut theta_sum = vec![vec![0.0; vocab_size]; aspects];
    let mut bg_sum = vec![0.0; vocab_size];
    let mut p_sum = 0.0;
    let mut samples = 0usize;
    for sweep in 1..=config.iterations {
        sampler.sweep();
        if sweep > config.burn_in && (sweep - config.burn_in) % config.thin == 0 {
            let (theta, bg, p) = sampler.estimate();
            for (acc, row) in theta_sum.iter_mut().zip(&theta) {
                acc.iter_mut().zip(row).for_each(|(a, x)| *a += x);
            }
            bg_sum.iter_mut().zip(&bg).for_each(|(a, x)| *a += x);
            p_sum += p;
            samples += 1;
        }
    }
    if samples == 0 {
        let (theta, bg, p) = sampler.estimate();
        theta_sum = theta;
        bg_sum = bg;
        p_sum = p;
        samples = 1;
    }
    let n = samples as f64;
    for row in theta_sum.iter_mut() {
        row.iter_mut().for_each(|x| *x /= n);
        normalize(row);
    }
    bg_sum.iter_mut().for_each(|x| *x /= n);
    normalize(&mut bg_sum);

    let mut aspect_totals = vec![0u64; aspects];
    let mut assignments = Vec::new();
    for (d, doc) in docs.iter().enumerate() {
        for s in 0..doc.len() {
            let a = sampler.z[d][s];
            aspect_totals[a] += 1;
            assignments.push(SentenceAssignment {
                review: d,
                sentence: s,
                aspect: a,
                background: sampler.switch[d][s].clone(),
            });
        }
    }

    Ok(AspectModel {
        num_aspects: aspects,
        vocab_size,
        reserved,
        alpha: sampler.alpha,
        beta: sampler.beta,
        gamma: sampler.gamma,
        theta: theta_sum,
        background: bg_sum,
        p_background: p_sum / n,
        aspect_totals,
        counts: Some(sampler.counts),
        assignments,
    })
}

impl AspectModel {
    /// Assemble a model from explicit distributions. Rows must be simplexes.
    pub fn from_parts(
        theta: Vec<Vec<f64>>,
        background: Vec<f64>,
        p_background: f64,
        reserved: usize,
    ) -> Result<Self> {
        let vocab_size = background.len();
        let model = AspectModel {
            num_aspects: theta.len(),
            vocab_size,
            reserved,
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            aspect_totals: vec![0; theta.len()],
            theta,
            background,
            p_background,
            counts: None,
            assignments: Vec::new(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_aspects == 0 || self.theta.len() != self.num_aspects {
            return Err(Error::data("aspect model needs at least one theta row"));
        }
        if !(0.0..=1.0).contains(&self.p_background) {
            return Err(Error::data("p_background outside [0, 1]"));
        }
        for row in self.theta.iter().chain(std::iter::once(&self.background)) {
            if row.len() != self.vocab_size {
                return Err(Error::shape("aspect model row", &[self.vocab_size], &[row.len()]));
            }
            let s: f64 = row.iter().sum();
            if row.iter().any(|&x| !(x >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::data(format!("distribution row sums to {s}, not 1")));
            }
        }
        Ok(())
    }

    fn most_frequent_aspect(&self) -> usize {
        let mut best = 0;
        for a in 1..self.num_aspects {
            if self.aspect_totals[a] > self.aspect_totals[best] {
                best = a;
            }
        }
        best
    }

    fn scorable(&self, w: usize) -> bool {
        w >= self.reserved && w < self.vocab_size
    }

    /// Log-likelihood of `tokens` under aspect `a` with the background
    /// mixture. Unscorable tokens are skipped.
    pub fn sentence_log_likelihood(&self, tokens: &[usize], a: usize) -> f64 {
        let p = self.p_background;
        tokens
            .iter()
            .filter(|&&w| self.scorable(w))
            .map(|&w| ((1.0 - p) * self.theta[a][w] + p * self.background[w]).ln())
            .sum()
    }

    /// Tag a sentence with its maximum-posterior aspect under a uniform
    /// aspect prior. Ties go to the lowest aspect id.
    pub fn assign_aspect(&self, tokens: &[usize]) -> Result<AspectTag> {
        if tokens.is_empty() {
            return Err(Error::data("cannot tag an empty sentence"));
        }
        if !tokens.iter().any(|&w| self.scorable(w)) {
            return Ok(AspectTag {
                aspect: self.most_frequent_aspect(),
                fallback: true,
            });
        }
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for a in 0..self.num_aspects {
            let s = self.sentence_log_likelihood(tokens, a);
            if s > best_score {
                best = a;
                best_score = s;
            }
        }
        Ok(AspectTag {
            aspect: best,
            fallback: false,
        })
    }

    /// The `k` most probable words of `aspect`, by probability descending
    /// then id ascending. `k` beyond the vocabulary truncates.
    pub fn top_words(&self, aspect: usize, k: usize) -> Result<Vec<usize>> {
        if aspect >= self.num_aspects {
            return Err(Error::data(format!(
                "aspect {aspect} out of range (model has {})",
                self.num_aspects
            )));
        }
        if k == 0 {
            return Err(Error::data("k must be at least 1"));
        }
        let row = &self.theta[aspect];
        let mut ids: Vec<usize> = (0..self.vocab_size).collect();
        ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        ids.truncate(k);
        Ok(ids)
    }

    /// Per-word perplexity of held-out documents. Each sentence is scored
    /// under its tagged aspect mixed with the background.
    pub fn heldout_perplexity(&self, docs: &[Document]) -> Result<f64> {
        let mut nll = 0.0;
        let mut n = 0usize;
        for sent in docs.iter().flatten() {
            let scorable = sent.iter().filter(|&&w| self.scorable(w)).count();
            if scorable == 0 {
                continue;
            }
            let tag = self.assign_aspect(sent)?;
            nll -= self.sentence_log_likelihood(sent, tag.aspect);
            n += scorable;
        }
        if n == 0 {
            return Err(Error::data("no scorable tokens in held-out corpus"));
        }
        Ok((nll / n as f64).exp())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let join = |row: &[f64]| row.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(out, "c2f-aspect-model 1").unwrap();
        writeln!(
            out,
            "aspects {} vocab {} reserved {}",
            self.num_aspects, self.vocab_size, self.reserved
        )
        .unwrap();
        writeln!(
            out,
            "alpha {} beta {} gamma {} p_background {}",
            self.alpha, self.beta, self.gamma, self.p_background
        )
        .unwrap();
        let totals: Vec<String> = self.aspect_totals.iter().map(|t| t.to_string()).collect();
        writeln!(out, "totals {}", totals.join(" ")).unwrap();
        for row in &self.theta {
            writeln!(out, "theta {}", join(row)).unwrap();
        }
        writeln!(out, "background {}", join(&self.background)).unwrap();
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, what: &str| Error::data(format!("aspect model line {line}: {what}"));
        let mut lines = text.lines().enumerate();
        let mut next = |tag: &str| -> Result<(usize, Vec<&str>)> {
            let (n, l) = lines.next().ok_or_else(|| bad(0, "unexpected end of file"))?;
            let fields: Vec<&str> = l.split(' ').collect();
            if fields.first() != Some(&tag) {
                return Err(bad(n + 1, &format!("expected {tag:?}")));
            }
            Ok((n + 1, fields))
        };
        let (n, head) = next("c2f-aspect-model")?;
        if head.get(1) != Some(&"1") {
            return Err(bad(n, "unsupported version"));
        }
        let num = |n: usize, s: Option<&&str>| -> Result<f64> {
            s.and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| bad(n, "bad number"))
        };
        let (n, dims) = next("aspects")?;
        let aspects = num(n, dims.get(1))? as usize;
        let vocab = num(n, dims.get(3))? as usize;
        let reserved = num(n, dims.get(5))? as usize;
        let (n, pri) = next("alpha")?;
        let (alpha, beta, gamma, p) = (
            num(n, pri.get(1))?,
            num(n, pri.get(3))?,
            num(n, pri.get(5))?,
            num(n, pri.get(7))?,
        );
        let (n, tot) = next("totals")?;
        let totals = tot[1..]
            .iter()
            .map(|t| t.parse::<u64>().map_err(|_| bad(n, "bad total")))
            .collect::<Result<Vec<_>>>()?;
        let mut row = |tag: &str| -> Result<Vec<f64>> {
            let (n, f) = next(tag)?;
            f[1..]
                .iter()
                .map(|x| x.parse::<f64>().map_err(|_| bad(n, "bad probability")))
                .collect()
        };
        let theta = (0..aspects).map(|_| row("theta")).collect::<Result<Vec<_>>>()?;
        let background = row("background")?;
        if totals.len() != aspects || background.len() != vocab {
            return Err(Error::data("aspect model dimensions disagree with header"));
        }
        let model = AspectModel {
            num_aspects: aspects,
            vocab_size: vocab,
            reserved,
            alpha,
            beta,
            gamma,
            theta,
            background,
            p_background: p,
            aspect_totals: totals,
            counts: None,
            assignments: Vec::new(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Human-readable listing of each aspect's top words.
    pub fn top_words_report(&self, k: usize, word: impl Fn(usize) -> String) -> String {
        let mut out = String::new();
        for a in 0..self.num_aspects {
            let words = self.top_words(a, k).unwrap_or_default();
            let cells: Vec<String> = words
                .iter()
                .filter(|&&w| self.scorable(w))
                .map(|&w| format!("{} ({:.4})", word(w), self.theta[a][w]))
                .collect();
            writeln!(out, "aspect {a} [{} sentences]: {}", self.aspect_totals[a], cells.join(", "))
                .unwrap();
        }
        out
    }
}

/// Clustering accuracy under the best one-to-one relabeling of predicted
/// aspect ids, by enumerating all permutations of `num_aspects` labels.
pub fn best_permutation_accuracy(predicted: &[usize], truth: &[usize], num_aspects: usize) -> f64 {
    assert_eq!(predicted.len(), truth.len());
    if predicted.is_empty() {
        return 1.0;
    }
    let mut confusion = vec![vec![0usize; num_aspects]; num_aspects];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[p][t] += 1;
    }
    let mut perm: Vec<usize> = (0..num_aspects).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        let hits: usize = (0..num_aspects).map(|i| confusion[i][p[i]]).sum();
        best = best.max(hits);
    });
    best as f64 / predicted.len() as f64
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(aspects: usize, seed: u64) -> LdaConfig {
        LdaConfig {
            num_aspects: aspects,
            iterations: 60,
            burn_in: 20,
            thin: 10,
            seed,
            ..Default::default()
        }
    }

    fn check_conservation(model: &AspectModel, docs: &[Document]) {
        let c = model.counts.as_ref().unwrap();
        let sentences: usize = docs.iter().map(Vec::len).sum();
        let tokens = docs
            .iter()
            .flatten()
            .flatten()
            .filter(|&&w| w >= model.reserved)
            .count() as u64;
        let da: u32 = c.doc_aspect.iter().flatten().sum();
        assert_eq!(da as usize, sentences);
        let aw: u64 = c.aspect_total.iter().sum();
        assert_eq!(aw + c.background_total, tokens);
        assert_eq!(c.switch[0] + c.switch[1], tokens);
        for a in 0..model.num_aspects {
            let row: u64 = c.aspect_word[a].iter().map(|&x| x as u64).sum();
            assert_eq!(row, c.aspect_total[a]);
        }
    }

    fn simplex(row: &[f64]) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(row.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn single_aspect_gets_everything() {
        let docs = vec![vec![vec![4, 5, 6], vec![5, 5]], vec![vec![6, 7]]];
        let m = fit_gibbs(&docs, 8, 4, &config(1, 3)).unwrap();
        assert!(m.assignments.iter().all(|a| a.aspect == 0));
        simplex(&m.theta[0]);
        assert_eq!(m.theta[0][0], 0.0);
        check_conservation(&m, &docs);
        assert_eq!(m.assign_aspect(&[4, 5]).unwrap().aspect, 0);
    }

    #[test]
    fn degenerate_single_sentence_stays_valid() {
        let docs = vec![vec![vec![0, 0, 0]]];
        let m = fit_gibbs(&docs, 1, 0, &config(2, 9)).unwrap();
        for row in &m.theta {
            simplex(row);
        }
        simplex(&m.background);
        assert!(m.assignments[0].aspect < 2);
        check_conservation(&m, &docs);
    }

    #[test]
    fn same_seed_bit_identical() {
        let docs: Vec<Document> = (0..20)
            .map(|i| vec![vec![i % 7, (i * 3) % 7, 2], vec![(i + 1) % 7]])
            .collect();
        let a = fit_gibbs(&docs, 7, 0, &config(3, 5)).unwrap();
        let b = fit_gibbs(&docs, 7, 0, &config(3, 5)).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.background, b.background);
    }

    #[test]
    fn input_validation() {
        let docs = vec![vec![vec![1]]];
        assert!(fit_gibbs(&[vec![]], 3, 0, &config(2, 1)).is_err());
        let mut c = config(2, 1);
        c.burn_in = c.iterations;
        assert!(fit_gibbs(&docs, 3, 0, &c).is_err());
        assert!(fit_gibbs(&docs, 3, 0, &config(0, 1)).is_err());
    }

    /// Brute-force posterior over aspects for the toy model, computed with
    /// explicit products rather than log sums.
    fn brute_posterior(m: &AspectModel, tokens: &[usize]) -> Vec<f64> {
        let p = m.p_background;
        let joint: Vec<f64> = (0..m.num_aspects)
            .map(|a| {
                let mut prod = 1.0 / m.num_aspects as f64;
                for &w in tokens {
                    prod *= (1.0 - p) * m.theta[a][w] + p * m.background[w];
                }
                prod
            })
            .collect();
        let z: f64 = joint.iter().sum();
        joint.into_iter().map(|x| x / z).collect()
    }

    fn toy_model() -> AspectModel {
        AspectModel::from_parts(
            vec![
                vec![0.5, 0.3, 0.1, 0.1],
                vec![0.1, 0.5, 0.3, 0.1],
                vec![0.05, 0.05, 0.1, 0.8],
            ],
            vec![0.25; 4],
            0.2,
            0,
        )
        .unwrap()
    }

    #[test]
    fn tagging_matches_brute_force_posterior() {
        let m = toy_model();
        let top2 = m.top_words(2, 1).unwrap()[0];
        assert_eq!(top2, 3);
        let post = brute_posterior(&m, &[top2]);
        let argmax = (0..3).max_by(|&a, &b| post[a].total_cmp(&post[b])).unwrap();
        assert_eq!(argmax, 2);
        assert_eq!(m.assign_aspect(&[top2]).unwrap(), AspectTag { aspect: 2, fallback: false });
        for s in [vec![0, 0, 1], vec![1, 2, 2], vec![2, 3, 0, 1]] {
            let post = brute_posterior(&m, &s);
            let argmax = (0..3).max_by(|&a, &b| post[a].total_cmp(&post[b])).unwrap();
            assert_eq!(m.assign_aspect(&s).unwrap().aspect, argmax);
        }
    }

    #[test]
    fn tagging_edge_cases() {
        let m = toy_model();
        assert!(m.assign_aspect(&[]).is_err());
        let single = AspectModel::from_parts(vec![vec![0.5, 0.5]], vec![0.5, 0.5], 0.1, 0).unwrap();
        assert_eq!(single.assign_aspect(&[1, 0]).unwrap().aspect, 0);

        let mut with_reserved =
            AspectModel::from_parts(vec![vec![0.0, 1.0]; 3], vec![0.0, 1.0], 0.1, 1).unwrap();
        with_reserved.aspect_totals = vec![2, 9, 9];
        assert_eq!(
            with_reserved.assign_aspect(&[0, 0]).unwrap(),
            AspectTag { aspect: 1, fallback: true }
        );
    }

    #[test]
    fn top_words_order_and_ties() {
        let m = AspectModel::from_parts(
            vec![vec![0.1, 0.3, 0.3, 0.2, 0.1]],
            vec![0.2; 5],
            0.5,
            0,
        )
        .unwrap();
        assert_eq!(m.top_words(0, 3).unwrap(), vec![1, 2, 3]);
        let mut all = m.top_words(0, 99).unwrap();
        assert_eq!(all.len(), 5);
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        assert!(m.top_words(1, 1).is_err());
    }

    #[test]
    fn perplexity_analytic_cases() {
        let uniform = AspectModel::from_parts(vec![vec![0.1; 10]; 2], vec![0.1; 10], 0.3, 0).unwrap();
        let docs = vec![vec![vec![0, 3, 9], vec![4]], vec![vec![7, 7]]];
        assert!((uniform.heldout_perplexity(&docs).unwrap() - 10.0).abs() < 1e-6);

        let one = AspectModel::from_parts(vec![vec![1.0]], vec![1.0], 0.5, 0).unwrap();
        assert!((one.heldout_perplexity(&[vec![vec![0, 0]]]).unwrap() - 1.0).abs() < 1e-12);
        assert!(one.heldout_perplexity(&[]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let docs: Vec<Document> = (0..10).map(|i| vec![vec![4 + i % 3, 5, 6]]).collect();
        let m = fit_gibbs(&docs, 8, 4, &config(2, 2)).unwrap();
        let back = AspectModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back.theta, m.theta);
        assert_eq!(back.background, m.background);
        assert_eq!(back.p_background, m.p_background);
        assert_eq!(back.aspect_totals, m.aspect_totals);
        assert!(AspectModel::from_text("c2f-aspect-model 2\n").is_err());
    }

    #[test]
    fn permutation_accuracy() {
        assert_eq!(best_permutation_accuracy(&[1, 1, 0, 2], &[0, 0, 1, 2], 3), 1.0);
        assert_eq!(best_permutation_accuracy(&[0, 0, 0, 0], &[0, 1, 0, 1], 2), 0.5);
    }
}
