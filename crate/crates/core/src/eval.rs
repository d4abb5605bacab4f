//! Generation metrics: perplexity, corpus BLEU, ROUGE F1 and aspect coverage.
//!
//! Every function takes one reference per candidate. Sentences are token
//! sequences of any hashable type.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::sketch::KeepSets;
use crate::{Error, Result};

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], u64> {
    let mut m = HashMap::new();
    if n > 0 {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Matches of `cand` n-grams in `reference`, each clipped by its reference
/// count, and the number of candidate n-grams.
fn clipped_overlap<T: Eq + Hash>(cand: &[T], reference: &[T], n: usize) -> (u64, u64) {
    let c = ngram_counts(cand, n);
    let r = ngram_counts(reference, n);
    let matched = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
    (matched, cand.len().saturating_sub(n - 1) as u64)
}

fn check_pairs<T>(cands: &[Vec<T>], refs: &[Vec<T>]) -> Result<()> {
    if cands.len() != refs.len() {
        return Err(Error::data(format!(
            "{} candidates for {} references",
            cands.len(),
            refs.len()
        )));
    }
    if cands.is_empty() {
        return Err(Error::Usage("no samples to score".into()));
    }
    Ok(())
}

/// Corpus BLEU-`n` in percent: clipped n-gram precisions pooled over the
/// corpus, uniform weights over orders `1..=n`, and brevity penalty
/// `exp(1 - r/c)` when the candidate total `c` is not longer than the
/// reference total `r`. An order `k >= 2` with no match is smoothed to
/// `1 / (total + 1)`. An empty candidate corpus scores 0.
pub fn bleu<T: Eq + Hash>(cands: &[Vec<T>], refs: &[Vec<T>], n: usize) -> Result<f64> {
    check_pairs(cands, refs)?;
    if n == 0 {
        return Err(Error::Usage("BLEU order must be at least 1".into()));
    }
    let c: usize = cands.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    if c == 0 {
        eprintln!("warning: empty candidates, BLEU is 0");
        return Ok(0.0);
    }
    let mut log_p = 0.0;
    for k in 1..=n {
        let (mut matched, mut total) = (0u64, 0u64);
        for (cand, reference) in cands.iter().zip(refs) {
            let (m, t) = clipped_overlap(cand, reference, k);
            matched += m;
            total += t;
        }
        let p = if matched == 0 && k >= 2 {
            1.0 / (total + 1) as f64
        } else if total == 0 {
            0.0
        } else {
            matched as f64 / total as f64
        };
        if p == 0.0 {
            return Ok(0.0);
        }
        log_p += p.ln();
    }
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(100.0 * bp * (log_p / n as f64).exp())
}

fn f1(overlap: f64, cand_len: f64, ref_len: f64) -> f64 {
    if overlap == 0.0 {
        return 0.0;
    }
    let p = overlap / cand_len;
    let r = overlap / ref_len;
    2.0 * p * r / (p + r)
}

/// Mean of per-pair scores. Summed in sorted order so that the result does
/// not depend on sample order.
fn order_free_mean(mut scores: Vec<f64>) -> f64 {
    scores.sort_by(f64::total_cmp);
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// ROUGE-`n` F1 averaged over pairs.
pub fn rouge_n<T: Eq + Hash>(cands: &[Vec<T>], refs: &[Vec<T>], n: usize) -> Result<f64> {
    check_pairs(cands, refs)?;
    if n == 0 {
        return Err(Error::Usage("ROUGE order must be at least 1".into()));
    }
    let mut scores = Vec::with_capacity(cands.len());
    for (cand, reference) in cands.iter().zip(refs) {
        if reference.is_empty() {
            return Err(Error::data("empty reference"));
        }
        let (m, total) = clipped_overlap(cand, reference, n);
        let ref_total = reference.len().saturating_sub(n - 1);
        scores.push(f1(m as f64, total as f64, ref_total as f64));
    }
    Ok(order_free_mean(scores))
}

pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L F1 from the longest common subsequence, averaged over pairs.
pub fn rouge_l<T: Eq>(cands: &[Vec<T>], refs: &[Vec<T>]) -> Result<f64> {
    check_pairs(cands, refs)?;
    let mut scores = Vec::with_capacity(cands.len());
    for (cand, reference) in cands.iter().zip(refs) {
        if reference.is_empty() {
            return Err(Error::data("empty reference"));
        }
        let l = lcs_len(cand, reference);
        scores.push(f1(l as f64, cand.len() as f64, reference.len() as f64));
    }
    Ok(order_free_mean(scores))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RougeVariant {
    One,
    Two,
    L,
}

pub fn rouge<T: Eq + Hash>(cands: &[Vec<T>], refs: &[Vec<T>], variant: RougeVariant) -> Result<f64> {
    match variant {
        RougeVariant::One => rouge_n(cands, refs, 1),
        RougeVariant::Two => rouge_n(cands, refs, 2),
        RougeVariant::L => rouge_l(cands, refs),
    }
}

/// `exp(nll / tokens)`.
pub fn perplexity(total_nll: f64, tokens: usize) -> Result<f64> {
    if tokens == 0 {
        return Err(Error::data("perplexity over zero tokens"));
    }
    Ok((total_nll / tokens as f64).exp())
}

/// Aspects with at least one keep-set word present in `words`.
pub fn aspects_present(words: &[usize], keep: &KeepSets) -> BTreeSet<usize> {
    keep.aspects
        .iter()
        .enumerate()
        .filter(|(_, set)| words.iter().any(|w| set.contains(w)))
        .map(|(a, _)| a)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Coverage {
    pub mean_real: f64,
    pub mean_generated: f64,
    /// Mean number of real aspects also present in the generated review.
    pub mean_covered: f64,
}

/// Aspect coverage over paired reviews, each given as its flat word list.
pub fn aspect_coverage(real: &[Vec<usize>], generated: &[Vec<usize>], keep: &KeepSets) -> Result<Coverage> {
    check_pairs(real, generated)?;
    let (mut r, mut g, mut c) = (0usize, 0usize, 0usize);
    for (real, gen) in real.iter().zip(generated) {
        let ra = aspects_present(real, keep);
        let ga = aspects_present(gen, keep);
        r += ra.len();
        g += ga.len();
        c += ra.intersection(&ga).count();
    }
    let n = real.len() as f64;
    Ok(Coverage {
        mean_real: r as f64 / n,
        mean_generated: g as f64 / n,
        mean_covered: c as f64 / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Copied slots scored at probability one.
    pub perplexity: f64,
    /// Every position scored by the softmax.
    pub perplexity_softmax: f64,
    /// Percent.
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub coverage: Coverage,
    pub samples: usize,
}

impl MetricReport {
    /// Score generated reviews against references. Reviews are flat word
    /// lists; the perplexities come from the model.
    pub fn compute(
        perplexity: f64,
        perplexity_softmax: f64,
        generated: &[Vec<usize>],
        references: &[Vec<usize>],
        keep: &KeepSets,
    ) -> Result<Self> {
        Ok(MetricReport {
            perplexity,
            perplexity_softmax,
            bleu1: bleu(generated, references, 1)?,
            bleu4: bleu(generated, references, 4)?,
            rouge1: rouge_n(generated, references, 1)?,
            rouge2: rouge_n(generated, references, 2)?,
            rouge_l: rouge_l(generated, references)?,
            coverage: aspect_coverage(references, generated, keep)?,
            samples: generated.len(),
        })
    }

    fn rows(&self) -> [(&'static str, f64); 10] {
        [
            ("perplexity", self.perplexity),
            ("perplexity_softmax", self.perplexity_softmax),
            ("bleu1", self.bleu1),
            ("bleu4", self.bleu4),
            ("rouge1", self.rouge1),
            ("rouge2", self.rouge2),
            ("rougeL", self.rouge_l),
            ("aspects_real", self.coverage.mean_real),
            ("aspects_generated", self.coverage.mean_generated),
            ("aspects_covered", self.coverage.mean_covered),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.rows() {
            writeln!(out, "{k:<18} {v:>12.6}").unwrap();
        }
        writeln!(out, "{:<18} {:>12}", "samples", self.samples).unwrap();
        out
    }

    /// One `{"metric": .., "value": ..}` record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.rows() {
            out.push_str(&serde_json::json!({ "metric": k, "value": v }).to_string());
            out.push('\n');
        }
        out.push_str(&serde_json::json!({ "metric": "samples", "value": self.samples }).to_string());
        out.push('\n');
        out
    }

    pub fn all_finite(&self) -> bool {
        self.rows().iter().all(|(_, v)| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn one(s: &str) -> Vec<Vec<String>> {
        vec![toks(s)]
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        let x = one("the cat sat on the mat");
        assert!((bleu(&x, &x, 1).unwrap() - 100.0).abs() < 1e-12);
        assert!((bleu(&x, &x, 4).unwrap() - 100.0).abs() < 1e-12);
        let y = one("a dog ran in a park");
        assert_eq!(bleu(&x, &y, 1).unwrap(), 0.0);
        assert_eq!(bleu(&x, &y, 4).unwrap(), 0.0);
    }

    #[test]
    fn bleu_repeated_candidate() {
        // Clipped unigram precision 2/4; the candidate is longer than the
        // reference so there is no brevity penalty.
        let c = one("the cat the cat");
        let r = one("the cat");
        assert!((bleu(&c, &r, 1).unwrap() - 50.0).abs() < 1e-12);
        // Bigrams: "the cat" x2 clipped to 1, "cat the" 0: 1/3. Orders 3
        // and 4 have no match: 1/3 and 1/2 after smoothing.
        let want = 100.0 * (0.5f64 * (1.0 / 3.0) * (1.0 / 3.0) * 0.5).powf(0.25);
        assert!((bleu(&c, &r, 4).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn bleu_brevity_penalty() {
        let c = one("the cat");
        let r = one("the cat sat on");
        let want = 100.0 * (1.0f64 - 2.0).exp();
        assert!((bleu(&c, &r, 1).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn empty_candidate_is_zero() {
        let c = vec![Vec::<String>::new()];
        assert_eq!(bleu(&c, &one("a b"), 4).unwrap(), 0.0);
        assert_eq!(rouge_n(&c, &one("a b"), 1).unwrap(), 0.0);
    }

    #[test]
    fn rouge_l_hand_case() {
        assert_eq!(lcs_len(&toks("a b c d"), &toks("a x c y")), 2);
        assert!((rouge_l(&one("a b c d"), &one("a x c y")).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rouge_identity_and_disjoint() {
        let x = one("good sound and great price");
        for v in [RougeVariant::One, RougeVariant::Two, RougeVariant::L] {
            assert!((rouge(&x, &x, v).unwrap() - 1.0).abs() < 1e-15);
            assert_eq!(rouge(&x, &one("bad tone"), v).unwrap(), 0.0);
        }
    }

    #[test]
    fn empty_reference_is_an_error() {
        assert!(rouge_n(&one("a"), &[Vec::<String>::new()], 1).is_err());
        assert!(rouge_l(&one("a"), &[Vec::<String>::new()]).is_err());
    }

    #[test]
    fn zero_samples_is_usage_error() {
        let e = bleu::<String>(&[], &[], 1).unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn coverage_toy() {
        let keep = KeepSets {
            aspects: vec![[10, 11].into(), [20, 21].into(), [30].into()],
            global: BTreeSet::new(),
        };
        let real = vec![vec![10, 5, 21]];
        let gen = vec![vec![11, 5, 7]];
        let c = aspect_coverage(&real, &gen, &keep).unwrap();
        assert_eq!((c.mean_real, c.mean_generated, c.mean_covered), (2.0, 1.0, 1.0));
        let same = aspect_coverage(&real, &real, &keep).unwrap();
        assert_eq!(same.mean_covered, same.mean_real);
    }

    #[test]
    fn perplexity_of_uniform() {
        let n = 7;
        assert!((perplexity(n as f64 * 51f64.ln(), n).unwrap() - 51.0).abs() < 1e-9);
        assert!(perplexity(1.0, 0).is_err());
    }

    #[test]
    fn report_formats() {
        let keep = KeepSets::default();
        let r = MetricReport::compute(4.0, 5.0, &[vec![1, 2, 3]], &[vec![1, 2, 4]], &keep).unwrap();
        assert!(r.all_finite());
        assert_eq!(r.to_jsonl().lines().count(), 11);
        assert!(r.to_text().contains("rougeL"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn corpus() -> impl Strategy<Value = Vec<(Vec<u8>, Vec<u8>)>> {
            prop::collection::vec(
                (prop::collection::vec(0u8..6, 1..9), prop::collection::vec(0u8..6, 1..9)),
                1..8,
            )
        }

        proptest! {
            #[test]
            fn bounds_and_order_invariance(pairs in corpus(), rot in 0usize..8) {
                let (c, r): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
                let k = rot % pairs.len();
                let (mut c2, mut r2) = (c.clone(), r.clone());
                c2.rotate_left(k);
                r2.rotate_left(k);
                for n in [1, 4] {
                    let b = bleu(&c, &r, n).unwrap();
                    prop_assert!((0.0..=100.0 + 1e-9).contains(&b));
                    prop_assert_eq!(b, bleu(&c2, &r2, n).unwrap());
                    prop_assert!((bleu(&r, &r, n).unwrap() - 100.0).abs() < 1e-9);
                }
                for v in [RougeVariant::One, RougeVariant::Two, RougeVariant::L] {
                    let x = rouge(&c, &r, v).unwrap();
                    prop_assert!((0.0..=1.0).contains(&x));
                    prop_assert_eq!(x, rouge(&c2, &r2, v).unwrap());
                }
            }
        }
    }
}
