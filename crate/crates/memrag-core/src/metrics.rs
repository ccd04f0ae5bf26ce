//! Answer-quality metrics: ROUGE-1/2/L, smoothed BLEU and exact match.
//!
//! Scores are on a 0..=100 scale (exact match is 0 or 1). All functions
//! tokenize with [`crate::text::tokens`].

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::text::{normalize, tokens};

fn f1(overlap: usize, cand_len: usize, ref_len: usize) -> f64 {
    if overlap == 0 || cand_len == 0 || ref_len == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand_len as f64;
    let r = overlap as f64 / ref_len as f64;
    100.0 * 2.0 * p * r / (p + r)
}

fn ngram_counts(toks: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if n == 0 || toks.len() < n {
        return counts;
    }
    for w in toks.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

fn clipped_overlap(cand: &BTreeMap<&[String], usize>, reference: &BTreeMap<&[String], usize>) -> usize {
    cand.iter().map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0))).sum()
}

/// ROUGE-N F1 with clipped n-gram overlap.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> f64 {
    let c = tokens(candidate);
    let r = tokens(reference);
    let cc = ngram_counts(&c, n);
    let rc = ngram_counts(&r, n);
    let overlap = clipped_overlap(&cc, &rc);
    f1(overlap, cc.values().sum(), rc.values().sum())
}

/// Length of the longest common subsequence of two token sequences.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 over tokens.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let c = tokens(candidate);
    let r = tokens(reference);
    f1(lcs_len(&c, &r), c.len(), r.len())
}

const BLEU_MAX_N: usize = 4;

/// Sentence BLEU (uniform weights up to 4-grams) with brevity penalty.
///
/// An order with no matching n-gram uses the add-one estimate
/// `1 / (candidate_ngrams + 1)` instead of zero, so short answers still
/// get a graded score.
pub fn bleu(candidate: &str, reference: &str) -> f64 {
    let c = tokens(candidate);
    let r = tokens(reference);
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=BLEU_MAX_N {
        let cc = ngram_counts(&c, n);
        let rc = ngram_counts(&r, n);
        let total: usize = cc.values().sum();
        let matched = clipped_overlap(&cc, &rc);
        let p = if matched == 0 { 1.0 / (total as f64 + 1.0) } else { matched as f64 / total as f64 };
        log_sum += libm::log(p);
    }
    let bp = if c.len() >= r.len() { 1.0 } else { libm::exp(1.0 - r.len() as f64 / c.len() as f64) };
    100.0 * bp * libm::exp(log_sum / BLEU_MAX_N as f64)
}

/// 1 iff the strings agree after lowercasing, trimming and whitespace collapse.
pub fn exact_match(predicted: &str, gold: &str) -> u8 {
    u8::from(normalize(predicted) == normalize(gold))
}

/// The metric used as the reward signal and for answer scoring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Rouge1,
    Rouge2,
    #[default]
    RougeL,
    Bleu,
}

impl Metric {
    pub fn score(self, candidate: &str, reference: &str) -> f64 {
        match self {
            Metric::Rouge1 => rouge_n(candidate, reference, 1),
            Metric::Rouge2 => rouge_n(candidate, reference, 2),
            Metric::RougeL => rouge_l(candidate, reference),
            Metric::Bleu => bleu(candidate, reference),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rouge1 => "rouge-1",
            Metric::Rouge2 => "rouge-2",
            Metric::RougeL => "rouge-l",
            Metric::Bleu => "bleu",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rouge-1" => Ok(Metric::Rouge1),
            "rouge-2" => Ok(Metric::Rouge2),
            "rouge-l" => Ok(Metric::RougeL),
            "bleu" => Ok(Metric::Bleu),
            other => Err(alloc::format!("unknown metric {other:?}")),
        }
    }
}

/// All four QA scores for one candidate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QaScores {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub bleu: f64,
}

impl QaScores {
    pub fn compute(candidate: &str, reference: &str) -> Self {
        QaScores {
            rouge1: rouge_n(candidate, reference, 1),
            rouge2: rouge_n(candidate, reference, 2),
            rouge_l: rouge_l(candidate, reference),
            bleu: bleu(candidate, reference),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_strings_score_full() {
        let s = "Your boss flight EK349 departs at 01:40 on 2024-05-12.";
        assert!((rouge_n(s, s, 1) - 100.0).abs() < 1e-9);
        assert!((rouge_n(s, s, 2) - 100.0).abs() < 1e-9);
        assert!((rouge_l(s, s) - 100.0).abs() < 1e-9);
        assert!((bleu(s, s) - 100.0).abs() < 1e-9);
        assert!((bleu("ok", "ok") - 100.0).abs() < 1e-9);
    }

    #[test]
    fn rouge1_hand_count() {
        // overlap {a, c}: P = R = 2/3
        let s = rouge_n("a b c", "a c d", 1);
        assert!((s - 200.0 / 3.0).abs() < 1e-9);
        assert!((s - 66.67).abs() < 0.01);
    }

    #[test]
    fn empty_and_disjoint_score_zero() {
        assert_eq!(rouge_n("", "a b", 1), 0.0);
        assert_eq!(rouge_l("", "a b"), 0.0);
        assert_eq!(rouge_l("x y", "a b"), 0.0);
        assert_eq!(bleu("", "a b"), 0.0);
    }

    #[test]
    fn bleu_hand_computed_five_tokens() {
        // candidate: the cat sat on mat ; reference: the cat sat on the mat
        // 1-gram 5/5, 2-gram 3/4 (the cat, cat sat, sat on), 3-gram 2/3, 4-gram 1/2
        // BP = exp(1 - 6/5)
        let got = bleu("the cat sat on mat", "the cat sat on the mat");
        let geo = libm::exp((libm::log(1.0) + libm::log(0.75) + libm::log(2.0 / 3.0) + libm::log(0.5)) / 4.0);
        let want = 100.0 * libm::exp(1.0 - 6.0 / 5.0) * geo;
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn bleu_add_one_on_zero_counts() {
        // 1-gram 2/3, no 2-gram match (2 candidate bigrams): 1/3,
        // no 3-gram match (1 trigram): 1/2, no 4-grams at all: 1/1
        let got = bleu("a x b", "a b c");
        let want = 100.0
            * libm::exp((libm::log(2.0 / 3.0) + libm::log(1.0 / 3.0) + libm::log(0.5) + libm::log(1.0)) / 4.0);
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn exact_match_normalizes() {
        assert_eq!(exact_match("Jurong West", "Jurong West"), 1);
        assert_eq!(exact_match("  jurong   WEST ", "Jurong West"), 1);
        assert_eq!(exact_match("01:40 on 2024-05-12", "01:30 on 2024-05-12"), 0);
    }

    #[test]
    fn metric_names_round_trip() {
        for m in [Metric::Rouge1, Metric::Rouge2, Metric::RougeL, Metric::Bleu] {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
    }
}
