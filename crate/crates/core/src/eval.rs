//! Corpus BLEU, RIBES and the pairwise human-judgment score.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceDiagnostics {
    pub hyp_len: usize,
    pub ref_len: usize,
    pub ribes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu: f64,
    pub ribes: f64,
    pub sentences: usize,
    pub per_sentence: Vec<SentenceDiagnostics>,
}

fn check_lengths<T>(hyps: &[T], refs: &[T]) -> Result<()> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch {
            what: "hypotheses vs references",
            left: hyps.len(),
            right: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(Error::Empty("evaluation corpus"));
    }
    Ok(())
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            let key: Vec<&str> = w.iter().map(AsRef::as_ref).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and hypothesis n-gram total for one sentence.
pub fn clipped_matches<S: AsRef<str>>(hyp: &[S], reference: &[S], n: usize) -> (usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matched = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, hyp.len().saturating_sub(n - 1))
}

/// Corpus-level BLEU on a 0-100 scale, no smoothing. An order with zero
/// matches (or zero hypothesis n-grams) gives 0.
pub fn bleu<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<S>], max_n: usize) -> Result<f64> {
    check_lengths(hypotheses, references)?;
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=max_n {
            let (m, t) = clipped_matches(h, r, n);
            matched[n - 1] += m;
            total[n - 1] += t;
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..max_n {
        if matched[n] == 0 || total[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (matched[n] as f64 / total[n] as f64).ln();
    }
    let bp = if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * bp * (log_sum / max_n as f64).exp())
}

fn count_ngram<S: AsRef<str>>(tokens: &[S], ngram: &[S]) -> (usize, Option<usize>) {
    let n = ngram.len();
    let mut count = 0;
    let mut first = None;
    if n <= tokens.len() {
        for s in 0..=tokens.len() - n {
            if tokens[s..s + n].iter().zip(ngram).all(|(a, b)| a.as_ref() == b.as_ref()) {
                count += 1;
                first.get_or_insert(s);
            }
        }
    }
    (count, first)
}

/// Reference positions of aligned hypothesis words, in hypothesis order.
/// Words unique on both sides align directly; otherwise the shortest n-gram
/// context (left context tried before right) unique on both sides decides.
pub fn ribes_alignment<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Vec<usize> {
    let mut aligned = Vec::new();
    for (i, word) in hyp.iter().enumerate() {
        let word = word.as_ref();
        let in_ref = reference.iter().filter(|r| r.as_ref() == word).count();
        if in_ref == 0 {
            continue;
        }
        let in_hyp = hyp.iter().filter(|h| h.as_ref() == word).count();
        if in_hyp == 1 && in_ref == 1 {
            aligned.push(reference.iter().position(|r| r.as_ref() == word).unwrap());
            continue;
        }
        let max_window = (i + 1).max(hyp.len() - i + 1);
        for window in 1..max_window {
            if window <= i {
                let ngram = &hyp[i - window..=i];
                let (ch, _) = count_ngram(hyp, ngram);
                let (cr, pos) = count_ngram(reference, ngram);
                if ch == 1 && cr == 1 {
                    aligned.push(pos.unwrap() + window);
                    break;
                }
            }
            if i + window < hyp.len() {
                let ngram = &hyp[i..=i + window];
                let (ch, _) = count_ngram(hyp, ngram);
                let (cr, pos) = count_ngram(reference, ngram);
                if ch == 1 && cr == 1 {
                    aligned.push(pos.unwrap());
                    break;
                }
            }
        }
    }
    aligned
}

/// Normalized Kendall's tau of a rank list: the fraction of ascending pairs.
/// A single aligned word counts as perfectly ordered.
pub fn normalized_kendall_tau(ranks: &[usize]) -> f64 {
    let n = ranks.len();
    match n {
        0 => 0.0,
        1 => 1.0,
        _ => {
            let mut ascending = 0usize;
            for i in 0..n {
                for j in i + 1..n {
                    if ranks[i] < ranks[j] {
                        ascending += 1;
                    }
                }
            }
            ascending as f64 / (n * (n - 1) / 2) as f64
        }
    }
}

/// Sentence-level RIBES in [0, 1].
pub fn sentence_ribes<S: AsRef<str>>(hyp: &[S], reference: &[S], alpha: f64, beta: f64) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let ranks = ribes_alignment(hyp, reference);
    if ranks.is_empty() {
        return 0.0;
    }
    let nkt = normalized_kendall_tau(&ranks);
    let precision = ranks.len() as f64 / hyp.len() as f64;
    let bp = (1.0 - reference.len() as f64 / hyp.len() as f64).exp().min(1.0);
    nkt * precision.powf(alpha) * bp.powf(beta)
}

/// Corpus RIBES on a 0-100 scale: mean of sentence scores.
pub fn ribes<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<S>], alpha: f64, beta: f64) -> Result<f64> {
    check_lengths(hypotheses, references)?;
    let sum: f64 = hypotheses
        .iter()
        .zip(references)
        .map(|(h, r)| sentence_ribes(h, r, alpha, beta))
        .sum();
    Ok(100.0 * sum / hypotheses.len() as f64)
}

pub const RIBES_ALPHA: f64 = 0.25;
pub const RIBES_BETA: f64 = 0.10;

pub fn evaluate<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<S>]) -> Result<EvalReport> {
    let bleu = bleu(hypotheses, references, 4)?;
    let ribes = ribes(hypotheses, references, RIBES_ALPHA, RIBES_BETA)?;
    let per_sentence = hypotheses
        .iter()
        .zip(references)
        .map(|(h, r)| SentenceDiagnostics {
            hyp_len: h.len(),
            ref_len: r.len(),
            ribes: 100.0 * sentence_ribes(h, r, RIBES_ALPHA, RIBES_BETA),
        })
        .collect();
    Ok(EvalReport {
        bleu,
        ribes,
        sentences: hypotheses.len(),
        per_sentence,
    })
}

/// `100 (W - L) / (W + L + T)` over win/loss/tie counts.
pub fn pairwise_score(wins: u64, losses: u64, ties: u64) -> Result<f64> {
    let total = wins + losses + ties;
    if total == 0 {
        return Err(Error::Empty("pairwise judgment counts"));
    }
    Ok(100.0 * (wins as f64 - losses as f64) / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn identical_corpus_is_100() {
        let c = vec![toks("a b c d e"), toks("x y z w")];
        assert_eq!(bleu(&c, &c, 4).unwrap(), 100.0);
        assert_eq!(ribes(&c, &c, RIBES_ALPHA, RIBES_BETA).unwrap(), 100.0);
    }

    #[test]
    fn empty_hypothesis_is_zero() {
        let h = vec![Vec::<String>::new()];
        let r = vec![toks("a b c d")];
        assert_eq!(bleu(&h, &r, 4).unwrap(), 0.0);
        assert_eq!(ribes(&h, &r, RIBES_ALPHA, RIBES_BETA).unwrap(), 0.0);
    }

    #[test]
    fn clipped_unigram_precision() {
        let h = toks("the the the the the the the");
        let r = toks("the cat is on the mat");
        assert_eq!(clipped_matches(&h, &r, 1), (2, 7));
    }

    #[test]
    fn length_mismatch_errors() {
        let a = vec![toks("a")];
        let b: Vec<Vec<String>> = vec![];
        assert!(matches!(bleu(&a, &b, 4), Err(Error::LengthMismatch { .. })));
        assert!(matches!(ribes(&a, &b, 0.25, 0.1), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn ribes_no_overlap_is_zero() {
        assert_eq!(sentence_ribes(&toks("a b"), &toks("c d"), 0.25, 0.1), 0.0);
    }

    #[test]
    fn ribes_reversed_pair_is_zero() {
        let ranks = ribes_alignment(&toks("b a"), &toks("a b"));
        assert_eq!(ranks, vec![1, 0]);
        assert_eq!(normalized_kendall_tau(&ranks), 0.0);
        assert_eq!(sentence_ribes(&toks("b a"), &toks("a b"), 0.25, 0.1), 0.0);
    }

    #[test]
    fn ribes_context_disambiguates_repeats() {
        // "a" occurs twice; the right context "a c" and left context "b a"
        // pin each occurrence.
        let ranks = ribes_alignment(&toks("a c b a"), &toks("a c b a"));
        assert_eq!(ranks, vec![0, 1, 2, 3]);
    }

    #[test]
    fn pairwise_examples() {
        assert_eq!(pairwise_score(20, 10, 10).unwrap(), 25.0);
        assert_eq!(pairwise_score(200, 0, 0).unwrap(), 100.0);
        assert_eq!(pairwise_score(0, 7, 0).unwrap(), -100.0);
        assert_eq!(pairwise_score(5, 5, 3).unwrap(), 0.0);
        assert!(pairwise_score(0, 0, 0).is_err());
    }
}
