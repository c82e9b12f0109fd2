//! Placeholder substitution: terms become `TT_i` tokens and are restored
//! after translation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{placeholder, placeholder_index, ParallelPair, TaggedSentence};
use crate::term_align::TermPair;
use crate::term_extract::TermSpan;

/// A sentence pair with terms replaced by `TT_i`. `term_map` keys are the
/// placeholder indices `1..=k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedPair {
    pub source_tokens: Vec<String>,
    pub target_tokens: Option<Vec<String>>,
    pub term_map: BTreeMap<usize, TermPair>,
}

/// Tokens plus any warnings raised while producing them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WithWarnings<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

/// Marks spans on a token sequence and renders the placeholder view.
struct SpanMarks {
    /// Placeholder index and span length at span starts.
    start: Vec<Option<(usize, usize)>>,
    covered: Vec<bool>,
}

impl SpanMarks {
    fn new(len: usize) -> Self {
        SpanMarks {
            start: vec![None; len],
            covered: vec![false; len],
        }
    }

    fn try_mark(&mut self, at: usize, len: usize, index: usize) -> bool {
        if len == 0 || at + len > self.covered.len() || self.covered[at..at + len].iter().any(|&c| c) {
            return false;
        }
        self.covered[at..at + len].iter_mut().for_each(|c| *c = true);
        self.start[at] = Some((index, len));
        true
    }

    /// Marks every non-overlapping occurrence of `needle`, left to right.
    fn mark_all<S: AsRef<str>>(&mut self, tokens: &[S], needle: &[&str], index: usize) -> usize {
        let n = needle.len();
        let mut count = 0;
        if n == 0 || n > tokens.len() {
            return 0;
        }
        let mut p = 0;
        while p + n <= tokens.len() {
            let hit = needle.iter().zip(&tokens[p..p + n]).all(|(a, b)| *a == b.as_ref());
            if hit && self.try_mark(p, n, index) {
                count += 1;
                p += n;
            } else {
                p += 1;
            }
        }
        count
    }

    fn render<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        let mut out = Vec::with_capacity(tokens.len());
        let mut p = 0;
        while p < tokens.len() {
            match self.start[p] {
                Some((index, len)) => {
                    out.push(placeholder(index));
                    p += len;
                }
                None => {
                    out.push(tokens[p].as_ref().to_string());
                    p += 1;
                }
            }
        }
        out
    }
}

/// Replaces each identified term pair with `TT_i` on both sides. Pairs are
/// numbered by source position; at most `max_placeholders` are used.
pub fn tokenize_training_pair(
    pair: &ParallelPair,
    term_pairs: &[TermPair],
    max_placeholders: usize,
) -> WithWarnings<TokenizedPair> {
    let mut warnings = Vec::new();
    let mut ordered: Vec<&TermPair> = term_pairs.iter().collect();
    ordered.sort_by_key(|p| p.source_span.start);
    if ordered.len() > max_placeholders {
        warnings.push(format!(
            "{} term pairs exceed the {} placeholders; the rest stay untokenized",
            ordered.len(),
            max_placeholders
        ));
        ordered.truncate(max_placeholders);
    }

    let source = pair.source.surfaces();
    let target = pair.target.surfaces();
    let mut src_marks = SpanMarks::new(source.len());
    let mut tgt_marks = SpanMarks::new(target.len());
    let mut term_map = BTreeMap::new();

    // Identified spans first so that extra occurrences never displace them.
    for (i, tp) in ordered.iter().enumerate() {
        let index = i + 1;
        src_marks.try_mark(tp.source_span.start, tp.source_span.len(), index);
        tgt_marks.try_mark(tp.target_span.start, tp.target_span.len(), index);
        term_map.insert(index, (*tp).clone());
    }
    for (i, tp) in ordered.iter().enumerate() {
        let index = i + 1;
        let src_phrase = tp.source_span.tokens(&pair.source);
        let tgt_phrase: Vec<&str> = tp.target_surface.split(' ').collect();
        src_marks.mark_all(&source, &src_phrase, index);
        tgt_marks.mark_all(&target, &tgt_phrase, index);
    }

    WithWarnings {
        value: TokenizedPair {
            source_tokens: src_marks.render(&source),
            target_tokens: Some(tgt_marks.render(&target)),
            term_map,
        },
        warnings,
    }
}

/// Decode-time substitution of extracted terms (sorted, disjoint). Repeated
/// surfaces share one index. Returns the tokens and the term for each index,
/// `terms[i - 1]` being `TT_i`.
pub fn tokenize_source(
    sentence: &TaggedSentence,
    terms: &[TermSpan],
    max_placeholders: usize,
) -> WithWarnings<(Vec<String>, Vec<TermSpan>)> {
    let mut warnings = Vec::new();
    let surfaces = sentence.surfaces();
    let mut marks = SpanMarks::new(surfaces.len());
    let mut ordered: Vec<&TermSpan> = terms.iter().collect();
    ordered.sort_by_key(|t| t.start);

    let mut listed: Vec<TermSpan> = Vec::new();
    let mut dropped = 0;
    for term in ordered {
        let key = term.tokens(sentence);
        let index = match listed.iter().position(|t| t.tokens(sentence) == key) {
            Some(pos) => pos + 1,
            None if listed.len() < max_placeholders => {
                listed.push(term.clone());
                listed.len()
            }
            None => {
                dropped += 1;
                continue;
            }
        };
        marks.try_mark(term.start, term.len(), index);
    }
    if dropped > 0 {
        warnings.push(format!(
            "{dropped} terms exceed the {max_placeholders} placeholders; left untokenized"
        ));
    }
    WithWarnings {
        value: (marks.render(&surfaces), listed),
        warnings,
    }
}

/// Substitutes each `TT_i` with its translation. Unmapped placeholders are
/// dropped with a warning.
pub fn restore_tokens<S: AsRef<str>>(tokens: &[S], translations: &BTreeMap<usize, String>) -> WithWarnings<String> {
    let mut warnings = Vec::new();
    let mut words: Vec<&str> = Vec::with_capacity(tokens.len());
    for tok in tokens {
        let tok = tok.as_ref();
        match placeholder_index(tok) {
            Some(i) => match translations.get(&i) {
                Some(t) => words.extend(t.split_whitespace()),
                None => warnings.push(format!("no translation for {tok}; dropped")),
            },
            None => words.push(tok),
        }
    }
    WithWarnings {
        value: words.join(" "),
        warnings,
    }
}

/// Replaces occurrences of each term translation in an SMT candidate with
/// its placeholder. Longer translations are matched first; matches never
/// overlap.
pub fn tokenize_candidate<S: AsRef<str>>(
    candidate_tokens: &[S],
    source_terms: &BTreeMap<usize, String>,
) -> WithWarnings<Vec<String>> {
    let mut warnings = Vec::new();
    let mut order: Vec<(usize, Vec<&str>)> = source_terms
        .iter()
        .map(|(&i, t)| (i, t.split_whitespace().collect()))
        .collect();
    order.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));

    let mut marks = SpanMarks::new(candidate_tokens.len());
    for (index, phrase) in &order {
        let n = marks.mark_all(candidate_tokens, phrase, *index);
        if n > 1 {
            warnings.push(format!("translation of TT_{index} occurs {n} times in candidate"));
        }
    }
    WithWarnings {
        value: marks.render(candidate_tokens),
        warnings,
    }
}
