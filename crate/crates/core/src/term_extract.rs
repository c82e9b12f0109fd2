//! Compound-noun extraction from POS runs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::TaggedSentence;

/// A half-open morpheme range `[start, end)` of a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TermSpan {
    pub start: usize,
    pub end: usize,
    /// Covered surfaces concatenated without separators.
    pub surface: String,
}

impl TermSpan {
    pub fn from_sentence(sentence: &TaggedSentence, start: usize, end: usize) -> Self {
        let surface = sentence.morphemes[start..end]
            .iter()
            .map(|m| m.surface.as_str())
            .collect();
        TermSpan { start, end, surface }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &TermSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Covered surfaces as separate tokens.
    pub fn tokens<'a>(&self, sentence: &'a TaggedSentence) -> Vec<&'a str> {
        sentence.morphemes[self.start..self.end]
            .iter()
            .map(|m| m.surface.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    pub eligible_pos: BTreeSet<String>,
    /// Surfaces that may not open or close a term; trimmed from run edges.
    pub forbidden_edge_prefixes: BTreeSet<String>,
    pub min_len: usize,
    pub exclude_symbol_or_number_only: bool,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            eligible_pos: ["noun", "prefix", "suffix", "unknown", "number", "alpha"]
                .into_iter()
                .map(String::from)
                .collect(),
            forbidden_edge_prefixes: BTreeSet::new(),
            min_len: 1,
            exclude_symbol_or_number_only: true,
        }
    }
}

const SYMBOL_POS: &str = "symbol";
const NUMBER_LIKE_POS: [&str; 2] = ["number", "alpha"];

/// Maximal eligible-POS runs that survive edge trimming and the exclusion
/// filters, sorted by start.
pub fn extract_candidate_terms(sentence: &TaggedSentence, config: &ExtractConfig) -> Vec<TermSpan> {
    let m = &sentence.morphemes;
    let eligible = |i: usize| config.eligible_pos.contains(&m[i].pos);
    let forbidden = |i: usize| config.forbidden_edge_prefixes.contains(&m[i].surface);
    let min_len = config.min_len.max(1);

    let mut spans = Vec::new();
    let mut i = 0;
    while i < m.len() {
        if !eligible(i) {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < m.len() && eligible(i) {
            i += 1;
        }
        let (mut start, mut end) = (run_start, i);
        while start < end && forbidden(start) {
            start += 1;
        }
        while end > start && forbidden(end - 1) {
            end -= 1;
        }
        if end - start < min_len {
            continue;
        }
        if config.exclude_symbol_or_number_only {
            let run = &m[start..end];
            if run.iter().any(|x| x.pos == SYMBOL_POS) {
                continue;
            }
            if run.iter().all(|x| NUMBER_LIKE_POS.contains(&x.pos.as_str())) {
                continue;
            }
        }
        spans.push(TermSpan::from_sentence(sentence, start, end));
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Morpheme;

    fn sent(spec: &[(&str, &str)]) -> TaggedSentence {
        TaggedSentence::new(spec.iter().map(|(s, p)| Morpheme::new(*s, *p)).collect())
    }

    #[test]
    fn all_nouns_form_one_span() {
        let s = sent(&[("a", "noun"), ("b", "noun"), ("c", "noun")]);
        let spans = extract_candidate_terms(&s, &ExtractConfig::default());
        assert_eq!(spans, vec![TermSpan { start: 0, end: 3, surface: "abc".into() }]);
    }

    #[test]
    fn particle_splits_runs() {
        let s = sent(&[("a", "noun"), ("no", "particle"), ("b", "noun")]);
        let spans = extract_candidate_terms(&s, &ExtractConfig::default());
        let ranges: Vec<_> = spans.iter().map(|t| (t.start, t.end)).collect();
        assert_eq!(ranges, vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn no_eligible_pos_gives_nothing() {
        let s = sent(&[("suru", "verb"), ("ga", "particle")]);
        assert!(extract_candidate_terms(&s, &ExtractConfig::default()).is_empty());
    }

    #[test]
    fn number_only_runs_are_excluded() {
        let s = sent(&[("1", "number"), ("2", "number")]);
        assert!(extract_candidate_terms(&s, &ExtractConfig::default()).is_empty());
        let keep = ExtractConfig {
            exclude_symbol_or_number_only: false,
            ..ExtractConfig::default()
        };
        assert_eq!(extract_candidate_terms(&s, &keep).len(), 1);
    }

    #[test]
    fn number_inside_noun_run_is_kept() {
        let s = sent(&[("3", "number"), ("axis", "noun")]);
        let spans = extract_candidate_terms(&s, &ExtractConfig::default());
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].surface, "3axis");
    }

    #[test]
    fn symbol_inside_run_drops_it() {
        let mut cfg = ExtractConfig::default();
        cfg.eligible_pos.insert("symbol".into());
        let s = sent(&[("a", "noun"), ("-", "symbol"), ("b", "noun"), ("ga", "particle"), ("c", "noun")]);
        let spans = extract_candidate_terms(&s, &cfg);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].surface, "c");
    }

    #[test]
    fn forbidden_edges_are_trimmed() {
        let mut cfg = ExtractConfig::default();
        cfg.forbidden_edge_prefixes.insert("kaku".into());
        let s = sent(&[("kaku", "prefix"), ("a", "noun"), ("b", "noun"), ("kaku", "suffix")]);
        let spans = extract_candidate_terms(&s, &cfg);
        assert_eq!(spans, vec![TermSpan { start: 1, end: 3, surface: "ab".into() }]);
    }

    #[test]
    fn strict_compound_mode() {
        let cfg = ExtractConfig {
            min_len: 2,
            ..ExtractConfig::default()
        };
        let s = sent(&[("a", "noun"), ("ga", "particle"), ("b", "noun"), ("c", "suffix")]);
        let spans = extract_candidate_terms(&s, &cfg);
        assert_eq!(spans.len(), 1);
        assert_eq!((spans[0].start, spans[0].end), (2, 4));
    }
}
