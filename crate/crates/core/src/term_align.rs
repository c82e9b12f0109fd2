//! Bilingual term pairing: phrase-table match first, word-alignment
//! projection as fallback.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::corpus::ParallelPair;
use crate::term_extract::TermSpan;
use crate::{Error, Result};

/// Source phrase -> list of (target phrase, P(target | source)). Phrases are
/// space-separated tokens.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhraseTable {
    entries: BTreeMap<String, Vec<(String, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseTableFormat {
    /// Zero-based column of the score field holding P(target | source).
    pub prob_column: usize,
}

impl Default for PhraseTableFormat {
    fn default() -> Self {
        PhraseTableFormat { prob_column: 0 }
    }
}

fn normalize_phrase(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Ordering of translation candidates: higher probability first, then the
/// longer target, then lexicographically smaller.
pub fn candidate_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| b.0.chars().count().cmp(&a.0.chars().count()))
        .then_with(|| a.0.cmp(&b.0))
}

impl PhraseTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an entry; a duplicate (source, target) keeps the larger
    /// probability.
    pub fn insert(&mut self, source: &str, target: &str, prob: f64) {
        let list = self.entries.entry(normalize_phrase(source)).or_default();
        let target = normalize_phrase(target);
        match list.iter_mut().find(|(t, _)| *t == target) {
            Some(existing) => existing.1 = existing.1.max(prob),
            None => list.push((target, prob)),
        }
    }

    pub fn candidates(&self, source: &str) -> &[(String, f64)] {
        self.entries
            .get(source)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Candidates for a term given its morpheme surfaces: the space-joined
    /// phrase first, the concatenated surface as a fallback key.
    pub fn term_candidates<S: AsRef<str>>(&self, constituents: &[S]) -> &[(String, f64)] {
        let parts: Vec<&str> = constituents.iter().map(AsRef::as_ref).collect();
        let joined = parts.join(" ");
        let found = self.candidates(&joined);
        if !found.is_empty() || parts.len() < 2 {
            return found;
        }
        self.candidates(&parts.concat())
    }

    /// The best candidate by [`candidate_order`].
    pub fn best(&self, source: &str) -> Option<&(String, f64)> {
        self.candidates(source).iter().min_by(|a, b| candidate_order(a, b))
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.entries
            .iter()
            .flat_map(|(s, list)| list.iter().map(move |(t, p)| (s.as_str(), t.as_str(), *p)))
    }

    /// Writes `src ||| tgt ||| p p p p` lines, the probability repeated in
    /// every score column.
    pub fn to_moses_string(&self) -> String {
        let mut out = String::new();
        for (s, t, p) in self.iter() {
            out.push_str(&format!("{s} ||| {t} ||| {p} {p} {p} {p}\n"));
        }
        out
    }
}

/// Reads a Moses-style phrase table.
pub fn load_phrase_table<R: BufRead>(reader: R, format: &PhraseTableFormat) -> Result<PhraseTable> {
    let mut table = PhraseTable::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("|||").map(str::trim).collect();
        if fields.len() < 3 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::parse(line_no, "expected `src ||| tgt ||| scores`"));
        }
        let scores: Vec<&str> = fields[2].split_whitespace().collect();
        let raw = scores.get(format.prob_column).ok_or_else(|| {
            Error::parse(
                line_no,
                format!("no score column {} (found {})", format.prob_column, scores.len()),
            )
        })?;
        let prob: f64 = raw
            .parse()
            .map_err(|_| Error::parse(line_no, format!("non-numeric probability `{raw}`")))?;
        if !prob.is_finite() || prob <= 0.0 || prob > 1.0 {
            return Err(Error::parse(line_no, format!("probability {prob} outside (0, 1]")));
        }
        table.insert(fields[0], fields[1], prob);
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMethod {
    PhraseTable,
    WordAlignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermPair {
    pub source_span: TermSpan,
    pub target_span: TermSpan,
    /// Concatenated source surfaces.
    pub source_surface: String,
    /// Target tokens joined by single spaces.
    pub target_surface: String,
    pub method: PairMethod,
    /// Present iff `method` is `PhraseTable`.
    pub prob: Option<f64>,
}

/// First start index where `needle` occurs contiguously in `haystack`.
pub fn find_subsequence<A: AsRef<str>, B: AsRef<str>>(haystack: &[A], needle: &[B]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    (0..=haystack.len() - needle.len()).find(|&s| {
        needle
            .iter()
            .zip(&haystack[s..])
            .all(|(n, h)| n.as_ref() == h.as_ref())
    })
}

fn make_pair(pair: &ParallelPair, term: &TermSpan, tstart: usize, tend: usize, method: PairMethod, prob: Option<f64>) -> TermPair {
    let target_span = TermSpan::from_sentence(&pair.target, tstart, tend);
    TermPair {
        source_span: term.clone(),
        target_surface: target_span.tokens(&pair.target).join(" "),
        target_span,
        source_surface: term.surface.clone(),
        method,
        prob,
    }
}

/// Phrase-table identification: among the term's translations that occur in
/// the target sentence, the most probable one.
pub fn identify_pair_phrase_table(pair: &ParallelPair, term: &TermSpan, table: &PhraseTable) -> Option<TermPair> {
    let target = pair.target.surfaces();
    let candidates = table.term_candidates(&term.tokens(&pair.source));
    let (best, start) = candidates
        .iter()
        .filter_map(|c| {
            let toks: Vec<&str> = c.0.split(' ').collect();
            find_subsequence(&target, &toks).map(|s| (c, s))
        })
        .min_by(|a, b| candidate_order(a.0, b.0))?;
    let len = best.0.split(' ').count();
    Some(make_pair(pair, term, start, start + len, PairMethod::PhraseTable, Some(best.1)))
}

/// Word-alignment projection. Discontinuous projections yield `None`.
pub fn identify_pair_word_alignment(pair: &ParallelPair, term: &TermSpan) -> Result<Option<TermPair>> {
    let links = pair.word_alignment.as_ref().ok_or(Error::MissingAlignment)?;
    let mut targets: Vec<usize> = links
        .iter()
        .filter(|(s, _)| (term.start..term.end).contains(s))
        .map(|&(_, t)| t)
        .collect();
    targets.sort_unstable();
    targets.dedup();
    let (Some(&lo), Some(&hi)) = (targets.first(), targets.last()) else {
        return Ok(None);
    };
    if hi - lo + 1 != targets.len() {
        return Ok(None);
    }
    Ok(Some(make_pair(pair, term, lo, hi + 1, PairMethod::WordAlignment, None)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    pub use_phrase_table: bool,
    pub use_word_alignment: bool,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            use_phrase_table: true,
            use_word_alignment: true,
        }
    }
}

/// What happened to one extracted source term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermOutcome {
    Paired(PairMethod),
    /// Same surface as an earlier term in the sentence; shares its pair.
    Repeat(PairMethod),
    Unmatched,
    /// Its target span overlapped an earlier term's.
    Conflict,
}

/// Pairs each term (sorted, disjoint) and reports a per-term outcome.
pub fn identify_term_pairs_with_outcomes(
    pair: &ParallelPair,
    terms: &[TermSpan],
    table: &PhraseTable,
    config: &AlignConfig,
) -> (Vec<TermPair>, Vec<TermOutcome>) {
    let mut pairs: Vec<TermPair> = Vec::new();
    let mut outcomes = Vec::with_capacity(terms.len());
    let mut seen: HashSet<Vec<&str>> = HashSet::new();
    for term in terms {
        let key = term.tokens(&pair.source);
        if seen.contains(&key) {
            let prior = pairs
                .iter()
                .find(|p| p.source_span.tokens(&pair.source) == key);
            outcomes.push(match prior {
                Some(p) => TermOutcome::Repeat(p.method),
                None => TermOutcome::Unmatched,
            });
            continue;
        }
        seen.insert(key);

        let mut found = None;
        if config.use_phrase_table {
            found = identify_pair_phrase_table(pair, term, table);
        }
        if found.is_none() && config.use_word_alignment && pair.word_alignment.is_some() {
            found = identify_pair_word_alignment(pair, term).ok().flatten();
        }
        match found {
            None => outcomes.push(TermOutcome::Unmatched),
            Some(tp) if pairs.iter().any(|p| p.target_span.overlaps(&tp.target_span)) => {
                outcomes.push(TermOutcome::Conflict)
            }
            Some(tp) => {
                outcomes.push(TermOutcome::Paired(tp.method));
                pairs.push(tp);
            }
        }
    }
    (pairs, outcomes)
}

pub fn identify_term_pairs(pair: &ParallelPair, terms: &[TermSpan], table: &PhraseTable, config: &AlignConfig) -> Vec<TermPair> {
    identify_term_pairs_with_outcomes(pair, terms, table, config).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Morpheme, TaggedSentence};

    fn sent(words: &str) -> TaggedSentence {
        TaggedSentence::new(words.split(' ').map(|w| Morpheme::new(w, "noun")).collect())
    }

    fn table(text: &str) -> PhraseTable {
        load_phrase_table(text.as_bytes(), &PhraseTableFormat::default()).unwrap()
    }

    #[test]
    fn parses_moses_line() {
        let t = table("a b ||| x y ||| 0.6 0.1 0.2 0.3\n");
        assert_eq!(t.candidates("a b"), &[("x y".to_string(), 0.6)]);
        let t = load_phrase_table(
            "a b ||| x y ||| 0.6 0.1 0.2 0.3\n".as_bytes(),
            &PhraseTableFormat { prob_column: 2 },
        )
        .unwrap();
        assert_eq!(t.candidates("a b")[0].1, 0.2);
    }

    #[test]
    fn empty_table() {
        assert!(table("").is_empty());
    }

    #[test]
    fn duplicate_keeps_max() {
        let t = table("a ||| x ||| 0.2\na ||| x ||| 0.5\na ||| x ||| 0.3\n");
        assert_eq!(t.candidates("a"), &[("x".to_string(), 0.5)]);
    }

    #[test]
    fn malformed_rows_are_errors() {
        let fmt = PhraseTableFormat::default();
        let bad = ["a ||| x\n", "a ||| x ||| abc\n", "a ||| x ||| 0\n", "a |||  ||| 0.5\n"];
        for b in bad {
            let text = format!("ok ||| fine ||| 0.5\n{b}");
            assert!(matches!(load_phrase_table(text.as_bytes(), &fmt), Err(Error::Parse { line: 2, .. })), "{b}");
        }
    }

    #[test]
    fn phrase_table_picks_present_candidate() {
        let t = table("k ||| A ||| 0.6\nk ||| B ||| 0.3\n");
        let pair = ParallelPair::new(sent("k"), sent("q B r"));
        let term = TermSpan::from_sentence(&pair.source, 0, 1);
        let tp = identify_pair_phrase_table(&pair, &term, &t).unwrap();
        assert_eq!(tp.target_surface, "B");
        assert_eq!(tp.prob, Some(0.3));
        assert_eq!((tp.target_span.start, tp.target_span.end), (1, 2));

        let pair = ParallelPair::new(sent("k"), sent("A q B"));
        let tp = identify_pair_phrase_table(&pair, &term, &t).unwrap();
        assert_eq!(tp.target_surface, "A");
        assert_eq!(tp.method, PairMethod::PhraseTable);
    }

    #[test]
    fn phrase_table_ties_prefer_longer_then_lexicographic() {
        let t = table("k ||| B ||| 0.5\nk ||| A C ||| 0.5\nk ||| D ||| 0.5\n");
        let pair = ParallelPair::new(sent("k"), sent("D B A C"));
        let term = TermSpan::from_sentence(&pair.source, 0, 1);
        assert_eq!(identify_pair_phrase_table(&pair, &term, &t).unwrap().target_surface, "A C");
        let pair = ParallelPair::new(sent("k"), sent("D B"));
        assert_eq!(identify_pair_phrase_table(&pair, &term, &t).unwrap().target_surface, "B");
    }

    #[test]
    fn unknown_term_is_absent() {
        let pair = ParallelPair::new(sent("k"), sent("A"));
        let term = TermSpan::from_sentence(&pair.source, 0, 1);
        assert!(identify_pair_phrase_table(&pair, &term, &PhraseTable::new()).is_none());
    }

    fn aligned(src: &str, tgt: &str, links: &[(usize, usize)]) -> ParallelPair {
        let mut p = ParallelPair::new(sent(src), sent(tgt));
        p.word_alignment = Some(links.iter().copied().collect());
        p
    }

    #[test]
    fn alignment_projection_contiguous() {
        let p = aligned("a b c d", "q r s t u v w x", &[(2, 5), (3, 6)]);
        let term = TermSpan::from_sentence(&p.source, 2, 4);
        let tp = identify_pair_word_alignment(&p, &term).unwrap().unwrap();
        assert_eq!((tp.target_span.start, tp.target_span.end), (5, 7));
        assert_eq!(tp.method, PairMethod::WordAlignment);
        assert_eq!(tp.prob, None);
        assert_eq!(tp.target_surface, "v w");
    }

    #[test]
    fn alignment_projection_discontinuous_is_absent() {
        let p = aligned("a b c d", "q r s t u v w x", &[(2, 5), (3, 7)]);
        let term = TermSpan::from_sentence(&p.source, 2, 4);
        assert!(identify_pair_word_alignment(&p, &term).unwrap().is_none());
    }

    #[test]
    fn alignment_projection_without_links_is_absent() {
        let p = aligned("a b c d", "q r", &[(0, 0)]);
        let term = TermSpan::from_sentence(&p.source, 2, 4);
        assert!(identify_pair_word_alignment(&p, &term).unwrap().is_none());
    }

    #[test]
    fn missing_alignment_is_an_error() {
        let p = ParallelPair::new(sent("a"), sent("b"));
        let term = TermSpan::from_sentence(&p.source, 0, 1);
        assert!(matches!(identify_pair_word_alignment(&p, &term), Err(Error::MissingAlignment)));
    }

    #[test]
    fn step_one_takes_precedence() {
        let t = table("a ||| y ||| 0.9\n");
        let p = aligned("a", "x y", &[(0, 0)]);
        let term = TermSpan::from_sentence(&p.source, 0, 1);
        let pairs = identify_term_pairs(&p, &[term], &t, &AlignConfig::default());
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].method, PairMethod::PhraseTable);
        assert_eq!(pairs[0].target_surface, "y");
    }

    #[test]
    fn both_steps_failing_gives_nothing() {
        let p = aligned("a b", "x y", &[(1, 1)]);
        let term = TermSpan::from_sentence(&p.source, 0, 1);
        let (pairs, outcomes) = identify_term_pairs_with_outcomes(&p, &[term], &PhraseTable::new(), &AlignConfig::default());
        assert!(pairs.is_empty());
        assert_eq!(outcomes, vec![TermOutcome::Unmatched]);
    }

    #[test]
    fn overlapping_target_spans_keep_first() {
        let t = table("a ||| x y ||| 0.9\nc ||| y z ||| 0.9\n");
        let p = ParallelPair::new(sent("a b c"), sent("x y z"));
        let terms = vec![
            TermSpan::from_sentence(&p.source, 0, 1),
            TermSpan::from_sentence(&p.source, 2, 3),
        ];
        let (pairs, outcomes) = identify_term_pairs_with_outcomes(&p, &terms, &t, &AlignConfig::default());
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].source_surface, "a");
        assert_eq!(outcomes[1], TermOutcome::Conflict);
    }

    #[test]
    fn repeated_term_shares_one_pair() {
        let t = table("a ||| x ||| 0.9\n");
        let p = ParallelPair::new(sent("a b a"), sent("x q x"));
        let terms = vec![
            TermSpan::from_sentence(&p.source, 0, 1),
            TermSpan::from_sentence(&p.source, 2, 3),
        ];
        let (pairs, outcomes) = identify_term_pairs_with_outcomes(&p, &terms, &t, &AlignConfig::default());
        assert_eq!(pairs.len(), 1);
        assert_eq!(outcomes[1], TermOutcome::Repeat(PairMethod::PhraseTable));
    }
}
