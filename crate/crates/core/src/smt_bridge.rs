//! Phrase-table term translation and SMT n-best list I/O.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::term_align::{candidate_order, PhraseTable};
use crate::token_sub::WithWarnings;
use crate::{Error, Result};

/// Translates a term: the unique most probable phrase-table entry, or a
/// left-to-right concatenation of constituent translations when the maximum
/// is tied or the term is missing. Constituents without any entry pass
/// through unchanged.
pub fn translate_term<S: AsRef<str>>(term_surface: &str, constituents: &[S], table: &PhraseTable) -> WithWarnings<String> {
    let candidates = if constituents.is_empty() {
        table.candidates(term_surface)
    } else {
        table.term_candidates(constituents)
    };
    let mut sorted: Vec<&(String, f64)> = candidates.iter().collect();
    sorted.sort_by(|a, b| candidate_order(a, b));
    if let Some(best) = sorted.first() {
        let unique = sorted.get(1).is_none_or(|second| second.1 < best.1);
        if unique {
            return WithWarnings {
                value: best.0.clone(),
                warnings: Vec::new(),
            };
        }
    }

    let mut warnings = Vec::new();
    let mut parts: Vec<String> = Vec::new();
    let owned;
    let pieces: Vec<&str> = if constituents.is_empty() {
        owned = vec![term_surface.to_string()];
        owned.iter().map(String::as_str).collect()
    } else {
        constituents.iter().map(AsRef::as_ref).collect()
    };
    for c in pieces {
        match table.best(c) {
            Some((t, _)) => parts.push(t.clone()),
            None => {
                warnings.push(format!("no translation for constituent `{c}` of `{term_surface}`"));
                parts.push(c.to_string());
            }
        }
    }
    WithWarnings {
        value: parts.join(" "),
        warnings,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NBestEntry {
    pub sentence_index: usize,
    pub candidate_tokens: Vec<String>,
    pub feature_scores: Vec<f64>,
    pub total_score: f64,
}

impl NBestEntry {
    pub fn to_line(&self) -> String {
        let feats: Vec<String> = self.feature_scores.iter().map(|f| f.to_string()).collect();
        format!(
            "{} ||| {} ||| {} ||| {}",
            self.sentence_index,
            self.candidate_tokens.join(" "),
            feats.join(" "),
            self.total_score
        )
    }
}

fn parse_number(raw: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::parse(line, format!("non-numeric {what} `{raw}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite {what}")));
    }
    Ok(v)
}

/// Reads `idx ||| tokens ||| features ||| total` lines. Feature labels
/// (tokens ending in `:`) are skipped. Sentence indices must not decrease.
pub fn load_nbest<R: BufRead>(reader: R) -> Result<Vec<NBestEntry>> {
    let mut out: Vec<NBestEntry> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("|||").map(str::trim).collect();
        if fields.len() < 4 {
            return Err(Error::parse(line_no, "expected `idx ||| tokens ||| features ||| total`"));
        }
        let sentence_index: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad sentence index `{}`", fields[0])))?;
        if let Some(prev) = out.last() {
            if sentence_index < prev.sentence_index {
                return Err(Error::parse(
                    line_no,
                    format!("sentence index {sentence_index} after {}", prev.sentence_index),
                ));
            }
        }
        let feature_scores = fields[2]
            .split_whitespace()
            .filter(|t| !t.ends_with(':'))
            .map(|t| parse_number(t, line_no, "feature score"))
            .collect::<Result<Vec<_>>>()?;
        out.push(NBestEntry {
            sentence_index,
            candidate_tokens: fields[1].split_whitespace().map(String::from).collect(),
            feature_scores,
            total_score: parse_number(fields[3], line_no, "total score")?,
        });
    }
    Ok(out)
}

pub fn write_nbest(entries: &[NBestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    out
}

/// Contiguous per-sentence groups, in file order.
pub fn group_nbest(entries: &[NBestEntry]) -> Vec<(usize, &[NBestEntry])> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=entries.len() {
        if i == entries.len() || entries[i].sentence_index != entries[start].sentence_index {
            if start < i {
                groups.push((entries[start].sentence_index, &entries[start..i]));
            }
            start = i;
        }
    }
    groups
}
