//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function takes plain text in the repository's file formats
//! and returns a JSON string. The `*_json` functions hold the logic so they
//! can be tested natively.

use serde::Serialize;
use serde_json::json;
use termnmt::corpus::{load_tagged_sentences, DEFAULT_PLACEHOLDERS};
use termnmt::eval::evaluate;
use termnmt::rerank::{combine_and_rank, NmtScoreNorm};
use termnmt::smt_bridge::{group_nbest, load_nbest, translate_term};
use termnmt::term_align::{load_phrase_table, PhraseTableFormat};
use termnmt::term_extract::{extract_candidate_terms, ExtractConfig};
use termnmt::token_sub::tokenize_source;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct TermView {
    placeholder: String,
    start: usize,
    end: usize,
    surface: String,
    translation: String,
}

/// Extracts terms from tagged sentences, shows the `TT_i` view the model
/// sees, and translates each term with the phrase table.
pub fn tokenize_terms_json(tagged: &str, phrase_table: &str) -> Result<String, String> {
    let sentences = load_tagged_sentences(tagged.as_bytes()).map_err(|e| format!("sentences: {e}"))?;
    let table = load_phrase_table(phrase_table.as_bytes(), &PhraseTableFormat::default())
        .map_err(|e| format!("phrase table: {e}"))?;
    let cfg = ExtractConfig::default();
    let mut out = Vec::with_capacity(sentences.len());
    for s in &sentences {
        let spans = extract_candidate_terms(s, &cfg);
        let tok = tokenize_source(s, &spans, DEFAULT_PLACEHOLDERS);
        let mut warnings = tok.warnings;
        let (tokens, listed) = tok.value;
        let mut terms = Vec::new();
        for span in &spans {
            let index = listed.iter().position(|t| t.tokens(s) == span.tokens(s));
            let tr = translate_term(&span.surface, &span.tokens(s), &table);
            warnings.extend(tr.warnings);
            terms.push(TermView {
                placeholder: index.map(|i| format!("TT_{}", i + 1)).unwrap_or_default(),
                start: span.start,
                end: span.end,
                surface: span.surface.clone(),
                translation: tr.value,
            });
        }
        out.push(json!({ "tokens": tokens, "terms": terms, "warnings": warnings }));
    }
    Ok(serde_json::to_string(&out).expect("serializes"))
}

fn tokenized(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split_whitespace().map(String::from).collect()).collect()
}

/// Corpus BLEU and RIBES with per-sentence RIBES.
pub fn score_json(hypotheses: &str, references: &str) -> Result<String, String> {
    let report = evaluate(&tokenized(hypotheses), &tokenized(references)).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&report).expect("serializes"))
}

/// Reranks n-best groups given one NMT log-probability per n-best line.
pub fn rerank_json(nbest: &str, nmt_scores: &str, per_token: bool) -> Result<String, String> {
    let entries = load_nbest(nbest.as_bytes()).map_err(|e| format!("n-best: {e}"))?;
    let scores = nmt_scores
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("NMT score `{t}` is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    if scores.len() != entries.len() {
        return Err(format!("{} NMT scores for {} n-best lines", scores.len(), entries.len()));
    }
    let norm = if per_token { NmtScoreNorm::PerToken } else { NmtScoreNorm::None };
    let mut out = Vec::new();
    let mut offset = 0;
    for (idx, group) in group_nbest(&entries) {
        let ranked = combine_and_rank(group, &scores[offset..offset + group.len()], norm).map_err(|e| e.to_string())?;
        offset += group.len();
        let rows: Vec<_> = ranked
            .iter()
            .map(|r| {
                json!({
                    "rank": r.rank,
                    "smt_rank": r.smt_rank,
                    "smt": r.entry.total_score,
                    "nmt": r.nmt_score,
                    "combined": r.combined,
                    "text": r.entry.candidate_tokens.join(" "),
                })
            })
            .collect();
        out.push(json!({ "sentence_index": idx, "ranked": rows }));
    }
    Ok(serde_json::to_string(&out).expect("serializes"))
}

#[wasm_bindgen]
pub fn tokenize_terms(tagged: &str, phrase_table: &str) -> Result<String, JsValue> {
    tokenize_terms_json(tagged, phrase_table).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn score(hypotheses: &str, references: &str) -> Result<String, JsValue> {
    score_json(hypotheses, references).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn rerank(nbest: &str, nmt_scores: &str, per_token: bool) -> Result<String, JsValue> {
    rerank_json(nbest, nmt_scores, per_token).map_err(|e| JsValue::from_str(&e))
}
