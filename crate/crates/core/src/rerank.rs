//! N-best reranking by the mean of SMT and NMT scores.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::nmt::{sentence_logprob, NmtModel};
use crate::smt_bridge::NBestEntry;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub entry: NBestEntry,
    pub nmt_score: f64,
    pub combined: f64,
    /// 1-based rank after reranking.
    pub rank: usize,
    /// Position in the SMT n-best list.
    pub smt_rank: usize,
}

/// How the NMT log-probability enters the average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmtScoreNorm {
    /// Raw log-probability.
    #[default]
    None,
    /// Log-probability divided by the scored length (tokens + EOS).
    PerToken,
}

/// Teacher-forced log-probability of every candidate (ids already mapped,
/// each ending in EOS).
pub fn rescore_candidates(model: &NmtModel, source_ids: &[usize], candidates: &[Vec<usize>]) -> Result<Vec<f64>> {
    candidates
        .iter()
        .map(|c| sentence_logprob(model, source_ids, c))
        .collect()
}

/// Sorts candidates by `(smt + nmt) / 2`, descending; equal scores keep the
/// SMT order.
pub fn combine_and_rank(candidates: &[NBestEntry], nmt_scores: &[f64], norm: NmtScoreNorm) -> Result<Vec<RankedCandidate>> {
    if candidates.len() != nmt_scores.len() {
        return Err(Error::LengthMismatch {
            what: "candidates vs NMT scores",
            left: candidates.len(),
            right: nmt_scores.len(),
        });
    }
    let mut ranked: Vec<RankedCandidate> = candidates
        .iter()
        .zip(nmt_scores)
        .enumerate()
        .map(|(i, (entry, &nmt))| {
            let nmt_used = match norm {
                NmtScoreNorm::None => nmt,
                NmtScoreNorm::PerToken => nmt / (entry.candidate_tokens.len() + 1) as f64,
            };
            RankedCandidate {
                entry: entry.clone(),
                nmt_score: nmt,
                combined: (entry.total_score + nmt_used) / 2.0,
                rank: 0,
                smt_rank: i + 1,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.combined
            .partial_cmp(&a.combined)
            .unwrap_or(Ordering::Equal)
            .then(a.smt_rank.cmp(&b.smt_rank))
    });
    for (i, r) in ranked.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(ranked)
}
