//! Length-capped beam search over `decode_step`.

use std::cmp::Ordering;

use super::model::{decode_step, encode_source, initial_state, DecoderState, NmtModel};
use crate::corpus::{BOS_ID, EOS_ID};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub logprob: f64,
    pub state: DecoderState,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamResult {
    /// Output ids without the closing EOS.
    pub tokens: Vec<usize>,
    /// Total log-probability, including the EOS step when finished.
    pub logprob: f64,
    /// False when the length cap cut the hypothesis off.
    pub finished: bool,
}

/// Higher score first, then the lexicographically smaller sequence.
fn rank(a_score: f64, a_tokens: &[usize], b_score: f64, b_tokens: &[usize]) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a_tokens.cmp(b_tokens))
}

/// Keeps the `beam_size` best extensions per step across all live
/// hypotheses. Extensions ending in EOS are finished; hypotheses still live
/// at `max_len` are finished as-is. Returns the best finished hypothesis by
/// total log-probability (no length normalization).
pub fn beam_decode(model: &NmtModel, source: &[usize], beam_size: usize, max_len: usize) -> Result<BeamResult> {
    if beam_size == 0 {
        return Err(Error::Config("beam_size must be at least 1".into()));
    }
    let enc = encode_source(model, source)?;
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        logprob: 0.0,
        state: initial_state(model, &enc),
        finished: false,
    }];
    let mut done: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        // (score, parent, token, parent's next state index)
        let mut expansions: Vec<(f64, usize, usize)> = Vec::new();
        let mut next_states = Vec::with_capacity(live.len());
        for (p, hyp) in live.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(BOS_ID);
            let (logprobs, next) = decode_step(model, prev, &hyp.state, &enc);
            next_states.push(next);
            expansions.extend(logprobs.iter().enumerate().map(|(y, lp)| (hyp.logprob + lp, p, y)));
        }
        // All live hypotheses share a length, so comparing parent then token
        // is lexicographic order on the extended sequence.
        expansions.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then_with(|| live[a.1].tokens.cmp(&live[b.1].tokens))
                .then(a.2.cmp(&b.2))
        });
        expansions.truncate(beam_size);

        let mut next_live = Vec::with_capacity(expansions.len());
        for (score, p, y) in expansions {
            let mut tokens = live[p].tokens.clone();
            tokens.push(y);
            let hyp = Hypothesis {
                tokens,
                logprob: score,
                state: next_states[p].clone(),
                finished: y == EOS_ID,
            };
            if hyp.finished {
                done.push(hyp);
            } else {
                next_live.push(hyp);
            }
        }
        live = next_live;

        // Scores only fall, so a strictly better finished hypothesis is final.
        let best_done = done.iter().map(|h| h.logprob).fold(f64::NEG_INFINITY, f64::max);
        let best_live = live.iter().map(|h| h.logprob).fold(f64::NEG_INFINITY, f64::max);
        if best_done > best_live {
            live.clear();
            break;
        }
    }
    done.extend(live);

    let best = done
        .into_iter()
        .map(|mut h| {
            if h.finished {
                h.tokens.pop();
            }
            h
        })
        .min_by(|a, b| rank(a.logprob, &a.tokens, b.logprob, &b.tokens))
        .expect("beam search keeps at least one hypothesis");
    Ok(BeamResult {
        tokens: best.tokens,
        logprob: best.logprob,
        finished: best.finished,
    })
}

/// Argmax rollout (ties to the smaller id) until EOS or `max_len`.
pub fn greedy_decode(model: &NmtModel, source: &[usize], max_len: usize) -> Result<BeamResult> {
    let enc = encode_source(model, source)?;
    let mut state = initial_state(model, &enc);
    let mut prev = BOS_ID;
    let mut tokens = Vec::new();
    let mut logprob = 0.0;
    for _ in 0..max_len {
        let (lp, next) = decode_step(model, prev, &state, &enc);
        let (y, best) = lp
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        logprob += best;
        if y == EOS_ID {
            return Ok(BeamResult { tokens, logprob, finished: true });
        }
        tokens.push(y);
        state = next;
        prev = y;
    }
    Ok(BeamResult { tokens, logprob, finished: false })
}
