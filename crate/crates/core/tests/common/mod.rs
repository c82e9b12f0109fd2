//! Independent oracles and fixture generators shared by integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use termnmt::corpus::{Morpheme, ParallelPair, TaggedSentence, EOS_ID};
use termnmt::nmt::{
    decode_step, encode_source, init_model, initial_state, loss_and_gradient, sentence_logprob, NmtConfig, NmtModel,
};

// ---------- metrics ----------

fn count_in(tokens: &[String], gram: &[String]) -> usize {
    if gram.len() > tokens.len() {
        return 0;
    }
    (0..=tokens.len() - gram.len()).filter(|&s| tokens[s..s + gram.len()] == *gram).count()
}

/// BLEU from scratch: per-position n-gram clipping by rescanning.
pub fn bleu_oracle(hyps: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let mut p = [(0usize, 0usize); 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rf) in hyps.iter().zip(refs) {
        c += h.len();
        r += rf.len();
        for n in 1..=4 {
            if h.len() < n {
                continue;
            }
            let grams: Vec<Vec<String>> = h.windows(n).map(<[String]>::to_vec).collect();
            let mut done: Vec<&Vec<String>> = Vec::new();
            for g in &grams {
                p[n - 1].1 += 1;
                if done.contains(&g) {
                    continue;
                }
                done.push(g);
                p[n - 1].0 += count_in(h, g).min(count_in(rf, g));
            }
        }
    }
    if c == 0 || p.iter().any(|&(m, t)| m == 0 || t == 0) {
        return 0.0;
    }
    let geo = p.iter().map(|&(m, t)| (m as f64 / t as f64).ln()).sum::<f64>() / 4.0;
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    100.0 * bp * geo.exp()
}

fn unique_both(hyp: &[String], rf: &[String], gram: &[String]) -> Option<usize> {
    if count_in(hyp, gram) == 1 && count_in(rf, gram) == 1 {
        (0..=rf.len() - gram.len()).find(|&s| rf[s..s + gram.len()] == *gram)
    } else {
        None
    }
}

/// Sentence RIBES following the reference implementation's word alignment.
pub fn sentence_ribes_oracle(hyp: &[String], rf: &[String]) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let mut ranks: Vec<usize> = Vec::new();
    for i in 0..hyp.len() {
        if !rf.contains(&hyp[i]) {
            continue;
        }
        if let Some(pos) = unique_both(hyp, rf, &hyp[i..=i]) {
            ranks.push(pos);
            continue;
        }
        let limit = std::cmp::max(i + 1, hyp.len() - i + 1);
        for k in 1..limit {
            if k <= i {
                if let Some(pos) = unique_both(hyp, rf, &hyp[i - k..=i]) {
                    ranks.push(pos + k);
                    break;
                }
            }
            if i + k < hyp.len() {
                if let Some(pos) = unique_both(hyp, rf, &hyp[i..=i + k]) {
                    ranks.push(pos);
                    break;
                }
            }
        }
    }
    let nkt = match ranks.len() {
        0 => return 0.0,
        1 => 1.0,
        n => {
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
            pairs.iter().filter(|&&(a, b)| ranks[a] < ranks[b]).count() as f64 / pairs.len() as f64
        }
    };
    let precision = ranks.len() as f64 / hyp.len() as f64;
    let bp = f64::min(1.0, (1.0 - rf.len() as f64 / hyp.len() as f64).exp());
    nkt * precision.powf(0.25) * bp.powf(0.10)
}

pub fn ribes_oracle(hyps: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let total: f64 = hyps.iter().zip(refs).map(|(h, r)| sentence_ribes_oracle(h, r)).sum();
    100.0 * total / hyps.len() as f64
}

/// Random corpus over a small alphabet so repeats and partial matches occur.
pub fn random_corpus(rng: &mut ChaCha8Rng, sentences: usize) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let alphabet = ["a", "b", "c", "d", "e"];
    let sent = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let len = rng.gen_range(0..=9);
        (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())].to_string()).collect()
    };
    let mut hyps = Vec::new();
    let mut refs = Vec::new();
    for _ in 0..sentences {
        let r = sent(rng);
        // Half the hypotheses are perturbed copies so high-order matches occur.
        let h = if rng.gen_bool(0.5) && !r.is_empty() {
            let mut h = r.clone();
            let k = rng.gen_range(0..h.len());
            h[k] = alphabet[rng.gen_range(0..alphabet.len())].to_string();
            if rng.gen_bool(0.3) {
                let last = h.len() - 1;
                h.swap(0, last);
            }
            h
        } else {
            sent(rng)
        };
        hyps.push(h);
        refs.push(r);
    }
    (hyps, refs)
}

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

// ---------- NMT ----------

const FD_STEP: f64 = 1e-4;
/// Denominator floor so gradients indistinguishable from zero compare
/// absolutely.
const FD_FLOOR: f64 = 1e-6;

pub fn tiny_config(rng: &mut ChaCha8Rng, seed: u64) -> NmtConfig {
    NmtConfig {
        layers: rng.gen_range(1..=2),
        hidden_size: rng.gen_range(1..=5),
        embed_size: rng.gen_range(1..=5),
        source_vocab: rng.gen_range(3..=7),
        target_vocab: rng.gen_range(3..=7),
        reverse_source: rng.gen_bool(0.5),
        init_range: 0.5,
        seed,
        ..NmtConfig::default()
    }
}

/// Worst relative error between analytic and central-difference gradients
/// over every parameter, and the number of parameters checked.
pub fn gradient_check(seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = tiny_config(&mut rng, seed);
    let mut model = init_model(&cfg, &mut rng).unwrap();
    let src: Vec<usize> = (0..rng.gen_range(1..=4)).map(|_| rng.gen_range(0..cfg.source_vocab)).collect();
    let tgt: Vec<usize> = (0..rng.gen_range(1..=4)).map(|_| rng.gen_range(0..cfg.target_vocab)).collect();
    let loss = |m: &NmtModel| -sentence_logprob(m, &src, &tgt).unwrap();

    let mut grad = model.zeros_like();
    loss_and_gradient(&model, &src, &tgt, &mut grad).unwrap();
    let analytic: Vec<Vec<f64>> = grad.tensors().iter().map(|(_, t)| t.data.clone()).collect();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (ti, a_t) in analytic.iter().enumerate() {
        for (k, &a) in a_t.iter().enumerate() {
            let orig = model.tensors_mut()[ti].data[k];
            model.tensors_mut()[ti].data[k] = orig + FD_STEP;
            let up = loss(&model);
            model.tensors_mut()[ti].data[k] = orig - FD_STEP;
            let down = loss(&model);
            model.tensors_mut()[ti].data[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR));
            count += 1;
        }
    }
    (worst, count)
}

/// A random toy model with a three-word target vocabulary.
pub fn toy_model(seed: u64) -> (NmtModel, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = NmtConfig {
        layers: rng.gen_range(1..=2),
        hidden_size: rng.gen_range(1..=3),
        embed_size: rng.gen_range(1..=3),
        source_vocab: 3,
        target_vocab: 3,
        init_range: 1.5,
        seed,
        ..NmtConfig::default()
    };
    let model = init_model(&cfg, &mut rng).unwrap();
    let src = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(0..3)).collect();
    (model, src)
}

/// Enumerates every output sequence up to `max_len`: sequences closed by EOS
/// and sequences cut at the cap. Returns the best (tokens without EOS,
/// log-probability), ties to the lexicographically smaller sequence.
pub fn brute_force_decode(model: &NmtModel, src: &[usize], max_len: usize) -> (Vec<usize>, f64) {
    let enc = encode_source(model, src).unwrap();
    let mut all: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut stack = vec![(Vec::<usize>::new(), 0.0, initial_state(model, &enc))];
    while let Some((prefix, score, state)) = stack.pop() {
        if prefix.len() == max_len {
            all.push((prefix, score));
            continue;
        }
        let prev = prefix.last().copied().unwrap_or(termnmt::corpus::BOS_ID);
        let (lp, next) = decode_step(model, prev, &state, &enc);
        for (y, l) in lp.iter().enumerate() {
            if y == EOS_ID {
                all.push((prefix.clone(), score + l));
            } else {
                let mut p = prefix.clone();
                p.push(y);
                stack.push((p, score + l, next.clone()));
            }
        }
    }
    all.into_iter()
        .reduce(|best, c| if c.1 > best.1 || (c.1 == best.1 && c.0 < best.0) { c } else { best })
        .unwrap()
}

// ---------- terms ----------

pub fn tagged(spec: &[(&str, &str)]) -> TaggedSentence {
    TaggedSentence::new(spec.iter().map(|(s, p)| Morpheme::new(*s, *p)).collect())
}

pub fn words(ws: &[String]) -> TaggedSentence {
    TaggedSentence::new(ws.iter().map(|w| Morpheme::new(w.clone(), "word")).collect())
}

/// Best candidate present in the target by exhaustive window search:
/// (target phrase, prob, first start).
pub fn step1_oracle(target: &[String], candidates: &[(String, f64)]) -> Option<(String, f64, usize)> {
    let mut best: Option<(String, f64, usize)> = None;
    for s in 0..target.len() {
        for e in s + 1..=target.len() {
            let phrase = target[s..e].join(" ");
            for (c, p) in candidates {
                if *c != phrase {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some((bc, bp, _)) => {
                        *p > *bp
                            || (*p == *bp && c.chars().count() > bc.chars().count())
                            || (*p == *bp && c.chars().count() == bc.chars().count() && c < bc)
                    }
                };
                // Windows are visited in start order, so keep the first start.
                if better {
                    best = Some((c.clone(), *p, s));
                }
            }
        }
    }
    best
}

pub fn pair(src: TaggedSentence, tgt: TaggedSentence) -> ParallelPair {
    ParallelPair::new(src, tgt)
}
