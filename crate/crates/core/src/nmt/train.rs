//! Minibatch SGD with global-norm clipping and the dev-perplexity decay
//! schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::DecayRule;
use super::grad::loss_and_gradient;
use super::model::{perplexity, NmtModel};
use crate::{Error, Result};

/// An id-mapped training example; the target ends in EOS.
pub type IdPair = (Vec<usize>, Vec<usize>);

/// Global L2 norm over every gradient tensor.
pub fn global_norm(grad: &NmtModel) -> f64 {
    grad.tensors().iter().map(|(_, t)| t.sq_norm()).sum::<f64>().sqrt()
}

/// Rescales the gradient so its global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(grad: &mut NmtModel, max_norm: f64) -> f64 {
    let norm = global_norm(grad);
    if norm > max_norm {
        let scale = max_norm / norm;
        for t in grad.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= scale);
        }
    }
    norm
}

/// Whether `current` fails to improve on the last three recorded
/// perplexities. Fewer than three recorded values never trigger a decay.
pub fn should_decay(history: &[f64], current: f64, rule: DecayRule) -> bool {
    if history.len() < 3 {
        return false;
    }
    let last = &history[history.len() - 3..];
    match rule {
        DecayRule::MinOfLastThree => current >= last.iter().copied().fold(f64::INFINITY, f64::min),
        DecayRule::AllOfLastThree => current >= last.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Learning rate after a dev check.
pub fn next_learning_rate(lr: f64, history: &[f64], current: f64, decay: f64, rule: DecayRule) -> f64 {
    if should_decay(history, current, rule) {
        lr * decay
    } else {
        lr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    /// Global minibatch count at the check.
    pub batch: usize,
    pub dev_perplexity: f64,
    /// Learning rate after applying the decay rule.
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub evals: Vec<EvalPoint>,
    /// Mean per-token training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub final_lr: f64,
}

/// Groups examples of similar target length: indices sorted by target
/// length are cut into consecutive batches.
pub fn length_buckets(pairs: &[IdPair], minibatch: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.sort_by_key(|&i| (pairs[i].1.len(), i));
    idx.chunks(minibatch.max(1)).map(<[usize]>::to_vec).collect()
}

/// Runs `config.epochs` epochs of SGD on the summed minibatch loss.
pub fn train(model: &mut NmtModel, train_pairs: &[IdPair], dev_pairs: &[IdPair]) -> Result<TrainHistory> {
    train_with_callback(model, train_pairs, dev_pairs, |_| {})
}

pub fn train_with_callback(
    model: &mut NmtModel,
    train_pairs: &[IdPair],
    dev_pairs: &[IdPair],
    mut on_eval: impl FnMut(&EvalPoint),
) -> Result<TrainHistory> {
    let cfg = model.config.clone();
    cfg.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut batches = length_buckets(train_pairs, cfg.minibatch);
    let mut grad = model.zeros_like();
    let mut lr = cfg.lr0;
    let mut history = TrainHistory::default();
    let mut recorded: Vec<f64> = Vec::new();
    let mut batch_no = 0usize;

    for _epoch in 0..cfg.epochs {
        batches.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_tokens) = (0.0, 0usize);
        for batch in &batches {
            grad.for_each_tensor_mut(|_, t| t.fill(0.0));
            let mut batch_loss = 0.0;
            for &i in batch {
                let (src, tgt) = &train_pairs[i];
                batch_loss += loss_and_gradient(model, src, tgt, &mut grad)?;
                epoch_tokens += tgt.len();
            }
            batch_no += 1;
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { batch: batch_no, loss: batch_loss });
            }
            epoch_loss += batch_loss;
            clip_gradients(&mut grad, cfg.clip_norm);
            for (p, g) in model.tensors_mut().into_iter().zip(grad.tensors()) {
                for (x, d) in p.data.iter_mut().zip(&g.1.data) {
                    *x -= lr * d;
                }
            }

            if batch_no % cfg.eval_every_batches == 0 && !dev_pairs.is_empty() {
                let ppl = perplexity(model, dev_pairs)?;
                lr = next_learning_rate(lr, &recorded, ppl, cfg.lr_decay, cfg.decay_rule);
                recorded.push(ppl);
                let point = EvalPoint {
                    batch: batch_no,
                    dev_perplexity: ppl,
                    lr,
                };
                on_eval(&point);
                history.evals.push(point);
            }
        }
        history.epoch_losses.push(epoch_loss / epoch_tokens.max(1) as f64);
    }
    history.final_lr = lr;
    Ok(history)
}
