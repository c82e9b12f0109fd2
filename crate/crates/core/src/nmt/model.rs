//! Stacked-LSTM encoder-decoder with additive attention: parameters and the
//! inference-time forward pass.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::NmtConfig;
use super::tensor::{dot, log_softmax, sigmoid, softmax, Tensor};
use crate::corpus::{BOS_ID, EOS_ID};
use crate::{Error, Result};

/// One LSTM layer. Gate rows are ordered input, forget, output, candidate;
/// columns are `[input; previous hidden]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub w: Tensor,
    pub b: Tensor,
}

impl LstmLayer {
    fn new<R: Rng + ?Sized>(input: usize, hidden: usize, range: f64, rng: &mut R) -> Self {
        LstmLayer {
            w: Tensor::uniform(4 * hidden, input + hidden, range, rng),
            b: Tensor::uniform(1, 4 * hidden, range, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b.cols / 4
    }

    pub fn input(&self) -> usize {
        self.w.cols - self.hidden()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmtModel {
    pub config: NmtConfig,
    pub src_embed: Tensor,
    pub tgt_embed: Tensor,
    pub encoder: Vec<LstmLayer>,
    pub decoder: Vec<LstmLayer>,
    /// Projects the decoder's top hidden state into alignment space.
    pub att_query: Tensor,
    /// Projects encoder states into alignment space.
    pub att_key: Tensor,
    /// Alignment scoring vector (1 x hidden).
    pub att_v: Tensor,
    /// Maps `[decoder hidden; context]` to the attentional hidden state.
    pub combine_w: Tensor,
    pub combine_b: Tensor,
    /// Output projection, one row per target token.
    pub out_w: Tensor,
    pub out_b: Tensor,
}

/// Draws every parameter uniformly from `[-init_range, init_range]`.
pub fn init_model<R: Rng + ?Sized>(config: &NmtConfig, rng: &mut R) -> Result<NmtModel> {
    config.validate()?;
    let (h, e, r) = (config.hidden_size, config.embed_size, config.init_range);
    let src_embed = Tensor::uniform(config.source_vocab, e, r, rng);
    let tgt_embed = Tensor::uniform(config.target_vocab, e, r, rng);
    let encoder = (0..config.layers)
        .map(|l| LstmLayer::new(if l == 0 { e } else { h }, h, r, rng))
        .collect();
    // Decoder layer 0 also reads the previous attention context.
    let decoder = (0..config.layers)
        .map(|l| LstmLayer::new(if l == 0 { e + h } else { h }, h, r, rng))
        .collect();
    Ok(NmtModel {
        config: config.clone(),
        src_embed,
        tgt_embed,
        encoder,
        decoder,
        att_query: Tensor::uniform(h, h, r, rng),
        att_key: Tensor::uniform(h, h, r, rng),
        att_v: Tensor::uniform(1, h, r, rng),
        combine_w: Tensor::uniform(h, 2 * h, r, rng),
        combine_b: Tensor::uniform(1, h, r, rng),
        out_w: Tensor::uniform(config.target_vocab, h, r, rng),
        out_b: Tensor::uniform(1, config.target_vocab, r, rng),
    })
}

impl NmtModel {
    /// A model with every parameter zero (same shapes as `config` implies).
    pub fn zeros(config: &NmtConfig) -> Self {
        let mut m = init_model(config, &mut rand::rngs::mock::StepRng::new(0, 0))
            .expect("zeros() requires a valid config");
        m.for_each_tensor_mut(|_, t| t.fill(0.0));
        m
    }

    /// Zeroed copy with identical shapes, used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let mut m = self.clone();
        m.for_each_tensor_mut(|_, t| t.fill(0.0));
        m
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden_size
    }

    /// All parameter tensors with stable names, in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("src_embed".into(), &self.src_embed),
            ("tgt_embed".into(), &self.tgt_embed),
        ];
        for (side, layers) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (l, layer) in layers.iter().enumerate() {
                out.push((format!("{side}.{l}.w"), &layer.w));
                out.push((format!("{side}.{l}.b"), &layer.b));
            }
        }
        out.extend([
            ("att_query".into(), &self.att_query),
            ("att_key".into(), &self.att_key),
            ("att_v".into(), &self.att_v),
            ("combine_w".into(), &self.combine_w),
            ("combine_b".into(), &self.combine_b),
            ("out_w".into(), &self.out_w),
            ("out_b".into(), &self.out_b),
        ]);
        out
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor)) {
        f("src_embed", &mut self.src_embed);
        f("tgt_embed", &mut self.tgt_embed);
        for (side, layers) in [("encoder", &mut self.encoder), ("decoder", &mut self.decoder)] {
            for (l, layer) in layers.iter_mut().enumerate() {
                f(&format!("{side}.{l}.w"), &mut layer.w);
                f(&format!("{side}.{l}.b"), &mut layer.b);
            }
        }
        f("att_query", &mut self.att_query);
        f("att_key", &mut self.att_key);
        f("att_v", &mut self.att_v);
        f("combine_w", &mut self.combine_w);
        f("combine_b", &mut self.combine_b);
        f("out_w", &mut self.out_w);
        f("out_b", &mut self.out_b);
    }

    /// Mutable views of all tensors in [`NmtModel::tensors`] order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.src_embed, &mut self.tgt_embed];
        for layer in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.push(&mut layer.w);
            out.push(&mut layer.b);
        }
        out.extend([
            &mut self.att_query,
            &mut self.att_key,
            &mut self.att_v,
            &mut self.combine_w,
            &mut self.combine_b,
            &mut self.out_w,
            &mut self.out_b,
        ]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.data.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn check_ids(&self, source: &[usize], target: &[usize]) -> Result<()> {
        if let Some(&id) = source.iter().find(|&&i| i >= self.config.source_vocab) {
            return Err(Error::OutOfVocab { id, size: self.config.source_vocab });
        }
        if let Some(&id) = target.iter().find(|&&i| i >= self.config.target_vocab) {
            return Err(Error::OutOfVocab { id, size: self.config.target_vocab });
        }
        Ok(())
    }
}

/// Activations of one LSTM step, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct LstmStep {
    pub xh: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn lstm_step(layer: &LstmLayer, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
    let hsz = layer.hidden();
    let mut xh = Vec::with_capacity(x.len() + hsz);
    xh.extend_from_slice(x);
    xh.extend_from_slice(h_prev);
    let z = layer.w.matvec(&xh, Some(&layer.b.data));
    let i: Vec<f64> = z[..hsz].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = z[hsz..2 * hsz].iter().map(|&v| sigmoid(v)).collect();
    let o: Vec<f64> = z[2 * hsz..3 * hsz].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = z[3 * hsz..].iter().map(|&v| v.tanh()).collect();
    let c: Vec<f64> = (0..hsz).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..hsz).map(|k| o[k] * tanh_c[k]).collect();
    LstmStep {
        xh,
        i,
        f,
        o,
        g,
        c_prev: c_prev.to_vec(),
        c,
        tanh_c,
        h,
    }
}

/// Per-layer hidden and cell vectors plus the last attention context.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub context: Vec<f64>,
}

/// Encoder output: top-layer states in source order, their attention keys,
/// and the final per-layer state that seeds the decoder.
#[derive(Debug, Clone)]
pub struct EncodedSource {
    pub states: Vec<Vec<f64>>,
    pub keys: Vec<Vec<f64>>,
    pub final_h: Vec<Vec<f64>>,
    pub final_c: Vec<Vec<f64>>,
}

/// Encoder cache for one source sentence; `steps[t][layer]` in processing
/// order, `order[t]` the source position read at step `t`.
pub(crate) struct EncoderTrace {
    pub order: Vec<usize>,
    pub steps: Vec<Vec<LstmStep>>,
}

pub(crate) fn encode_traced(model: &NmtModel, source: &[usize], reverse: bool) -> Result<(EncodedSource, EncoderTrace)> {
    if source.is_empty() {
        return Err(Error::Empty("source sentence"));
    }
    model.check_ids(source, &[])?;
    let hsz = model.hidden();
    let layers = model.encoder.len();
    let order: Vec<usize> = if reverse {
        (0..source.len()).rev().collect()
    } else {
        (0..source.len()).collect()
    };
    let mut h = vec![vec![0.0; hsz]; layers];
    let mut c = vec![vec![0.0; hsz]; layers];
    let mut states = vec![Vec::new(); source.len()];
    let mut steps = Vec::with_capacity(source.len());
    for &pos in &order {
        let mut input = model.src_embed.row(source[pos]).to_vec();
        let mut per_layer = Vec::with_capacity(layers);
        for (l, layer) in model.encoder.iter().enumerate() {
            let step = lstm_step(layer, &input, &h[l], &c[l]);
            h[l].clone_from(&step.h);
            c[l].clone_from(&step.c);
            input.clone_from(&step.h);
            per_layer.push(step);
        }
        states[pos] = input;
        steps.push(per_layer);
    }
    let keys = states.iter().map(|s| model.att_key.matvec(s, None)).collect();
    Ok((
        EncodedSource {
            states,
            keys,
            final_h: h,
            final_c: c,
        },
        EncoderTrace { order, steps },
    ))
}

/// Top-layer encoder states, one per source position in original order.
/// With `reverse` the sentence is read right to left.
pub fn encode(model: &NmtModel, source: &[usize], reverse: bool) -> Result<Vec<Vec<f64>>> {
    Ok(encode_traced(model, source, reverse)?.0.states)
}

/// Encodes with the model's configured reading direction.
pub fn encode_source(model: &NmtModel, source: &[usize]) -> Result<EncodedSource> {
    Ok(encode_traced(model, source, model.config.reverse_source)?.0)
}

pub fn initial_state(model: &NmtModel, enc: &EncodedSource) -> DecoderState {
    DecoderState {
        h: enc.final_h.clone(),
        c: enc.final_c.clone(),
        context: vec![0.0; model.hidden()],
    }
}

/// Additive attention: `score_j = v · tanh(Q h + K s_j)`, softmax weights
/// and the weighted sum of encoder states.
pub fn attention_context(model: &NmtModel, top_hidden: &[f64], enc: &EncodedSource) -> (Vec<f64>, Vec<f64>) {
    attention_traced(model, top_hidden, enc).0
}

/// Returns ((context, weights), tanh activations per source position).
pub(crate) fn attention_traced(model: &NmtModel, top_hidden: &[f64], enc: &EncodedSource) -> ((Vec<f64>, Vec<f64>), Vec<Vec<f64>>) {
    let q = model.att_query.matvec(top_hidden, None);
    let v = model.att_v.row(0);
    let mut acts = Vec::with_capacity(enc.keys.len());
    let scores: Vec<f64> = enc
        .keys
        .iter()
        .map(|k| {
            let a: Vec<f64> = q.iter().zip(k).map(|(x, y)| (x + y).tanh()).collect();
            let s = dot(v, &a);
            acts.push(a);
            s
        })
        .collect();
    let weights = softmax(&scores);
    let mut context = vec![0.0; top_hidden.len()];
    for (w, s) in weights.iter().zip(&enc.states) {
        super::tensor::axpy(*w, s, &mut context);
    }
    ((context, weights), acts)
}

/// Everything one decoder step computes.
pub(crate) struct DecoderStep {
    pub prev: usize,
    pub layers: Vec<LstmStep>,
    pub att_acts: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// `[top hidden; context]`.
    pub joined: Vec<f64>,
    pub attn_hidden: Vec<f64>,
    pub logprobs: Vec<f64>,
}

pub(crate) fn decoder_step_traced(model: &NmtModel, prev: usize, state: &DecoderState, enc: &EncodedSource) -> (DecoderStep, DecoderState) {
    let mut input = model.tgt_embed.row(prev).to_vec();
    input.extend_from_slice(&state.context);
    let mut layers = Vec::with_capacity(model.decoder.len());
    let mut h = Vec::with_capacity(model.decoder.len());
    let mut c = Vec::with_capacity(model.decoder.len());
    for (l, layer) in model.decoder.iter().enumerate() {
        let step = lstm_step(layer, &input, &state.h[l], &state.c[l]);
        input.clone_from(&step.h);
        h.push(step.h.clone());
        c.push(step.c.clone());
        layers.push(step);
    }
    let ((context, weights), att_acts) = attention_traced(model, &input, enc);
    let mut joined = input;
    joined.extend_from_slice(&context);
    let attn_hidden: Vec<f64> = model
        .combine_w
        .matvec(&joined, Some(&model.combine_b.data))
        .into_iter()
        .map(f64::tanh)
        .collect();
    let logits = model.out_w.matvec(&attn_hidden, Some(&model.out_b.data));
    let logprobs = log_softmax(&logits);
    let next = DecoderState { h, c, context };
    (
        DecoderStep {
            prev,
            layers,
            att_acts,
            weights,
            joined,
            attn_hidden,
            logprobs,
        },
        next,
    )
}

/// One decoder step: log-distribution over the target vocabulary for the
/// token following `prev`, and the updated state.
pub fn decode_step(model: &NmtModel, prev: usize, state: &DecoderState, enc: &EncodedSource) -> (Vec<f64>, DecoderState) {
    let (step, next) = decoder_step_traced(model, prev, state, enc);
    (step.logprobs, next)
}

/// Teacher-forced per-step log-probabilities of `target` (which should end
/// in EOS).
pub fn step_logprobs(model: &NmtModel, source: &[usize], target: &[usize]) -> Result<Vec<f64>> {
    model.check_ids(source, target)?;
    let enc = encode_source(model, source)?;
    let mut state = initial_state(model, &enc);
    let mut prev = BOS_ID;
    let mut out = Vec::with_capacity(target.len());
    for &y in target {
        let (lp, next) = decode_step(model, prev, &state, &enc);
        out.push(lp[y]);
        state = next;
        prev = y;
    }
    Ok(out)
}

/// `log p(target | source)` as the sum of per-step log-probabilities.
pub fn sentence_logprob(model: &NmtModel, source: &[usize], target: &[usize]) -> Result<f64> {
    Ok(step_logprobs(model, source, target)?.iter().sum())
}

/// `exp(-Σ log p / Σ |target|)` over id-mapped pairs.
pub fn perplexity(model: &NmtModel, pairs: &[(Vec<usize>, Vec<usize>)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("perplexity dataset"));
    }
    let mut total = 0.0;
    let mut tokens = 0usize;
    for (s, t) in pairs {
        total += sentence_logprob(model, s, t)?;
        tokens += t.len();
    }
    if tokens == 0 {
        return Err(Error::Empty("perplexity targets"));
    }
    Ok((-total / tokens as f64).exp())
}

/// Appends EOS to a target id sequence.
pub fn with_eos(ids: &[usize]) -> Vec<usize> {
    let mut v = ids.to_vec();
    v.push(EOS_ID);
    v
}
