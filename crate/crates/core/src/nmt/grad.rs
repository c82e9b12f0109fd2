//! Backpropagation through the encoder, attention and decoder for the
//! teacher-forced negative log-likelihood of one sentence pair.

use super::model::{decoder_step_traced, encode_traced, initial_state, LstmLayer, LstmStep, NmtModel};
use super::tensor::axpy;
use crate::corpus::BOS_ID;
use crate::Result;

/// Backward through one LSTM step. `dh`/`dc` are the incoming gradients on
/// the step's hidden and cell outputs. Accumulates into `grad`, returns
/// (d input, d h_prev, d c_prev).
fn lstm_backward(layer: &LstmLayer, grad: &mut LstmLayer, step: &LstmStep, dh: &[f64], dc_in: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hsz = layer.hidden();
    let mut dz = vec![0.0; 4 * hsz];
    let mut dc_prev = vec![0.0; hsz];
    for k in 0..hsz {
        let (i, f, o, g) = (step.i[k], step.f[k], step.o[k], step.g[k]);
        let tc = step.tanh_c[k];
        let d_o = dh[k] * tc;
        let dc = dc_in[k] + dh[k] * o * (1.0 - tc * tc);
        let d_i = dc * g;
        let d_g = dc * i;
        let d_f = dc * step.c_prev[k];
        dc_prev[k] = dc * f;
        dz[k] = d_i * i * (1.0 - i);
        dz[hsz + k] = d_f * f * (1.0 - f);
        dz[2 * hsz + k] = d_o * o * (1.0 - o);
        dz[3 * hsz + k] = d_g * (1.0 - g * g);
    }
    grad.w.outer_acc(&dz, &step.xh);
    axpy(1.0, &dz, &mut grad.b.data);
    let mut dxh = vec![0.0; step.xh.len()];
    layer.w.matvec_t_acc(&dz, &mut dxh);
    let dh_prev = dxh.split_off(layer.input());
    (dxh, dh_prev, dc_prev)
}

/// Returns `-log p(target | source)` and adds its gradient to `grad`.
pub fn loss_and_gradient(model: &NmtModel, source: &[usize], target: &[usize], grad: &mut NmtModel) -> Result<f64> {
    model.check_ids(source, target)?;
    let hsz = model.hidden();
    let n_layers = model.decoder.len();
    let (enc, trace) = encode_traced(model, source, model.config.reverse_source)?;

    // Forward over the target, keeping every step.
    let mut state = initial_state(model, &enc);
    let mut prev = BOS_ID;
    let mut steps = Vec::with_capacity(target.len());
    let mut loss = 0.0;
    for &y in target {
        let (step, next) = decoder_step_traced(model, prev, &state, &enc);
        loss -= step.logprobs[y];
        steps.push(step);
        state = next;
        prev = y;
    }

    let n_src = enc.states.len();
    let mut d_states = vec![vec![0.0; hsz]; n_src];
    let mut d_keys = vec![vec![0.0; hsz]; n_src];
    let mut dh_rec = vec![vec![0.0; hsz]; n_layers];
    let mut dc_rec = vec![vec![0.0; hsz]; n_layers];
    let mut d_ctx_carry = vec![0.0; hsz];
    let v = model.att_v.row(0);

    for (l, step) in steps.iter().enumerate().rev() {
        // Softmax output.
        let mut d_logits: Vec<f64> = step.logprobs.iter().map(|lp| lp.exp()).collect();
        d_logits[target[l]] -= 1.0;
        grad.out_w.outer_acc(&d_logits, &step.attn_hidden);
        axpy(1.0, &d_logits, &mut grad.out_b.data);
        let mut d_attn_hidden = vec![0.0; hsz];
        model.out_w.matvec_t_acc(&d_logits, &mut d_attn_hidden);

        // Attentional hidden = tanh(Wc [h; ctx] + bc).
        let d_pre: Vec<f64> = d_attn_hidden
            .iter()
            .zip(&step.attn_hidden)
            .map(|(d, a)| d * (1.0 - a * a))
            .collect();
        grad.combine_w.outer_acc(&d_pre, &step.joined);
        axpy(1.0, &d_pre, &mut grad.combine_b.data);
        let mut d_joined = vec![0.0; 2 * hsz];
        model.combine_w.matvec_t_acc(&d_pre, &mut d_joined);
        let mut d_ctx = d_joined.split_off(hsz);
        let mut d_top = d_joined;
        axpy(1.0, &d_ctx_carry, &mut d_ctx);

        // Context = Σ α_j s_j, α = softmax(score).
        let d_alpha: Vec<f64> = enc
            .states
            .iter()
            .map(|s| s.iter().zip(&d_ctx).map(|(a, b)| a * b).sum())
            .collect();
        let mean: f64 = step.weights.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
        let mut d_query = vec![0.0; hsz];
        for j in 0..n_src {
            let alpha = step.weights[j];
            axpy(alpha, &d_ctx, &mut d_states[j]);
            let d_score = alpha * (d_alpha[j] - mean);
            if d_score == 0.0 {
                continue;
            }
            let act = &step.att_acts[j];
            axpy(d_score, act, &mut grad.att_v.data);
            for k in 0..hsz {
                let d = d_score * v[k] * (1.0 - act[k] * act[k]);
                d_query[k] += d;
                d_keys[j][k] += d;
            }
        }
        let top_h = &step.layers[n_layers - 1].h;
        grad.att_query.outer_acc(&d_query, top_h);
        model.att_query.matvec_t_acc(&d_query, &mut d_top);

        // Decoder stack, top to bottom.
        let mut d_in = d_top;
        for layer in (0..n_layers).rev() {
            axpy(1.0, &dh_rec[layer], &mut d_in);
            let (dx, dh_prev, dc_prev) = lstm_backward(
                &model.decoder[layer],
                &mut grad.decoder[layer],
                &step.layers[layer],
                &d_in,
                &dc_rec[layer],
            );
            dh_rec[layer] = dh_prev;
            dc_rec[layer] = dc_prev;
            d_in = dx;
        }
        // Layer-0 input is [embedding; previous context].
        let e = model.config.embed_size;
        axpy(1.0, &d_in[..e], grad.tgt_embed.row_mut(step.prev));
        d_ctx_carry = d_in[e..].to_vec();
    }

    // Attention keys K s_j.
    for j in 0..n_src {
        grad.att_key.outer_acc(&d_keys[j], &enc.states[j]);
        let mut ds = vec![0.0; hsz];
        model.att_key.matvec_t_acc(&d_keys[j], &mut ds);
        axpy(1.0, &ds, &mut d_states[j]);
    }

    // Encoder, backwards in processing order.
    for (t, layer_steps) in trace.steps.iter().enumerate().rev() {
        let pos = trace.order[t];
        let mut d_in = std::mem::take(&mut d_states[pos]);
        for layer in (0..n_layers).rev() {
            axpy(1.0, &dh_rec[layer], &mut d_in);
            let (dx, dh_prev, dc_prev) = lstm_backward(
                &model.encoder[layer],
                &mut grad.encoder[layer],
                &layer_steps[layer],
                &d_in,
                &dc_rec[layer],
            );
            dh_rec[layer] = dh_prev;
            dc_rec[layer] = dc_prev;
            d_in = dx;
        }
        axpy(1.0, &d_in, grad.src_embed.row_mut(source[pos]));
    }

    Ok(loss)
}
