//! Hand-computed forward passes, search oracles and schedule checks.

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use termnmt::corpus::{BOS_ID, EOS_ID};
use termnmt::nmt::*;

use common::{brute_force_decode, gradient_check, toy_model};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn small(hidden: usize, layers: usize, vocab: usize) -> NmtConfig {
    NmtConfig {
        layers,
        hidden_size: hidden,
        embed_size: hidden,
        source_vocab: vocab,
        target_vocab: vocab,
        ..NmtConfig::default()
    }
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..8 {
        let (worst, n) = gradient_check(seed);
        assert!(worst < 1e-4, "seed {seed}: worst relative error {worst:e} over {n} parameters");
    }
}

#[test]
fn init_is_bounded_and_deterministic() {
    let cfg = small(8, 2, 11);
    let a = init_model(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let b = init_model(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let c = init_model(&cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    for (name, t) in a.tensors() {
        assert!(t.data.iter().all(|x| x.abs() <= 0.06), "{name} out of range");
    }
    // One output row per target token, each hidden_size wide.
    assert_eq!(a.out_w.shape(), (11, 8));
}

#[test]
fn zero_weights_encoder_is_a_fixed_bias_recurrence() {
    let cfg = NmtConfig {
        reverse_source: false,
        ..small(1, 1, 5)
    };
    let mut m = NmtModel::zeros(&cfg);
    let (bi, bf, bo, bg) = (0.3, -0.7, 1.1, 0.9);
    m.encoder[0].b.data.copy_from_slice(&[bi, bf, bo, bg]);
    let states = encode(&m, &[4, 2, 3], false).unwrap();

    let (i, f, o, g) = (sigmoid(bi), sigmoid(bf), sigmoid(bo), bg.tanh());
    let mut c = 0.0;
    for s in &states {
        c = f * c + i * g;
        assert!((s[0] - o * c.tanh()).abs() < 1e-15);
    }

    let all_zero = NmtModel::zeros(&cfg);
    for s in encode(&all_zero, &[1, 2], true).unwrap() {
        assert_eq!(s, vec![0.0]);
    }
}

#[test]
fn encode_shapes_and_empty_source() {
    let m = init_model(&small(6, 2, 9), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let out = encode(&m, &[1, 5, 8, 2], true).unwrap();
    assert_eq!(out.len(), 4);
    assert!(out.iter().all(|v| v.len() == 6));
    assert!(encode(&m, &[], false).is_err());
    assert!(encode(&m, &[9], false).is_err());
}

#[test]
fn palindrome_reads_the_same_both_ways() {
    let m = init_model(&small(4, 2, 6), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let ids = [3, 5, 1, 5, 3];
    let fwd = encode(&m, &ids, false).unwrap();
    let rev = encode(&m, &ids, true).unwrap();
    // Reading right to left sees the same token sequence, so position j in
    // one direction matches position n-1-j in the other.
    for j in 0..ids.len() {
        assert_eq!(fwd[j], rev[ids.len() - 1 - j]);
    }
}

fn one_dim_attention() -> (NmtModel, f64) {
    let mut m = NmtModel::zeros(&small(1, 1, 3));
    m.att_key.data[0] = 1.0;
    let v = 1.0 / 1f64.tanh();
    m.att_v.data[0] = v;
    (m, v)
}

fn encoded(m: &NmtModel, states: &[f64]) -> EncodedSource {
    EncodedSource {
        states: states.iter().map(|&s| vec![s]).collect(),
        keys: states.iter().map(|&s| m.att_key.matvec(&[s], None)).collect(),
        final_h: vec![vec![0.0]],
        final_c: vec![vec![0.0]],
    }
}

#[test]
fn attention_single_state() {
    let (m, _) = one_dim_attention();
    let (ctx, w) = attention_context(&m, &[0.4], &encoded(&m, &[0.7]));
    assert_eq!(w, vec![1.0]);
    assert_eq!(ctx, vec![0.7]);
}

#[test]
fn attention_equal_scores_split_evenly() {
    let (m, _) = one_dim_attention();
    let (ctx, w) = attention_context(&m, &[0.0], &encoded(&m, &[0.0, 0.0]));
    assert_eq!(w, vec![0.5, 0.5]);
    assert_eq!(ctx, vec![0.0]);
}

#[test]
fn attention_scores_one_and_zero() {
    // With K = 1 and v = 1/tanh(1), states (1, 0) score exactly (1, 0).
    let (m, _) = one_dim_attention();
    let (ctx, w) = attention_context(&m, &[0.0], &encoded(&m, &[1.0, 0.0]));
    let e = std::f64::consts::E;
    assert!((w[0] - e / (e + 1.0)).abs() < 1e-12);
    assert!((w[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
    assert!((ctx[0] - e / (e + 1.0)).abs() < 1e-12);
}

#[test]
fn zero_model_is_uniform() {
    let v = 7;
    let m = NmtModel::zeros(&small(3, 2, v));
    let enc = encode_source(&m, &[4, 5]).unwrap();
    let (lp, _) = decode_step(&m, BOS_ID, &initial_state(&m, &enc), &enc);
    for x in &lp {
        assert!((x + (v as f64).ln()).abs() < 1e-12);
    }
    let target = [4, 6, 5, EOS_ID];
    let s = sentence_logprob(&m, &[1, 2, 3], &target).unwrap();
    assert!((s + 4.0 * (v as f64).ln()).abs() < 1e-12);
    let ppl = perplexity(&m, &[(vec![1], vec![EOS_ID]), (vec![2, 3], target.to_vec())]).unwrap();
    assert!((ppl - v as f64).abs() < 1e-9);
    assert!(perplexity(&m, &[]).is_err());
}

#[test]
fn hand_built_one_step_model() {
    // Hidden size 1, target vocabulary {<unk>, <s>, </s>}.
    let cfg = NmtConfig {
        reverse_source: false,
        ..small(1, 1, 3)
    };
    let mut m = NmtModel::zeros(&cfg);
    let (bi, bo, bg) = (0.5, 1.0, 1.5);
    m.encoder[0].b.data.copy_from_slice(&[bi, 0.0, bo, bg]);
    m.combine_w.data.copy_from_slice(&[0.8, -1.2]);
    m.out_w.data.copy_from_slice(&[0.0, -1.0, 2.0]);
    m.out_b.data.copy_from_slice(&[0.1, 0.0, -0.3]);

    // Encoder, one source word: c = σ(bi)·tanh(bg), h = σ(bo)·tanh(c).
    let c_enc = sigmoid(bi) * bg.tanh();
    let h_enc = sigmoid(bo) * c_enc.tanh();
    // Decoder starts from the encoder state; with zero weights every gate is
    // σ(0) = 1/2 and the candidate is tanh(0) = 0.
    let c_dec = 0.5 * c_enc;
    let h_dec = 0.5 * c_dec.tanh();
    // One encoder state, so the context is that state.
    let attn = (0.8 * h_dec - 1.2 * h_enc).tanh();
    let logits = [0.1, -attn, 2.0 * attn - 0.3];
    let lse = logits.iter().map(|l: &f64| l.exp()).sum::<f64>().ln();
    let expected = logits[2] - lse;

    let got = sentence_logprob(&m, &[1], &[EOS_ID]).unwrap();
    assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    let ppl = perplexity(&m, &[(vec![1], vec![EOS_ID])]).unwrap();
    assert!((ppl - (-expected).exp()).abs() < 1e-12);
}

#[test]
fn sentence_logprob_is_sum_of_steps() {
    let m = init_model(&small(4, 2, 6), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let src = [1, 4, 5];
    let tgt = [3, 4, EOS_ID];
    let enc = encode_source(&m, &src).unwrap();
    let mut state = initial_state(&m, &enc);
    let mut prev = BOS_ID;
    let mut total = 0.0;
    for &y in &tgt {
        let (lp, next) = decode_step(&m, prev, &state, &enc);
        let (lp2, next2) = decode_step(&m, prev, &state, &enc);
        assert_eq!(lp, lp2);
        assert_eq!(next, next2);
        assert!((lp.iter().map(|x| x.exp()).sum::<f64>() - 1.0).abs() < 1e-6);
        total += lp[y];
        state = next;
        prev = y;
    }
    assert_eq!(sentence_logprob(&m, &src, &tgt).unwrap(), total);
    assert!(sentence_logprob(&m, &src, &[6]).is_err());
}

#[test]
fn beam_of_one_is_greedy() {
    for seed in 0..30 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = init_model(
            &NmtConfig {
                init_range: 1.0,
                ..small(3, 1, 6)
            },
            &mut rng,
        )
        .unwrap();
        let src = [1, 4, 5];
        assert_eq!(beam_decode(&m, &src, 1, 6).unwrap(), greedy_decode(&m, &src, 6).unwrap());
    }
}

#[test]
fn exhaustive_beam_matches_enumeration() {
    for seed in 0..50 {
        let (m, src) = toy_model(seed);
        let got = beam_decode(&m, &src, 27, 3).unwrap();
        let (tokens, lp) = brute_force_decode(&m, &src, 3);
        assert_eq!((got.tokens, got.logprob), (tokens, lp), "model {seed}");
    }
}

#[test]
fn immediate_eos_gives_empty_output() {
    let mut m = NmtModel::zeros(&small(2, 1, 5));
    m.out_b.data[EOS_ID] = 3.0;
    let r = beam_decode(&m, &[4], 4, 10).unwrap();
    assert!(r.tokens.is_empty());
    assert!(r.finished);
    assert!(beam_decode(&m, &[4], 0, 10).is_err());
}

#[test]
fn cap_finalizes_live_hypotheses() {
    // EOS is never likely, so the cap ends the search.
    let mut m = NmtModel::zeros(&small(2, 1, 5));
    m.out_b.data[EOS_ID] = -20.0;
    m.out_b.data[4] = 2.0;
    let r = beam_decode(&m, &[4], 3, 4).unwrap();
    assert_eq!(r.tokens, vec![4; 4]);
    assert!(!r.finished);
}

fn gradient_with_norm(norm: f64) -> NmtModel {
    let mut g = NmtModel::zeros(&small(2, 1, 4));
    // A 3-4-5 style split across two tensors.
    g.out_b.data[0] = 0.6 * norm;
    g.combine_b.data[1] = 0.8 * norm;
    g
}

#[test]
fn clipping_rescales_only_large_gradients() {
    let mut g = gradient_with_norm(10.0);
    assert!((clip_gradients(&mut g, 5.0) - 10.0).abs() < 1e-12);
    assert!((global_norm(&g) - 5.0).abs() < 1e-12);
    assert!((g.out_b.data[0] - 3.0).abs() < 1e-12);

    let mut g = gradient_with_norm(3.0);
    let before = g.clone();
    clip_gradients(&mut g, 5.0);
    assert_eq!(g, before);

    let mut z = NmtModel::zeros(&small(2, 1, 4));
    clip_gradients(&mut z, 5.0);
    assert_eq!(z, NmtModel::zeros(&small(2, 1, 4)));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    use termnmt::corpus::Vocabulary;
    let words = [vec!["a", "b"], vec!["b", "c"]];
    let sv = Vocabulary::build(words.iter().map(|s| s.iter()), 100, 2).unwrap();
    let tv = Vocabulary::build(words.iter().map(|s| s.iter()), 100, 2).unwrap();
    let cfg = NmtConfig {
        source_vocab: sv.len(),
        target_vocab: tv.len(),
        ..small(3, 2, 0)
    };
    let m = init_model(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let ck = Checkpoint::new(m.clone(), sv, tv);
    let mut buf = Vec::new();
    ck.write(&mut buf).unwrap();
    let back = Checkpoint::read(buf.as_slice()).unwrap();
    assert_eq!(back, ck);
    let tgt = [6, 7, EOS_ID];
    assert_eq!(
        sentence_logprob(&back.model, &[6, 8], &tgt).unwrap().to_bits(),
        sentence_logprob(&m, &[6, 8], &tgt).unwrap().to_bits()
    );

    let mut bad = String::from_utf8(buf).unwrap();
    bad = bad.replacen("termnmt-checkpoint", "other-format", 1);
    assert!(Checkpoint::read(bad.as_bytes()).is_err());
}

#[test]
fn memorization_loss_decreases() {
    use termnmt::synth::{generate_synthetic_corpus, GrammarConfig};
    let c = generate_synthetic_corpus(2, 50, &GrammarConfig::default()).unwrap();
    let p = termnmt::pipeline::preprocess(&c.pairs, &c.phrase_table, &Default::default());
    let mut cfg = NmtConfig::desk_scale(1000, 1000);
    cfg.hidden_size = 32;
    cfg.embed_size = 32;
    cfg.minibatch = 5;
    cfg.epochs = 5;
    let (_, history) = termnmt::pipeline::train_checkpoint(&cfg, 20, &p.tokenized, &p.tokenized, |_| {}).unwrap();
    assert_eq!(history.epoch_losses.len(), 5);
    for w in history.epoch_losses.windows(2) {
        assert!(w[1] <= w[0] * 1.01, "losses {:?}", history.epoch_losses);
    }
    assert!(history.epoch_losses[4] < history.epoch_losses[0]);
}

#[test]
fn training_rejects_empty_set_and_records_evals() {
    let cfg = NmtConfig {
        eval_every_batches: 1,
        minibatch: 1,
        epochs: 2,
        ..small(2, 1, 5)
    };
    let mut m = init_model(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(train(&mut m, &[], &[]).is_err());
    let data = vec![(vec![4], vec![3, EOS_ID]), (vec![3, 4], vec![4, EOS_ID])];
    let h = train(&mut m, &data, &data).unwrap();
    assert_eq!(h.evals.len(), 4);
    assert_eq!(h.evals.iter().map(|e| e.batch).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    assert_eq!(h.final_lr, h.evals.last().unwrap().lr);
}
