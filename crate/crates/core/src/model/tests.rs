use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::text::PAD;

fn small(v: Variant) -> ModelConfig {
    ModelConfig {
        embed_dim: 3,
        hidden_dim: 4,
        attn_dim: 4,
        ..ModelConfig::new(v, 9, 5, 3)
    }
}

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

/// Random batch with lengths 3 and 2 (the second row padded).
fn batch(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Batch {
    let lengths = [3usize, 2];
    let examples: Vec<Example> = lengths
        .iter()
        .enumerate()
        .map(|(i, &len)| Example {
            tokens: vec![String::new(); len],
            ids: (0..len).map(|_| rng.random_range(1..cfg.vocab_size)).collect(),
            lex: (0..len * cfg.lex_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            label: i % cfg.num_classes,
        })
        .collect();
    Batch::from_examples(&examples, &[0, 1], cfg.lex_dim).unwrap()
}

/// Biases drawn at random too, so the oracle sees non-trivial values.
fn random_params(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> ModelParams {
    let mut p = ModelParams::init(cfg, rng).unwrap();
    for (name, t) in p.entries_mut() {
        if name != "embedding" {
            for v in t.data_mut() {
                *v = rng.random_range(-0.8..0.8);
            }
        }
    }
    p
}

fn eval_forward(p: &ModelParams, cfg: &ModelConfig, b: &Batch) -> (Tensor, Tensor) {
    let tape = Tape::new();
    let vars = bind(&tape, p);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let f = forward(&tape, &vars, cfg, b, Mode::Eval, &mut rng).unwrap();
    (f.logits.value(), f.attention.value())
}

// ---- scalar-loop oracle ------------------------------------------------

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `W · x + b` with `W` stored row-major `[out×in]`.
fn affine(w: &Tensor, b: Option<&Tensor>, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    assert_eq!(cols, x.len());
    (0..rows)
        .map(|r| {
            let mut s = b.map_or(0.0, |b| b.data()[r]);
            for (k, xk) in x.iter().enumerate() {
                s += w.data()[r * cols + k] * xk;
            }
            s
        })
        .collect()
}

/// Direct per-example evaluation of the classifier, written without the
/// tape: returns logits per row and the attention over valid positions.
fn oracle(p: &ModelParams, cfg: &ModelConfig, b: &Batch) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out = Vec::new();
    for row in 0..b.size() {
        let len = b.lengths[row];
        let mut h = vec![0.0; cfg.hidden_dim];
        let mut c = vec![0.0; cfg.hidden_dim];
        let mut hs = Vec::new();
        for step in 0..len {
            let mut x = p.embedding.row(b.token(row, step)).to_vec();
            if cfg.variant.concat_embeddings() {
                x.extend_from_slice(b.lex(row, step));
            }
            x.extend_from_slice(&h);
            let l = &p.lstm;
            let i = affine(&l.w_i, Some(&l.b_i), &x);
            let f = affine(&l.w_f, Some(&l.b_f), &x);
            let o = affine(&l.w_o, Some(&l.b_o), &x);
            let g = affine(&l.w_g, Some(&l.b_g), &x);
            for k in 0..cfg.hidden_dim {
                c[k] = sig(f[k]) * c[k] + sig(i[k]) * g[k].tanh();
                h[k] = sig(o[k]) * c[k].tanh();
            }
            hs.push(h.clone());
        }
        let scores: Vec<f64> = (0..len)
            .map(|step| {
                let h = &hs[step];
                let lex = b.lex(row, step);
                let f: Vec<f64> = match &p.conditioning {
                    ConditioningParams::None => affine(
                        p.attention.w_a.as_ref().unwrap(),
                        p.attention.b_a.as_ref(),
                        h,
                    )
                    .into_iter()
                    .map(f64::tanh)
                    .collect(),
                    ConditioningParams::Concat { w_c, b_c } => {
                        let hc: Vec<f64> = h.iter().chain(lex).copied().collect();
                        affine(w_c, Some(b_c), &hc).into_iter().map(f64::tanh).collect()
                    }
                    ConditioningParams::Gate { w_g, b_g } => affine(w_g, Some(b_g), lex)
                        .iter()
                        .zip(h)
                        .map(|(g, h)| sig(*g) * h)
                        .collect(),
                    ConditioningParams::Affine {
                        w_gamma,
                        b_gamma,
                        w_beta,
                        b_beta,
                    } => {
                        let gamma = affine(w_gamma, Some(b_gamma), lex);
                        let beta = affine(w_beta, Some(b_beta), lex);
                        (0..h.len()).map(|k| gamma[k] * h[k] + beta[k]).collect()
                    }
                };
                f.iter().zip(p.attention.v_a.data()).map(|(a, b)| a * b).sum()
            })
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = e.iter().sum();
        let a: Vec<f64> = e.iter().map(|v| v / z).collect();
        let mut r = vec![0.0; cfg.hidden_dim];
        for (w, h) in a.iter().zip(&hs) {
            for k in 0..r.len() {
                r[k] += w * h[k];
            }
        }
        let logits = affine(&p.classifier.w_out, Some(&p.classifier.b_out), &r);
        out.push((logits, a));
    }
    out
}

#[test]
fn forward_matches_scalar_oracle_for_every_variant() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for v in Variant::ALL {
        let cfg = small(v);
        let p = random_params(&cfg, &mut rng);
        let b = batch(&cfg, &mut rng);
        let (logits, attn) = eval_forward(&p, &cfg, &b);
        for (row, (ol, oa)) in oracle(&p, &cfg, &b).into_iter().enumerate() {
            for (k, v) in ol.iter().enumerate() {
                assert!((logits.at(&[row, k]) - v).abs() < 1e-12, "{cfg:?} logits");
            }
            for (s, v) in oa.iter().enumerate() {
                assert!((attn.at(&[row, s]) - v).abs() < 1e-12, "{cfg:?} attention");
            }
        }
    }
}

#[test]
fn lstm_step_hand_example() {
    let tape = Tape::new();
    let v = |s: &[usize], d: &[f64]| tape.constant(t(s, d));
    let p = LstmParams {
        w_i: v(&[1, 3], &[0.5, 0.0, 0.0]),
        b_i: v(&[1], &[0.0]),
        w_f: v(&[1, 3], &[0.0, 0.0, 0.0]),
        b_f: v(&[1], &[1.0]),
        w_o: v(&[1, 3], &[1.0, 0.0, 0.0]),
        b_o: v(&[1], &[0.0]),
        w_g: v(&[1, 3], &[0.0, 1.0, 2.0]),
        b_g: v(&[1], &[0.0]),
    };
    let (h, c) = lstm_step(v(&[1, 2], &[1.0, -1.0]), v(&[1, 1], &[0.5]), v(&[1, 1], &[0.2]), &p).unwrap();
    assert!((c.value().data()[0] - 0.14621171572600097).abs() < 1e-15);
    assert!((h.value().data()[0] - 0.10613409793486603).abs() < 1e-15);
}

fn score_rows(
    cfg: &ModelConfig,
    attn: &AttentionParams,
    cond: &ConditioningParams,
    h: &Tensor,
    c: &Tensor,
) -> Vec<f64> {
    let tape = Tape::new();
    let a = AttentionParams {
        w_a: attn.w_a.as_ref().map(|w| tape.constant(w.clone())),
        b_a: attn.b_a.as_ref().map(|b| tape.constant(b.clone())),
        v_a: tape.constant(attn.v_a.clone()),
    };
    let p = ModelParams {
        embedding: Tensor::zeros([1, 1]),
        lstm: ModelParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap().lstm,
        attention: attn.clone(),
        conditioning: cond.clone(),
        classifier: ClassifierParams {
            w_out: Tensor::zeros([1, 1]),
            b_out: Tensor::zeros([1]),
        },
    };
    let cv = p.map(|_, t| tape.constant(t.clone())).conditioning;
    let f = score_input(tape.constant(h.clone()), tape.constant(c.clone()), &a, &cv).unwrap();
    let n = f.shape()[0];
    let w = f.shape()[1];
    f.matmul(a.v_a.reshape([w, 1]).unwrap()).unwrap().value().reshape([n]).unwrap().into_data()
}

#[test]
fn gate_with_zero_weights_halves_annotations() {
    let cfg = small(Variant::AttnGate);
    let h = t(&[2, 4], &[1.0, -2.0, 0.5, 3.0, 0.0, 1.0, 1.0, -1.0]);
    let c = t(&[2, 5], &[0.3; 10]);
    let attn = AttentionParams {
        w_a: None,
        b_a: None,
        v_a: Tensor::vector(vec![1.0, 2.0, 3.0, 4.0]),
    };
    let cond = ConditioningParams::Gate {
        w_g: Tensor::zeros([4, 5]),
        b_g: Tensor::zeros([4]),
    };
    let s = score_rows(&cfg, &attn, &cond, &h, &c);
    assert_eq!(s, vec![0.5 * (1.0 - 4.0 + 1.5 + 12.0), 0.5 * (0.0 + 2.0 + 3.0 - 4.0)]);
}

#[test]
fn affine_with_constant_scale_equals_gate() {
    let cfg = small(Variant::AttnAffine);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = Tensor::new([3, 4], (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let c = Tensor::new([3, 5], (0..15).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let attn = AttentionParams {
        w_a: None,
        b_a: None,
        v_a: Tensor::vector(vec![0.3, -0.7, 1.1, 0.2]),
    };
    let logit = 0.4f64;
    let gate = ConditioningParams::Gate {
        w_g: Tensor::zeros([4, 5]),
        b_g: Tensor::full([4], logit),
    };
    let aff = ConditioningParams::Affine {
        w_gamma: Tensor::zeros([4, 5]),
        b_gamma: Tensor::full([4], sig(logit)),
        w_beta: Tensor::zeros([4, 5]),
        b_beta: Tensor::zeros([4]),
    };
    let a = score_rows(&cfg, &attn, &gate, &h, &c);
    let b = score_rows(&cfg, &attn, &aff, &h, &c);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-14);
    }
    // Identity affine (γ = 1, β = 0) scores v_a · h directly.
    let id = ConditioningParams::Affine {
        w_gamma: Tensor::zeros([4, 5]),
        b_gamma: Tensor::full([4], 1.0),
        w_beta: Tensor::zeros([4, 5]),
        b_beta: Tensor::zeros([4]),
    };
    let s = score_rows(&cfg, &attn, &id, &h, &c);
    for (r, v) in s.iter().enumerate() {
        let direct: f64 = h.row(r).iter().zip(attn.v_a.data()).map(|(a, b)| a * b).sum();
        assert!((v - direct).abs() < 1e-14);
    }
}

#[test]
fn concat_with_zero_lexicon_columns_equals_plain() {
    let cfg = small(Variant::AttnConc);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut r = |n| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let h = Tensor::new([3, 4], r(12)).unwrap();
    let c = Tensor::new([3, 5], r(15)).unwrap();
    let w_a = Tensor::new([4, 4], r(16)).unwrap();
    let b_a = Tensor::vector(r(4));
    let v_a = Tensor::vector(r(4));
    let mut wc = vec![0.0; 4 * 9];
    for i in 0..4 {
        wc[i * 9..i * 9 + 4].copy_from_slice(w_a.row(i));
    }
    let plain = score_rows(
        &cfg,
        &AttentionParams {
            w_a: Some(w_a),
            b_a: Some(b_a.clone()),
            v_a: v_a.clone(),
        },
        &ConditioningParams::None,
        &h,
        &c,
    );
    let conc = score_rows(
        &cfg,
        &AttentionParams {
            w_a: None,
            b_a: None,
            v_a,
        },
        &ConditioningParams::Concat {
            w_c: Tensor::new([4, 9], wc).unwrap(),
            b_c: b_a,
        },
        &h,
        &c,
    );
    assert_eq!(plain, conc);
}

#[test]
fn extra_padding_changes_nothing_in_eval() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for v in Variant::ALL {
        let cfg = small(v);
        let p = random_params(&cfg, &mut rng);
        let b = batch(&cfg, &mut rng);
        let (l1, a1) = eval_forward(&p, &cfg, &b);
        let (l2, a2) = eval_forward(&p, &cfg, &b.padded(4));
        assert_eq!(l1, l2, "{v}");
        for row in 0..2 {
            for s in 0..b.max_len {
                assert_eq!(a1.at(&[row, s]), a2.at(&[row, s]));
            }
            for s in b.max_len..b.max_len + 4 {
                assert_eq!(a2.at(&[row, s]), 0.0);
            }
        }
    }
}

#[test]
fn lexicon_reaches_attention_only_when_conditioned() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for v in Variant::ALL {
        let cfg = small(v);
        let p = random_params(&cfg, &mut rng);
        let b = batch(&cfg, &mut rng);
        let (_, base) = eval_forward(&p, &cfg, &b);
        let mut moved = b.clone();
        for x in moved.lex_feats.iter_mut() {
            *x += 0.5;
        }
        let (_, shifted) = eval_forward(&p, &cfg, &moved);
        let changed = base.data().iter().zip(shifted.data()).any(|(a, b)| (a - b).abs() > 1e-9);
        assert_eq!(changed, v != Variant::Baseline, "{v}");
    }
}

#[test]
fn train_mode_is_seeded_and_eval_mode_is_not_random() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let cfg = small(Variant::AttnGate);
    let p = random_params(&cfg, &mut rng);
    let b = batch(&cfg, &mut rng);
    let run = |mode, seed| {
        let tape = Tape::new();
        let vars = bind(&tape, &p);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        forward(&tape, &vars, &cfg, &b, mode, &mut r).unwrap().logits.value()
    };
    assert_eq!(run(Mode::Train, 1), run(Mode::Train, 1));
    assert_ne!(run(Mode::Train, 1), run(Mode::Train, 2));
    assert_eq!(run(Mode::Eval, 1), run(Mode::Eval, 2));
}

#[test]
fn mismatched_lexicon_width_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let cfg = small(Variant::AttnGate);
    let p = random_params(&cfg, &mut rng);
    let mut other = cfg.clone();
    other.lex_dim = 2;
    let b = batch(&other, &mut rng);
    let tape = Tape::new();
    let vars = bind(&tape, &p);
    assert!(forward(&tape, &vars, &cfg, &b, Mode::Eval, &mut rng).is_err());
}

// ---- finite-difference check of the whole model ------------------------

const STEP: f64 = 1e-5;

fn loss_at(p: &ModelParams, cfg: &ModelConfig, b: &Batch, mode: Mode, lex: Option<&[f64]>) -> f64 {
    let tape = Tape::new();
    let vars = bind(&tape, p);
    let mut b = b.clone();
    if let Some(l) = lex {
        b.lex_feats = l.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let f = forward(&tape, &vars, cfg, &b, mode, &mut rng).unwrap();
    f.loss(&b.labels).unwrap().value().item().unwrap()
}

fn assert_close(a: f64, n: f64, what: &str) {
    let err = (a - n).abs();
    assert!(err <= 1e-7 || err <= 1e-4 * a.abs().max(n.abs()), "{what}: tape {a} vs finite difference {n}");
}

fn full_gradient_check(v: Variant, mode: Mode) {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = small(v);
    let p = random_params(&cfg, &mut rng);
    let b = batch(&cfg, &mut rng);

    let tape = Tape::new();
    let vars = bind(&tape, &p);
    let mut frng = ChaCha8Rng::seed_from_u64(77);
    let f = forward(&tape, &vars, &cfg, &b, mode, &mut frng).unwrap();
    let grads = tape.backward(f.loss(&b.labels).unwrap()).unwrap();

    let names: Vec<&str> = p.entries().iter().map(|(n, _)| *n).collect();
    let analytic: Vec<Tensor> = vars.entries().iter().map(|(_, v)| grads.get(**v)).collect();
    for (k, name) in names.iter().enumerate() {
        let numel = p.entries()[k].1.numel();
        for i in 0..numel {
            let mut plus = p.clone();
            plus.entries_mut()[k].1.data_mut()[i] += STEP;
            let mut minus = p.clone();
            minus.entries_mut()[k].1.data_mut()[i] -= STEP;
            let n = (loss_at(&plus, &cfg, &b, mode, None) - loss_at(&minus, &cfg, &b, mode, None)) / (2.0 * STEP);
            assert_close(analytic[k].data()[i], n, &format!("{v} {name}[{i}]"));
        }
    }

    let lex_grad = grads.get(f.lex);
    for i in 0..b.lex_feats.len() {
        let mut plus = b.lex_feats.clone();
        plus[i] += STEP;
        let mut minus = b.lex_feats.clone();
        minus[i] -= STEP;
        let n = (loss_at(&p, &cfg, &b, mode, Some(&plus)) - loss_at(&p, &cfg, &b, mode, Some(&minus))) / (2.0 * STEP);
        assert_close(lex_grad.data()[i], n, &format!("{v} lex[{i}]"));
    }
    if v == Variant::Baseline {
        assert!(lex_grad.data().iter().all(|&g| g == 0.0));
    }
    // The padding row never influences the loss.
    let emb = &analytic[0];
    assert!(emb.row(PAD).iter().all(|&g| g == 0.0));
}

#[test]
fn gradients_match_finite_differences_in_eval_mode() {
    for v in Variant::ALL {
        full_gradient_check(v, Mode::Eval);
    }
}

#[test]
fn gradients_match_finite_differences_with_noise_and_dropout() {
    for v in [Variant::EmbConc, Variant::AttnAffine] {
        full_gradient_check(v, Mode::Train);
    }
}

#[test]
fn predict_reports_valid_attention_and_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let cfg = small(Variant::AttnConc);
    let p = random_params(&cfg, &mut rng);
    let b = batch(&cfg, &mut rng);
    let examples: Vec<Example> = (0..2)
        .map(|row| Example {
            tokens: vec![String::new(); b.lengths[row]],
            ids: (0..b.lengths[row]).map(|s| b.token(row, s)).collect(),
            lex: (0..b.lengths[row]).flat_map(|s| b.lex(row, s).to_vec()).collect(),
            label: b.labels[row],
        })
        .collect();
    let preds = predict(&p, &cfg, &examples, 1).unwrap();
    let (logits, _) = eval_forward(&p, &cfg, &b);
    for (row, pr) in preds.iter().enumerate() {
        assert_eq!(pr.attention.len(), b.lengths[row]);
        assert!((pr.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let best = (0..3).max_by(|&i, &j| logits.at(&[row, i]).total_cmp(&logits.at(&[row, j]))).unwrap();
        assert_eq!(pr.label, best);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn attention_is_a_distribution_over_valid_positions(
        seed in 0u64..1000,
        lengths in prop::collection::vec(1usize..6, 1..4),
        v in 0usize..6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = small(Variant::ALL[v]);
        let p = random_params(&cfg, &mut rng);
        let examples: Vec<Example> = lengths.iter().map(|&len| Example {
            tokens: vec![String::new(); len],
            ids: (0..len).map(|_| rng.random_range(1..cfg.vocab_size)).collect(),
            lex: (0..len * cfg.lex_dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            label: 0,
        }).collect();
        let idx: Vec<usize> = (0..examples.len()).collect();
        let b = Batch::from_examples(&examples, &idx, cfg.lex_dim).unwrap();
        let (_, a) = eval_forward(&p, &cfg, &b);
        for (row, &len) in lengths.iter().enumerate() {
            let w: Vec<f64> = (0..b.max_len).map(|s| a.at(&[row, s])).collect();
            prop_assert!((w[..len].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w[..len].iter().all(|&x| x >= 0.0));
            prop_assert!(w[len..].iter().all(|&x| x == 0.0));
        }
    }
}
