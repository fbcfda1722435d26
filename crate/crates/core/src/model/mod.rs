//! Embedding → LSTM → (lexicon-conditioned) additive self-attention →
//! linear classifier.

mod checkpoint;
mod config;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, ScoreFunction, Variant};
pub use params::{
    param_shapes, AttentionParams, ClassifierParams, ConditioningParams, LstmParams, ModelParams,
    EMBEDDING_INIT_RANGE,
};

use rand::{Rng, SeedableRng};
use rand_distr::{Bernoulli, Distribution, StandardNormal};

use crate::autodiff::{stack_steps, weighted_pool, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::text::{ordered_batches, Batch, Example};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Embedding noise and dropout active.
    Train,
    Eval,
}

/// Records every parameter on `tape` as a differentiable leaf.
pub fn bind<'t>(tape: &'t Tape, params: &ModelParams) -> ModelParams<Var<'t>> {
    params.map(|_, t| tape.var(t.clone()))
}

/// One LSTM step over a batch: `x: [B×in]`, `h, c: [B×d_h]`.
pub fn lstm_step<'t>(
    x: Var<'t>,
    h: Var<'t>,
    c: Var<'t>,
    p: &LstmParams<Var<'t>>,
) -> Result<(Var<'t>, Var<'t>)> {
    let z = x.concat(h)?;
    let i = z.matmul_nt(p.w_i)?.add_bias(p.b_i)?.sigmoid();
    let f = z.matmul_nt(p.w_f)?.add_bias(p.b_f)?.sigmoid();
    let o = z.matmul_nt(p.w_o)?.add_bias(p.b_o)?.sigmoid();
    let g = z.matmul_nt(p.w_g)?.add_bias(p.b_g)?.tanh();
    let c_next = f.mul(c)?.add(i.mul(g)?)?;
    let h_next = o.mul(c_next.tanh())?;
    Ok((h_next, c_next))
}

/// The vector `f(h, c)` that `v_a` scores, for `h: [N×d_h]`, `c: [N×lex]`.
pub fn score_input<'t>(
    h: Var<'t>,
    c: Var<'t>,
    attn: &AttentionParams<Var<'t>>,
    cond: &ConditioningParams<Var<'t>>,
) -> Result<Var<'t>> {
    match (cond, attn.w_a, attn.b_a) {
        (ConditioningParams::None, Some(w_a), Some(b_a)) => Ok(h.matmul_nt(w_a)?.add_bias(b_a)?.tanh()),
        (ConditioningParams::Concat { w_c, b_c }, ..) => Ok(h.concat(c)?.matmul_nt(*w_c)?.add_bias(*b_c)?.tanh()),
        (ConditioningParams::Gate { w_g, b_g }, ..) => c.matmul_nt(*w_g)?.add_bias(*b_g)?.sigmoid().mul(h),
        (
            ConditioningParams::Affine {
                w_gamma,
                b_gamma,
                w_beta,
                b_beta,
            },
            ..,
        ) => {
            let gamma = c.matmul_nt(*w_gamma)?.add_bias(*b_gamma)?;
            let beta = c.matmul_nt(*w_beta)?.add_bias(*b_beta)?;
            gamma.mul(h)?.add(beta)
        }
        (ConditioningParams::None, ..) => Err(Error::Contract("plain attention needs W_a and b_a".into())),
    }
}

/// Attention weights `a: [B×T]` and pooled `r = Σ a_t h_t: [B×d_h]` for
/// annotations `h: [B×T×d_h]` and features `c: [B×T×lex]`. Positions at or
/// beyond each length get weight exactly zero.
pub fn attend<'t>(
    h: Var<'t>,
    c: Var<'t>,
    lengths: &[usize],
    attn: &AttentionParams<Var<'t>>,
    cond: &ConditioningParams<Var<'t>>,
) -> Result<(Var<'t>, Var<'t>)> {
    let hs = h.shape();
    let cs = c.shape();
    if hs.len() != 3 || cs.len() != 3 || hs[..2] != cs[..2] {
        return Err(Error::Shape {
            op: "attend",
            lhs: hs,
            rhs: cs,
        });
    }
    let (b, t, d) = (hs[0], hs[1], hs[2]);
    let f = score_input(h.reshape([b * t, d])?, c.reshape([b * t, cs[2]])?, attn, cond)?;
    let width = f.shape()[1];
    let scores = f.matmul(attn.v_a.reshape([width, 1])?)?.reshape([b, t])?;
    let a = scores.masked_softmax(lengths)?;
    let r = weighted_pool(a, h)?;
    Ok((r, a))
}

/// Forward-pass outputs. `lex` is a differentiable leaf holding the batch's
/// lexicon features so sensitivities to `c(w)` can be read from gradients.
pub struct Forward<'t> {
    pub logits: Var<'t>,
    /// `[B×T]` attention weights.
    pub attention: Var<'t>,
    /// `[B×T×d_h]` annotations after dropout.
    pub hidden: Var<'t>,
    pub lex: Var<'t>,
}

impl<'t> Forward<'t> {
    pub fn loss(&self, labels: &[usize]) -> Result<Var<'t>> {
        self.logits.softmax_cross_entropy(labels)
    }
}

/// Runs the classifier over `batch` with parameters already bound to `tape`.
/// `rng` is only drawn from in [`Mode::Train`].
pub fn forward<'t, R: Rng + ?Sized>(
    tape: &'t Tape,
    params: &ModelParams<Var<'t>>,
    cfg: &ModelConfig,
    batch: &Batch,
    mode: Mode,
    rng: &mut R,
) -> Result<Forward<'t>> {
    if batch.lex_dim != cfg.lex_dim {
        return Err(Error::Config(format!(
            "batch carries {} lexicon dims, model expects {}",
            batch.lex_dim, cfg.lex_dim
        )));
    }
    let (b, t) = (batch.size(), batch.max_len);
    if b == 0 || t == 0 {
        return Err(Error::EmptySequence);
    }
    let train = mode == Mode::Train;
    let lex = tape.var(Tensor::new([b, t, cfg.lex_dim], batch.lex_feats.clone())?);

    let mut emb = params
        .embedding
        .gather_rows(&batch.tokens)?
        .reshape([b, t, cfg.embed_dim])?;
    if train && cfg.noise_std > 0.0 {
        let noise: Vec<f64> = (0..b * t * cfg.embed_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                cfg.noise_std * z
            })
            .collect();
        emb = emb.add(tape.constant(Tensor::new([b, t, cfg.embed_dim], noise)?))?;
    }
    let x = if cfg.variant.concat_embeddings() {
        emb.concat(lex)?
    } else {
        emb
    };

    let zeros = tape.constant(Tensor::zeros([b, cfg.hidden_dim]));
    let (mut h, mut c) = (zeros, zeros);
    let mut steps = Vec::with_capacity(t);
    for step in 0..t {
        (h, c) = lstm_step(x.select_step(step)?, h, c, &params.lstm)?;
        steps.push(h);
    }
    let mut hidden = stack_steps(&steps)?;
    if train && cfg.dropout > 0.0 {
        let keep = 1.0 - cfg.dropout;
        let coin = Bernoulli::new(keep).map_err(|e| Error::Config(e.to_string()))?;
        let mask: Vec<f64> = (0..b * t * cfg.hidden_dim)
            .map(|_| if coin.sample(rng) { 1.0 / keep } else { 0.0 })
            .collect();
        hidden = hidden.mul(tape.constant(Tensor::new([b, t, cfg.hidden_dim], mask)?))?;
    }

    let (r, attention) = attend(hidden, lex, &batch.lengths, &params.attention, &params.conditioning)?;
    let logits = r
        .matmul_nt(params.classifier.w_out)?
        .add_bias(params.classifier.b_out)?;
    Ok(Forward {
        logits,
        attention,
        hidden,
        lex,
    })
}

/// Evaluation-mode output for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Argmax class; ties go to the lowest index.
    pub label: usize,
    pub probs: Vec<f64>,
    /// One weight per token.
    pub attention: Vec<f64>,
}

/// Evaluation-mode predictions, in example order.
pub fn predict(
    params: &ModelParams,
    cfg: &ModelConfig,
    examples: &[Example],
    batch_size: usize,
) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(examples.len());
    // Eval mode never draws from the generator.
    let mut no_rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for batch in ordered_batches(examples, cfg.lex_dim, batch_size)? {
        let tape = Tape::new();
        let p = params.map(|_, t| tape.constant(t.clone()));
        let fwd = forward(&tape, &p, cfg, &batch, Mode::Eval, &mut no_rng)?;
        let logits = fwd.logits.value();
        let attn = fwd.attention.value();
        let k = cfg.num_classes;
        for (row, &len) in batch.lengths.iter().enumerate() {
            let z = &logits.data()[row * k..(row + 1) * k];
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            let probs: Vec<f64> = exps.iter().map(|e| e / total).collect();
            let mut label = 0;
            for (i, &p) in probs.iter().enumerate() {
                if p > probs[label] {
                    label = i;
                }
            }
            let base = row * batch.max_len;
            out.push(Prediction {
                label,
                probs,
                attention: attn.data()[base..base + len].to_vec(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
