//! Learnable parameters, generic over the carrier so the same structure holds
//! plain tensors, tape variables, gradients or optimizer moments.

use std::collections::HashMap;

use rand::Rng;

use super::config::{ModelConfig, ScoreFunction};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::text::PAD;

/// Input, forget, output and candidate gates; each weight is
/// `d_h × (input_dim + d_h)` and multiplies `[x ∥ h]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<T = Tensor> {
    pub w_i: T,
    pub b_i: T,
    pub w_f: T,
    pub b_f: T,
    pub w_o: T,
    pub b_o: T,
    pub w_g: T,
    pub b_g: T,
}

/// `W_a`, `b_a` exist only for variants whose score input is
/// `tanh(W_a h + b_a)`; `v_a` always exists.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<T = Tensor> {
    pub w_a: Option<T>,
    pub b_a: Option<T>,
    pub v_a: T,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConditioningParams<T = Tensor> {
    None,
    Concat { w_c: T, b_c: T },
    Gate { w_g: T, b_g: T },
    Affine { w_gamma: T, b_gamma: T, w_beta: T, b_beta: T },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams<T = Tensor> {
    pub w_out: T,
    pub b_out: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = Tensor> {
    pub embedding: T,
    pub lstm: LstmParams<T>,
    pub attention: AttentionParams<T>,
    pub conditioning: ConditioningParams<T>,
    pub classifier: ClassifierParams<T>,
}

macro_rules! visit {
    ($self:ident, $out:ident, $($ref:tt)*) => {{
        $out.push(("embedding", $($ref)* $self.embedding));
        let l = $($ref)* $self.lstm;
        $out.push(("lstm.w_i", $($ref)* l.w_i));
        $out.push(("lstm.b_i", $($ref)* l.b_i));
        $out.push(("lstm.w_f", $($ref)* l.w_f));
        $out.push(("lstm.b_f", $($ref)* l.b_f));
        $out.push(("lstm.w_o", $($ref)* l.w_o));
        $out.push(("lstm.b_o", $($ref)* l.b_o));
        $out.push(("lstm.w_g", $($ref)* l.w_g));
        $out.push(("lstm.b_g", $($ref)* l.b_g));
        let a = $($ref)* $self.attention;
        if let Some(w) = $($ref)* a.w_a {
            $out.push(("attn.w_a", w));
        }
        if let Some(b) = $($ref)* a.b_a {
            $out.push(("attn.b_a", b));
        }
        $out.push(("attn.v_a", $($ref)* a.v_a));
        match $($ref)* $self.conditioning {
            ConditioningParams::None => {}
            ConditioningParams::Concat { w_c, b_c } => {
                $out.push(("cond.w_c", w_c));
                $out.push(("cond.b_c", b_c));
            }
            ConditioningParams::Gate { w_g, b_g } => {
                $out.push(("cond.w_g", w_g));
                $out.push(("cond.b_g", b_g));
            }
            ConditioningParams::Affine { w_gamma, b_gamma, w_beta, b_beta } => {
                $out.push(("cond.w_gamma", w_gamma));
                $out.push(("cond.b_gamma", b_gamma));
                $out.push(("cond.w_beta", w_beta));
                $out.push(("cond.b_beta", b_beta));
            }
        }
        let c = $($ref)* $self.classifier;
        $out.push(("out.w", $($ref)* c.w_out));
        $out.push(("out.b", $($ref)* c.b_out));
    }};
}

impl<T> ModelParams<T> {
    /// `(name, value)` for every parameter, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, &T)> {
        let mut out = Vec::with_capacity(20);
        visit!(self, out, &);
        out
    }

    pub fn entries_mut(&mut self) -> Vec<(&'static str, &mut T)> {
        let mut out = Vec::with_capacity(20);
        visit!(self, out, &mut);
        out
    }

    /// Same structure with every parameter transformed.
    pub fn map<U>(&self, mut f: impl FnMut(&'static str, &T) -> U) -> ModelParams<U> {
        let mut g = |name: &'static str, t: &T| f(name, t);
        ModelParams {
            embedding: g("embedding", &self.embedding),
            lstm: LstmParams {
                w_i: g("lstm.w_i", &self.lstm.w_i),
                b_i: g("lstm.b_i", &self.lstm.b_i),
                w_f: g("lstm.w_f", &self.lstm.w_f),
                b_f: g("lstm.b_f", &self.lstm.b_f),
                w_o: g("lstm.w_o", &self.lstm.w_o),
                b_o: g("lstm.b_o", &self.lstm.b_o),
                w_g: g("lstm.w_g", &self.lstm.w_g),
                b_g: g("lstm.b_g", &self.lstm.b_g),
            },
            attention: AttentionParams {
                w_a: self.attention.w_a.as_ref().map(|w| g("attn.w_a", w)),
                b_a: self.attention.b_a.as_ref().map(|b| g("attn.b_a", b)),
                v_a: g("attn.v_a", &self.attention.v_a),
            },
            conditioning: match &self.conditioning {
                ConditioningParams::None => ConditioningParams::None,
                ConditioningParams::Concat { w_c, b_c } => ConditioningParams::Concat {
                    w_c: g("cond.w_c", w_c),
                    b_c: g("cond.b_c", b_c),
                },
                ConditioningParams::Gate { w_g, b_g } => ConditioningParams::Gate {
                    w_g: g("cond.w_g", w_g),
                    b_g: g("cond.b_g", b_g),
                },
                ConditioningParams::Affine {
                    w_gamma,
                    b_gamma,
                    w_beta,
                    b_beta,
                } => ConditioningParams::Affine {
                    w_gamma: g("cond.w_gamma", w_gamma),
                    b_gamma: g("cond.b_gamma", b_gamma),
                    w_beta: g("cond.w_beta", w_beta),
                    b_beta: g("cond.b_beta", b_beta),
                },
            },
            classifier: ClassifierParams {
                w_out: g("out.w", &self.classifier.w_out),
                b_out: g("out.b", &self.classifier.b_out),
            },
        }
    }
}

/// Expected `(name, shape)` list for a configuration, in `entries()` order.
pub fn param_shapes(cfg: &ModelConfig) -> Vec<(&'static str, Vec<usize>)> {
    ModelParams::<()>::skeleton(cfg)
        .entries()
        .into_iter()
        .map(|(n, _)| (n, shape_of(cfg, n)))
        .collect()
}

fn shape_of(cfg: &ModelConfig, name: &str) -> Vec<usize> {
    let (dh, da, lex) = (cfg.hidden_dim, cfg.attn_dim, cfg.lex_dim);
    let z = cfg.lstm_input_dim() + dh;
    match name {
        "embedding" => vec![cfg.vocab_size, cfg.embed_dim],
        "lstm.w_i" | "lstm.w_f" | "lstm.w_o" | "lstm.w_g" => vec![dh, z],
        "lstm.b_i" | "lstm.b_f" | "lstm.b_o" | "lstm.b_g" => vec![dh],
        "attn.w_a" => vec![da, dh],
        "attn.b_a" => vec![da],
        "attn.v_a" => vec![cfg.score_dim()],
        "cond.w_c" => vec![da, dh + lex],
        "cond.b_c" => vec![da],
        "cond.w_g" | "cond.w_gamma" | "cond.w_beta" => vec![dh, lex],
        "cond.b_g" | "cond.b_gamma" | "cond.b_beta" => vec![dh],
        "out.w" => vec![cfg.num_classes, dh],
        "out.b" => vec![cfg.num_classes],
        other => unreachable!("unknown parameter {other}"),
    }
}

impl ModelParams<()> {
    fn skeleton(cfg: &ModelConfig) -> Self {
        let lstm = LstmParams {
            w_i: (),
            b_i: (),
            w_f: (),
            b_f: (),
            w_o: (),
            b_o: (),
            w_g: (),
            b_g: (),
        };
        let plain = cfg.variant.score_function() == ScoreFunction::Plain;
        let conditioning = match cfg.variant.score_function() {
            ScoreFunction::Plain => ConditioningParams::None,
            ScoreFunction::Concat => ConditioningParams::Concat { w_c: (), b_c: () },
            ScoreFunction::Gate => ConditioningParams::Gate { w_g: (), b_g: () },
            ScoreFunction::Affine => ConditioningParams::Affine {
                w_gamma: (),
                b_gamma: (),
                w_beta: (),
                b_beta: (),
            },
        };
        ModelParams {
            embedding: (),
            lstm,
            attention: AttentionParams {
                w_a: plain.then_some(()),
                b_a: plain.then_some(()),
                v_a: (),
            },
            conditioning,
            classifier: ClassifierParams { w_out: (), b_out: () },
        }
    }
}

/// Half-width of the uniform range for embedding rows when no pretrained
/// vectors are given: `1/√fan_in` with a one-hot input (fan-in 1).
pub const EMBEDDING_INIT_RANGE: f64 = 1.0;

impl ModelParams {
    /// Weights `U(-k, k)` with `k = 1/√fan_in`; biases zero except the LSTM
    /// forget-gate bias, which starts at 1. The PAD embedding row is zero.
    pub fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        Ok(ModelParams::<()>::skeleton(cfg).map(|name, _| {
            let shape = shape_of(cfg, name);
            let mut t = Tensor::zeros(shape.clone());
            match name {
                "lstm.b_f" => t.data_mut().fill(1.0),
                "embedding" => {
                    let w = shape[1];
                    for (i, v) in t.data_mut().iter_mut().enumerate() {
                        if i / w != PAD {
                            *v = rng.random_range(-EMBEDDING_INIT_RANGE..EMBEDDING_INIT_RANGE);
                        }
                    }
                }
                _ if name.contains(".w_") || name == "out.w" || name == "attn.v_a" => {
                    let fan_in = *shape.last().unwrap();
                    if fan_in > 0 {
                        let k = 1.0 / (fan_in as f64).sqrt();
                        for v in t.data_mut() {
                            *v = rng.random_range(-k..k);
                        }
                    }
                }
                _ => {}
            }
            t
        }))
    }

    /// Reassembles parameters from named tensors, checking names and shapes
    /// against `cfg`.
    pub fn from_named(cfg: &ModelConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        cfg.validate()?;
        let mut pool: HashMap<String, Tensor> = HashMap::new();
        for (n, t) in named {
            if pool.insert(n.clone(), t).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor `{n}`")));
            }
        }
        let mut missing = None;
        let params = ModelParams::<()>::skeleton(cfg).map(|name, _| {
            let expect = shape_of(cfg, name);
            match pool.remove(name) {
                Some(t) if t.shape() == expect.as_slice() => t,
                Some(t) => {
                    missing.get_or_insert(format!(
                        "tensor `{name}` has shape {:?}, expected {expect:?}",
                        t.shape()
                    ));
                    Tensor::zeros(expect)
                }
                None => {
                    missing.get_or_insert(format!("missing tensor `{name}`"));
                    Tensor::zeros(expect)
                }
            }
        });
        if let Some(m) = missing {
            return Err(Error::Checkpoint(m));
        }
        if let Some(extra) = pool.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor `{extra}`")));
        }
        Ok(params)
    }

    /// Replaces the embedding table (e.g. with pretrained vectors).
    pub fn set_embedding(&mut self, table: Tensor) -> Result<()> {
        if table.shape() != self.embedding.shape() {
            return Err(Error::Shape {
                op: "set_embedding",
                lhs: self.embedding.shape().to_vec(),
                rhs: table.shape().to_vec(),
            });
        }
        self.embedding = table;
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        self.entries().iter().map(|(_, t)| t.numel()).sum()
    }
}
