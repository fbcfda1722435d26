use std::str::FromStr;

use crate::error::{Error, Result};

/// The six classifier variants.
///
/// | variant              | `c(w)` in LSTM input | attention score input `f`         |
/// |----------------------|----------------------|-----------------------------------|
/// | `baseline`           | no                   | `tanh(W_a h + b_a)`               |
/// | `emb_conc`           | yes                  | `tanh(W_a h + b_a)`               |
/// | `attn_conc`          | no                   | `tanh(W_c [h ∥ c] + b_c)`         |
/// | `attn_gate`          | no                   | `σ(W_g c + b_g) ⊙ h`              |
/// | `attn_affine`        | no                   | `(W_γ c + b_γ) ⊙ h + (W_β c + b_β)` |
/// | `gate_plus_emb_conc` | yes                  | `σ(W_g c + b_g) ⊙ h`              |
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Baseline,
    EmbConc,
    AttnConc,
    AttnGate,
    AttnAffine,
    GatePlusEmbConc,
}

/// Which function computes the attention score input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreFunction {
    Plain,
    Concat,
    Gate,
    Affine,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Baseline,
        Variant::EmbConc,
        Variant::AttnConc,
        Variant::AttnGate,
        Variant::AttnAffine,
        Variant::GatePlusEmbConc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::EmbConc => "emb_conc",
            Variant::AttnConc => "attn_conc",
            Variant::AttnGate => "attn_gate",
            Variant::AttnAffine => "attn_affine",
            Variant::GatePlusEmbConc => "gate_plus_emb_conc",
        }
    }

    /// Whether `c(w)` is appended to the word embedding before the LSTM.
    pub fn concat_embeddings(self) -> bool {
        matches!(self, Variant::EmbConc | Variant::GatePlusEmbConc)
    }

    pub fn score_function(self) -> ScoreFunction {
        match self {
            Variant::Baseline | Variant::EmbConc => ScoreFunction::Plain,
            Variant::AttnConc => ScoreFunction::Concat,
            Variant::AttnGate | Variant::GatePlusEmbConc => ScoreFunction::Gate,
            Variant::AttnAffine => ScoreFunction::Affine,
        }
    }

    pub fn uses_lexicon(self) -> bool {
        self != Variant::Baseline
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!("unknown variant `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub lex_dim: usize,
    pub num_classes: usize,
    pub dropout: f64,
    /// Standard deviation of the Gaussian noise added to embeddings in
    /// training mode.
    pub noise_std: f64,
}

impl ModelConfig {
    /// Defaults from the reference setup: 300-unit LSTM, `d_a = d_h`,
    /// dropout 0.2, embedding noise σ = 0.1.
    pub fn new(variant: Variant, vocab_size: usize, lex_dim: usize, num_classes: usize) -> Self {
        ModelConfig {
            variant,
            vocab_size,
            embed_dim: 300,
            hidden_dim: 300,
            attn_dim: 300,
            lex_dim,
            num_classes,
            dropout: 0.2,
            noise_std: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("attn_dim", self.attn_dim),
            ("num_classes", self.num_classes),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.vocab_size < 2 {
            return Err(Error::Config("vocab_size must include PAD and UNK".into()));
        }
        if self.lex_dim == 0 && self.variant.uses_lexicon() {
            return Err(Error::Config(format!(
                "variant {} needs lexicon features (lex_dim = 0)",
                self.variant
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std {} must be >= 0", self.noise_std)));
        }
        Ok(())
    }

    pub fn lstm_input_dim(&self) -> usize {
        if self.variant.concat_embeddings() {
            self.embed_dim + self.lex_dim
        } else {
            self.embed_dim
        }
    }

    /// Width of the vector `v_a` scores: `d_a` for tanh projections, `d_h`
    /// where `f` returns a modulated annotation.
    pub fn score_dim(&self) -> usize {
        match self.variant.score_function() {
            ScoreFunction::Plain | ScoreFunction::Concat => self.attn_dim,
            ScoreFunction::Gate | ScoreFunction::Affine => self.hidden_dim,
        }
    }
}
