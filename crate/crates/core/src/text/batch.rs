use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{LabelMap, RawExample};
use super::tokenize;
use super::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::lexicon::LexiconFeatureTable;

/// A tokenized example with its lexicon features already looked up.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    /// Surface tokens after optional lowercasing.
    pub tokens: Vec<String>,
    /// Vocabulary ids (unknown tokens map to UNK).
    pub ids: Vec<usize>,
    /// `tokens.len() × lex_dim`, looked up from the surface tokens.
    pub lex: Vec<f64>,
    pub label: usize,
}

impl Example {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Tokenizes, maps to vocabulary ids and attaches `c(w)` per position.
///
/// Lexicon lookup uses the surface token, not the vocabulary entry, so words
/// that map to UNK still carry their lexicon features.
pub fn encode_dataset(
    raw: &[RawExample],
    labels: &LabelMap,
    vocab: &Vocabulary,
    table: &LexiconFeatureTable,
    lowercase: bool,
) -> Result<Vec<Example>> {
    let label_ids = labels.encode(raw)?;
    let dims = table.total_dims();
    raw.iter()
        .zip(label_ids)
        .enumerate()
        .map(|(i, (ex, label))| {
            let tokens = tokenize(&ex.text, lowercase);
            if tokens.is_empty() {
                return Err(Error::Contract(format!(
                    "example {i} has no tokens after tokenization"
                )));
            }
            let ids = tokens.iter().map(|t| vocab.id(t)).collect();
            let mut lex = vec![0.0; tokens.len() * dims];
            if dims > 0 {
                for (t, chunk) in tokens.iter().zip(lex.chunks_exact_mut(dims)) {
                    table.lookup_into(t, chunk);
                }
            }
            Ok(Example {
                tokens,
                ids,
                lex,
                label,
            })
        })
        .collect()
}

/// Padded mini-batch. All per-position arrays are row-major with the batch
/// axis first.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `B × max_len` token ids, `PAD` past each length.
    pub tokens: Vec<usize>,
    pub lengths: Vec<usize>,
    /// `B × max_len × lex_dim`, zero past each length.
    pub lex_feats: Vec<f64>,
    pub labels: Vec<usize>,
    pub max_len: usize,
    pub lex_dim: usize,
    /// Position of each row in the source example list.
    pub source: Vec<usize>,
}

impl Batch {
    pub fn from_examples(examples: &[Example], indices: &[usize], lex_dim: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let max_len = indices.iter().map(|&i| examples[i].len()).max().unwrap_or(0);
        let b = indices.len();
        let mut tokens = vec![PAD; b * max_len];
        let mut lex_feats = vec![0.0; b * max_len * lex_dim];
        let mut lengths = Vec::with_capacity(b);
        let mut labels = Vec::with_capacity(b);
        for (row, &i) in indices.iter().enumerate() {
            let ex = &examples[i];
            if ex.is_empty() {
                return Err(Error::Contract(format!("example {i} is empty")));
            }
            if ex.lex.len() != ex.len() * lex_dim {
                return Err(Error::Contract(format!(
                    "example {i} carries {} lexicon values, expected {}",
                    ex.lex.len(),
                    ex.len() * lex_dim
                )));
            }
            tokens[row * max_len..row * max_len + ex.len()].copy_from_slice(&ex.ids);
            let base = row * max_len * lex_dim;
            lex_feats[base..base + ex.lex.len()].copy_from_slice(&ex.lex);
            lengths.push(ex.len());
            labels.push(ex.label);
        }
        Ok(Batch {
            tokens,
            lengths,
            lex_feats,
            labels,
            max_len,
            lex_dim,
            source: indices.to_vec(),
        })
    }

    pub fn size(&self) -> usize {
        self.lengths.len()
    }

    pub fn token(&self, b: usize, t: usize) -> usize {
        self.tokens[b * self.max_len + t]
    }

    pub fn lex(&self, b: usize, t: usize) -> &[f64] {
        let base = (b * self.max_len + t) * self.lex_dim;
        &self.lex_feats[base..base + self.lex_dim]
    }

    /// `true` at valid positions, `false` at padding.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.size() * self.max_len];
        for (b, &len) in self.lengths.iter().enumerate() {
            m[b * self.max_len..b * self.max_len + len].fill(true);
        }
        m
    }

    /// Same batch with `extra` additional padding columns.
    pub fn padded(&self, extra: usize) -> Batch {
        let (b, t, d) = (self.size(), self.max_len, self.lex_dim);
        let nt = t + extra;
        let mut tokens = vec![PAD; b * nt];
        let mut lex_feats = vec![0.0; b * nt * d];
        for row in 0..b {
            tokens[row * nt..row * nt + t].copy_from_slice(&self.tokens[row * t..(row + 1) * t]);
            lex_feats[row * nt * d..(row * nt + t) * d]
                .copy_from_slice(&self.lex_feats[row * t * d..(row + 1) * t * d]);
        }
        Batch {
            tokens,
            lex_feats,
            max_len: nt,
            ..self.clone()
        }
    }
}

/// Seeded shuffle, then consecutive chunks of `batch_size`; the last batch may
/// be smaller.
pub fn make_batches(examples: &[Example], lex_dim: usize, batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled_batches(examples, lex_dim, batch_size, &mut rng)
}

pub fn shuffled_batches<R: Rng>(
    examples: &[Example],
    lex_dim: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Batch>> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    chunk(examples, &order, lex_dim, batch_size)
}

/// Batches in dataset order, for evaluation.
pub fn ordered_batches(examples: &[Example], lex_dim: usize, batch_size: usize) -> Result<Vec<Batch>> {
    let order: Vec<usize> = (0..examples.len()).collect();
    chunk(examples, &order, lex_dim, batch_size)
}

fn chunk(examples: &[Example], order: &[usize], lex_dim: usize, batch_size: usize) -> Result<Vec<Batch>> {
    if examples.is_empty() {
        return Err(Error::Contract("cannot batch an empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    order
        .chunks(batch_size)
        .map(|idx| Batch::from_examples(examples, idx, lex_dim))
        .collect()
}
