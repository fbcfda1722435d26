use std::path::Path;

use rand::Rng;

use super::vocab::{Vocabulary, PAD};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Half-width of the uniform range for vocabulary rows missing from a
/// pretrained file.
pub const OOV_RANGE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowInit {
    Pretrained,
    Random,
    ZeroPad,
}

/// `|V| × W` word embedding table. Row `PAD` is zero and never updated.
#[derive(Clone, Debug)]
pub struct EmbeddingMatrix {
    pub matrix: Tensor,
    pub init: Vec<RowInit>,
    /// Fraction of non-reserved vocabulary rows taken from a pretrained file.
    pub coverage: f64,
}

impl EmbeddingMatrix {
    /// Random rows drawn from `U(-range, range)`; PAD zero.
    pub fn random<R: Rng>(rows: usize, dim: usize, range: f64, rng: &mut R) -> Self {
        let mut data = vec![0.0; rows * dim];
        let mut init = vec![RowInit::Random; rows];
        for (r, row) in data.chunks_exact_mut(dim.max(1)).enumerate().take(rows) {
            if r == PAD {
                init[r] = RowInit::ZeroPad;
                continue;
            }
            for v in row.iter_mut() {
                *v = rng.random_range(-range..range);
            }
        }
        EmbeddingMatrix {
            matrix: Tensor::from_parts(vec![rows, dim], data),
            init,
            coverage: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }
}

pub fn load_embeddings<R: Rng>(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let text = crate::io::read_to_string(path)?;
    load_embeddings_str(&text, &path.display().to_string(), vocab, dim, rng)
}

/// Reads the plain-text word-vector format: an optional `count dim` header
/// line, then `word v1 … v_dim` rows separated by spaces.
///
/// Vocabulary words found in the file take the file vector; the rest get
/// `U(-0.05, 0.05)` rows from `rng`; PAD stays zero. Every row is checked
/// against `dim`, including rows for words outside the vocabulary.
pub fn load_embeddings_str<R: Rng>(
    text: &str,
    origin: &str,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<EmbeddingMatrix> {
    let mut emb = EmbeddingMatrix::random(vocab.len(), dim, OOV_RANGE, rng);
    let mut found = vec![false; vocab.len()];
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            let declared: usize = fields[1].parse().unwrap_or_default();
            if declared != dim {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("header declares dimension {declared}, expected {dim}"),
                ));
            }
            continue;
        }
        if fields.len() != dim + 1 {
            return Err(Error::parse(
                origin,
                lineno,
                format!("expected {dim} values, found {}", fields.len() - 1),
            ));
        }
        let values = fields[1..]
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse(origin, lineno, "non-numeric value"))?;
        let id = vocab.id(fields[0]);
        if !vocab.contains(fields[0]) || id == PAD || id == super::vocab::UNK {
            continue;
        }
        emb.matrix.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(&values);
        emb.init[id] = RowInit::Pretrained;
        found[id] = true;
    }
    let real = vocab.len().saturating_sub(2);
    let hits = found.iter().filter(|&&f| f).count();
    emb.coverage = if real == 0 { 0.0 } else { hits as f64 / real as f64 };
    Ok(emb)
}
