//! Text ingestion: tokenization, vocabulary, embeddings, datasets and padded
//! batches with aligned lexicon features.

mod batch;
mod dataset;
mod embedding;
mod vocab;

pub use batch::{encode_dataset, make_batches, ordered_batches, shuffled_batches, Batch, Example};
pub use dataset::{read_dataset, read_dataset_str, LabelMap, RawExample};
pub use embedding::{load_embeddings, load_embeddings_str, EmbeddingMatrix, RowInit};
pub use vocab::{Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

/// Vocabulary over the tokenized texts of `examples`.
pub fn build_vocab(examples: &[RawExample], min_count: usize, lowercase: bool) -> Vocabulary {
    let toks: Vec<Vec<String>> = examples.iter().map(|e| tokenize(&e.text, lowercase)).collect();
    Vocabulary::build(toks.iter().map(Vec::as_slice), min_count)
}

/// Splits on whitespace, then detaches every ASCII punctuation character as
/// its own token. Optionally lowercases.
///
/// ```
/// use lexattn::text::tokenize;
/// assert_eq!(tokenize("Good, great!", true), ["good", ",", "great", "!"]);
/// ```
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.chars() {
            if ch.is_ascii_punctuation() {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(ch.to_string());
            } else {
                word.push(ch);
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    if lowercase {
        for t in &mut tokens {
            *t = t.to_lowercase();
        }
    }
    tokens
}
