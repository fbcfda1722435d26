//! Seeded corpora whose label is decided by lexicon polarity alone.
//!
//! Every sequence mixes noise words with a fixed, odd number of signal
//! words. Each signal word has a polarity of +1 or −1 recorded in a generated
//! lexicon (one nonzero dimension per word), and the label is the sign of the
//! polarity sum. Training and validation draw signal words from one
//! vocabulary, test from a disjoint one, so nothing learnt about training
//! surface forms transfers to test.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::text::RawExample;

pub const POSITIVE: &str = "pos";
pub const NEGATIVE: &str = "neg";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelRule {
    /// Sign of the summed polarities of the signal words.
    MajorityPolarity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub signal_train_vocab: usize,
    pub signal_test_vocab: usize,
    pub noise_vocab: usize,
    /// Inclusive sequence length range.
    pub min_len: usize,
    pub max_len: usize,
    pub signal_per_seq: usize,
    pub label_rule: LabelRule,
    pub lex_dim: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            signal_train_vocab: 20000,
            signal_test_vocab: 400,
            noise_vocab: 200,
            min_len: 8,
            max_len: 14,
            signal_per_seq: 1,
            label_rule: LabelRule::MajorityPolarity,
            lex_dim: 4,
            train_size: 4000,
            val_size: 500,
            test_size: 1000,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.signal_per_seq == 0 || self.signal_per_seq % 2 == 0 {
            return err(format!(
                "signal_per_seq must be odd and at least 1, got {}",
                self.signal_per_seq
            ));
        }
        if self.min_len < self.signal_per_seq || self.min_len > self.max_len {
            return err(format!(
                "sequence lengths {}..={} cannot hold {} signal words",
                self.min_len, self.max_len, self.signal_per_seq
            ));
        }
        if self.signal_train_vocab < 2 || self.signal_test_vocab < 2 {
            return err("each signal vocabulary needs at least 2 words (one per polarity)".into());
        }
        if self.noise_vocab == 0 && self.max_len > self.signal_per_seq {
            return err("noise_vocab must be positive when sequences hold noise words".into());
        }
        if self.lex_dim == 0 {
            return err("lex_dim must be at least 1".into());
        }
        if self.train_size == 0 || self.val_size == 0 || self.test_size == 0 {
            return err("every split needs at least one example".into());
        }
        Ok(())
    }
}

/// Signal word surface forms. The prefixes keep the vocabularies disjoint.
pub fn train_signal_word(i: usize) -> String {
    format!("sa{i:05}")
}

pub fn test_signal_word(i: usize) -> String {
    format!("sb{i:05}")
}

pub fn noise_word(i: usize) -> String {
    format!("w{i:04}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub train: Vec<RawExample>,
    pub val: Vec<RawExample>,
    pub test: Vec<RawExample>,
    /// Signal word → polarity.
    pub polarity: BTreeMap<String, i8>,
    /// Signal word → `lex_dim` feature vector (one nonzero entry).
    pub lexicon: BTreeMap<String, Vec<f64>>,
    pub lex_dim: usize,
}

struct SignalVocab {
    positive: Vec<String>,
    negative: Vec<String>,
}

fn signal_vocab(
    n: usize,
    name: fn(usize) -> String,
    data: &mut SyntheticData,
    rng: &mut ChaCha8Rng,
) -> SignalVocab {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut v = SignalVocab {
        positive: Vec::new(),
        negative: Vec::new(),
    };
    for (rank, &i) in order.iter().enumerate() {
        let word = name(i);
        let p: i8 = if rank < n / 2 { 1 } else { -1 };
        let mut feats = vec![0.0; data.lex_dim];
        feats[rng.random_range(0..data.lex_dim)] = p as f64;
        data.polarity.insert(word.clone(), p);
        data.lexicon.insert(word.clone(), feats);
        if p > 0 {
            v.positive.push(word);
        } else {
            v.negative.push(word);
        }
    }
    v.positive.sort();
    v.negative.sort();
    v
}

/// Label from a polarity sequence under the majority rule.
pub fn majority_label(polarities: &[i8]) -> &'static str {
    if polarities.iter().map(|&p| p as i64).sum::<i64>() > 0 {
        POSITIVE
    } else {
        NEGATIVE
    }
}

fn split(
    spec: &SyntheticSpec,
    size: usize,
    signal: &SignalVocab,
    noise: &[String],
    rng: &mut ChaCha8Rng,
) -> Vec<RawExample> {
    let mut out = Vec::with_capacity(size);
    for j in 0..size {
        // Alternating targets give an exact 50/50 label split; polarity
        // patterns are drawn uniformly and rejected until they match.
        let target = if j % 2 == 0 { POSITIVE } else { NEGATIVE };
        let pols: Vec<i8> = loop {
            let p: Vec<i8> = (0..spec.signal_per_seq)
                .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
                .collect();
            if majority_label(&p) == target {
                break p;
            }
        };
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let mut slots: Vec<usize> = (0..len).collect();
        slots.shuffle(rng);
        let mut words: Vec<String> = (0..len)
            .map(|_| noise.choose(rng).cloned().unwrap_or_default())
            .collect();
        for (k, &pos) in slots[..spec.signal_per_seq].iter().enumerate() {
            let pool = if pols[k] > 0 { &signal.positive } else { &signal.negative };
            words[pos] = pool.choose(rng).expect("non-empty polarity pool").clone();
        }
        out.push(RawExample {
            label: target.to_string(),
            text: words.join(" "),
        });
    }
    out.shuffle(rng);
    out
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = SyntheticData {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        polarity: BTreeMap::new(),
        lexicon: BTreeMap::new(),
        lex_dim: spec.lex_dim,
    };
    let train_vocab = signal_vocab(spec.signal_train_vocab, train_signal_word, &mut data, &mut rng);
    let test_vocab = signal_vocab(spec.signal_test_vocab, test_signal_word, &mut data, &mut rng);
    let noise: Vec<String> = (0..spec.noise_vocab).map(noise_word).collect();
    data.train = split(spec, spec.train_size, &train_vocab, &noise, &mut rng);
    data.val = split(spec, spec.val_size, &train_vocab, &noise, &mut rng);
    data.test = split(spec, spec.test_size, &test_vocab, &noise, &mut rng);
    Ok(data)
}

fn dataset_tsv(examples: &[RawExample]) -> String {
    examples.iter().map(|e| format!("{}\t{}\n", e.label, e.text)).collect()
}

impl SyntheticData {
    /// Lexicon file in the per-lexicon `word<TAB>v1…` format.
    pub fn lexicon_tsv(&self) -> String {
        let mut out = format!("# synthetic polarity lexicon, {} dims\n", self.lex_dim);
        for (w, v) in &self.lexicon {
            out.push_str(w);
            for x in v {
                out.push('\t');
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn is_signal(&self, word: &str) -> bool {
        self.polarity.contains_key(word)
    }

    /// Writes `train.tsv`, `val.tsv`, `test.tsv` and `lexicon.tsv` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("train.tsv", dataset_tsv(&self.train)),
            ("val.tsv", dataset_tsv(&self.val)),
            ("test.tsv", dataset_tsv(&self.test)),
            ("lexicon.tsv", self.lexicon_tsv()),
        ];
        for (name, body) in files {
            crate::io::write_atomic(&dir.join(name), body.as_bytes())?;
        }
        Ok(())
    }
}
