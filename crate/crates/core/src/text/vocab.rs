use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ index map with `PAD = 0` and `UNK = 1` reserved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    /// Only the two reserved entries.
    pub fn new() -> Self {
        let mut v = Vocabulary {
            index: HashMap::new(),
            tokens: Vec::new(),
        };
        v.push(PAD_TOKEN);
        v.push(UNK_TOKEN);
        v
    }

    fn push(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }

    /// Keeps every token seen at least `min_count` times, in first-seen order.
    pub fn build<'a, I, S>(sequences: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut order: Vec<&str> = Vec::new();
        for seq in sequences {
            for tok in seq {
                let tok = tok.as_ref();
                let c = counts.entry(tok).or_insert(0);
                if *c == 0 {
                    order.push(tok);
                }
                *c += 1;
            }
        }
        let mut vocab = Vocabulary::new();
        for tok in order {
            if counts[tok] >= min_count.max(1) {
                vocab.push(tok);
            }
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// True when only the reserved entries exist.
    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    /// Index of `token`, or `UNK`.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Hex SHA-256 over the tokens in index order, newline-terminated.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        let mut out = String::with_capacity(64);
        for b in h.finalize().iter() {
            let _ = write!(out, "{b:02x}");
        }
        out
    }

    /// One token per line, in index order.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_file_string().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        let origin = path.display().to_string();
        let tokens: Vec<&str> = text.lines().collect();
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(Error::parse(&origin, 1, "vocabulary must start with <pad>, <unk>"));
        }
        let mut v = Vocabulary::new();
        for (i, t) in tokens.iter().enumerate().skip(2) {
            if v.contains(t) {
                return Err(Error::parse(&origin, i + 1, format!("duplicate token `{t}`")));
            }
            v.push(t);
        }
        Ok(v)
    }
}
