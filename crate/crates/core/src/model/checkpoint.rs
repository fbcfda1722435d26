//! Binary checkpoint: model configuration, label order, vocabulary hash and
//! every parameter tensor, stored so that a save/load round trip is
//! bit-exact.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "LEXATTN\0"
//! version      u32       1
//! header_len   u32
//! header       UTF-8 `key=value` lines
//! tensor_count u32
//! per tensor:  u32 name_len, name, u32 rank, rank × u64 dims, f64 data
//! ```

use std::path::Path;

use super::config::{ModelConfig, Variant};
use super::params::ModelParams;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LEXATTN\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// Class names by index.
    pub labels: Vec<String>,
    /// Hash of the vocabulary the embedding rows are aligned with.
    pub vocab_hash: String,
    pub lowercase: bool,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut header = String::new();
        let mut kv = |k: &str, v: String| {
            header.push_str(k);
            header.push('=');
            header.push_str(&v);
            header.push('\n');
        };
        kv("variant", c.variant.to_string());
        kv("vocab_size", c.vocab_size.to_string());
        kv("embed_dim", c.embed_dim.to_string());
        kv("hidden_dim", c.hidden_dim.to_string());
        kv("attn_dim", c.attn_dim.to_string());
        kv("lex_dim", c.lex_dim.to_string());
        kv("num_classes", c.num_classes.to_string());
        // `{:?}` prints the shortest string that parses back to the same f64.
        kv("dropout", format!("{:?}", c.dropout));
        kv("noise_std", format!("{:?}", c.noise_std));
        kv("lowercase", self.lowercase.to_string());
        kv("vocab_hash", self.vocab_hash.clone());
        for (i, l) in self.labels.iter().enumerate() {
            kv(&format!("label.{i}"), l.clone());
        }

        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        let entries = self.params.entries();
        out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        for (name, t) in entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let header_len = r.u32()? as usize;
        let header = std::str::from_utf8(r.take(header_len)?)
            .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
        let mut fields = std::collections::BTreeMap::new();
        for line in header.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("malformed header line `{line}`")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("header lacks `{k}`")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("header `{k}` is not an integer")))
        };
        let real = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("header `{k}` is not a number")))
        };
        let config = ModelConfig {
            variant: get("variant")?.parse::<Variant>()?,
            vocab_size: num("vocab_size")?,
            embed_dim: num("embed_dim")?,
            hidden_dim: num("hidden_dim")?,
            attn_dim: num("attn_dim")?,
            lex_dim: num("lex_dim")?,
            num_classes: num("num_classes")?,
            dropout: real("dropout")?,
            noise_std: real("noise_std")?,
        };
        let lowercase = match get("lowercase")?.as_str() {
            "true" => true,
            "false" => false,
            other => return Err(Error::Checkpoint(format!("header `lowercase` is `{other}`"))),
        };
        let vocab_hash = get("vocab_hash")?;
        let labels = (0..config.num_classes)
            .map(|i| get(&format!("label.{i}")))
            .collect::<Result<Vec<_>>>()?;

        let count = r.u32()? as usize;
        let mut named = Vec::with_capacity(count);
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = String::from_utf8(r.take(n)?.to_vec())
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let numel: usize = shape.iter().product();
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            named.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after the last tensor",
                bytes.len() - r.pos
            )));
        }
        let params = ModelParams::from_named(&config, named)?;
        Ok(Checkpoint {
            config,
            labels,
            vocab_hash,
            lowercase,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
