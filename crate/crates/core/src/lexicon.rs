//! Word-level lexicon features.
//!
//! Each lexicon file maps a word to a fixed number of values. Several
//! lexicons compile into one [`LexiconFeatureTable`] whose per-word vector is
//! the concatenation of the per-lexicon blocks, in declaration order, with
//! zeros in every block whose lexicon does not list the word.
//!
//! File format: UTF-8, one `word<TAB>v1<TAB>…<TAB>v_dims` entry per line;
//! blank lines and lines starting with `#` are skipped.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// How a lexicon's values are meant to be read. Binary and multi-hot values
/// must be exactly 0 or 1; scalar values may be any finite number.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueKind {
    Binary,
    Scalar,
    MultiHot,
}

impl FromStr for ValueKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(ValueKind::Binary),
            "scalar" => Ok(ValueKind::Scalar),
            "multi-hot" | "categorical-multi-hot" => Ok(ValueKind::MultiHot),
            other => Err(Error::Config(format!("unknown lexicon value kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for ValueKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ValueKind::Binary => "binary",
            ValueKind::Scalar => "scalar",
            ValueKind::MultiHot => "multi-hot",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LexiconSpec {
    pub name: String,
    pub dims: usize,
    pub source_path: PathBuf,
    pub value_kind: ValueKind,
}

impl LexiconSpec {
    pub fn new(name: impl Into<String>, dims: usize, source_path: impl Into<PathBuf>) -> Self {
        LexiconSpec {
            name: name.into(),
            dims,
            source_path: source_path.into(),
            value_kind: ValueKind::Scalar,
        }
    }

    pub fn with_kind(mut self, kind: ValueKind) -> Self {
        self.value_kind = kind;
        self
    }
}

/// Parses `name:dims:path` or `name:dims:kind:path`.
impl FromStr for LexiconSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().splitn(4, ':').collect();
        let bad = || Error::Config(format!("lexicon `{s}`: expected name:dims[:kind]:path"));
        let (name, dims, kind, path) = match parts.as_slice() {
            [name, dims, path] => (*name, *dims, ValueKind::Scalar, *path),
            [name, dims, kind, path] => (*name, *dims, kind.parse()?, *path),
            _ => return Err(bad()),
        };
        let dims: usize = dims.parse().map_err(|_| bad())?;
        if name.is_empty() || path.is_empty() {
            return Err(bad());
        }
        Ok(LexiconSpec::new(name, dims, path).with_kind(kind))
    }
}

impl std::fmt::Display for LexiconSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}",
            self.name,
            self.dims,
            self.value_kind,
            self.source_path.display()
        )
    }
}

/// One lexicon after parsing.
#[derive(Clone, Debug)]
pub struct ParsedLexicon {
    pub spec: LexiconSpec,
    pub entries: BTreeMap<String, Vec<f64>>,
    /// Entry lines whose word had already appeared; the later line won.
    pub duplicates: usize,
    /// Non-comment, non-blank lines read.
    pub entry_lines: usize,
}

impl ParsedLexicon {
    /// Distinct words covered by this lexicon.
    pub fn coverage(&self) -> usize {
        self.entries.len()
    }
}

pub fn parse_lexicon(path: impl AsRef<Path>, spec: &LexiconSpec) -> Result<ParsedLexicon> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon_str(&text, &path.display().to_string(), spec)
}

/// Same as [`parse_lexicon`] over in-memory text; `origin` labels errors.
pub fn parse_lexicon_str(text: &str, origin: &str, spec: &LexiconSpec) -> Result<ParsedLexicon> {
    if spec.dims == 0 {
        return Err(Error::Config(format!("lexicon `{}` declares 0 dims", spec.name)));
    }
    let mut entries = BTreeMap::new();
    let mut duplicates = 0;
    let mut entry_lines = 0;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        entry_lines += 1;
        let mut fields = line.split('\t');
        let word = fields.next().unwrap_or_default();
        if word.is_empty() {
            return Err(Error::parse(origin, lineno, "empty word field"));
        }
        let values: Vec<&str> = fields.collect();
        if values.len() != spec.dims {
            return Err(Error::parse(
                origin,
                lineno,
                format!(
                    "expected {} value(s) for lexicon `{}`, found {}",
                    spec.dims,
                    spec.name,
                    values.len()
                ),
            ));
        }
        let vector = values
            .iter()
            .map(|v| parse_value(v, spec.value_kind).map_err(|m| Error::parse(origin, lineno, m)))
            .collect::<Result<Vec<f64>>>()?;
        if entries.insert(word.to_string(), vector).is_some() {
            duplicates += 1;
        }
    }
    Ok(ParsedLexicon {
        spec: spec.clone(),
        entries,
        duplicates,
        entry_lines,
    })
}

fn parse_value(raw: &str, kind: ValueKind) -> std::result::Result<f64, String> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| format!("non-numeric value `{raw}`"))?;
    if !v.is_finite() {
        return Err(format!("non-finite value `{raw}`"));
    }
    if matches!(kind, ValueKind::Binary | ValueKind::MultiHot) && v != 0.0 && v != 1.0 {
        return Err(format!("{kind} lexicon value must be 0 or 1, got `{raw}`"));
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayoutBlock {
    pub name: String,
    pub offset: usize,
    pub dims: usize,
}

/// Word → concatenated lexicon feature vector `c(w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LexiconFeatureTable {
    layout: Vec<LayoutBlock>,
    total_dims: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl LexiconFeatureTable {
    pub fn empty() -> Self {
        LexiconFeatureTable {
            layout: Vec::new(),
            total_dims: 0,
            entries: BTreeMap::new(),
        }
    }

    /// Merges parsed lexicons over the union of their vocabularies, in the
    /// given order.
    pub fn build(lexicons: &[ParsedLexicon]) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut layout = Vec::with_capacity(lexicons.len());
        let mut offset = 0;
        for lex in lexicons {
            if !seen.insert(lex.spec.name.as_str()) {
                return Err(Error::Config(format!(
                    "duplicate lexicon name `{}`",
                    lex.spec.name
                )));
            }
            layout.push(LayoutBlock {
                name: lex.spec.name.clone(),
                offset,
                dims: lex.spec.dims,
            });
            offset += lex.spec.dims;
        }
        let total_dims = offset;
        let mut entries: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (lex, block) in lexicons.iter().zip(&layout) {
            for (word, values) in &lex.entries {
                let row = entries
                    .entry(word.clone())
                    .or_insert_with(|| vec![0.0; total_dims]);
                row[block.offset..block.offset + block.dims].copy_from_slice(values);
            }
        }
        Ok(LexiconFeatureTable {
            layout,
            total_dims,
            entries,
        })
    }

    /// Parses every spec from its `source_path` and builds the table.
    pub fn load(specs: &[LexiconSpec]) -> Result<(Self, Vec<ParsedLexicon>)> {
        let parsed = specs
            .iter()
            .map(|s| parse_lexicon(&s.source_path, s))
            .collect::<Result<Vec<_>>>()?;
        Ok((Self::build(&parsed)?, parsed))
    }

    pub fn layout(&self) -> &[LayoutBlock] {
        &self.layout
    }

    pub fn total_dims(&self) -> usize {
        self.total_dims
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(w, v)| (w.as_str(), v.as_slice()))
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    /// `c(word)`: the stored vector, or zeros when no lexicon lists the word.
    /// Case-sensitive.
    pub fn lookup(&self, word: &str) -> Vec<f64> {
        match self.entries.get(word) {
            Some(v) => v.clone(),
            None => vec![0.0; self.total_dims],
        }
    }

    /// Writes `c(word)` into `out` (length `total_dims`).
    pub fn lookup_into(&self, word: &str, out: &mut [f64]) {
        match self.entries.get(word) {
            Some(v) => out.copy_from_slice(v),
            None => out.fill(0.0),
        }
    }

    /// Per-block min-max scaling to [0, 1], computed over the stored entries.
    /// Constant columns map to 0. Missing words stay all-zero.
    pub fn min_max_scaled(&self) -> Self {
        let mut lo = vec![f64::INFINITY; self.total_dims];
        let mut hi = vec![f64::NEG_INFINITY; self.total_dims];
        for row in self.entries.values() {
            for (j, &v) in row.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let entries = self
            .entries
            .iter()
            .map(|(w, row)| {
                let scaled = row
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let span = hi[j] - lo[j];
                        if span > 0.0 {
                            (v - lo[j]) / span
                        } else {
                            0.0
                        }
                    })
                    .collect();
                (w.clone(), scaled)
            })
            .collect();
        LexiconFeatureTable {
            layout: self.layout.clone(),
            total_dims: self.total_dims,
            entries,
        }
    }

    /// Serializes to the compiled-table text format:
    ///
    /// ```text
    /// !layout
    /// name<TAB>offset<TAB>dims      (one line per lexicon)
    /// !entries
    /// word<TAB>v1<TAB>…<TAB>v_total (one line per word, sorted)
    /// ```
    ///
    /// Values use the shortest representation that parses back to the same
    /// `f64`, so export → import is bit-exact.
    pub fn export_string(&self) -> String {
        let mut out = String::from("!layout\n");
        for b in &self.layout {
            let _ = writeln!(out, "{}\t{}\t{}", b.name, b.offset, b.dims);
        }
        out.push_str("!entries\n");
        for (word, row) in &self.entries {
            out.push_str(word);
            for v in row {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn export(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), self.export_string().as_bytes())
    }

    pub fn import(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::import_str(&text, &path.display().to_string())
    }

    pub fn import_str(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "!layout")) => {}
            _ => return Err(Error::parse(origin, 1, "missing `!layout` sentinel")),
        }
        let mut layout = Vec::new();
        let mut offset = 0;
        let mut in_entries = false;
        let mut entries = BTreeMap::new();
        for (i, line) in lines {
            let lineno = i + 1;
            if !in_entries {
                if line == "!entries" {
                    in_entries = true;
                    continue;
                }
                let f: Vec<&str> = line.split('\t').collect();
                let [name, off, dims] = f.as_slice() else {
                    return Err(Error::parse(origin, lineno, "layout line needs name, offset, dims"));
                };
                let off: usize = off
                    .parse()
                    .map_err(|_| Error::parse(origin, lineno, "bad offset"))?;
                let dims: usize = dims
                    .parse()
                    .map_err(|_| Error::parse(origin, lineno, "bad dims"))?;
                if off != offset || dims == 0 {
                    return Err(Error::parse(origin, lineno, "layout blocks must be contiguous and non-empty"));
                }
                offset += dims;
                layout.push(LayoutBlock {
                    name: name.to_string(),
                    offset: off,
                    dims,
                });
                continue;
            }
            let mut fields = line.split('\t');
            let word = fields.next().unwrap_or_default().to_string();
            let row = fields
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::parse(origin, lineno, "non-numeric value"))?;
            if row.len() != offset {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected {offset} values, found {}", row.len()),
                ));
            }
            entries.insert(word, row);
        }
        if !in_entries {
            return Err(Error::parse(origin, text.lines().count(), "missing `!entries` sentinel"));
        }
        Ok(LexiconFeatureTable {
            layout,
            total_dims: offset,
            entries,
        })
    }
}
