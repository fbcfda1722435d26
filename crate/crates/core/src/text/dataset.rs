use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// One `label<TAB>text` line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawExample {
    pub label: String,
    pub text: String,
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<RawExample>> {
    let path = path.as_ref();
    let text = crate::io::read_to_string(path)?;
    read_dataset_str(&text, &path.display().to_string())
}

/// Parses a `label<TAB>text` TSV. Blank lines are skipped; the text is
/// everything after the first tab.
pub fn read_dataset_str(text: &str, origin: &str) -> Result<Vec<RawExample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, i + 1, "expected label<TAB>text"))?;
        if label.is_empty() {
            return Err(Error::parse(origin, i + 1, "empty label"));
        }
        out.push(RawExample {
            label: label.to_string(),
            text: body.to_string(),
        });
    }
    Ok(out)
}

/// Label string ↔ class index, assigned in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelMap {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelMap {
    pub fn from_examples(examples: &[RawExample]) -> Self {
        let mut map = LabelMap::default();
        for ex in examples {
            map.insert(&ex.label);
        }
        map
    }

    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let mut map = LabelMap::default();
        for l in labels {
            let before = map.len();
            map.insert(l.as_ref());
            if map.len() == before {
                return Err(Error::Config(format!("duplicate label `{}`", l.as_ref())));
            }
        }
        Ok(map)
    }

    fn insert(&mut self, label: &str) -> usize {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), self.labels.len() - 1);
        self.labels.len() - 1
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Class index of every example; unknown labels are reported together.
    pub fn encode(&self, examples: &[RawExample]) -> Result<Vec<usize>> {
        let mut missing: Vec<&str> = Vec::new();
        let ids = examples
            .iter()
            .map(|ex| {
                self.index(&ex.label).unwrap_or_else(|| {
                    if !missing.contains(&ex.label.as_str()) {
                        missing.push(&ex.label);
                    }
                    0
                })
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::Evaluation(format!(
                "label(s) not in the model's label map: {}",
                missing.join(", ")
            )));
        }
        Ok(ids)
    }

    /// `index<TAB>label` lines.
    pub fn to_file_string(&self) -> String {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{i}\t{l}\n"))
            .collect()
    }
}
