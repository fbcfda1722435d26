//! Confusion matrices, accuracy and F1.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// `k × k` counts, rows gold and columns predicted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_pairs(classes: usize, gold: &[usize], pred: &[usize]) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::Contract(format!(
                "{} gold labels but {} predictions",
                gold.len(),
                pred.len()
            )));
        }
        let mut cm = ConfusionMatrix::new(classes);
        for (&g, &p) in gold.iter().zip(pred) {
            cm.add(g, p)?;
        }
        Ok(cm)
    }

    /// Row-major square matrix of counts.
    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Contract("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            classes: k,
            counts: rows.concat(),
        })
    }

    pub fn add(&mut self, gold: usize, pred: usize) -> Result<()> {
        if gold >= self.classes || pred >= self.classes {
            return Err(Error::Contract(format!(
                "class pair ({gold}, {pred}) out of range for {} classes",
                self.classes
            )));
        }
        self.counts[gold * self.classes + pred] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    /// Same matrix with class `i` renamed to `perm[i]` on both axes.
    pub fn permuted(&self, perm: &[usize]) -> ConfusionMatrix {
        let mut out = ConfusionMatrix::new(self.classes);
        for g in 0..self.classes {
            for p in 0..self.classes {
                out.counts[perm[g] * self.classes + perm[p]] = self.get(g, p);
            }
        }
        out
    }

    fn nonempty(&self, metric: &'static str) -> Result<()> {
        if self.total() == 0 {
            Err(Error::UndefinedMetric(metric))
        } else {
            Ok(())
        }
    }

    /// `(precision, recall, f1)` for one class; a zero denominator gives 0.
    pub fn class_scores(&self, class: usize) -> (f64, f64, f64) {
        let tp = self.get(class, class) as f64;
        let predicted: u64 = (0..self.classes).map(|g| self.get(g, class)).sum();
        let gold: u64 = (0..self.classes).map(|p| self.get(class, p)).sum();
        let p = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let r = if gold == 0 { 0.0 } else { tp / gold as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (p, r, f)
    }

    pub fn accuracy(&self) -> Result<f64> {
        self.nonempty("accuracy")?;
        Ok(self.trace() as f64 / self.total() as f64)
    }

    pub fn macro_f1(&self) -> Result<f64> {
        self.nonempty("macro_f1")?;
        let sum: f64 = (0..self.classes).map(|c| self.class_scores(c).2).sum();
        Ok(sum / self.classes as f64)
    }

    /// F1 from pooled counts. With one label per example this equals accuracy.
    pub fn micro_f1(&self) -> Result<f64> {
        self.nonempty("micro_f1")?;
        let tp = self.trace() as f64;
        let fp = self.total() as f64 - tp;
        let fn_ = fp;
        Ok(2.0 * tp / (2.0 * tp + fp + fn_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    MacroF1,
    MicroF1,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Accuracy, Metric::MacroF1, Metric::MicroF1];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::MacroF1 => "macro_f1",
            Metric::MicroF1 => "micro_f1",
        }
    }

    pub fn compute(self, cm: &ConfusionMatrix) -> Result<f64> {
        match self {
            Metric::Accuracy => cm.accuracy(),
            Metric::MacroF1 => cm.macro_f1(),
            Metric::MicroF1 => cm.micro_f1(),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}` (accuracy, macro_f1, micro_f1)")))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `metric<TAB>value` lines for every metric, in [`Metric::ALL`] order.
pub fn metrics_file(cm: &ConfusionMatrix) -> Result<String> {
    let mut out = String::new();
    for m in Metric::ALL {
        out.push_str(&format!("{}\t{}\n", m.name(), m.compute(cm)?));
    }
    Ok(out)
}
