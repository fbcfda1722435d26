//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use lexattn::lexicon::LexiconSpec;
use lexattn::metrics::Metric;
use lexattn::model::{ModelConfig, Variant};
use lexattn::train::{AdamConfig, TrainConfig};
use lexattn::{Error, Result};

/// Every accepted key, in the order `config.resolved` lists them.
pub const KEYS: &[&str] = &[
    "variant",
    "embed_dim",
    "hidden_dim",
    "attn_dim",
    "dropout",
    "noise_std",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "clip_norm",
    "batch_size",
    "max_epochs",
    "patience",
    "seed",
    "seeds",
    "eval_metric",
    "min_count",
    "lowercase",
    "train",
    "val",
    "test",
    "lexicon",
    "embeddings",
    "out",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub dropout: f64,
    pub noise_std: f64,
    pub adam: AdamConfig,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Number of consecutive seeds starting at `seed`.
    pub seeds: usize,
    pub eval_metric: Metric,
    pub min_count: usize,
    pub lowercase: bool,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub lexicons: Vec<LexiconSpec>,
    pub embeddings: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::new(Variant::AttnGate, 2, 0, 2);
        let t = TrainConfig::default();
        RunConfig {
            variant: m.variant,
            embed_dim: m.embed_dim,
            hidden_dim: m.hidden_dim,
            attn_dim: m.attn_dim,
            dropout: m.dropout,
            noise_std: m.noise_std,
            adam: t.adam,
            clip_norm: t.clip_norm,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: t.seed,
            seeds: 1,
            eval_metric: t.eval_metric,
            min_count: 1,
            lowercase: true,
            train: None,
            val: None,
            test: None,
            lexicons: Vec::new(),
            embeddings: None,
            out: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("key `{key}`: expected true or false, got `{value}`"))),
    }
}

/// `(key, value, line)` triples from a config file. `#` starts a comment
/// line; blank lines are skipped.
pub fn parse_config_str(text: &str, origin: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                message: "expected `key = value`".into(),
            })?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                message: format!("unknown key `{k}`"),
            });
        }
        out.push((k.to_string(), v.trim().to_string(), i + 1));
    }
    Ok(out)
}

impl RunConfig {
    /// Sets one key. `lexicon` appends; every other key replaces.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "variant" => self.variant = value.parse()?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "attn_dim" => self.attn_dim = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "noise_std" => self.noise_std = parse(key, value)?,
            "lr" => self.adam.lr = parse(key, value)?,
            "beta1" => self.adam.beta1 = parse(key, value)?,
            "beta2" => self.adam.beta2 = parse(key, value)?,
            "eps" => self.adam.eps = parse(key, value)?,
            "clip_norm" => self.clip_norm = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "seeds" => self.seeds = parse(key, value)?,
            "eval_metric" => self.eval_metric = value.parse()?,
            "min_count" => self.min_count = parse(key, value)?,
            "lowercase" => self.lowercase = parse_bool(key, value)?,
            "train" => self.train = Some(value.into()),
            "val" => self.val = Some(value.into()),
            "test" => self.test = Some(value.into()),
            "lexicon" => self.lexicons.push(value.parse()?),
            "embeddings" => self.embeddings = Some(value.into()),
            "out" => self.out = Some(value.into()),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a config file (if any), then command-line overrides. Lexicons
    /// given on the command line replace those from the file.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = lexattn::io::read_to_string(path)?;
            for (k, v, line) in parse_config_str(&text, &path.display().to_string())? {
                cfg.set(&k, &v).map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    line,
                    message: e.to_string(),
                })?;
            }
        }
        if overrides.iter().any(|(k, _)| k == "lexicon") {
            cfg.lexicons.clear();
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn model_config(&self, vocab_size: usize, lex_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            attn_dim: self.attn_dim,
            lex_dim,
            num_classes,
            dropout: self.dropout,
            noise_std: self.noise_std,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            adam: self.adam,
            clip_norm: self.clip_norm,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
            eval_metric: self.eval_metric,
        }
    }

    /// Checks values and that every referenced input file exists. Relative
    /// input paths are made absolute so the resolved snapshot works from any
    /// directory.
    pub fn validate_for_training(&mut self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        if self.min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        self.train_config(self.seed).validate()?;
        for (name, p) in [("train", &self.train), ("val", &self.val)] {
            if p.is_none() {
                return Err(Error::Config(format!("`{name}` path is required")));
            }
        }
        if self.out.is_none() {
            return Err(Error::Config("`out` directory is required".into()));
        }
        let cwd = std::env::current_dir().map_err(|e| Error::Io {
            path: ".".into(),
            source: e,
        })?;
        let fix = |p: &mut PathBuf, name: &str| -> Result<()> {
            if p.is_relative() {
                *p = cwd.join(&*p);
            }
            if !p.is_file() && name != "out" {
                return Err(Error::Config(format!("{name} file not found: {}", p.display())));
            }
            Ok(())
        };
        for (name, p) in [
            ("train", &mut self.train),
            ("val", &mut self.val),
            ("test", &mut self.test),
            ("embeddings", &mut self.embeddings),
            ("out", &mut self.out),
        ] {
            if let Some(p) = p {
                fix(p, name)?;
            }
        }
        for spec in &mut self.lexicons {
            fix(&mut spec.source_path, "lexicon")?;
        }
        Ok(())
    }

    /// `key = value` lines for every key in [`KEYS`] order; unset paths are
    /// omitted. Parsing this text reproduces the configuration.
    pub fn resolved(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        line("variant", self.variant.to_string());
        line("embed_dim", self.embed_dim.to_string());
        line("hidden_dim", self.hidden_dim.to_string());
        line("attn_dim", self.attn_dim.to_string());
        line("dropout", self.dropout.to_string());
        line("noise_std", self.noise_std.to_string());
        line("lr", self.adam.lr.to_string());
        line("beta1", self.adam.beta1.to_string());
        line("beta2", self.adam.beta2.to_string());
        line("eps", self.adam.eps.to_string());
        line("clip_norm", self.clip_norm.to_string());
        line("batch_size", self.batch_size.to_string());
        line("max_epochs", self.max_epochs.to_string());
        line("patience", self.patience.to_string());
        line("seed", self.seed.to_string());
        line("seeds", self.seeds.to_string());
        line("eval_metric", self.eval_metric.to_string());
        line("min_count", self.min_count.to_string());
        line("lowercase", self.lowercase.to_string());
        for (k, p) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            if let Some(p) = p {
                line(k, p.display().to_string());
            }
        }
        for l in &self.lexicons {
            line("lexicon", l.to_string());
        }
        if let Some(p) = &self.embeddings {
            line("embeddings", p.display().to_string());
        }
        if let Some(p) = &self.out {
            line("out", p.display().to_string());
        }
        out
    }
}
