use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use lexattn::lexicon::{LexiconFeatureTable, LexiconSpec};
use lexattn::metrics::{metrics_file, ConfusionMatrix};
use lexattn::model::{predict, Checkpoint, ModelConfig, ModelParams, Prediction};
use lexattn::report::{export, AttentionReport, ReportFormat};
use lexattn::synthetic::{generate, SyntheticSpec};
use lexattn::text::{
    build_vocab, encode_dataset, load_embeddings, read_dataset, Example, LabelMap, RawExample, Vocabulary,
};
use lexattn::train::{evaluate, train_with, SeedSummary};
use lexattn::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const HISTORY_FILE: &str = "history.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const LEXICON_FILE: &str = "lexicon.tsv";
pub const CONFIG_FILE: &str = "config.resolved";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const SUMMARY_FILE: &str = "summary.tsv";

/// 2 for bad input or configuration, 3 for failures during computation.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Parse { .. } | Error::Io { .. } | Error::Evaluation(_) | Error::Checkpoint(_) => 2,
        _ => 3,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, body: &str) -> Result<()> {
    lexattn::io::write_atomic(path, body.as_bytes())
}

fn read_nonempty(path: &Path) -> Result<Vec<RawExample>> {
    let data = read_dataset(path)?;
    if data.is_empty() {
        return Err(Error::Config(format!("dataset {} has no examples", path.display())));
    }
    Ok(data)
}

struct Prepared {
    vocab: Vocabulary,
    labels: LabelMap,
    table: LexiconFeatureTable,
    train: Vec<Example>,
    val: Vec<Example>,
    test: Option<Vec<Example>>,
    model: ModelConfig,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let train_raw = read_nonempty(cfg.train.as_deref().expect("validated"))?;
    let val_raw = read_nonempty(cfg.val.as_deref().expect("validated"))?;
    let test_raw = cfg.test.as_deref().map(read_nonempty).transpose()?;
    let (table, _) = LexiconFeatureTable::load(&cfg.lexicons)?;
    if cfg.variant.uses_lexicon() && table.total_dims() == 0 {
        return Err(Error::Config(format!("variant {} needs at least one lexicon", cfg.variant)));
    }
    let vocab = build_vocab(&train_raw, cfg.min_count, cfg.lowercase);
    let labels = LabelMap::from_examples(&train_raw);
    let enc = |raw: &[RawExample]| encode_dataset(raw, &labels, &vocab, &table, cfg.lowercase);
    let train = enc(&train_raw)?;
    let val = enc(&val_raw)?;
    let test = test_raw.as_deref().map(enc).transpose()?;
    let model = cfg.model_config(vocab.len(), table.total_dims(), labels.len());
    model.validate()?;
    Ok(Prepared {
        vocab,
        labels,
        table,
        train,
        val,
        test,
        model,
    })
}

/// Trains one seed and writes its run files into `dir`. Returns the test
/// score when a test split is configured, else the best validation score.
fn train_one(cfg: &RunConfig, prep: &Prepared, seed: u64, dir: &Path, log: &mut dyn Write) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = ModelParams::init(&prep.model, &mut rng)?;
    if let Some(path) = &cfg.embeddings {
        let emb = load_embeddings(path, &prep.vocab, cfg.embed_dim, &mut rng)?;
        let _ = writeln!(log, "embeddings: {:.1}% of the vocabulary covered", 100.0 * emb.coverage);
        init.set_embedding(emb.matrix)?;
    }
    let tcfg = cfg.train_config(seed);
    let metric = tcfg.eval_metric;
    let out = train_with(&prep.model, &tcfg, init, &prep.train, &prep.val, |r| {
        let _ = writeln!(
            log,
            "seed {seed} epoch {}: train_loss {:.5}  val {metric} {:.4}",
            r.epoch, r.train_loss, r.val_metric
        );
    })?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let ck = Checkpoint {
        config: prep.model.clone(),
        labels: prep.labels.labels().to_vec(),
        vocab_hash: prep.vocab.hash(),
        lowercase: cfg.lowercase,
        params: out.params,
    };
    ck.save(dir.join(CHECKPOINT_FILE))?;
    write(&dir.join(HISTORY_FILE), &out.history.to_tsv())?;
    write(&dir.join(LABELS_FILE), &prep.labels.to_file_string())?;
    write(&dir.join(VOCAB_FILE), &prep.vocab.to_file_string())?;
    prep.table.export(dir.join(LEXICON_FILE))?;
    let score = match &prep.test {
        Some(test) => {
            let cm = confusion(&ck, test, cfg.batch_size)?;
            write(&dir.join(METRICS_FILE), &metrics_file(&cm)?)?;
            metric.compute(&cm)?
        }
        None => out.history.best_metric,
    };
    let _ = writeln!(
        log,
        "seed {seed}: best epoch {} ({metric} {:.4})",
        out.history.best_epoch, out.history.best_metric
    );
    Ok(score)
}

fn confusion(ck: &Checkpoint, examples: &[Example], batch: usize) -> Result<ConfusionMatrix> {
    let preds = predict(&ck.params, &ck.config, examples, batch)?;
    let gold: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let pred: Vec<usize> = preds.iter().map(|p| p.label).collect();
    ConfusionMatrix::from_pairs(ck.config.num_classes, &gold, &pred)
}

/// Removes the staging directory (and the output directory, if this run
/// created it and left it empty) unless disarmed.
struct Staging {
    dir: PathBuf,
    out: PathBuf,
    created_out: bool,
    armed: bool,
}

impl Drop for Staging {
    fn drop(&mut self) {
        if self.armed {
            let _ = fs::remove_dir_all(&self.dir);
            if self.created_out {
                let _ = fs::remove_dir(&self.out);
            }
        }
    }
}

/// Trains every configured seed. Outputs are written to a staging directory
/// inside `out` and moved into place only after all runs succeed.
pub fn cmd_train(mut cfg: RunConfig, log: &mut dyn Write) -> Result<Option<SeedSummary>> {
    cfg.validate_for_training()?;
    let out = cfg.out.clone().expect("validated");
    let created_out = !out.exists();
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    let mut staging = Staging {
        dir: out.join(format!(".staging-{}", std::process::id())),
        out: out.clone(),
        created_out,
        armed: true,
    };
    let _ = fs::remove_dir_all(&staging.dir);
    fs::create_dir_all(&staging.dir).map_err(io_err(&staging.dir))?;

    let prep = prepare(&cfg)?;
    let _ = writeln!(
        log,
        "{} train / {} val examples, vocabulary {}, lexicon dims {}, {} classes",
        prep.train.len(),
        prep.val.len(),
        prep.vocab.len(),
        prep.table.total_dims(),
        prep.labels.len()
    );
    let summary = if cfg.seeds == 1 {
        train_one(&cfg, &prep, cfg.seed, &staging.dir, log)?;
        None
    } else {
        let mut runs = Vec::new();
        for k in 0..cfg.seeds as u64 {
            let seed = cfg.seed + k;
            let dir = staging.dir.join(format!("seed-{seed}"));
            let score = train_one(&cfg, &prep, seed, &dir, log)?;
            let mut single = cfg.clone();
            single.seed = seed;
            single.seeds = 1;
            single.out = Some(out.join(format!("seed-{seed}")));
            write(&dir.join(CONFIG_FILE), &single.resolved())?;
            runs.push((seed, score));
        }
        let s = SeedSummary::new(cfg.eval_metric, runs)?;
        write(&staging.dir.join(SUMMARY_FILE), &s.to_tsv())?;
        let _ = writeln!(log, "{} over {} seeds: {:.4} ± {:.4}", s.metric, cfg.seeds, s.mean, s.std);
        Some(s)
    };
    write(&staging.dir.join(CONFIG_FILE), &cfg.resolved())?;

    for entry in fs::read_dir(&staging.dir).map_err(io_err(&staging.dir))? {
        let entry = entry.map_err(io_err(&staging.dir))?;
        let target = out.join(entry.file_name());
        if target.is_dir() {
            fs::remove_dir_all(&target).map_err(io_err(&target))?;
        }
        fs::rename(entry.path(), &target).map_err(io_err(&target))?;
    }
    staging.created_out = false;
    fs::remove_dir(&staging.dir).map_err(io_err(&staging.dir))?;
    staging.armed = false;
    Ok(summary)
}

/// A trained model with the vocabulary and lexicon table it was trained on.
pub struct Bundle {
    pub checkpoint: Checkpoint,
    pub vocab: Vocabulary,
    pub table: LexiconFeatureTable,
}

impl Bundle {
    /// Accepts a run directory or the checkpoint file inside one; the
    /// vocabulary and lexicon table are read from the same directory.
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() {
            path.join(CHECKPOINT_FILE)
        } else {
            path.to_path_buf()
        };
        let dir = file.parent().unwrap_or(Path::new("."));
        let checkpoint = Checkpoint::load(&file)?;
        let vocab = Vocabulary::load(&dir.join(VOCAB_FILE))?;
        if vocab.hash() != checkpoint.vocab_hash {
            return Err(Error::Checkpoint(format!(
                "{} does not match the checkpoint's vocabulary",
                dir.join(VOCAB_FILE).display()
            )));
        }
        let table = LexiconFeatureTable::import(dir.join(LEXICON_FILE))?;
        if table.total_dims() != checkpoint.config.lex_dim {
            return Err(Error::Checkpoint(format!(
                "lexicon table has {} dims, checkpoint expects {}",
                table.total_dims(),
                checkpoint.config.lex_dim
            )));
        }
        Ok(Bundle {
            checkpoint,
            vocab,
            table,
        })
    }

    pub fn encode(&self, raw: &[RawExample]) -> Result<Vec<Example>> {
        let labels = LabelMap::from_labels(&self.checkpoint.labels)?;
        encode_dataset(raw, &labels, &self.vocab, &self.table, self.checkpoint.lowercase)
    }
}

pub fn cmd_eval(checkpoint: &Path, data: &Path, out: &Path, batch: usize, log: &mut dyn Write) -> Result<(f64, f64)> {
    let bundle = Bundle::load(checkpoint)?;
    let raw = read_nonempty(data)?;
    let examples = bundle.encode(&raw)?;
    let cm = confusion(&bundle.checkpoint, &examples, batch)?;
    let text = metrics_file(&cm)?;
    write(out, &text)?;
    let (acc, f1) = (cm.accuracy()?, cm.macro_f1()?);
    let _ = writeln!(log, "accuracy\t{acc}\nmacro_f1\t{f1}");
    Ok((acc, f1))
}

pub struct AttendOptions {
    pub format: ReportFormat,
    pub sample: Option<usize>,
    pub seed: u64,
    pub batch: usize,
}

/// Attention reports for every example of `data`, or a seeded sample of
/// them kept in file order.
pub fn attention_reports(bundle: &Bundle, raw: &[RawExample], sample: Option<usize>, seed: u64, batch: usize) -> Result<Vec<AttentionReport>> {
    let mut idx: Vec<usize> = (0..raw.len()).collect();
    if let Some(n) = sample {
        if n < raw.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            idx = rand::seq::index::sample(&mut rng, raw.len(), n).into_vec();
            idx.sort_unstable();
        }
    }
    let chosen: Vec<RawExample> = idx.iter().map(|&i| raw[i].clone()).collect();
    let examples = bundle.encode(&chosen)?;
    let ck = &bundle.checkpoint;
    let preds: Vec<Prediction> = predict(&ck.params, &ck.config, &examples, batch)?;
    Ok(chosen
        .iter()
        .zip(&examples)
        .zip(&preds)
        .map(|((ex, enc), p)| AttentionReport {
            tokens: enc.tokens.clone(),
            weights: p.attention.clone(),
            pred: ck.labels[p.label].clone(),
            gold: ex.label.clone(),
            variant: ck.config.variant.to_string(),
        })
        .collect())
}

pub fn cmd_attend(checkpoint: &Path, data: &Path, out: &Path, opts: &AttendOptions) -> Result<usize> {
    let bundle = Bundle::load(checkpoint)?;
    let raw = read_nonempty(data)?;
    let reports = attention_reports(&bundle, &raw, opts.sample, opts.seed, opts.batch)?;
    export(&reports, opts.format, out)?;
    Ok(reports.len())
}

pub fn cmd_synth(spec: &SyntheticSpec, out: &Path, log: &mut dyn Write) -> Result<()> {
    let data = generate(spec)?;
    data.write_to(out)?;
    let _ = writeln!(
        log,
        "wrote {} train, {} val, {} test examples and {} lexicon entries to {}",
        data.train.len(),
        data.val.len(),
        data.test.len(),
        data.lexicon.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_lexicon_compile(specs: &[LexiconSpec], out: &Path, min_max: bool, log: &mut dyn Write) -> Result<LexiconFeatureTable> {
    if specs.is_empty() {
        return Err(Error::Config("at least one --lexicon is required".into()));
    }
    let (mut table, parsed) = LexiconFeatureTable::load(specs)?;
    if min_max {
        table = table.min_max_scaled();
    }
    for (block, p) in table.layout().iter().zip(&parsed) {
        let _ = writeln!(
            log,
            "{}\toffset {}\tdims {}\t{} words\t{} duplicates",
            block.name,
            block.offset,
            block.dims,
            p.coverage(),
            p.duplicates
        );
    }
    let _ = writeln!(log, "total_dims {}\twords {}", table.total_dims(), table.len());
    table.export(out)?;
    Ok(table)
}

/// Re-scores a trained run on `examples`; used by tests.
pub fn score(bundle: &Bundle, examples: &[Example], batch: usize) -> Result<f64> {
    let ck = &bundle.checkpoint;
    evaluate(&ck.params, &ck.config, examples, lexattn::metrics::Metric::Accuracy, batch)
}
