//! Mini-batch training with Adam, global-norm clipping and early stopping.

mod optim;

pub use optim::{adam_update, clip_global_norm, AdamConfig, AdamState};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::metrics::{ConfusionMatrix, Metric};
use crate::model::{bind, forward, predict, Mode, ModelConfig, ModelParams};
use crate::text::{shuffled_batches, Example, PAD};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a strict improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub eval_metric: Metric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            clip_norm: 0.5,
            batch_size: 64,
            max_epochs: 30,
            patience: 5,
            seed: 1,
            eval_metric: Metric::MacroF1,
        }
    }
}

impl TrainConfig {
    // `!(x > 0.0)` also rejects NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", a.lr)));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(a.eps > 0.0) {
            return Err(Error::Config("adam eps must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config(format!("clip_norm must be positive, got {}", self.clip_norm)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-example training loss over the epoch.
    pub train_loss: f64,
    pub val_metric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_metric: f64,
}

impl History {
    /// `epoch<TAB>train_loss<TAB>val_metric` per epoch, then
    /// `best<TAB>epoch<TAB>metric`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.epochs {
            out.push_str(&format!("{}\t{}\t{}\n", r.epoch, r.train_loss, r.val_metric));
        }
        out.push_str(&format!("best\t{}\t{}\n", self.best_epoch, self.best_metric));
        out
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub params: ModelParams,
    pub history: History,
}

/// Tracks the best validation score and the patience counter.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    waited: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            waited: 0,
        }
    }

    /// Records one epoch's metric. Returns `true` when it is a new best; a tie
    /// keeps the earlier epoch.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> bool {
        match self.best {
            Some((_, b)) if metric <= b => {
                self.waited += 1;
                false
            }
            _ => {
                self.best = Some((epoch, metric));
                self.waited = 0;
                true
            }
        }
    }

    pub fn should_stop(&self) -> bool {
        self.waited >= self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// Validation score of `params` on `examples`.
pub fn evaluate(
    params: &ModelParams,
    cfg: &ModelConfig,
    examples: &[Example],
    metric: Metric,
    batch_size: usize,
) -> Result<f64> {
    let preds = predict(params, cfg, examples, batch_size)?;
    let gold: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let pred: Vec<usize> = preds.iter().map(|p| p.label).collect();
    metric.compute(&ConfusionMatrix::from_pairs(cfg.num_classes, &gold, &pred)?)
}

/// One optimisation step on a batch; returns the batch loss.
fn train_step(
    params: &mut ModelParams,
    adam: &mut AdamState,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    batch: &crate::text::Batch,
    rng: &mut ChaCha8Rng,
    (epoch, index): (usize, usize),
) -> Result<f64> {
    let tape = Tape::new();
    let vars = bind(&tape, params);
    let fwd = forward(&tape, &vars, cfg, batch, Mode::Train, rng)?;
    let loss_var = fwd.loss(&batch.labels)?;
    let loss = loss_var.value().item()?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            epoch,
            batch: index,
            loss,
        });
    }
    let grads = tape.backward(loss_var)?;
    let mut g = vars.map(|_, v| grads.get(*v));
    let w = g.embedding.shape()[1];
    g.embedding.data_mut()[PAD * w..(PAD + 1) * w].fill(0.0);
    let mut list: Vec<_> = g.entries_mut().into_iter().map(|(_, t)| t).collect();
    let norm = clip_global_norm(&mut list, tcfg.clip_norm);
    if !norm.is_finite() {
        return Err(Error::NonFinite {
            epoch,
            batch: index,
            loss: norm,
        });
    }
    adam.step(params, &g, &tcfg.adam)?;
    Ok(loss)
}

/// Trains from `init`, evaluating on `val` after every epoch and keeping the
/// best-scoring parameters. `on_epoch` sees each record as it is produced.
pub fn train_with(
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    init: ModelParams,
    train: &[Example],
    val: &[Example],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    tcfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("training and validation splits must be non-empty".into()));
    }
    // Stream 1 keeps shuffling and dropout independent of parameter
    // initialisation drawn from stream 0 of the same seed.
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    rng.set_stream(1);

    let mut params = init;
    let mut adam = AdamState::new(&params);
    let mut best = params.clone();
    let mut stopper = EarlyStopping::new(tcfg.patience);
    let mut epochs = Vec::new();
    for epoch in 1..=tcfg.max_epochs {
        let batches = shuffled_batches(train, cfg.lex_dim, tcfg.batch_size, &mut rng)?;
        let mut total = 0.0;
        for (i, batch) in batches.iter().enumerate() {
            let loss = train_step(&mut params, &mut adam, cfg, tcfg, batch, &mut rng, (epoch, i + 1))?;
            total += loss * batch.size() as f64;
        }
        let val_metric = evaluate(&params, cfg, val, tcfg.eval_metric, tcfg.batch_size)?;
        let record = EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val_metric,
        };
        on_epoch(&record);
        epochs.push(record);
        if stopper.observe(epoch, val_metric) {
            best = params.clone();
        }
        if stopper.should_stop() {
            break;
        }
    }
    let (best_epoch, best_metric) = stopper.best().expect("at least one epoch ran");
    Ok(TrainOutcome {
        params: best,
        history: History {
            epochs,
            best_epoch,
            best_metric,
        },
    })
}

pub fn train(
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    init: ModelParams,
    train: &[Example],
    val: &[Example],
) -> Result<TrainOutcome> {
    train_with(cfg, tcfg, init, train, val, |_| {})
}

/// Per-seed scores with their mean and sample standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedSummary {
    pub metric: Metric,
    pub runs: Vec<(u64, f64)>,
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single run.
    pub std: f64,
}

impl SeedSummary {
    pub fn new(metric: Metric, runs: Vec<(u64, f64)>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Contract("no runs to summarise".into()));
        }
        let n = runs.len() as f64;
        let mean = runs.iter().map(|r| r.1).sum::<f64>() / n;
        let std = if runs.len() < 2 {
            0.0
        } else {
            (runs.iter().map(|r| (r.1 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(SeedSummary { metric, runs, mean, std })
    }

    /// `seed<TAB>s<TAB>value` lines, then `mean` and `std` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("# metric\t{}\n", self.metric);
        for (s, v) in &self.runs {
            out.push_str(&format!("seed\t{s}\t{v}\n"));
        }
        out.push_str(&format!("mean\t{}\nstd\t{}\n", self.mean, self.std));
        out
    }
}
