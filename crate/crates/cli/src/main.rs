use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lexattn::lexicon::LexiconSpec;
use lexattn::report::ReportFormat;
use lexattn::synthetic::SyntheticSpec;
use lexattn::Result;
use lexattn_cli::commands::{self, AttendOptions};
use lexattn_cli::config::RunConfig;

#[derive(Parser)]
#[command(name = "lexattn", version, about = "Lexicon-conditioned attention text classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier (one or several seeds).
    Train(Box<TrainArgs>),
    /// Score a trained model on a labelled dataset.
    Eval {
        /// Checkpoint file or run directory.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Metrics file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
    },
    /// Export attention weights as JSON or SVG.
    Attend {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long)]
        out: PathBuf,
        /// Export a random subset of this many examples.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
    },
    /// Generate the synthetic polarity task.
    Synth(SynthArgs),
    /// Merge lexicon files into one compiled feature table.
    LexiconCompile {
        /// `name:dims[:kind]:path`, repeatable.
        #[arg(long = "lexicon", required = true)]
        lexicons: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Rescale every column to [0, 1].
        #[arg(long)]
        min_max: bool,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    embed_dim: Option<String>,
    #[arg(long)]
    hidden_dim: Option<String>,
    #[arg(long)]
    attn_dim: Option<String>,
    #[arg(long)]
    dropout: Option<String>,
    #[arg(long)]
    noise_std: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    beta1: Option<String>,
    #[arg(long)]
    beta2: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    clip_norm: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    max_epochs: Option<String>,
    #[arg(long)]
    patience: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    eval_metric: Option<String>,
    #[arg(long)]
    min_count: Option<String>,
    #[arg(long)]
    lowercase: Option<String>,
    #[arg(long)]
    train: Option<String>,
    #[arg(long)]
    val: Option<String>,
    #[arg(long)]
    test: Option<String>,
    /// `name:dims[:kind]:path`, repeatable.
    #[arg(long = "lexicon")]
    lexicons: Vec<String>,
    #[arg(long)]
    embeddings: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl TrainArgs {
    fn overrides(self) -> (Option<PathBuf>, Vec<(String, String)>) {
        let mut o = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        put("variant", self.variant);
        put("embed_dim", self.embed_dim);
        put("hidden_dim", self.hidden_dim);
        put("attn_dim", self.attn_dim);
        put("dropout", self.dropout);
        put("noise_std", self.noise_std);
        put("lr", self.lr);
        put("beta1", self.beta1);
        put("beta2", self.beta2);
        put("eps", self.eps);
        put("clip_norm", self.clip_norm);
        put("batch_size", self.batch_size);
        put("max_epochs", self.max_epochs);
        put("patience", self.patience);
        put("seed", self.seed);
        put("seeds", self.seeds);
        put("eval_metric", self.eval_metric);
        put("min_count", self.min_count);
        put("lowercase", self.lowercase);
        put("train", self.train);
        put("val", self.val);
        put("test", self.test);
        put("embeddings", self.embeddings);
        put("out", self.out);
        for l in self.lexicons {
            o.push(("lexicon".into(), l));
        }
        (self.config, o)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SyntheticSpec::default().signal_train_vocab)]
    signal_train_vocab: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().signal_test_vocab)]
    signal_test_vocab: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().noise_vocab)]
    noise_vocab: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().min_len)]
    min_len: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().max_len)]
    max_len: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().signal_per_seq)]
    signal_per_seq: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().lex_dim)]
    lex_dim: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().train_size)]
    train_size: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().val_size)]
    val_size: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().test_size)]
    test_size: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().seed)]
    seed: u64,
}

impl SynthArgs {
    fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            signal_train_vocab: self.signal_train_vocab,
            signal_test_vocab: self.signal_test_vocab,
            noise_vocab: self.noise_vocab,
            min_len: self.min_len,
            max_len: self.max_len,
            signal_per_seq: self.signal_per_seq,
            lex_dim: self.lex_dim,
            train_size: self.train_size,
            val_size: self.val_size,
            test_size: self.test_size,
            seed: self.seed,
            ..SyntheticSpec::default()
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut err = std::io::stderr();
    match cli.command {
        Command::Train(args) => {
            let (file, overrides) = args.overrides();
            let cfg = RunConfig::resolve(file.as_deref(), &overrides)?;
            commands::cmd_train(cfg, &mut err)?;
        }
        Command::Eval {
            checkpoint,
            data,
            out,
            batch_size,
        } => {
            commands::cmd_eval(&checkpoint, &data, &out, batch_size, &mut std::io::stdout())?;
        }
        Command::Attend {
            checkpoint,
            data,
            format,
            out,
            sample,
            seed,
            batch_size,
        } => {
            let opts = AttendOptions {
                format: format.parse::<ReportFormat>()?,
                sample,
                seed,
                batch: batch_size,
            };
            let n = commands::cmd_attend(&checkpoint, &data, &out, &opts)?;
            eprintln!("wrote {n} attention reports to {}", out.display());
        }
        Command::Synth(args) => commands::cmd_synth(&args.spec(), &args.out, &mut err)?,
        Command::LexiconCompile { lexicons, out, min_max } => {
            let specs = lexicons
                .iter()
                .map(|s| s.parse::<LexiconSpec>())
                .collect::<Result<Vec<_>>>()?;
            commands::cmd_lexicon_compile(&specs, &out, min_max, &mut std::io::stdout())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
