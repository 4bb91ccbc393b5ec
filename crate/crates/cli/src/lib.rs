//! The `amsum` command line: one subcommand per pipeline stage.
//!
//! Exit codes: 0 on success, 1 on domain errors (bad data, bad
//! configuration, I/O), 2 on usage errors.

mod config;

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use amsum::corpus::{
    build_vocabulary, decode_ids, encode_article, encode_example, filter_by_title_length, read_jsonl,
    split_corpus, tokenize, write_jsonl, EncodedExample, RawExample, Vocabulary,
};
use amsum::embedding::{load_embeddings, save_embeddings, train_skipgram, SkipGramConfig};
use amsum::metrics::evaluate_corpus;
use amsum::model::{load_checkpoint, save_checkpoint, summarize_example, Checkpoint, DecodeConfig, ModelConfig, ModelParams};
use amsum::trainer::{fit, CheckpointPlan, DecaySchedule, TrainConfig};
use amsum::{Error, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

pub use config::parse_config;

#[derive(Debug, Parser)]
#[command(name = "amsum", version, about = "Pointer-generator summarization pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter a JSON Lines corpus by title length and optionally split it.
    Ingest(IngestArgs),
    /// Build a frequency-ranked vocabulary file.
    BuildVocab(BuildVocabArgs),
    /// Train skip-gram embeddings with negative sampling.
    TrainEmbedding(TrainEmbeddingArgs),
    /// Train the summarizer with scheduled sampling.
    Train(TrainArgs),
    /// Decode a test set and report BLEU and ROUGE.
    Evaluate(EvaluateArgs),
    /// Summarize one article.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// `key = value` config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Training (or whole filtered) corpus output.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub min_title_tokens: usize,
    /// Validation split output; requires --test-out.
    #[arg(long, requires = "test_out")]
    pub val_out: Option<PathBuf>,
    /// Test split output; requires --val-out.
    #[arg(long, requires = "val_out")]
    pub test_out: Option<PathBuf>,
    /// Train,val,test ratios used with --val-out/--test-out.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub split: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BuildVocabArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50_000)]
    pub max_size: usize,
    #[arg(long, default_value_t = 2)]
    pub min_count: u64,
}

#[derive(Debug, Args)]
pub struct TrainEmbeddingArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.025)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Validation corpus; the training corpus is used when absent.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Pretrained embeddings; rows are matched to the vocabulary by token.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Final checkpoint path; periodic checkpoints go next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-step `step,epsilon,loss` CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long, default_value = "invsig", value_parser = ["linear", "exp", "invsig", "const"])]
    pub schedule: String,
    #[arg(long, default_value_t = 70.0)]
    pub k: f64,
    #[arg(long, default_value_t = 0.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0.05)]
    pub eps_min: f64,
    #[arg(long, default_value = "sample", value_parser = ["argmax", "sample"])]
    pub sampling: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.15)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub init_accumulator: f64,
    #[arg(long, default_value_t = 2.0)]
    pub clip: f64,
    /// Save `<out-stem>.step<NNNNNN>.ckpt` every N steps (0 disables).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: u64,
    #[arg(long, default_value_t = 100)]
    pub emb_dim: usize,
    #[arg(long, default_value_t = 128)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 128)]
    pub attn_dim: usize,
    /// Disable the copy head (p_gen fixed at 1).
    #[arg(long)]
    pub no_pointer: bool,
    #[arg(long, default_value_t = 400)]
    pub max_enc_len: usize,
    #[arg(long, default_value_t = 25)]
    pub max_dec_len: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub beam: usize,
    /// Decode length limit; defaults to --max-dec-len.
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long, default_value_t = 400)]
    pub max_enc_len: usize,
    #[arg(long, default_value_t = 25)]
    pub max_dec_len: usize,
    /// JSON report path; printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Article text, or a path to a file holding it.
    #[arg(long)]
    pub text: String,
    #[arg(long, default_value_t = 4)]
    pub beam: usize,
    #[arg(long, default_value_t = 25)]
    pub max_len: usize,
    #[arg(long, default_value_t = 400)]
    pub max_enc_len: usize,
}

fn command() -> clap::Command {
    Cli::command().mut_subcommands(|s| s.args_override_self(true))
}

/// Parses `args` (without the program name), folding in any `--config`
/// file beneath the explicit flags.
pub fn parse_args<I, S>(args: I) -> std::result::Result<Cli, ParseFailure>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cmd = command();
    let mut argv: Vec<OsString> = vec!["amsum".into()];
    match (args.first(), config::config_path(&args)) {
        (Some(sub), Some(path)) if !sub.to_string_lossy().starts_with('-') => {
            let entries = config::load_config(Path::new(&path)).map_err(ParseFailure::Domain)?;
            let injected = config::config_args(&cmd, &sub.to_string_lossy(), &entries)
                .map_err(ParseFailure::Domain)?;
            argv.push(sub.clone());
            argv.extend(injected);
            argv.extend(args[1..].iter().cloned());
        }
        _ => argv.extend(args),
    }
    let matches = cmd.try_get_matches_from(argv).map_err(ParseFailure::Usage)?;
    Cli::from_arg_matches(&matches).map_err(ParseFailure::Usage)
}

#[derive(Debug)]
pub enum ParseFailure {
    Usage(clap::Error),
    Domain(Error),
}

/// Runs the CLI with process stdout/stderr.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    run_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn run_with<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    let cli = match parse_args(args) {
        Ok(cli) => cli,
        Err(ParseFailure::Usage(e)) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
        Err(ParseFailure::Domain(e)) => {
            let _ = writeln!(err, "error: {e}");
            return 1;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

pub fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a, out),
        Command::BuildVocab(a) => build_vocab(a, out),
        Command::TrainEmbedding(a) => train_embedding(a, out),
        Command::Train(a) => train(a, out, err),
        Command::Evaluate(a) => evaluate(a, out, err),
        Command::Summarize(a) => summarize(a, out),
    }
}

fn parse_ratios(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("invalid split `{s}`")))?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(Error::Config(format!("split needs three ratios, got `{s}`"))),
    }
}

fn ingest(a: IngestArgs, out: &mut dyn Write) -> Result<()> {
    if a.min_title_tokens == 0 {
        return Err(Error::Config("min-title-tokens must be at least 1".into()));
    }
    let corpus = read_jsonl(&a.input)?;
    let kept = filter_by_title_length(&corpus, a.min_title_tokens);
    writeln!(out, "kept {} of {} examples", kept.len(), corpus.len()).map_err(io_err)?;
    match (&a.val_out, &a.test_out) {
        (Some(val), Some(test)) => {
            let split = split_corpus(&kept, parse_ratios(&a.split)?, a.seed)?;
            write_jsonl(&a.out, &split.train)?;
            write_jsonl(val, &split.val)?;
            write_jsonl(test, &split.test)?;
            writeln!(
                out,
                "split train={} val={} test={}",
                split.train.len(),
                split.val.len(),
                split.test.len()
            )
            .map_err(io_err)?;
        }
        _ => write_jsonl(&a.out, &kept)?,
    }
    Ok(())
}

fn build_vocab(a: BuildVocabArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = read_jsonl(&a.input)?;
    let vocab = build_vocabulary(&corpus, a.max_size, a.min_count)?;
    vocab.save(&a.out)?;
    writeln!(out, "vocabulary of {} entries", vocab.len()).map_err(io_err)
}

fn train_embedding(a: TrainEmbeddingArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = read_jsonl(&a.input)?;
    let vocab = Vocabulary::load(&a.vocab)?;
    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .flat_map(|ex| [&ex.article, &ex.title])
        .map(|text| tokenize(text).iter().map(|t| vocab.id_or_unk(t)).collect())
        .collect();
    let cfg = SkipGramConfig {
        dim: a.dim,
        window: a.window,
        negatives: a.negatives,
        learning_rate: a.lr,
        epochs: a.epochs,
        seed: a.seed,
        ..SkipGramConfig::default()
    };
    let outcome = train_skipgram::<f64>(&sentences, vocab.counts(), &cfg)?;
    save_embeddings(&outcome.table, vocab.tokens(), &a.out)?;
    for (i, l) in outcome.epoch_losses.iter().enumerate() {
        writeln!(out, "epoch {} loss {l:.6}", i + 1).map_err(io_err)?;
    }
    Ok(())
}

/// Encodes a corpus, skipping examples whose fields tokenize to nothing.
fn encode_corpus(
    corpus: &[RawExample],
    vocab: &Vocabulary,
    max_enc_len: usize,
    max_dec_len: usize,
    err: &mut dyn Write,
) -> Result<Vec<EncodedExample>> {
    let mut encoded = Vec::with_capacity(corpus.len());
    for (i, raw) in corpus.iter().enumerate() {
        match encode_example(raw, vocab, max_enc_len, max_dec_len) {
            Ok(e) => encoded.push(e),
            Err(Error::ExampleRejected(why)) => {
                let _ = writeln!(err, "skipping example {}: {why}", i + 1);
            }
            Err(e) => return Err(e),
        }
    }
    if encoded.is_empty() {
        return Err(Error::Corpus("no usable examples".into()));
    }
    Ok(encoded)
}

fn train(a: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let train_set = encode_corpus(&read_jsonl(&a.input)?, &vocab, a.max_enc_len, a.max_dec_len, err)?;
    let val_set = match &a.val {
        Some(p) => encode_corpus(&read_jsonl(p)?, &vocab, a.max_enc_len, a.max_dec_len, err)?,
        None => train_set.clone(),
    };
    let model_cfg = ModelConfig {
        vocab_size: vocab.len(),
        emb_dim: a.emb_dim,
        hidden_dim: a.hidden_dim,
        attn_dim: a.attn_dim,
        use_pointer: !a.no_pointer,
    };
    let mut params = ModelParams::<f64>::init(model_cfg, a.seed)?;
    if let Some(path) = &a.embeddings {
        let (tokens, table) = load_embeddings::<f64>(path)?;
        if table.dim() != a.emb_dim {
            return Err(Error::Config(format!(
                "embeddings have dimension {} but --emb-dim is {}",
                table.dim(),
                a.emb_dim
            )));
        }
        let by_token: HashMap<&str, usize> = tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let rows: Vec<Option<&[f64]>> = vocab
            .tokens()
            .iter()
            .map(|t| by_token.get(t.as_str()).map(|&i| table.vector(i)))
            .collect();
        let n = params.load_embedding_rows(&rows)?;
        writeln!(out, "initialized {n} embedding rows").map_err(io_err)?;
    }
    let config = TrainConfig {
        batch_size: a.batch_size,
        learning_rate: a.lr,
        initial_accumulator: a.init_accumulator,
        grad_clip_norm: a.clip,
        epochs: a.epochs,
        schedule: DecaySchedule::new(a.schedule.parse()?, a.k, a.c, a.eps_min)?,
        sampling: a.sampling.parse()?,
        seed: a.seed,
        checkpoint_every: a.checkpoint_every,
    };
    let plan = (a.checkpoint_every > 0).then(|| CheckpointPlan {
        dir: a.out.parent().map(Path::to_path_buf).unwrap_or_default(),
        run_name: a
            .out
            .file_stem()
            .map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned()),
    });
    let (params, history) = fit(params, &train_set, &val_set, &config, plan.as_ref())?;
    save_checkpoint(&Checkpoint { params, seed: a.seed }, &a.out)?;
    if let Some(h) = &a.history {
        history.save_csv(h)?;
    }
    for (i, (l, v)) in history.epoch_losses.iter().zip(&history.val_losses).enumerate() {
        writeln!(out, "epoch {} train_loss {l:.6} val_loss {v:.6}", i + 1).map_err(io_err)?;
    }
    writeln!(out, "{} steps; checkpoint {}", history.steps.len(), a.out.display()).map_err(io_err)
}

fn load_model(checkpoint: &Path, vocab: &Path) -> Result<(ModelParams<f64>, Vocabulary)> {
    let ckpt = load_checkpoint::<f64>(checkpoint)?;
    let vocab = Vocabulary::load(vocab)?;
    if vocab.len() != ckpt.params.config.vocab_size {
        return Err(Error::Config(format!(
            "vocabulary has {} entries but checkpoint expects {}",
            vocab.len(),
            ckpt.params.config.vocab_size
        )));
    }
    Ok((ckpt.params, vocab))
}

fn evaluate(a: EvaluateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let (params, vocab) = load_model(&a.checkpoint, &a.vocab)?;
    let test = encode_corpus(&read_jsonl(&a.test)?, &vocab, a.max_enc_len, a.max_dec_len, err)?;
    let decode = DecodeConfig {
        beam_width: a.beam,
        max_len: a.max_len.unwrap_or(a.max_dec_len),
    };
    let report = evaluate_corpus(&params, &test, &vocab, &decode)?;
    match &a.report {
        Some(p) => {
            report.save_json(p)?;
            writeln!(out, "{}", report.to_text()).map_err(io_err)
        }
        None => writeln!(out, "{}\n{}", report.to_json(), report.to_text()).map_err(io_err),
    }
}

/// Tokenizes, beam-decodes and joins the summary with single spaces.
pub fn summarize_one(
    params: &ModelParams<f64>,
    vocab: &Vocabulary,
    article: &str,
    decode: &DecodeConfig,
    max_enc_len: usize,
) -> Result<String> {
    let ex = encode_article(article, vocab, max_enc_len)?;
    let ids = summarize_example(params, &ex, decode)?;
    Ok(decode_ids(&ids, vocab, &ex.article_oovs).join(" "))
}

fn summarize(a: SummarizeArgs, out: &mut dyn Write) -> Result<()> {
    let (params, vocab) = load_model(&a.checkpoint, &a.vocab)?;
    let path = Path::new(&a.text);
    let text = if path.is_file() {
        std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?
    } else {
        a.text.clone()
    };
    let decode = DecodeConfig {
        beam_width: a.beam,
        max_len: a.max_len,
    };
    let summary = summarize_one(&params, &vocab, &text, &decode, a.max_enc_len)?;
    writeln!(out, "{summary}").map_err(io_err)
}
