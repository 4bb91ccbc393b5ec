//! Scheduled-sampling training: per-step coin flips between the gold token
//! and the model's own prediction, Adagrad updates, global-norm clipping and
//! periodic checkpoints.

mod schedule;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{EncodedExample, TokenId};
use crate::error::{Error, Result};
use crate::model::{save_checkpoint, sequence_loss, Checkpoint, ModelParams};
use crate::scalar::Scalar;

pub use schedule::{epsilon_at, DecaySchedule, ScheduleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    Argmax,
    Sample,
}

impl FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "argmax" => Ok(Self::Argmax),
            "sample" => Ok(Self::Sample),
            other => Err(Error::Argument(format!("unknown sampling mode `{other}`"))),
        }
    }
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Argmax => "argmax",
            Self::Sample => "sample",
        })
    }
}

/// Chooses the next decoder input: the gold token with probability
/// `epsilon`, otherwise the model's token from `dist`.
///
/// With `epsilon >= 1` the gold token is returned without consuming any
/// randomness, so a constant-1 schedule leaves the random stream exactly as
/// pure teacher forcing would.
pub fn sample_decoder_input<T: Scalar, R: Rng + ?Sized>(
    gold: TokenId,
    dist: &[T],
    epsilon: f64,
    mode: SamplingMode,
    rng: &mut R,
) -> Result<TokenId> {
    let sum: f64 = dist.iter().map(|p| p.as_f64()).sum();
    if dist.is_empty() || (sum - 1.0).abs() > 1e-6 || dist.iter().any(|p| *p < T::zero()) {
        return Err(Error::Argument(format!(
            "model distribution is not a probability vector (sum {sum})"
        )));
    }
    if epsilon >= 1.0 || rng.gen::<f64>() < epsilon {
        return Ok(gold);
    }
    match mode {
        SamplingMode::Argmax => Ok(argmax(dist)),
        SamplingMode::Sample => {
            let w = WeightedIndex::new(dist.iter().map(|p| p.as_f64()))
                .map_err(|e| Error::Argument(format!("cannot sample from distribution: {e}")))?;
            Ok(w.sample(rng))
        }
    }
}

fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Adagrad with a per-parameter squared-gradient accumulator.
#[derive(Debug, Clone)]
pub struct Adagrad<T> {
    pub learning_rate: T,
    accumulator: ModelParams<T>,
}

impl<T: Scalar> Adagrad<T> {
    pub fn new(params: &ModelParams<T>, learning_rate: T, initial_accumulator: T) -> Self {
        let mut accumulator = params.zeros_like();
        accumulator.fill(initial_accumulator);
        Self {
            learning_rate,
            accumulator,
        }
    }

    /// `acc += g²; θ -= lr · g / √acc`.
    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) {
        let lr = self.learning_rate;
        for (((_, p), (_, g)), (_, a)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.accumulator.tensors_mut())
        {
            for ((p, &g), a) in p.data_mut().iter_mut().zip(g.data()).zip(a.data_mut()) {
                *a += g * g;
                let delta = lr * g / a.sqrt();
                if delta != T::zero() {
                    *p -= delta;
                }
            }
        }
    }
}

/// Global L2 norm over every gradient tensor.
pub fn global_norm<T: Scalar>(grads: &ModelParams<T>) -> T {
    grads
        .tensors()
        .into_iter()
        .map(|(_, t)| t.squared_norm())
        .sum::<T>()
        .sqrt()
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut ModelParams<T>, max_norm: T) -> T {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        for (_, t) in grads.tensors_mut() {
            t.scale(s);
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub initial_accumulator: f64,
    pub grad_clip_norm: f64,
    pub epochs: usize,
    pub schedule: DecaySchedule,
    pub sampling: SamplingMode,
    pub seed: u64,
    /// Save a checkpoint every this many steps; 0 saves only at the end.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            learning_rate: 0.15,
            initial_accumulator: 0.1,
            grad_clip_norm: 2.0,
            epochs: 10,
            schedule: DecaySchedule::default(),
            sampling: SamplingMode::Sample,
            seed: 1,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.grad_clip_norm > 0.0) || !(self.initial_accumulator > 0.0) {
            return Err(Error::Config(
                "learning rate, clip norm and initial accumulator must be positive".into(),
            ));
        }
        self.schedule.validate()
    }
}

/// One optimizer update on `batch`; returns the mean example loss before
/// the update.
pub fn train_step<T: Scalar, R: Rng + ?Sized>(
    params: &mut ModelParams<T>,
    optimizer: &mut Adagrad<T>,
    batch: &[&EncodedExample],
    epsilon: f64,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::Argument("empty training batch".into()));
    }
    let scale = T::one() / T::lit(batch.len() as f64);
    let mut grads = params.zeros_like();
    let mut total = T::zero();
    for ex in batch {
        let choose = |_: usize, gold: TokenId, dist: &[T]| {
            sample_decoder_input(gold, dist, epsilon, config.sampling, rng)
        };
        total += sequence_loss(params, ex, choose, Some(&mut grads), scale)?;
    }
    clip_global_norm(&mut grads, T::lit(config.grad_clip_norm));
    optimizer.step(params, &grads);
    Ok(total * scale)
}

/// Mean teacher-forced loss over `examples`.
pub fn mean_loss<T: Scalar>(params: &ModelParams<T>, examples: &[EncodedExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Argument("cannot evaluate loss on an empty set".into()));
    }
    let mut total = 0.0;
    for ex in examples {
        total += sequence_loss(params, ex, |_, gold, _| Ok(gold), None, T::one())?.as_f64();
    }
    Ok(total / examples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epsilon: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub epoch_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    /// Checkpoint files written, in order.
    pub checkpoints: Vec<PathBuf>,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "step,epsilon,loss")?;
        for s in &self.steps {
            writeln!(out, "{},{},{}", s.step, s.epsilon, s.loss)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Where `fit` writes checkpoints: `<dir>/<run>.step<NNNNNN>.ckpt` and the
/// best-validation copy `<dir>/<run>.best.ckpt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointPlan {
    pub dir: PathBuf,
    pub run_name: String,
}

impl CheckpointPlan {
    pub fn step_path(&self, step: u64) -> PathBuf {
        self.dir.join(format!("{}.step{step:06}.ckpt", self.run_name))
    }

    pub fn best_path(&self) -> PathBuf {
        self.dir.join(format!("{}.best.ckpt", self.run_name))
    }
}

fn shuffled_batches<'a, R: Rng>(
    examples: &'a [EncodedExample],
    batch_size: usize,
    rng: &mut R,
) -> Vec<Vec<&'a EncodedExample>> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size)
        .map(|c| c.iter().map(|&i| &examples[i]).collect())
        .collect()
}

/// Trains for `config.epochs` epochs. A single seeded stream drives data
/// order, coin flips and categorical draws.
pub fn fit<T: Scalar>(
    mut params: ModelParams<T>,
    train: &[EncodedExample],
    val: &[EncodedExample],
    config: &TrainConfig,
    checkpoints: Option<&CheckpointPlan>,
) -> Result<(ModelParams<T>, TrainHistory)> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Argument("training and validation sets must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = Adagrad::new(&params, T::lit(config.learning_rate), T::lit(config.initial_accumulator));
    let mut history = TrainHistory::default();
    let mut step: u64 = 0;
    let mut best_val = f64::INFINITY;
    let save = |params: &ModelParams<T>, path: PathBuf, history: &mut TrainHistory| -> Result<()> {
        let ckpt = Checkpoint {
            params: params.clone(),
            seed: config.seed,
        };
        save_checkpoint(&ckpt, &path)?;
        history.checkpoints.push(path);
        Ok(())
    };
    for _ in 0..config.epochs {
        let mut epoch_total = 0.0;
        let batches = shuffled_batches(train, config.batch_size, &mut rng);
        let n_batches = batches.len();
        for batch in batches {
            let epsilon = epsilon_at(&config.schedule, step);
            let loss = train_step(&mut params, &mut optimizer, &batch, epsilon, config, &mut rng)?.as_f64();
            history.steps.push(StepRecord { step, epsilon, loss });
            epoch_total += loss;
            step += 1;
            if let Some(plan) = checkpoints {
                if config.checkpoint_every > 0 && step.is_multiple_of(config.checkpoint_every) {
                    save(&params, plan.step_path(step), &mut history)?;
                }
            }
        }
        history.epoch_losses.push(epoch_total / n_batches as f64);
        let v = mean_loss(&params, val)?;
        history.val_losses.push(v);
        if let Some(plan) = checkpoints {
            if v < best_val {
                save(&params, plan.best_path(), &mut history)?;
            }
        }
        best_val = best_val.min(v);
    }
    if let Some(plan) = checkpoints {
        let last = plan.step_path(step);
        if history.checkpoints.last() != Some(&last) {
            save(&params, last, &mut history)?;
        }
    }
    Ok((params, history))
}

/// Plain teacher-forcing loop with the same data order and updates as
/// [`fit`], without any sampling machinery. Returns per-step losses.
pub fn fit_teacher_forcing<T: Scalar>(
    mut params: ModelParams<T>,
    train: &[EncodedExample],
    config: &TrainConfig,
) -> Result<(ModelParams<T>, Vec<f64>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = Adagrad::new(&params, T::lit(config.learning_rate), T::lit(config.initial_accumulator));
    let mut losses = Vec::new();
    for _ in 0..config.epochs {
        for batch in shuffled_batches(train, config.batch_size, &mut rng) {
            let scale = T::one() / T::lit(batch.len() as f64);
            let mut grads = params.zeros_like();
            let mut total = T::zero();
            for ex in &batch {
                total += sequence_loss(&params, ex, |_, gold, _| Ok(gold), Some(&mut grads), scale)?;
            }
            clip_global_norm(&mut grads, T::lit(config.grad_clip_norm));
            optimizer.step(&mut params, &grads);
            losses.push((total * scale).as_f64());
        }
    }
    Ok((params, losses))
}
