//! Bidirectional-LSTM encoder, attentive LSTM decoder and pointer-generator
//! output head.
//!
//! Gradients are written out by hand for every composite operation in
//! [`network`]; they are verified against central differences in the tests.

mod checkpoint;
mod decode;
mod lstm;
mod network;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor2D;

pub use checkpoint::{load_checkpoint, parse_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use decode::{
    beam_search, greedy_decode, summarize_example, ArticleDecoder, DecodeConfig, Hypothesis,
    StepDecoder,
};
pub use lstm::lstm_step;
pub use network::{
    attention, decode_step, encode, final_distribution, sequence_loss, DecoderState,
    DecoderStepOutput, EncoderOutput,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    /// When false the copy head is disabled: `p_gen` is fixed at 1 and
    /// targets outside the base vocabulary are trained as `UNK`.
    pub use_pointer: bool,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            emb_dim: 100,
            hidden_dim: 128,
            attn_dim: 128,
            use_pointer: true,
        }
    }

    /// Concatenated forward/backward encoder state size.
    pub fn enc_state_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    /// Decoder LSTM input: previous-token embedding plus previous context.
    pub fn dec_input_dim(&self) -> usize {
        self.emb_dim + self.enc_state_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 5 || self.emb_dim == 0 || self.hidden_dim == 0 || self.attn_dim == 0 {
            return Err(Error::Config(format!("invalid model dimensions {self:?}")));
        }
        Ok(())
    }

    /// Parameter names and shapes, in canonical order.
    pub fn parameter_shapes(&self) -> Vec<(&'static str, (usize, usize))> {
        let (v, e, h, a) = (self.vocab_size, self.emb_dim, self.hidden_dim, self.attn_dim);
        let s = self.enc_state_dim();
        let x = self.dec_input_dim();
        vec![
            ("embedding", (v, e)),
            ("encoder_fwd.w", (4 * h, e)),
            ("encoder_fwd.u", (4 * h, h)),
            ("encoder_fwd.b", (4 * h, 1)),
            ("encoder_bwd.w", (4 * h, e)),
            ("encoder_bwd.u", (4 * h, h)),
            ("encoder_bwd.b", (4 * h, 1)),
            ("reduce.w_h", (h, s)),
            ("reduce.b_h", (h, 1)),
            ("reduce.w_c", (h, s)),
            ("reduce.b_c", (h, 1)),
            ("decoder.w", (4 * h, x)),
            ("decoder.u", (4 * h, h)),
            ("decoder.b", (4 * h, 1)),
            ("attention.w_h", (a, s)),
            ("attention.w_s", (a, h)),
            ("attention.v", (a, 1)),
            ("attention.b", (a, 1)),
            ("pointer.w_h", (s, 1)),
            ("pointer.w_s", (h, 1)),
            ("pointer.w_x", (x, 1)),
            ("pointer.b", (1, 1)),
            ("output.w", (v, h + s)),
            ("output.b", (v, 1)),
        ]
    }
}

/// Gates are stacked `[input; forget; cell; output]` along the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T> {
    pub w: Tensor2D<T>,
    pub u: Tensor2D<T>,
    pub b: Tensor2D<T>,
}

impl<T: Scalar> LstmParams<T> {
    pub fn hidden_dim(&self) -> usize {
        self.u.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T> {
    pub w_h: Tensor2D<T>,
    pub w_s: Tensor2D<T>,
    pub v: Tensor2D<T>,
    pub b: Tensor2D<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointerParams<T> {
    pub w_h: Tensor2D<T>,
    pub w_s: Tensor2D<T>,
    pub w_x: Tensor2D<T>,
    pub b: Tensor2D<T>,
}

/// Maps the final encoder states to the initial decoder state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReduceParams<T> {
    pub w_h: Tensor2D<T>,
    pub b_h: Tensor2D<T>,
    pub w_c: Tensor2D<T>,
    pub b_c: Tensor2D<T>,
}

/// Every learnable tensor of the summarizer. The same type doubles as the
/// gradient accumulator (see [`ModelParams::zeros_like`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub embedding: Tensor2D<T>,
    pub encoder_fwd: LstmParams<T>,
    pub encoder_bwd: LstmParams<T>,
    pub reduce: ReduceParams<T>,
    pub decoder: LstmParams<T>,
    pub attention: AttentionParams<T>,
    pub pointer: PointerParams<T>,
    pub output_w: Tensor2D<T>,
    pub output_b: Tensor2D<T>,
}

/// Default half-width of the uniform initializer.
pub const INIT_SCALE: f64 = 0.1;
/// Initial forget-gate bias.
pub const FORGET_BIAS: f64 = 1.0;

impl<T: Scalar> ModelParams<T> {
    /// Uniform(−0.1, 0.1) initialization with forget-gate biases at +1.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::init_with_scale(config, seed, INIT_SCALE)
    }

    pub fn init_with_scale(config: ModelConfig, seed: u64, scale: f64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = config
            .parameter_shapes()
            .into_iter()
            .map(|(_, (r, c))| Tensor2D::from_fn(r, c, |_, _| T::lit(rng.gen_range(-scale..scale))))
            .collect();
        let mut params = Self::from_tensors(config, tensors)?;
        let h = config.hidden_dim;
        for lstm in [&mut params.encoder_fwd, &mut params.encoder_bwd, &mut params.decoder] {
            lstm.b.data_mut()[h..2 * h].fill(T::lit(FORGET_BIAS));
        }
        Ok(params)
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let tensors = config
            .parameter_shapes()
            .into_iter()
            .map(|(_, (r, c))| Tensor2D::zeros(r, c))
            .collect();
        Self::from_tensors(config, tensors)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config).expect("config already validated")
    }

    /// Reassembles parameters from tensors in [`ModelConfig::parameter_shapes`] order.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor2D<T>>) -> Result<Self> {
        let shapes = config.parameter_shapes();
        if tensors.len() != shapes.len() {
            return Err(Error::Dimension(format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in shapes.iter().zip(&tensors) {
            if t.shape() != *shape {
                return Err(Error::Dimension(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked");
        let lstm = |next: &mut dyn FnMut() -> Tensor2D<T>| LstmParams {
            w: next(),
            u: next(),
            b: next(),
        };
        let embedding = next();
        let encoder_fwd = lstm(&mut next);
        let encoder_bwd = lstm(&mut next);
        let reduce = ReduceParams {
            w_h: next(),
            b_h: next(),
            w_c: next(),
            b_c: next(),
        };
        let decoder = lstm(&mut next);
        let attention = AttentionParams {
            w_h: next(),
            w_s: next(),
            v: next(),
            b: next(),
        };
        let pointer = PointerParams {
            w_h: next(),
            w_s: next(),
            w_x: next(),
            b: next(),
        };
        Ok(Self {
            config,
            embedding,
            encoder_fwd,
            encoder_bwd,
            reduce,
            decoder,
            attention,
            pointer,
            output_w: next(),
            output_b: next(),
        })
    }

    /// All tensors with their names, in canonical order.
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor2D<T>)> {
        let names = self.config.parameter_shapes();
        let refs = [
            &self.embedding,
            &self.encoder_fwd.w,
            &self.encoder_fwd.u,
            &self.encoder_fwd.b,
            &self.encoder_bwd.w,
            &self.encoder_bwd.u,
            &self.encoder_bwd.b,
            &self.reduce.w_h,
            &self.reduce.b_h,
            &self.reduce.w_c,
            &self.reduce.b_c,
            &self.decoder.w,
            &self.decoder.u,
            &self.decoder.b,
            &self.attention.w_h,
            &self.attention.w_s,
            &self.attention.v,
            &self.attention.b,
            &self.pointer.w_h,
            &self.pointer.w_s,
            &self.pointer.w_x,
            &self.pointer.b,
            &self.output_w,
            &self.output_b,
        ];
        names.into_iter().map(|(n, _)| n).zip(refs).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor2D<T>)> {
        let names = self.config.parameter_shapes();
        let refs = [
            &mut self.embedding,
            &mut self.encoder_fwd.w,
            &mut self.encoder_fwd.u,
            &mut self.encoder_fwd.b,
            &mut self.encoder_bwd.w,
            &mut self.encoder_bwd.u,
            &mut self.encoder_bwd.b,
            &mut self.reduce.w_h,
            &mut self.reduce.b_h,
            &mut self.reduce.w_c,
            &mut self.reduce.b_c,
            &mut self.decoder.w,
            &mut self.decoder.u,
            &mut self.decoder.b,
            &mut self.attention.w_h,
            &mut self.attention.w_s,
            &mut self.attention.v,
            &mut self.attention.b,
            &mut self.pointer.w_h,
            &mut self.pointer.w_s,
            &mut self.pointer.w_x,
            &mut self.pointer.b,
            &mut self.output_w,
            &mut self.output_b,
        ];
        names.into_iter().map(|(n, _)| n).zip(refs).collect()
    }

    pub fn into_tensors(self) -> Vec<Tensor2D<T>> {
        vec![
            self.embedding,
            self.encoder_fwd.w,
            self.encoder_fwd.u,
            self.encoder_fwd.b,
            self.encoder_bwd.w,
            self.encoder_bwd.u,
            self.encoder_bwd.b,
            self.reduce.w_h,
            self.reduce.b_h,
            self.reduce.w_c,
            self.reduce.b_c,
            self.decoder.w,
            self.decoder.u,
            self.decoder.b,
            self.attention.w_h,
            self.attention.w_s,
            self.attention.v,
            self.attention.b,
            self.pointer.w_h,
            self.pointer.w_s,
            self.pointer.w_x,
            self.pointer.b,
            self.output_w,
            self.output_b,
        ]
    }

    pub fn fill(&mut self, v: T) {
        for (_, t) in self.tensors_mut() {
            t.fill(v);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Copies pretrained rows into the embedding table. `rows[id]` is used
    /// when present; the dimension must match.
    pub fn load_embedding_rows(&mut self, rows: &[Option<&[T]>]) -> Result<usize> {
        let mut copied = 0;
        for (id, row) in rows.iter().enumerate().take(self.config.vocab_size) {
            if let Some(row) = row {
                if row.len() != self.config.emb_dim {
                    return Err(Error::Config(format!(
                        "embedding dimension {} does not match model dimension {}",
                        row.len(),
                        self.config.emb_dim
                    )));
                }
                self.embedding.row_slice_mut(id).copy_from_slice(row);
                copied += 1;
            }
        }
        Ok(copied)
    }
}
