use super::network::{decode_step, encode, final_distribution, DecoderState, EncoderOutput};
use super::ModelParams;
use crate::corpus::{EncodedExample, TokenId, START, STOP};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::LOG_FLOOR;

/// A left-to-right token model that search procedures can drive.
pub trait StepDecoder {
    type State: Clone;

    fn initial_state(&self) -> Result<Self::State>;

    /// Log-probabilities of every next token after feeding `token`.
    fn step(&self, state: &Self::State, token: TokenId) -> Result<(Vec<f64>, Self::State)>;

    fn start_token(&self) -> TokenId {
        START
    }

    fn stop_token(&self) -> TokenId {
        STOP
    }
}

/// A finished decode. `tokens` excludes the stop token; `steps` counts it.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
    pub steps: usize,
}

impl Hypothesis {
    /// Length-normalized log-probability used to rank finished hypotheses.
    pub fn score(&self) -> f64 {
        self.log_prob / self.steps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeConfig {
    pub beam_width: usize,
    pub max_len: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam_width: 4,
            max_len: 25,
        }
    }
}

fn check_args(width: usize, max_len: usize) -> Result<()> {
    if width == 0 || max_len == 0 {
        return Err(Error::Argument(format!(
            "beam width and max length must be positive, got {width} and {max_len}"
        )));
    }
    Ok(())
}

fn finish(mut tokens: Vec<TokenId>, log_prob: f64, stop: TokenId) -> Hypothesis {
    let steps = tokens.len();
    if tokens.last() == Some(&stop) {
        tokens.pop();
    }
    Hypothesis {
        tokens,
        log_prob,
        steps,
    }
}

/// Picks the highest-probability token at every step (lowest id on ties).
pub fn greedy_decode<D: StepDecoder>(decoder: &D, max_len: usize) -> Result<Hypothesis> {
    check_args(1, max_len)?;
    let stop = decoder.stop_token();
    let mut state = decoder.initial_state()?;
    let mut token = decoder.start_token();
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    for _ in 0..max_len {
        let (lp, next) = decoder.step(&state, token)?;
        let (best, &best_lp) = lp
            .iter()
            .enumerate()
            .reduce(|a, b| if b.1 > a.1 { b } else { a })
            .ok_or_else(|| Error::Argument("decoder produced an empty distribution".into()))?;
        log_prob += best_lp;
        tokens.push(best);
        token = best;
        state = next;
        if best == stop {
            break;
        }
    }
    Ok(finish(tokens, log_prob, stop))
}

struct Beam<S> {
    tokens: Vec<TokenId>,
    log_prob: f64,
    state: S,
}

/// Length-synchronous beam search over summed log-probabilities.
///
/// Each step expands every live beam by every token and keeps the best
/// `width` candidates; ties go to the earlier beam, then the lower token id.
/// Candidates ending in the stop token, or reaching `max_len`, are finished
/// and still use up a slot. The finished hypothesis with the best
/// length-normalized log-probability wins.
pub fn beam_search<D: StepDecoder>(decoder: &D, width: usize, max_len: usize) -> Result<Hypothesis> {
    check_args(width, max_len)?;
    let stop = decoder.stop_token();
    let mut beams = vec![Beam {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: decoder.initial_state()?,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for step in 0..max_len {
        let mut expanded = Vec::with_capacity(beams.len());
        let mut candidates: Vec<(usize, TokenId, f64)> = Vec::new();
        for (b, beam) in beams.iter().enumerate() {
            let prev = beam.tokens.last().copied().unwrap_or_else(|| decoder.start_token());
            let (lp, next) = decoder.step(&beam.state, prev)?;
            candidates.extend(lp.iter().enumerate().map(|(t, &l)| (b, t, beam.log_prob + l)));
            expanded.push(next);
        }
        candidates.sort_by(|a, b| b.2.total_cmp(&a.2));
        let mut live = Vec::new();
        for &(b, token, log_prob) in candidates.iter().take(width) {
            let mut tokens = beams[b].tokens.clone();
            tokens.push(token);
            if token == stop || step + 1 == max_len {
                finished.push(finish(tokens, log_prob, stop));
            } else {
                live.push(Beam {
                    tokens,
                    log_prob,
                    state: expanded[b].clone(),
                });
            }
        }
        if live.is_empty() {
            break;
        }
        beams = live;
    }
    finished
        .into_iter()
        .reduce(|best, h| if h.score() > best.score() { h } else { best })
        .ok_or_else(|| Error::Argument("beam search finished no hypothesis".into()))
}

/// Drives the summarizer over one encoded article, in the extended id space.
pub struct ArticleDecoder<'a, T: Scalar> {
    params: &'a ModelParams<T>,
    encoder: EncoderOutput<T>,
    extended_ids: Vec<TokenId>,
    n_oov: usize,
}

impl<'a, T: Scalar> ArticleDecoder<'a, T> {
    pub fn new(params: &'a ModelParams<T>, example: &EncodedExample) -> Result<Self> {
        if example.vocab_size != params.config.vocab_size {
            return Err(Error::Config(format!(
                "example encoded with vocabulary of {} but model has {}",
                example.vocab_size, params.config.vocab_size
            )));
        }
        let encoder = encode(params, &example.encoder_ids, Some(&example.encoder_mask))?;
        Ok(Self {
            params,
            encoder,
            extended_ids: example.encoder_extended_ids.clone(),
            n_oov: example.article_oovs.len(),
        })
    }

    pub fn encoder(&self) -> &EncoderOutput<T> {
        &self.encoder
    }
}

impl<T: Scalar> StepDecoder for ArticleDecoder<'_, T> {
    type State = (DecoderState<T>, Vec<T>);

    fn initial_state(&self) -> Result<Self::State> {
        let ctx = vec![T::zero(); self.params.config.enc_state_dim()];
        Ok((self.encoder.initial_state.clone(), ctx))
    }

    fn step(&self, state: &Self::State, token: TokenId) -> Result<(Vec<f64>, Self::State)> {
        let out = decode_step(self.params, token, &state.0, &state.1, &self.encoder)?;
        let dist = final_distribution(&out, &self.extended_ids, self.n_oov)?;
        let lp = dist.iter().map(|p| (p.as_f64() + LOG_FLOOR).ln()).collect();
        Ok((lp, (out.state, out.context)))
    }
}

/// Beam-decodes one example; returns extended-space ids without `STOP`.
pub fn summarize_example<T: Scalar>(
    params: &ModelParams<T>,
    example: &EncodedExample,
    config: &DecodeConfig,
) -> Result<Vec<TokenId>> {
    let decoder = ArticleDecoder::new(params, example)?;
    Ok(beam_search(&decoder, config.beam_width, config.max_len)?.tokens)
}
