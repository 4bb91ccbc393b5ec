//! Forward computation of the encoder, attention, decoder step and copy
//! mixture, plus the hand-derived backward pass for the sequence loss.

use super::lstm::{self, LstmCache};
use super::{AttentionParams, ModelParams};
use crate::corpus::{EncodedExample, TokenId, UNK};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{dot, sigmoid, softmax, LOG_FLOOR};

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

/// Encoder states for one article, with everything the decoder and the
/// backward pass need.
#[derive(Debug, Clone)]
pub struct EncoderOutput<T> {
    /// `[fwd ‖ bwd]` hidden state per position; zeros at padded positions.
    pub states: Vec<Vec<T>>,
    pub mask: Vec<bool>,
    /// `tanh`-reduced final encoder states.
    pub initial_state: DecoderState<T>,
    /// `W_h · states[j]`, precomputed once per article.
    features: Vec<Vec<T>>,
    ids: Vec<TokenId>,
    len: usize,
    fwd: Vec<LstmCache<T>>,
    bwd: Vec<LstmCache<T>>,
    reduce_in_h: Vec<T>,
    reduce_in_c: Vec<T>,
}

impl<T: Scalar> EncoderOutput<T> {
    /// Number of unpadded positions.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Forward-direction hidden state at position `t`.
    pub fn forward_state(&self, t: usize) -> &[T] {
        &self.fwd[t].h
    }

    /// Backward-direction hidden state at position `t`.
    pub fn backward_state(&self, t: usize) -> &[T] {
        &self.bwd[t].h
    }
}

/// Runs both encoder LSTMs over the unpadded prefix of `ids`.
///
/// Padding must be a suffix: once `mask` turns false it stays false.
pub fn encode<T: Scalar>(
    params: &ModelParams<T>,
    ids: &[TokenId],
    mask: Option<&[bool]>,
) -> Result<EncoderOutput<T>> {
    if ids.is_empty() {
        return Err(Error::Argument("cannot encode an empty sequence".into()));
    }
    let mask: Vec<bool> = match mask {
        Some(m) if m.len() != ids.len() => {
            return Err(Error::Dimension(format!(
                "mask length {} differs from sequence length {}",
                m.len(),
                ids.len()
            )))
        }
        Some(m) => m.to_vec(),
        None => vec![true; ids.len()],
    };
    let len = mask.iter().take_while(|&&m| m).count();
    if len == 0 {
        return Err(Error::Argument("every encoder position is padded".into()));
    }
    if mask[len..].iter().any(|&m| m) {
        return Err(Error::Argument("encoder padding must be a suffix".into()));
    }
    let v = params.config.vocab_size;
    if let Some(&bad) = ids[..len].iter().find(|&&id| id >= v) {
        return Err(Error::Index { index: bad, len: v });
    }

    let h = params.config.hidden_dim;
    let zeros = vec![T::zero(); h];
    let mut fwd: Vec<LstmCache<T>> = Vec::with_capacity(len);
    for t in 0..len {
        let (hp, cp) = fwd.last().map_or((&zeros, &zeros), |c| (&c.h, &c.c));
        let cache = lstm::forward(&params.encoder_fwd, params.embedding.row_slice(ids[t]), hp, cp);
        fwd.push(cache);
    }
    let mut bwd: Vec<LstmCache<T>> = Vec::with_capacity(len);
    for t in (0..len).rev() {
        let (hp, cp) = bwd.last().map_or((&zeros, &zeros), |c| (&c.h, &c.c));
        let cache = lstm::forward(&params.encoder_bwd, params.embedding.row_slice(ids[t]), hp, cp);
        bwd.push(cache);
    }
    bwd.reverse();

    let sdim = params.config.enc_state_dim();
    let mut states = vec![vec![T::zero(); sdim]; ids.len()];
    let mut features = vec![Vec::new(); ids.len()];
    for t in 0..len {
        states[t][..h].copy_from_slice(&fwd[t].h);
        states[t][h..].copy_from_slice(&bwd[t].h);
        features[t] = params.attention.w_h.matvec(&states[t]);
    }
    let reduce_in_h = [fwd[len - 1].h.as_slice(), bwd[0].h.as_slice()].concat();
    let reduce_in_c = [fwd[len - 1].c.as_slice(), bwd[0].c.as_slice()].concat();
    let r = &params.reduce;
    let initial_state = DecoderState {
        h: r.w_h.affine(&reduce_in_h, r.b_h.data()).into_iter().map(T::tanh).collect(),
        c: r.w_c.affine(&reduce_in_c, r.b_c.data()).into_iter().map(T::tanh).collect(),
    };
    Ok(EncoderOutput {
        states,
        mask,
        initial_state,
        features,
        ids: ids.to_vec(),
        len,
        fwd,
        bwd,
        reduce_in_h,
        reduce_in_c,
    })
}

#[derive(Debug, Clone)]
struct AttnCache<T> {
    /// `tanh(W_h h_j + W_s s + b)` per position (empty when padded).
    act: Vec<Vec<T>>,
    alpha: Vec<T>,
    context: Vec<T>,
}

fn attend_core<T: Scalar>(
    params: &AttentionParams<T>,
    s: &[T],
    states: &[Vec<T>],
    features: &[Vec<T>],
    mask: &[bool],
) -> Result<AttnCache<T>> {
    let shift = params.w_s.affine(s, params.b.data());
    let mut act = vec![Vec::new(); states.len()];
    let mut scores = Vec::new();
    for j in (0..states.len()).filter(|&j| mask[j]) {
        let a: Vec<T> = features[j].iter().zip(&shift).map(|(&f, &w)| (f + w).tanh()).collect();
        scores.push(dot(params.v.data(), &a));
        act[j] = a;
    }
    if scores.is_empty() {
        return Err(Error::Argument("attention over fully padded encoder states".into()));
    }
    let weights = softmax(&scores)?;
    let mut alpha = vec![T::zero(); states.len()];
    let mut context = vec![T::zero(); states[0].len()];
    for (j, w) in (0..states.len()).filter(|&j| mask[j]).zip(weights) {
        alpha[j] = w;
        for (c, &h) in context.iter_mut().zip(&states[j]) {
            *c += w * h;
        }
    }
    Ok(AttnCache { act, alpha, context })
}

/// Additive attention `e_j = vᵀ tanh(W_h h_j + W_s s + b)`, softmax over
/// unpadded positions; padded positions get weight exactly 0.
pub fn attention<T: Scalar>(
    decoder_state: &[T],
    encoder_states: &[Vec<T>],
    params: &AttentionParams<T>,
    mask: &[bool],
) -> Result<(Vec<T>, Vec<T>)> {
    if mask.len() != encoder_states.len() {
        return Err(Error::Dimension("mask length differs from encoder states".into()));
    }
    if decoder_state.len() != params.w_s.cols() {
        return Err(Error::Dimension(format!(
            "decoder state of length {} for attention expecting {}",
            decoder_state.len(),
            params.w_s.cols()
        )));
    }
    if let Some(bad) = encoder_states.iter().find(|h| h.len() != params.w_h.cols()) {
        return Err(Error::Dimension(format!(
            "encoder state of length {} for attention expecting {}",
            bad.len(),
            params.w_h.cols()
        )));
    }
    let features: Vec<Vec<T>> = encoder_states.iter().map(|h| params.w_h.matvec(h)).collect();
    let cache = attend_core(params, decoder_state, encoder_states, &features, mask)?;
    Ok((cache.alpha, cache.context))
}

/// Output of one decoder step before the copy mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderStepOutput<T> {
    pub p_vocab: Vec<T>,
    pub p_gen: T,
    pub alpha: Vec<T>,
    pub context: Vec<T>,
    pub state: DecoderState<T>,
}

#[derive(Debug, Clone)]
struct StepCache<T> {
    input_id: TokenId,
    x: Vec<T>,
    lstm: LstmCache<T>,
    attn: AttnCache<T>,
    out_in: Vec<T>,
    p_vocab: Vec<T>,
    p_gen: T,
}

fn step_forward<T: Scalar>(
    params: &ModelParams<T>,
    y_prev: TokenId,
    state: &DecoderState<T>,
    context_prev: &[T],
    enc: &EncoderOutput<T>,
) -> Result<StepCache<T>> {
    let cfg = &params.config;
    // extended ids have no embedding row
    let input_id = if y_prev < cfg.vocab_size { y_prev } else { UNK };
    let x = [params.embedding.row_slice(input_id), context_prev].concat();
    let lstm = lstm::forward(&params.decoder, &x, &state.h, &state.c);
    let attn = attend_core(&params.attention, &lstm.h, &enc.states, &enc.features, &enc.mask)?;
    let out_in = [lstm.h.as_slice(), attn.context.as_slice()].concat();
    let p_vocab = softmax(&params.output_w.affine(&out_in, params.output_b.data()))?;
    let p_gen = if cfg.use_pointer {
        let ptr = &params.pointer;
        sigmoid(
            dot(ptr.w_h.data(), &attn.context)
                + dot(ptr.w_s.data(), &lstm.h)
                + dot(ptr.w_x.data(), &x)
                + ptr.b.data()[0],
        )
    } else {
        T::one()
    };
    Ok(StepCache {
        input_id,
        x,
        lstm,
        attn,
        out_in,
        p_vocab,
        p_gen,
    })
}

/// One decoder step. The previous token may be an extended id; it is read
/// through the `UNK` embedding.
pub fn decode_step<T: Scalar>(
    params: &ModelParams<T>,
    y_prev: TokenId,
    state: &DecoderState<T>,
    context_prev: &[T],
    enc: &EncoderOutput<T>,
) -> Result<DecoderStepOutput<T>> {
    let cfg = &params.config;
    if state.h.len() != cfg.hidden_dim
        || state.c.len() != cfg.hidden_dim
        || context_prev.len() != cfg.enc_state_dim()
    {
        return Err(Error::Dimension(format!(
            "decoder state (h={}, c={}, context={}) for hidden dim {}",
            state.h.len(),
            state.c.len(),
            context_prev.len(),
            cfg.hidden_dim
        )));
    }
    if enc.states.first().map(Vec::len) != Some(cfg.enc_state_dim()) {
        return Err(Error::Dimension("encoder output does not match model".into()));
    }
    let c = step_forward(params, y_prev, state, context_prev, enc)?;
    Ok(DecoderStepOutput {
        p_vocab: c.p_vocab,
        p_gen: c.p_gen,
        alpha: c.attn.alpha,
        context: c.attn.context,
        state: DecoderState {
            h: c.lstm.h,
            c: c.lstm.c,
        },
    })
}

/// Pointer-generator mixture over the extended vocabulary:
/// `P(w) = p_gen·p_vocab(w) + (1 − p_gen)·Σ_{j: ext_j = w} α_j`.
pub fn final_distribution<T: Scalar>(
    out: &DecoderStepOutput<T>,
    extended_ids: &[TokenId],
    n_oov: usize,
) -> Result<Vec<T>> {
    mixture(&out.p_vocab, out.p_gen, &out.alpha, extended_ids, n_oov)
}

fn mixture<T: Scalar>(
    p_vocab: &[T],
    p_gen: T,
    alpha: &[T],
    extended_ids: &[TokenId],
    n_oov: usize,
) -> Result<Vec<T>> {
    if alpha.len() != extended_ids.len() {
        return Err(Error::Dimension(format!(
            "{} attention weights for {} extended ids",
            alpha.len(),
            extended_ids.len()
        )));
    }
    let size = p_vocab.len() + n_oov;
    let mut dist = Vec::with_capacity(size);
    dist.extend(p_vocab.iter().map(|&p| p_gen * p));
    dist.resize(size, T::zero());
    let copy = T::one() - p_gen;
    for (&id, &a) in extended_ids.iter().zip(alpha) {
        if id >= size {
            return Err(Error::Index { index: id, len: size });
        }
        dist[id] += copy * a;
    }
    Ok(dist)
}

/// Mean per-step negative log-likelihood of `example`'s target under the
/// model, optionally accumulating `scale ×` its gradient into `grads`.
///
/// The first decoder input is always the example's `START`. For each later
/// step `t`, `next_input(t, gold, prev_dist)` picks the input token given
/// the gold token and the previous step's final distribution. The choice is
/// treated as a constant by the backward pass.
pub fn sequence_loss<T, F>(
    params: &ModelParams<T>,
    example: &EncodedExample,
    mut next_input: F,
    grads: Option<&mut ModelParams<T>>,
    scale: T,
) -> Result<T>
where
    T: Scalar,
    F: FnMut(usize, TokenId, &[T]) -> Result<TokenId>,
{
    let cfg = params.config;
    if example.vocab_size != cfg.vocab_size {
        return Err(Error::Config(format!(
            "example encoded with vocabulary of {} but model has {}",
            example.vocab_size, cfg.vocab_size
        )));
    }
    let enc = encode(params, &example.encoder_ids, Some(&example.encoder_mask))?;
    let steps = example.decoder_mask.iter().take_while(|&&m| m).count();
    if steps == 0 {
        return Err(Error::Argument("example has no decoder steps".into()));
    }
    let ext_ids = &example.encoder_extended_ids;
    let n_oov = example.article_oovs.len();

    let mut caches: Vec<StepCache<T>> = Vec::with_capacity(steps);
    let mut targets = Vec::with_capacity(steps);
    let mut target_probs = Vec::with_capacity(steps);
    let mut state = enc.initial_state.clone();
    let mut context = vec![T::zero(); cfg.enc_state_dim()];
    let mut prev_dist: Vec<T> = Vec::new();
    let mut loss = T::zero();
    for t in 0..steps {
        let y_in = if t == 0 {
            example.decoder_input_ids[0]
        } else {
            next_input(t, example.decoder_input_ids[t], &prev_dist)?
        };
        let cache = step_forward(params, y_in, &state, &context, &enc)?;
        let dist = mixture(&cache.p_vocab, cache.p_gen, &cache.attn.alpha, ext_ids, n_oov)?;
        let mut target = example.target_ids[t];
        if !cfg.use_pointer && target >= cfg.vocab_size {
            target = UNK;
        }
        if target >= dist.len() {
            return Err(Error::Index {
                index: target,
                len: dist.len(),
            });
        }
        let p = dist[target];
        loss += -(p + T::lit(LOG_FLOOR)).ln();
        targets.push(target);
        target_probs.push(p);
        state = DecoderState {
            h: cache.lstm.h.clone(),
            c: cache.lstm.c.clone(),
        };
        context = cache.attn.context.clone();
        prev_dist = dist;
        caches.push(cache);
    }
    let steps_t = T::lit(steps as f64);
    if let Some(grads) = grads {
        backward(
            params,
            &enc,
            ext_ids,
            &caches,
            &targets,
            &target_probs,
            scale / steps_t,
            grads,
        );
    }
    Ok(loss / steps_t)
}

#[allow(clippy::too_many_arguments)]
fn backward<T: Scalar>(
    params: &ModelParams<T>,
    enc: &EncoderOutput<T>,
    ext_ids: &[TokenId],
    caches: &[StepCache<T>],
    targets: &[TokenId],
    target_probs: &[T],
    scale: T,
    grads: &mut ModelParams<T>,
) {
    let cfg = params.config;
    let (h, v, e) = (cfg.hidden_dim, cfg.vocab_size, cfg.emb_dim);
    let sdim = cfg.enc_state_dim();
    let one = T::one();
    let zero = T::zero();

    let mut d_states = vec![vec![zero; sdim]; enc.states.len()];
    let mut dh_next = vec![zero; h];
    let mut dc_next = vec![zero; h];
    let mut dctx_next = vec![zero; sdim];

    for t in (0..caches.len()).rev() {
        let c = &caches[t];
        let target = targets[t];
        let g_p = -scale / (target_probs[t] + T::lit(LOG_FLOOR));

        let mut dh = std::mem::replace(&mut dh_next, vec![zero; h]);
        let mut dctx = std::mem::replace(&mut dctx_next, vec![zero; sdim]);
        let mut dx = vec![zero; c.x.len()];
        let mut dalpha = vec![zero; enc.states.len()];

        let pv_target = if target < v { c.p_vocab[target] } else { zero };
        let dpv_target = g_p * c.p_gen;
        if cfg.use_pointer {
            let copy: T = ext_ids
                .iter()
                .zip(&c.attn.alpha)
                .filter(|(&id, _)| id == target)
                .map(|(_, &a)| a)
                .sum();
            let dpgen = g_p * (pv_target - copy);
            for (j, &id) in ext_ids.iter().enumerate() {
                if id == target && enc.mask[j] {
                    dalpha[j] += g_p * (one - c.p_gen);
                }
            }
            // p_gen = σ(w_h·ctx + w_s·h + w_x·x + b)
            let dz = dpgen * c.p_gen * (one - c.p_gen);
            let ptr = &params.pointer;
            let gp = &mut grads.pointer;
            let ctx = &c.attn.context;
            for k in 0..sdim {
                gp.w_h.data_mut()[k] += dz * ctx[k];
                dctx[k] += dz * ptr.w_h.data()[k];
            }
            for k in 0..h {
                gp.w_s.data_mut()[k] += dz * c.lstm.h[k];
                dh[k] += dz * ptr.w_s.data()[k];
            }
            for k in 0..c.x.len() {
                gp.w_x.data_mut()[k] += dz * c.x[k];
                dx[k] += dz * ptr.w_x.data()[k];
            }
            gp.b.data_mut()[0] += dz;
        }

        // vocabulary softmax: only the target entry of p_vocab has upstream gradient
        if target < v {
            let coeff = dpv_target * pv_target;
            let mut dlogits: Vec<T> = c.p_vocab.iter().map(|&p| -p * coeff).collect();
            dlogits[target] += coeff;
            grads.output_w.add_outer(&dlogits, &c.out_in);
            for (b, &d) in grads.output_b.data_mut().iter_mut().zip(&dlogits) {
                *b += d;
            }
            let mut d_out_in = vec![zero; c.out_in.len()];
            params.output_w.matvec_t_acc(&dlogits, &mut d_out_in);
            for k in 0..h {
                dh[k] += d_out_in[k];
            }
            for k in 0..sdim {
                dctx[k] += d_out_in[h + k];
            }
        }

        // context = Σ α_j h_j
        for j in (0..enc.states.len()).filter(|&j| enc.mask[j]) {
            dalpha[j] += dot(&dctx, &enc.states[j]);
            let a = c.attn.alpha[j];
            for (d, &g) in d_states[j].iter_mut().zip(&dctx) {
                *d += a * g;
            }
        }

        // attention softmax and scores
        let inner = dot(&c.attn.alpha, &dalpha);
        let att = &params.attention;
        let mut dpre_sum = vec![zero; cfg.attn_dim];
        for j in (0..enc.states.len()).filter(|&j| enc.mask[j]) {
            let de = c.attn.alpha[j] * (dalpha[j] - inner);
            if de == zero {
                continue;
            }
            let act = &c.attn.act[j];
            let dpre: Vec<T> = act
                .iter()
                .zip(att.v.data())
                .map(|(&a, &vk)| de * vk * (one - a * a))
                .collect();
            for (g, &a) in grads.attention.v.data_mut().iter_mut().zip(act) {
                *g += de * a;
            }
            grads.attention.w_h.add_outer(&dpre, &enc.states[j]);
            att.w_h.matvec_t_acc(&dpre, &mut d_states[j]);
            for (s, &d) in dpre_sum.iter_mut().zip(&dpre) {
                *s += d;
            }
        }
        grads.attention.w_s.add_outer(&dpre_sum, &c.lstm.h);
        for (b, &d) in grads.attention.b.data_mut().iter_mut().zip(&dpre_sum) {
            *b += d;
        }
        att.w_s.matvec_t_acc(&dpre_sum, &mut dh);

        let (dx_lstm, dh_prev, dc_prev) =
            lstm::backward(&params.decoder, &c.lstm, &dh, &dc_next, &mut grads.decoder);
        for (d, g) in dx.iter_mut().zip(dx_lstm) {
            *d += g;
        }
        for (g, &d) in grads.embedding.row_slice_mut(c.input_id).iter_mut().zip(&dx[..e]) {
            *g += d;
        }
        dctx_next = dx[e..].to_vec();
        dh_next = dh_prev;
        dc_next = dc_prev;
    }

    // initial decoder state = tanh(W · [fwd_last ‖ bwd_first] + b)
    let r = &params.reduce;
    let reduce_back = |w: &crate::tensor::Tensor2D<T>,
                       out: &[T],
                       d_out: &[T],
                       input: &[T],
                       gw: &mut crate::tensor::Tensor2D<T>,
                       gb: &mut crate::tensor::Tensor2D<T>| {
        let dpre: Vec<T> = out.iter().zip(d_out).map(|(&y, &g)| g * (one - y * y)).collect();
        gw.add_outer(&dpre, input);
        for (b, &d) in gb.data_mut().iter_mut().zip(&dpre) {
            *b += d;
        }
        let mut d_in = vec![zero; input.len()];
        w.matvec_t_acc(&dpre, &mut d_in);
        d_in
    };
    let d_in_h = reduce_back(
        &r.w_h,
        &enc.initial_state.h,
        &dh_next,
        &enc.reduce_in_h,
        &mut grads.reduce.w_h,
        &mut grads.reduce.b_h,
    );
    let d_in_c = reduce_back(
        &r.w_c,
        &enc.initial_state.c,
        &dc_next,
        &enc.reduce_in_c,
        &mut grads.reduce.w_c,
        &mut grads.reduce.b_c,
    );

    let len = enc.len;
    // forward encoder: processed 0..len, so backprop len-1..=0
    let mut dh_carry = d_in_h[..h].to_vec();
    let mut dc_carry = d_in_c[..h].to_vec();
    for t in (0..len).rev() {
        let dh: Vec<T> = dh_carry.iter().zip(&d_states[t][..h]).map(|(&a, &b)| a + b).collect();
        let (dx, dhp, dcp) =
            lstm::backward(&params.encoder_fwd, &enc.fwd[t], &dh, &dc_carry, &mut grads.encoder_fwd);
        for (g, &d) in grads.embedding.row_slice_mut(enc.ids[t]).iter_mut().zip(&dx) {
            *g += d;
        }
        dh_carry = dhp;
        dc_carry = dcp;
    }
    // backward encoder: processed len-1..=0, so backprop 0..len
    let mut dh_carry = d_in_h[h..].to_vec();
    let mut dc_carry = d_in_c[h..].to_vec();
    for t in 0..len {
        let dh: Vec<T> = dh_carry.iter().zip(&d_states[t][h..]).map(|(&a, &b)| a + b).collect();
        let (dx, dhp, dcp) =
            lstm::backward(&params.encoder_bwd, &enc.bwd[t], &dh, &dc_carry, &mut grads.encoder_bwd);
        for (g, &d) in grads.embedding.row_slice_mut(enc.ids[t]).iter_mut().zip(&dx) {
            *g += d;
        }
        dh_carry = dhp;
        dc_carry = dcp;
    }
}
