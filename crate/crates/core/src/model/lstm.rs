use super::LstmParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::sigmoid;

/// Activations of one LSTM step kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LstmCache<T> {
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub c_prev: Vec<T>,
    pub i: Vec<T>,
    pub f: Vec<T>,
    pub g: Vec<T>,
    pub o: Vec<T>,
    pub tanh_c: Vec<T>,
    pub c: Vec<T>,
    pub h: Vec<T>,
}

/// One LSTM step: `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`.
pub fn lstm_step<T: Scalar>(
    x: &[T],
    h: &[T],
    c: &[T],
    params: &LstmParams<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    let hd = params.hidden_dim();
    if x.len() != params.input_dim() || h.len() != hd || c.len() != hd {
        return Err(Error::Dimension(format!(
            "lstm_step got x={}, h={}, c={} for input dim {} and hidden dim {hd}",
            x.len(),
            h.len(),
            c.len(),
            params.input_dim()
        )));
    }
    let cache = forward(params, x, h, c);
    Ok((cache.h, cache.c))
}

pub(crate) fn forward<T: Scalar>(params: &LstmParams<T>, x: &[T], h: &[T], c: &[T]) -> LstmCache<T> {
    let hd = params.hidden_dim();
    let mut z = params.w.affine(x, params.b.data());
    for (zi, r) in z.iter_mut().zip(params.u.matvec(h)) {
        *zi += r;
    }
    let i: Vec<T> = z[..hd].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<T> = z[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<T> = z[2 * hd..3 * hd].iter().map(|&v| v.tanh()).collect();
    let o: Vec<T> = z[3 * hd..].iter().map(|&v| sigmoid(v)).collect();
    let c_new: Vec<T> = (0..hd).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<T> = c_new.iter().map(|v| v.tanh()).collect();
    let h_new: Vec<T> = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
    LstmCache {
        x: x.to_vec(),
        h_prev: h.to_vec(),
        c_prev: c.to_vec(),
        i,
        f,
        g,
        o,
        tanh_c,
        c: c_new,
        h: h_new,
    }
}

/// Accumulates parameter gradients into `grads` and returns the gradients
/// with respect to `(x, h_prev, c_prev)`.
pub(crate) fn backward<T: Scalar>(
    params: &LstmParams<T>,
    cache: &LstmCache<T>,
    dh: &[T],
    dc: &[T],
    grads: &mut LstmParams<T>,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let hd = params.hidden_dim();
    let one = T::one();
    let mut dz = vec![T::zero(); 4 * hd];
    let mut dc_prev = vec![T::zero(); hd];
    for k in 0..hd {
        let (i, f, g, o, tc) = (cache.i[k], cache.f[k], cache.g[k], cache.o[k], cache.tanh_c[k]);
        let dct = dc[k] + dh[k] * o * (one - tc * tc);
        dz[k] = dct * g * i * (one - i);
        dz[hd + k] = dct * cache.c_prev[k] * f * (one - f);
        dz[2 * hd + k] = dct * i * (one - g * g);
        dz[3 * hd + k] = dh[k] * tc * o * (one - o);
        dc_prev[k] = dct * f;
    }
    grads.w.add_outer(&dz, &cache.x);
    grads.u.add_outer(&dz, &cache.h_prev);
    for (b, &d) in grads.b.data_mut().iter_mut().zip(&dz) {
        *b += d;
    }
    let mut dx = vec![T::zero(); cache.x.len()];
    params.w.matvec_t_acc(&dz, &mut dx);
    let mut dh_prev = vec![T::zero(); hd];
    params.u.matvec_t_acc(&dz, &mut dh_prev);
    (dx, dh_prev, dc_prev)
}
