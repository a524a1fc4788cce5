use super::ops::sigmoid;
use super::tensor::axpy;
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// LSTM cell weights. `w` is 4H × (I + H) acting on `[x ; h]`; gate rows are
/// laid out as input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmWeights<F> {
    pub w: Tensor<F>,
    pub b: Tensor<F>,
}

impl<F: Real> LstmWeights<F> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmWeights {
            w: Tensor::zeros(4 * hidden, input + hidden),
            b: Tensor::zeros(1, 4 * hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w.rows() / 4
    }

    pub fn input_size(&self) -> usize {
        self.w.cols() - self.hidden_size()
    }

    /// Sets the forget-gate bias slice to `value`.
    pub fn set_forget_bias(&mut self, value: F) {
        let h = self.hidden_size();
        self.b.as_mut_slice()[h..2 * h]
            .iter_mut()
            .for_each(|x| *x = value);
    }
}

/// Values saved by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmCache<F> {
    /// `[x ; h_prev]`
    pub z: Vec<F>,
    /// Activated gates i, f, g, o.
    pub gates: Vec<F>,
    pub c_prev: Vec<F>,
    pub tanh_c: Vec<F>,
}

/// One LSTM step with shape checks.
pub fn lstm_cell<F: Real>(
    x: &[F],
    h: &[F],
    c: &[F],
    weights: &LstmWeights<F>,
) -> Result<(Vec<F>, Vec<F>)> {
    let (i, hs) = (weights.input_size(), weights.hidden_size());
    if x.len() != i || h.len() != hs || c.len() != hs {
        return Err(Error::shape(
            "lstm cell",
            format!("x:{i} h:{hs} c:{hs}"),
            format!("x:{} h:{} c:{}", x.len(), h.len(), c.len()),
        ));
    }
    let (h, c, _) = lstm_forward(weights, x, h, c);
    Ok((h, c))
}

pub fn lstm_forward<F: Real>(
    weights: &LstmWeights<F>,
    x: &[F],
    h: &[F],
    c: &[F],
) -> (Vec<F>, Vec<F>, LstmCache<F>) {
    let hs = weights.hidden_size();
    let mut z = Vec::with_capacity(x.len() + h.len());
    z.extend_from_slice(x);
    z.extend_from_slice(h);

    let mut gates = weights.b.as_slice().to_vec();
    weights.w.matvec_add(&z, &mut gates);
    for (k, g) in gates.iter_mut().enumerate() {
        *g = if (2 * hs..3 * hs).contains(&k) {
            g.tanh()
        } else {
            sigmoid(*g)
        };
    }

    let mut c_new = vec![F::zero(); hs];
    let mut tanh_c = vec![F::zero(); hs];
    let mut h_new = vec![F::zero(); hs];
    for k in 0..hs {
        let (ig, fg, gg, og) = (gates[k], gates[hs + k], gates[2 * hs + k], gates[3 * hs + k]);
        c_new[k] = fg * c[k] + ig * gg;
        tanh_c[k] = c_new[k].tanh();
        h_new[k] = og * tanh_c[k];
    }
    let cache = LstmCache {
        z,
        gates,
        c_prev: c.to_vec(),
        tanh_c,
    };
    (h_new, c_new, cache)
}

/// Backward through one step. Given the gradients flowing into `h'` and `c'`,
/// accumulates weight gradients and returns `(dx, dh_prev, dc_prev)`.
pub fn lstm_backward<F: Real>(
    weights: &LstmWeights<F>,
    cache: &LstmCache<F>,
    dh: &[F],
    dc: &[F],
    grads: &mut LstmWeights<F>,
) -> (Vec<F>, Vec<F>, Vec<F>) {
    let hs = weights.hidden_size();
    let one = F::one();
    let mut dpre = vec![F::zero(); 4 * hs];
    let mut dc_prev = vec![F::zero(); hs];
    let g = &cache.gates;
    for k in 0..hs {
        let (ig, fg, gg, og) = (g[k], g[hs + k], g[2 * hs + k], g[3 * hs + k]);
        let t = cache.tanh_c[k];
        let d_o = dh[k] * t;
        let dct = dc[k] + dh[k] * og * (one - t * t);
        let d_i = dct * gg;
        let d_g = dct * ig;
        let d_f = dct * cache.c_prev[k];
        dc_prev[k] = dct * fg;
        dpre[k] = d_i * ig * (one - ig);
        dpre[hs + k] = d_f * fg * (one - fg);
        dpre[2 * hs + k] = d_g * (one - gg * gg);
        dpre[3 * hs + k] = d_o * og * (one - og);
    }
    grads.w.outer_add(&dpre, &cache.z);
    axpy(one, &dpre, grads.b.as_mut_slice());
    let mut dz = vec![F::zero(); cache.z.len()];
    weights.w.matvec_t_add(&dpre, &mut dz);
    let dh_prev = dz.split_off(cache.z.len() - hs);
    (dz, dh_prev, dc_prev)
}
