//! Additive attention: `e_j = vᵀ tanh(W_enc h_j + W_dec s + W_emb y + b)`,
//! `att = softmax(e)`, context `u = Σ_j att_j h_j`.

use super::ops::softmax_nonempty;
use super::tensor::{axpy, dot};
use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights<F> {
    pub w_enc: Tensor<F>,
    pub w_dec: Tensor<F>,
    pub w_emb: Tensor<F>,
    pub b: Tensor<F>,
    pub v: Tensor<F>,
}

#[derive(Clone, Debug)]
pub struct AttentionCache<F> {
    /// tanh activations, one row per source position.
    pub act: Tensor<F>,
    pub att: Vec<F>,
}

impl<F: Real> AttentionWeights<F> {
    pub fn zeros(enc_dim: usize, dec_dim: usize, emb_dim: usize, att_dim: usize) -> Self {
        AttentionWeights {
            w_enc: Tensor::zeros(att_dim, enc_dim),
            w_dec: Tensor::zeros(att_dim, dec_dim),
            w_emb: Tensor::zeros(att_dim, emb_dim),
            b: Tensor::zeros(1, att_dim),
            v: Tensor::zeros(1, att_dim),
        }
    }

    pub fn att_dim(&self) -> usize {
        self.v.cols()
    }

    /// Projects encoder states once per sentence: row j is `W_enc h_j`.
    pub fn keys(&self, enc: &Tensor<F>) -> Tensor<F> {
        let mut keys = Tensor::zeros(enc.rows(), self.att_dim());
        for j in 0..enc.rows() {
            self.w_enc.matvec(enc.row(j), keys.row_mut(j));
        }
        keys
    }

    pub fn forward(&self, keys: &Tensor<F>, h_prev: &[F], e_prev: &[F]) -> (Vec<F>, AttentionCache<F>) {
        let mut q = self.b.as_slice().to_vec();
        self.w_dec.matvec_add(h_prev, &mut q);
        self.w_emb.matvec_add(e_prev, &mut q);

        let mut act = Tensor::zeros(keys.rows(), self.att_dim());
        let mut scores = Vec::with_capacity(keys.rows());
        for j in 0..keys.rows() {
            let row = act.row_mut(j);
            for ((a, &k), &qv) in row.iter_mut().zip(keys.row(j)).zip(&q) {
                *a = (k + qv).tanh();
            }
            scores.push(dot(act.row(j), self.v.as_slice()));
        }
        let att = softmax_nonempty(&scores);
        (att.clone(), AttentionCache { act, att })
    }

    /// Backward from `datt` (gradient w.r.t. the attention weights).
    /// Accumulates into `grads`, `dkeys`, `dh_prev` and `de_prev`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        cache: &AttentionCache<F>,
        datt: &[F],
        h_prev: &[F],
        e_prev: &[F],
        grads: &mut AttentionWeights<F>,
        dkeys: &mut Tensor<F>,
        dh_prev: &mut [F],
        de_prev: &mut [F],
    ) {
        let att = &cache.att;
        let mean = dot(att, datt);
        let mut dq = vec![F::zero(); self.att_dim()];
        let mut dt = vec![F::zero(); self.att_dim()];
        for j in 0..att.len() {
            let ds = att[j] * (datt[j] - mean);
            if ds == F::zero() {
                continue;
            }
            let act = cache.act.row(j);
            axpy(ds, act, grads.v.as_mut_slice());
            for ((d, &a), &v) in dt.iter_mut().zip(act).zip(self.v.as_slice()) {
                *d = ds * v * (F::one() - a * a);
            }
            axpy(F::one(), &dt, dkeys.row_mut(j));
            axpy(F::one(), &dt, &mut dq);
        }
        axpy(F::one(), &dq, grads.b.as_mut_slice());
        grads.w_dec.outer_add(&dq, h_prev);
        grads.w_emb.outer_add(&dq, e_prev);
        self.w_dec.matvec_t_add(&dq, dh_prev);
        self.w_emb.matvec_t_add(&dq, de_prev);
    }

    /// Backward of [`Self::keys`]: accumulates into `grads.w_enc` and `denc`.
    pub fn keys_backward(&self, enc: &Tensor<F>, dkeys: &Tensor<F>, grads: &mut AttentionWeights<F>, denc: &mut Tensor<F>) {
        for j in 0..enc.rows() {
            grads.w_enc.outer_add(dkeys.row(j), enc.row(j));
            self.w_enc.matvec_t_add(dkeys.row(j), denc.row_mut(j));
        }
    }

    /// Attention distribution over encoder positions, with shape checks.
    pub fn attention_scores(&self, enc: &Tensor<F>, h_prev: &[F], e_prev: &[F]) -> Result<Vec<F>> {
        if enc.rows() == 0 {
            return Err(Error::EmptyInput("attention over zero encoder states"));
        }
        if enc.cols() != self.w_enc.cols()
            || h_prev.len() != self.w_dec.cols()
            || e_prev.len() != self.w_emb.cols()
        {
            return Err(Error::shape(
                "attention",
                format!("enc:{} h:{} e:{}", self.w_enc.cols(), self.w_dec.cols(), self.w_emb.cols()),
                format!("enc:{} h:{} e:{}", enc.cols(), h_prev.len(), e_prev.len()),
            ));
        }
        Ok(self.forward(&self.keys(enc), h_prev, e_prev).0)
    }
}

/// Context vector `Σ_j att_j enc_j`.
pub fn context<F: Real>(att: &[F], enc: &Tensor<F>) -> Vec<F> {
    let mut ctx = vec![F::zero(); enc.cols()];
    for (j, &a) in att.iter().enumerate() {
        axpy(a, enc.row(j), &mut ctx);
    }
    ctx
}

/// Backward of [`context`]: returns d att and accumulates into `denc`.
pub fn context_backward<F: Real>(att: &[F], enc: &Tensor<F>, dctx: &[F], denc: &mut Tensor<F>) -> Vec<F> {
    let mut datt = Vec::with_capacity(att.len());
    for (j, &a) in att.iter().enumerate() {
        datt.push(dot(dctx, enc.row(j)));
        axpy(a, dctx, denc.row_mut(j));
    }
    datt
}
