use rand::Rng;

use super::{Real, Tensor};
use crate::error::{Error, Result};

#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// Numerically stable softmax. Shifting every input by the same constant
/// leaves the result unchanged.
pub fn softmax<F: Real>(x: &[F]) -> Result<Vec<F>> {
    if x.is_empty() {
        return Err(Error::EmptyInput("softmax of an empty vector"));
    }
    Ok(softmax_nonempty(x))
}

pub(crate) fn softmax_nonempty<F: Real>(x: &[F]) -> Vec<F> {
    let max = x.iter().copied().fold(F::neg_infinity(), F::max);
    let mut out: Vec<F> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: F = out.iter().copied().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

/// Negative log-likelihood of `target` under softmax(`logits`), with the
/// softmax probabilities. The gradient w.r.t. the logits is `probs − onehot`.
pub fn cross_entropy<F: Real>(logits: &[F], target: usize) -> Result<(F, Vec<F>)> {
    if target >= logits.len() {
        return Err(Error::shape("cross entropy target", format!("< {}", logits.len()), target));
    }
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let log_z = logits.iter().map(|&v| (v - max).exp()).sum::<F>().ln() + max;
    let probs = softmax(logits)?;
    Ok((log_z - logits[target], probs))
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, else 1/(1−p).
pub fn dropout_mask<F: Real, R: Rng>(n: usize, p: f64, rng: &mut R) -> Vec<F> {
    if p <= 0.0 {
        return vec![F::one(); n];
    }
    let keep = F::of(1.0 / (1.0 - p));
    (0..n)
        .map(|_| if rng.gen::<f64>() < p { F::zero() } else { keep })
        .collect()
}

pub fn dropout<F: Real, R: Rng>(x: &[F], p: f64, rng: &mut R) -> Vec<F> {
    if p <= 0.0 {
        return x.to_vec();
    }
    let mask: Vec<F> = dropout_mask(x.len(), p, rng);
    x.iter().zip(&mask).map(|(&a, &m)| a * m).collect()
}

pub fn global_norm<'a, F: Real, I>(tensors: I) -> f64
where
    I: IntoIterator<Item = &'a Tensor<F>>,
{
    tensors
        .into_iter()
        .flat_map(|t| t.as_slice())
        .map(|x| {
            let x = x.as_f64();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescales all tensors so that their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients<F: Real>(tensors: &mut [&mut Tensor<F>], max_norm: f64) -> f64 {
    let norm = global_norm(tensors.iter().map(|t| &**t));
    if norm > max_norm && norm > 0.0 {
        let factor = F::of(max_norm / norm);
        for t in tensors.iter_mut() {
            t.scale(factor);
        }
    }
    norm
}
