use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::neural::{AttentionWeights, Linear, LstmWeights, Real, Tensor};

/// Uniform initialization range for weight matrices and embeddings.
pub const INIT_SCALE: f64 = 0.1;
pub const FORGET_BIAS: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub embedding: usize,
    pub hidden: usize,
    pub layers: usize,
}

/// Every trainable tensor of the encoder-decoder.
///
/// The encoder is a stack of bidirectional LSTMs (index 0 forward, 1 backward);
/// layer 0 reads embeddings and deeper layers read the `2H` concatenation of
/// the layer below. The decoder's first layer reads `[embedding ; context]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<F> {
    pub src_embedding: Tensor<F>,
    pub tgt_embedding: Tensor<F>,
    pub encoder: Vec<[LstmWeights<F>; 2]>,
    /// Maps `[h_fwd(last) ; h_bwd(first)]` of encoder layer l to the initial
    /// hidden state of decoder layer l.
    pub bridge: Vec<Linear<F>>,
    pub decoder: Vec<LstmWeights<F>>,
    pub attention: AttentionWeights<F>,
    pub output: Linear<F>,
}

impl<F: Real> Parameters<F> {
    pub fn zeros(d: &Dims) -> Self {
        let (e, h) = (d.embedding, d.hidden);
        let encoder = (0..d.layers)
            .map(|l| {
                let input = if l == 0 { e } else { 2 * h };
                [LstmWeights::zeros(input, h), LstmWeights::zeros(input, h)]
            })
            .collect();
        let decoder = (0..d.layers)
            .map(|l| LstmWeights::zeros(if l == 0 { e + 2 * h } else { h }, h))
            .collect();
        Parameters {
            src_embedding: Tensor::zeros(d.src_vocab, e),
            tgt_embedding: Tensor::zeros(d.tgt_vocab, e),
            encoder,
            bridge: (0..d.layers).map(|_| Linear::zeros(2 * h, h)).collect(),
            decoder,
            attention: AttentionWeights::zeros(2 * h, h, e, h),
            output: Linear::zeros(h, d.tgt_vocab),
        }
    }

    /// Uniform(−0.1, 0.1) weights and embeddings, zero biases, forget-gate bias 1.
    pub fn init(d: &Dims, seed: u64) -> Self {
        Self::init_with_scale(d, seed, INIT_SCALE)
    }

    pub fn init_with_scale(d: &Dims, seed: u64, scale: f64) -> Self {
        let mut params = Self::zeros(d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, t) in params.named_mut() {
            if !is_bias(&name) {
                *t = Tensor::uniform(t.rows(), t.cols(), scale, &mut rng);
            }
        }
        let forget = F::of(FORGET_BIAS);
        for layer in &mut params.encoder {
            layer.iter_mut().for_each(|w| w.set_forget_bias(forget));
        }
        params.decoder.iter_mut().for_each(|w| w.set_forget_bias(forget));
        params
    }

    pub fn dims(&self) -> Dims {
        Dims {
            src_vocab: self.src_embedding.rows(),
            tgt_vocab: self.tgt_embedding.rows(),
            embedding: self.src_embedding.cols(),
            hidden: self.bridge.first().map_or(0, |b| b.b.cols()),
            layers: self.encoder.len(),
        }
    }

    pub fn map<G: Real>(&self, mut f: impl FnMut(&Tensor<F>) -> Tensor<G>) -> Parameters<G> {
        let mut lstm = |w: &LstmWeights<F>| LstmWeights {
            w: f(&w.w),
            b: f(&w.b),
        };
        let encoder = self
            .encoder
            .iter()
            .map(|[a, b]| [lstm(a), lstm(b)])
            .collect();
        let decoder = self.decoder.iter().map(&mut lstm).collect();
        let mut linear = |l: &Linear<F>| Linear { w: f(&l.w), b: f(&l.b) };
        let bridge = self.bridge.iter().map(&mut linear).collect();
        let output = linear(&self.output);
        let a = &self.attention;
        Parameters {
            src_embedding: f(&self.src_embedding),
            tgt_embedding: f(&self.tgt_embedding),
            encoder,
            bridge,
            decoder,
            attention: AttentionWeights {
                w_enc: f(&a.w_enc),
                w_dec: f(&a.w_dec),
                w_emb: f(&a.w_emb),
                b: f(&a.b),
                v: f(&a.v),
            },
            output,
        }
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|t| Tensor::zeros(t.rows(), t.cols()))
    }

    pub fn cast<G: Real>(&self) -> Parameters<G> {
        self.map(|t| t.cast())
    }

    /// Tensors with stable names, in serialization order.
    pub fn named(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = vec![
            ("src_embedding".to_owned(), &self.src_embedding),
            ("tgt_embedding".to_owned(), &self.tgt_embedding),
        ];
        for (l, dirs) in self.encoder.iter().enumerate() {
            for (dir, w) in ["fwd", "bwd"].iter().zip(dirs) {
                out.push((format!("encoder.{l}.{dir}.w"), &w.w));
                out.push((format!("encoder.{l}.{dir}.b"), &w.b));
            }
        }
        for (l, b) in self.bridge.iter().enumerate() {
            out.push((format!("bridge.{l}.w"), &b.w));
            out.push((format!("bridge.{l}.b"), &b.b));
        }
        for (l, w) in self.decoder.iter().enumerate() {
            out.push((format!("decoder.{l}.w"), &w.w));
            out.push((format!("decoder.{l}.b"), &w.b));
        }
        let a = &self.attention;
        out.push(("attention.w_enc".to_owned(), &a.w_enc));
        out.push(("attention.w_dec".to_owned(), &a.w_dec));
        out.push(("attention.w_emb".to_owned(), &a.w_emb));
        out.push(("attention.b".to_owned(), &a.b));
        out.push(("attention.v".to_owned(), &a.v));
        out.push(("output.w".to_owned(), &self.output.w));
        out.push(("output.b".to_owned(), &self.output.b));
        out
    }

    /// Same order as [`Self::named`].
    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        let mut out = vec![
            ("src_embedding".to_owned(), &mut self.src_embedding),
            ("tgt_embedding".to_owned(), &mut self.tgt_embedding),
        ];
        for (l, dirs) in self.encoder.iter_mut().enumerate() {
            for (dir, w) in ["fwd", "bwd"].iter().zip(dirs) {
                out.push((format!("encoder.{l}.{dir}.w"), &mut w.w));
                out.push((format!("encoder.{l}.{dir}.b"), &mut w.b));
            }
        }
        for (l, b) in self.bridge.iter_mut().enumerate() {
            out.push((format!("bridge.{l}.w"), &mut b.w));
            out.push((format!("bridge.{l}.b"), &mut b.b));
        }
        for (l, w) in self.decoder.iter_mut().enumerate() {
            out.push((format!("decoder.{l}.w"), &mut w.w));
            out.push((format!("decoder.{l}.b"), &mut w.b));
        }
        let a = &mut self.attention;
        out.push(("attention.w_enc".to_owned(), &mut a.w_enc));
        out.push(("attention.w_dec".to_owned(), &mut a.w_dec));
        out.push(("attention.w_emb".to_owned(), &mut a.w_emb));
        out.push(("attention.b".to_owned(), &mut a.b));
        out.push(("attention.v".to_owned(), &mut a.v));
        out.push(("output.w".to_owned(), &mut self.output.w));
        out.push(("output.b".to_owned(), &mut self.output.b));
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor<F>> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        self.named_mut().into_iter().map(|(_, t)| t).collect()
    }

    pub fn add_assign(&mut self, other: &Parameters<F>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

fn is_bias(name: &str) -> bool {
    name.ends_with(".b")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims {
            src_vocab: 7,
            tgt_vocab: 6,
            embedding: 3,
            hidden: 4,
            layers: 2,
        }
    }

    #[test]
    fn named_and_mutable_orders_agree() {
        let mut p = Parameters::<f32>::init(&dims(), 1);
        let names: Vec<(String, (usize, usize))> =
            p.named().into_iter().map(|(n, t)| (n, t.shape())).collect();
        let names_mut: Vec<(String, (usize, usize))> =
            p.named_mut().into_iter().map(|(n, t)| (n, t.shape())).collect();
        assert_eq!(names, names_mut);
        assert_eq!(p.dims(), dims());
    }

    #[test]
    fn init_is_seeded_and_precision_independent() {
        let a = Parameters::<f32>::init(&dims(), 42);
        let b = Parameters::<f32>::init(&dims(), 42);
        assert_eq!(a, b);
        let c = Parameters::<f64>::init(&dims(), 42);
        assert_eq!(c.cast::<f32>(), a);
        assert_ne!(Parameters::<f32>::init(&dims(), 43), a);
    }

    #[test]
    fn biases_and_forget_gates() {
        let p = Parameters::<f64>::init(&dims(), 3);
        let b = p.decoder[0].b.as_slice();
        assert!(b[..4].iter().all(|&x| x == 0.0));
        assert!(b[4..8].iter().all(|&x| x == 1.0));
        assert!(p.output.b.as_slice().iter().all(|&x| x == 0.0));
        assert!(p
            .output
            .w
            .as_slice()
            .iter()
            .all(|&x| x.abs() < INIT_SCALE && x != 0.0));
    }
}
