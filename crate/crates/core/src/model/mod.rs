//! The encoder-decoder: a stacked bidirectional LSTM encoder, a learned
//! bridge to the decoder's initial state, and an attentional LSTM decoder.

mod checkpoint;
mod fragments;
mod graph;
mod params;
mod train;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::neural::ops::softmax_nonempty;
use crate::neural::{Real, Tensor};

pub use checkpoint::{CheckpointMeta, ModelCheckpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use fragments::{CellObjective, PairObjective};
pub use graph::Noise;
pub use params::{Dims, Parameters, FORGET_BIAS, INIT_SCALE};
pub use train::{
    evaluate_loss, fine_tune, fine_tune_with, train, train_with, EpochLog, Flow, TrainOutcome,
    Trainer,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub embedding_size: usize,
    pub layers: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub grad_clip: f64,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_size: 128,
            embedding_size: 128,
            layers: 2,
            batch_size: 32,
            dropout: 0.2,
            grad_clip: 5.0,
            lr: 0.001,
            max_epochs: 100,
            patience: 5,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_size", self.hidden_size),
            ("embedding_size", self.embedding_size),
            ("layers", self.layers),
            ("batch_size", self.batch_size),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::Config(format!("grad_clip {} must be positive", self.grad_clip)));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        Ok(())
    }

    pub fn dims(&self, src_vocab: usize, tgt_vocab: usize) -> Dims {
        Dims {
            src_vocab,
            tgt_vocab,
            embedding: self.embedding_size,
            hidden: self.hidden_size,
            layers: self.layers,
        }
    }
}

/// Recurrent state of the decoder stack, one entry per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState<F> {
    pub h: Vec<Vec<F>>,
    pub c: Vec<Vec<F>>,
}

/// Top-layer encoder states (one `2H` row per source token), their attention
/// projections, and the decoder state produced by the bridge.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStates<F> {
    pub states: Tensor<F>,
    pub keys: Tensor<F>,
    pub init: DecoderState<F>,
}

impl<F: Real> EncoderStates<F> {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput<F> {
    /// Decoder distribution over the target vocabulary.
    pub distribution: Vec<F>,
    /// Attention over source positions.
    pub attention: Vec<F>,
    pub state: DecoderState<F>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<F> {
    pub config: ModelConfig,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub params: Parameters<F>,
}

impl<F: Real> Model<F> {
    /// Freshly initialized model seeded from `config.seed`.
    pub fn new(config: ModelConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let params = Parameters::init(&config.dims(src_vocab.len(), tgt_vocab.len()), config.seed);
        Ok(Model {
            config,
            src_vocab,
            tgt_vocab,
            params,
        })
    }

    /// Assembles a model from existing parameters, checking every shape.
    pub fn from_parts(
        config: ModelConfig,
        src_vocab: Vocabulary,
        tgt_vocab: Vocabulary,
        params: Parameters<F>,
    ) -> Result<Self> {
        config.validate()?;
        let expected = Parameters::<F>::zeros(&config.dims(src_vocab.len(), tgt_vocab.len()));
        for ((name, want), (_, got)) in expected.named().into_iter().zip(params.named()) {
            if want.shape() != got.shape() {
                return Err(Error::shape(
                    "parameter",
                    format!("{name} {:?}", want.shape()),
                    format!("{name} {:?}", got.shape()),
                ));
            }
        }
        Ok(Model {
            config,
            src_vocab,
            tgt_vocab,
            params,
        })
    }

    pub fn cast<G: Real>(&self) -> Model<G> {
        Model {
            config: self.config.clone(),
            src_vocab: self.src_vocab.clone(),
            tgt_vocab: self.tgt_vocab.clone(),
            params: self.params.cast(),
        }
    }

    pub fn encode_source(&self, tokens: &[String]) -> Vec<usize> {
        self.src_vocab.encode(tokens, false)
    }

    pub fn encode_target(&self, tokens: &[String]) -> Vec<usize> {
        self.tgt_vocab.encode(tokens, false)
    }

    /// Runs the encoder over source ids (no BOS/EOS) and the bridge.
    pub fn encode(&self, src_ids: &[usize]) -> Result<EncoderStates<F>> {
        if src_ids.is_empty() {
            return Err(Error::EmptyInput("cannot encode an empty source sentence"));
        }
        let v = self.src_vocab.len();
        if let Some(&bad) = src_ids.iter().find(|&&i| i >= v) {
            return Err(Error::shape("source token id", format!("< {v}"), bad));
        }
        Ok(graph::encode_forward(&self.params, src_ids, None).0)
    }

    /// One decoder step without dropout. Returns the softmax distribution over
    /// the target vocabulary, the attention weights and the next state.
    pub fn decode_step(
        &self,
        state: &DecoderState<F>,
        prev: usize,
        enc: &EncoderStates<F>,
    ) -> Result<StepOutput<F>> {
        let d = self.params.dims();
        if prev >= d.tgt_vocab {
            return Err(Error::shape("previous target id", format!("< {}", d.tgt_vocab), prev));
        }
        let state_ok = state.h.len() == d.layers
            && state.c.len() == d.layers
            && state.h.iter().chain(&state.c).all(|v| v.len() == d.hidden);
        if !state_ok {
            return Err(Error::shape(
                "decoder state",
                format!("{} layers × {}", d.layers, d.hidden),
                format!("{} layers", state.h.len()),
            ));
        }
        if enc.is_empty() || enc.states.cols() != 2 * d.hidden || enc.keys.cols() != d.hidden {
            return Err(Error::shape(
                "encoder states",
                format!("m × {}", 2 * d.hidden),
                format!("{:?}", enc.states.shape()),
            ));
        }
        let (mut out, _) = graph::step_forward(&self.params, state, prev, enc, None);
        out.distribution = softmax_nonempty(&out.distribution);
        Ok(out)
    }

    /// Teacher-forced decoder distributions for `target` followed by EOS.
    pub fn teacher_forced(&self, src_ids: &[usize], tgt_ids: &[usize]) -> Result<Vec<Vec<F>>> {
        let enc = self.encode(src_ids)?;
        let mut state = enc.init.clone();
        let mut prev = crate::corpus::BOS;
        let mut out = Vec::with_capacity(tgt_ids.len() + 1);
        for &next in tgt_ids.iter().chain(std::iter::once(&crate::corpus::EOS)) {
            let step = self.decode_step(&state, prev, &enc)?;
            out.push(step.distribution);
            state = step.state;
            prev = next;
        }
        Ok(out)
    }

    /// Summed negative log-likelihood of `target` + EOS without dropout.
    pub fn nll(&self, src_ids: &[usize], tgt_ids: &[usize]) -> Result<f64> {
        self.check_pair(src_ids, tgt_ids)?;
        Ok(graph::example_forward(self, src_ids, tgt_ids, None).0)
    }

    /// NLL and its gradient for one pair, without dropout.
    pub fn nll_gradient(&self, src_ids: &[usize], tgt_ids: &[usize]) -> Result<(f64, Parameters<F>)> {
        self.check_pair(src_ids, tgt_ids)?;
        let (loss, tape) = graph::example_forward(self, src_ids, tgt_ids, None);
        let mut grads = self.params.zeros_like();
        graph::example_backward(self, &tape, F::one(), &mut grads);
        Ok((loss, grads))
    }

    fn check_pair(&self, src_ids: &[usize], tgt_ids: &[usize]) -> Result<()> {
        if src_ids.is_empty() {
            return Err(Error::EmptyInput("cannot encode an empty source sentence"));
        }
        let (vs, vt) = (self.src_vocab.len(), self.tgt_vocab.len());
        if let Some(&bad) = src_ids.iter().find(|&&i| i >= vs) {
            return Err(Error::shape("source token id", format!("< {vs}"), bad));
        }
        if let Some(&bad) = tgt_ids.iter().find(|&&i| i >= vt) {
            return Err(Error::shape("target token id", format!("< {vt}"), bad));
        }
        Ok(())
    }
}
