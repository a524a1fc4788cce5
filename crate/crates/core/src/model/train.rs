//! Teacher-forced training with Adam, global-norm clipping and dev-loss
//! early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::checkpoint::{CheckpointMeta, ModelCheckpoint};
use super::graph::{example_backward, example_forward, Noise};
use super::{Model, ModelConfig, Parameters};
use crate::corpus::{ParallelCorpus, SentencePair, Vocabulary};
use crate::error::{Error, Result};
use crate::neural::{clip_gradients, AdamConfig, AdamState};

/// Examples per parallel work unit. Fixed so that the summation order, and
/// therefore the result, does not depend on the thread count.
const CHUNK: usize = 8;

type Example = (Vec<usize>, Vec<usize>);

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Per-token NLL averaged over the epoch's batches, with dropout.
    pub train_loss: f64,
    /// Per-token NLL on the dev set without dropout.
    pub dev_loss: f64,
    pub steps: u64,
}

impl std::fmt::Display for EpochLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "epoch {:>3}  train_loss {:.6}  dev_loss {:.6}",
            self.epoch, self.train_loss, self.dev_loss
        )
    }
}

/// Returned by training observers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest dev loss.
    pub checkpoint: ModelCheckpoint,
    pub history: Vec<EpochLog>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ a) ^ b)
}

/// Owns a model and its optimizer state.
pub struct Trainer {
    pub model: Model<f32>,
    adam: AdamState<f32>,
}

impl Trainer {
    /// Wraps a model with fresh Adam state.
    pub fn new(model: Model<f32>) -> Result<Self> {
        model.config.validate()?;
        let adam = AdamState::new(
            AdamConfig {
                lr: model.config.lr,
                ..AdamConfig::default()
            },
            model.params.tensors(),
        );
        Ok(Trainer { model, adam })
    }

    pub fn steps(&self) -> u64 {
        self.adam.steps()
    }

    fn encode(&self, pair: &SentencePair) -> Example {
        (
            self.model.encode_source(&pair.source),
            self.model.encode_target(&pair.target),
        )
    }

    /// One optimizer step on a batch. Returns the mean per-token NLL (EOS
    /// included) measured before the update.
    pub fn train_step(&mut self, batch: &[SentencePair]) -> Result<f64> {
        let examples: Vec<Example> = batch.iter().map(|p| self.encode(p)).collect();
        self.step_examples(&examples)
    }

    fn step_examples(&mut self, batch: &[Example]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("training batch is empty"));
        }
        if batch.iter().any(|(s, _)| s.is_empty()) {
            return Err(Error::EmptyInput("empty source sentence in batch"));
        }
        let tokens: usize = batch.iter().map(|(_, t)| t.len() + 1).sum();
        let scale = 1.0 / tokens as f32;
        let step = self.adam.steps();
        let (seed, dropout) = (self.model.config.seed, self.model.config.dropout);
        let model = &self.model;

        let partials: Vec<(f64, Parameters<f32>)> = batch
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let mut grads = model.params.zeros_like();
                let mut nll = 0.0;
                for (k, (src, tgt)) in chunk.iter().enumerate() {
                    let index = (c * CHUNK + k) as u64;
                    let mut noise = Noise::new(dropout, mix(seed, step, index));
                    let (loss, tape) = example_forward(model, src, tgt, Some(&mut noise));
                    example_backward(model, &tape, scale, &mut grads);
                    nll += loss;
                }
                (nll, grads)
            })
            .collect();

        let mut parts = partials.into_iter();
        let (mut nll, mut grads) = parts.next().expect("non-empty batch");
        for (loss, g) in parts {
            nll += loss;
            grads.add_assign(&g);
        }
        let mut grad_refs = grads.tensors_mut();
        clip_gradients(&mut grad_refs, self.model.config.grad_clip);
        let grads_ro: Vec<&_> = grad_refs.into_iter().map(|t| &*t).collect();
        self.adam
            .update(&mut self.model.params.tensors_mut(), &grads_ro)?;
        Ok(nll / tokens as f64)
    }
}

/// Mean per-token NLL (EOS included) without dropout.
pub fn evaluate_loss(model: &Model<f32>, corpus: &ParallelCorpus) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("evaluation corpus is empty"));
    }
    let examples: Vec<Example> = corpus
        .pairs
        .iter()
        .map(|p| (model.encode_source(&p.source), model.encode_target(&p.target)))
        .collect();
    let losses: Vec<f64> = examples
        .par_iter()
        .map(|(s, t)| model.nll(s, t))
        .collect::<Result<_>>()?;
    let tokens: usize = examples.iter().map(|(_, t)| t.len() + 1).sum();
    Ok(losses.iter().sum::<f64>() / tokens as f64)
}

/// Trains a fresh model with vocabularies built from the training corpus.
pub fn train(config: ModelConfig, train: &ParallelCorpus, dev: &ParallelCorpus) -> Result<TrainOutcome> {
    train_with(config, train, dev, |_, _| Flow::Continue)
}

/// [`train`] with an observer called after every epoch.
pub fn train_with<O>(
    config: ModelConfig,
    train: &ParallelCorpus,
    dev: &ParallelCorpus,
    observer: O,
) -> Result<TrainOutcome>
where
    O: FnMut(&EpochLog, &Model<f32>) -> Flow,
{
    if train.is_empty() {
        return Err(Error::EmptyInput("training corpus is empty"));
    }
    let src_vocab = Vocabulary::build(train.sources(), 1);
    let tgt_vocab = Vocabulary::build(train.targets(), 1);
    let model = Model::new(config, src_vocab, tgt_vocab)?;
    run(model, train, dev, false, observer)
}

/// Continues training a checkpoint on new data with fresh optimizer state.
/// The loaded parameters compete as epoch 0 in best-dev selection.
pub fn fine_tune(
    checkpoint: &ModelCheckpoint,
    config: &ModelConfig,
    train: &ParallelCorpus,
    dev: &ParallelCorpus,
) -> Result<TrainOutcome> {
    fine_tune_with(checkpoint, config, train, dev, |_, _| Flow::Continue)
}

/// [`fine_tune`] with an observer. Architecture fields of `config` must match
/// the checkpoint; optimization fields (batch size, dropout, clip, lr, epochs,
/// patience, seed) are taken from `config`.
pub fn fine_tune_with<O>(
    checkpoint: &ModelCheckpoint,
    config: &ModelConfig,
    train: &ParallelCorpus,
    dev: &ParallelCorpus,
    observer: O,
) -> Result<TrainOutcome>
where
    O: FnMut(&EpochLog, &Model<f32>) -> Flow,
{
    let base = &checkpoint.model.config;
    if (base.hidden_size, base.embedding_size, base.layers)
        != (config.hidden_size, config.embedding_size, config.layers)
    {
        return Err(Error::Config(
            "fine-tuning cannot change hidden_size, embedding_size or layers".into(),
        ));
    }
    if train.is_empty() {
        return Err(Error::EmptyInput("training corpus is empty"));
    }
    let mut model = checkpoint.model.clone();
    model.config = config.clone();
    run(model, train, dev, true, observer)
}

fn run<O>(
    model: Model<f32>,
    train: &ParallelCorpus,
    dev: &ParallelCorpus,
    include_start: bool,
    mut observer: O,
) -> Result<TrainOutcome>
where
    O: FnMut(&EpochLog, &Model<f32>) -> Flow,
{
    let config = model.config.clone();
    let mut trainer = Trainer::new(model)?;
    let examples: Vec<Example> = train.pairs.iter().map(|p| trainer.encode(p)).collect();
    if examples.iter().any(|(s, _)| s.is_empty()) {
        return Err(Error::EmptyInput("empty source sentence in training corpus"));
    }
    // Without a dev set, selection falls back to the training loss.
    let selection = if dev.is_empty() { train } else { dev };

    let mut best = (0usize, f64::INFINITY, trainer.model.params.clone());
    if include_start {
        best.1 = evaluate_loss(&trainer.model, selection)?;
    }
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..examples.len()).collect();

    for epoch in 1..=config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, 0x5348_5546, epoch as u64));
        order.shuffle(&mut rng);
        let (mut nll, mut tokens) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let batch: Vec<Example> = batch.iter().map(|&i| examples[i].clone()).collect();
            let n: usize = batch.iter().map(|(_, t)| t.len() + 1).sum();
            nll += trainer.step_examples(&batch)? * n as f64;
            tokens += n;
        }
        let dev_loss = evaluate_loss(&trainer.model, selection)?;
        let log = EpochLog {
            epoch,
            train_loss: nll / tokens as f64,
            dev_loss,
            steps: trainer.steps(),
        };
        log::info!("{log}");
        if dev_loss < best.1 {
            best = (epoch, dev_loss, trainer.model.params.clone());
        }
        let flow = observer(&log, &trainer.model);
        history.push(log);
        if flow == Flow::Stop || epoch - best.0 >= config.patience {
            break;
        }
    }

    let (epoch, dev_loss, params) = best;
    let mut model = trainer.model;
    model.params = params;
    Ok(TrainOutcome {
        checkpoint: ModelCheckpoint {
            model,
            meta: CheckpointMeta {
                epoch,
                dev_loss: dev_loss.is_finite().then_some(dev_loss),
            },
        },
        history,
    })
}
