//! Forward passes that record what the backward pass needs, and the
//! hand-written backward pass through decoder, attention, bridge and encoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::Parameters;
use super::{DecoderState, EncoderStates, Model, StepOutput};
use crate::corpus::{BOS, EOS};
use crate::neural::attention::{context, context_backward};
use crate::neural::lstm::{lstm_backward, lstm_forward};
use crate::neural::ops::{cross_entropy, dropout_mask};
use crate::neural::tensor::axpy;
use crate::neural::{AttentionCache, LstmCache, Real, Tensor};

/// Dropout source for one training example.
pub struct Noise {
    p: f64,
    rng: ChaCha8Rng,
}

impl Noise {
    pub fn new(p: f64, seed: u64) -> Self {
        Noise {
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn mask<F: Real>(&mut self, n: usize) -> Option<Vec<F>> {
        (self.p > 0.0).then(|| dropout_mask(n, self.p, &mut self.rng))
    }
}

fn apply_mask<F: Real>(x: &[F], mask: &Option<Vec<F>>) -> Vec<F> {
    match mask {
        Some(m) => x.iter().zip(m).map(|(&a, &b)| a * b).collect(),
        None => x.to_vec(),
    }
}

pub(crate) struct EncoderTape<F> {
    ids: Vec<usize>,
    /// Per layer, per direction, one cache per source position.
    caches: Vec<[Vec<LstmCache<F>>; 2]>,
    /// Dropout masks on the inputs of layers ≥ 1, per position.
    masks: Vec<Vec<Option<Vec<F>>>>,
    /// Bridge inputs and outputs per decoder layer.
    bridge_in: Vec<Vec<F>>,
    bridge_out: Vec<Vec<F>>,
}

pub(crate) fn encode_forward<F: Real>(
    params: &Parameters<F>,
    ids: &[usize],
    mut noise: Option<&mut Noise>,
) -> (EncoderStates<F>, EncoderTape<F>) {
    let m = ids.len();
    let hs = params.dims().hidden;
    let mut caches = Vec::with_capacity(params.encoder.len());
    let mut masks = Vec::with_capacity(params.encoder.len());
    let mut outputs: Vec<Tensor<F>> = Vec::with_capacity(params.encoder.len());

    for (l, dirs) in params.encoder.iter().enumerate() {
        let (inputs, layer_masks): (Vec<Vec<F>>, Vec<Option<Vec<F>>>) = if l == 0 {
            (
                ids.iter().map(|&i| params.src_embedding.row(i).to_vec()).collect(),
                vec![None; m],
            )
        } else {
            (0..m)
                .map(|t| {
                    let below = outputs[l - 1].row(t);
                    let mask = noise.as_deref_mut().and_then(|n| n.mask(below.len()));
                    (apply_mask(below, &mask), mask)
                })
                .unzip()
        };

        let mut out = Tensor::zeros(m, 2 * hs);
        let mut fwd = Vec::with_capacity(m);
        let (mut h, mut c) = (vec![F::zero(); hs], vec![F::zero(); hs]);
        for (t, x) in inputs.iter().enumerate() {
            let (h2, c2, cache) = lstm_forward(&dirs[0], x, &h, &c);
            out.row_mut(t)[..hs].copy_from_slice(&h2);
            fwd.push(cache);
            (h, c) = (h2, c2);
        }
        let mut bwd: Vec<Option<LstmCache<F>>> = vec![None; m];
        let (mut h, mut c) = (vec![F::zero(); hs], vec![F::zero(); hs]);
        for t in (0..m).rev() {
            let (h2, c2, cache) = lstm_forward(&dirs[1], &inputs[t], &h, &c);
            out.row_mut(t)[hs..].copy_from_slice(&h2);
            bwd[t] = Some(cache);
            (h, c) = (h2, c2);
        }
        caches.push([fwd, bwd.into_iter().map(Option::unwrap).collect()]);
        masks.push(layer_masks);
        outputs.push(out);
    }

    let mut bridge_in = Vec::with_capacity(params.bridge.len());
    let mut bridge_out = Vec::with_capacity(params.bridge.len());
    for (l, bridge) in params.bridge.iter().enumerate() {
        let out = &outputs[l];
        let mut z = out.row(m - 1)[..hs].to_vec();
        z.extend_from_slice(&out.row(0)[hs..]);
        let h0: Vec<F> = bridge.forward(&z).into_iter().map(|v| v.tanh()).collect();
        bridge_in.push(z);
        bridge_out.push(h0);
    }

    let states = outputs.pop().expect("at least one encoder layer");
    let keys = params.attention.keys(&states);
    let init = DecoderState {
        c: vec![vec![F::zero(); hs]; bridge_out.len()],
        h: bridge_out.clone(),
    };
    let tape = EncoderTape {
        ids: ids.to_vec(),
        caches,
        masks,
        bridge_in,
        bridge_out,
    };
    (EncoderStates { states, keys, init }, tape)
}

pub(crate) struct StepTape<F> {
    prev: usize,
    embedding: Vec<F>,
    h_top_prev: Vec<F>,
    attention: AttentionCache<F>,
    ctx_mask: Option<Vec<F>>,
    caches: Vec<LstmCache<F>>,
    masks: Vec<Option<Vec<F>>>,
    h_top: Vec<F>,
    logits: Vec<F>,
}

/// One decoder step: attention from the previous top hidden state and the
/// previous token's embedding, then the LSTM stack, then the output layer.
/// `distribution` in the returned output holds logits; callers normalize.
pub(crate) fn step_forward<F: Real>(
    params: &Parameters<F>,
    state: &DecoderState<F>,
    prev: usize,
    enc: &EncoderStates<F>,
    mut noise: Option<&mut Noise>,
) -> (StepOutput<F>, StepTape<F>) {
    let layers = params.decoder.len();
    let embedding = params.tgt_embedding.row(prev).to_vec();
    let h_top_prev = state.h[layers - 1].clone();
    let (att, att_cache) = params.attention.forward(&enc.keys, &h_top_prev, &embedding);
    let ctx = context(&att, &enc.states);
    let ctx_mask = noise.as_deref_mut().and_then(|n| n.mask(ctx.len()));

    let mut x = embedding.clone();
    x.extend(apply_mask(&ctx, &ctx_mask));
    let mut caches = Vec::with_capacity(layers);
    let mut masks = Vec::with_capacity(layers);
    let mut next = DecoderState {
        h: Vec::with_capacity(layers),
        c: Vec::with_capacity(layers),
    };
    for (l, weights) in params.decoder.iter().enumerate() {
        let mask = if l == 0 {
            None
        } else {
            let below = &next.h[l - 1];
            let mask = noise.as_deref_mut().and_then(|n| n.mask(below.len()));
            x = apply_mask(below, &mask);
            mask
        };
        let (h, c, cache) = lstm_forward(weights, &x, &state.h[l], &state.c[l]);
        next.h.push(h);
        next.c.push(c);
        caches.push(cache);
        masks.push(mask);
    }
    let h_top = next.h[layers - 1].clone();
    let logits = params.output.forward(&h_top);
    let out = StepOutput {
        distribution: logits.clone(),
        attention: att,
        state: next,
    };
    let tape = StepTape {
        prev,
        embedding,
        h_top_prev,
        attention: att_cache,
        ctx_mask,
        caches,
        masks,
        h_top,
        logits,
    };
    (out, tape)
}

pub(crate) struct ExampleTape<F> {
    encoder: EncoderTape<F>,
    enc: EncoderStates<F>,
    steps: Vec<StepTape<F>>,
    targets: Vec<usize>,
    probs: Vec<Vec<F>>,
}

/// Teacher-forced forward pass over one pair. `target` excludes BOS/EOS;
/// the decoder reads `BOS t₁ … tₙ` and predicts `t₁ … tₙ EOS`.
/// Returns the summed negative log-likelihood.
pub(crate) fn example_forward<F: Real>(
    model: &Model<F>,
    source: &[usize],
    target: &[usize],
    mut noise: Option<&mut Noise>,
) -> (f64, ExampleTape<F>) {
    let params = &model.params;
    let (enc, encoder) = encode_forward(params, source, noise.as_deref_mut());
    let inputs = std::iter::once(BOS).chain(target.iter().copied());
    let targets: Vec<usize> = target.iter().copied().chain(std::iter::once(EOS)).collect();

    let mut state = enc.init.clone();
    let mut steps = Vec::with_capacity(targets.len());
    let mut probs = Vec::with_capacity(targets.len());
    let mut nll = 0.0;
    for (prev, &gold) in inputs.zip(&targets) {
        let (out, tape) = step_forward(params, &state, prev, &enc, noise.as_deref_mut());
        let (loss, p) = cross_entropy(&tape.logits, gold).expect("target id inside vocabulary");
        nll += loss.as_f64();
        probs.push(p);
        steps.push(tape);
        state = out.state;
    }
    (
        nll,
        ExampleTape {
            encoder,
            enc,
            steps,
            targets,
            probs,
        },
    )
}

/// Backward pass for [`example_forward`]; gradients of `scale · NLL` are
/// accumulated into `grads`.
pub(crate) fn example_backward<F: Real>(
    model: &Model<F>,
    tape: &ExampleTape<F>,
    scale: F,
    grads: &mut Parameters<F>,
) {
    let params = &model.params;
    let dims = params.dims();
    let (hs, es, layers) = (dims.hidden, dims.embedding, dims.layers);
    let enc = &tape.enc;
    let m = enc.states.rows();
    let one = F::one();

    let mut d_states = Tensor::zeros(m, 2 * hs);
    let mut d_keys = Tensor::zeros(m, params.attention.att_dim());
    let mut dh = vec![vec![F::zero(); hs]; layers];
    let mut dc = vec![vec![F::zero(); hs]; layers];

    for ((step, &gold), probs) in tape.steps.iter().zip(&tape.targets).zip(&tape.probs).rev() {
        let mut dlogits: Vec<F> = probs.iter().map(|&p| p * scale).collect();
        dlogits[gold] -= scale;
        let mut dh_top = vec![F::zero(); hs];
        params
            .output
            .backward(&step.h_top, &dlogits, &mut grads.output, &mut dh_top);
        axpy(one, &dh_top, &mut dh[layers - 1]);

        let mut de = vec![F::zero(); es];
        let mut dctx = vec![F::zero(); 2 * hs];
        for l in (0..layers).rev() {
            let (dx, dh_prev, dc_prev) =
                lstm_backward(&params.decoder[l], &step.caches[l], &dh[l], &dc[l], &mut grads.decoder[l]);
            dh[l] = dh_prev;
            dc[l] = dc_prev;
            if l > 0 {
                let dx = apply_mask(&dx, &step.masks[l]);
                axpy(one, &dx, &mut dh[l - 1]);
            } else {
                axpy(one, &dx[..es], &mut de);
                dctx = apply_mask(&dx[es..], &step.ctx_mask);
            }
        }

        let datt = context_backward(&step.attention.att, &enc.states, &dctx, &mut d_states);
        let mut dh_top_prev = vec![F::zero(); hs];
        params.attention.backward(
            &step.attention,
            &datt,
            &step.h_top_prev,
            &step.embedding,
            &mut grads.attention,
            &mut d_keys,
            &mut dh_top_prev,
            &mut de,
        );
        axpy(one, &dh_top_prev, &mut dh[layers - 1]);
        axpy(one, &de, grads.tgt_embedding.row_mut(step.prev));
    }

    // dh now holds the gradient w.r.t. the initial decoder state; c₀ is constant.
    let et = &tape.encoder;
    let mut d_final = Vec::with_capacity(layers);
    for l in 0..layers {
        let dpre: Vec<F> = dh[l]
            .iter()
            .zip(&et.bridge_out[l])
            .map(|(&g, &h)| g * (one - h * h))
            .collect();
        let mut dz = vec![F::zero(); 2 * hs];
        params.bridge[l].backward(&et.bridge_in[l], &dpre, &mut grads.bridge[l], &mut dz);
        d_final.push(dz);
    }
    params
        .attention
        .keys_backward(&enc.states, &d_keys, &mut grads.attention, &mut d_states);

    let mut d_out = d_states;
    for l in (0..layers).rev() {
        axpy(one, &d_final[l][..hs], &mut d_out.row_mut(m - 1)[..hs]);
        axpy(one, &d_final[l][hs..], &mut d_out.row_mut(0)[hs..]);

        let input_dim = params.encoder[l][0].input_size();
        let mut d_in = Tensor::zeros(m, input_dim);
        let [fwd_caches, bwd_caches] = &et.caches[l];
        let [fwd_grads, bwd_grads] = &mut grads.encoder[l];

        let (mut ch, mut cc) = (vec![F::zero(); hs], vec![F::zero(); hs]);
        for t in (0..m).rev() {
            let mut g = d_out.row(t)[..hs].to_vec();
            axpy(one, &ch, &mut g);
            let (dx, dhp, dcp) = lstm_backward(&params.encoder[l][0], &fwd_caches[t], &g, &cc, fwd_grads);
            axpy(one, &dx, d_in.row_mut(t));
            (ch, cc) = (dhp, dcp);
        }
        let (mut ch, mut cc) = (vec![F::zero(); hs], vec![F::zero(); hs]);
        for t in 0..m {
            let mut g = d_out.row(t)[hs..].to_vec();
            axpy(one, &ch, &mut g);
            let (dx, dhp, dcp) = lstm_backward(&params.encoder[l][1], &bwd_caches[t], &g, &cc, bwd_grads);
            axpy(one, &dx, d_in.row_mut(t));
            (ch, cc) = (dhp, dcp);
        }

        if l > 0 {
            let mut below = Tensor::zeros(m, 2 * hs);
            for t in 0..m {
                below
                    .row_mut(t)
                    .copy_from_slice(&apply_mask(d_in.row(t), &et.masks[l][t]));
            }
            d_out = below;
        } else {
            for (t, &id) in et.ids.iter().enumerate() {
                axpy(one, d_in.row(t), grads.src_embedding.row_mut(id));
            }
        }
    }
}
