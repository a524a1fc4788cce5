//! Differentiable fragments for finite-difference checking in `f64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Model;
use crate::neural::gradcheck::GradCheck;
use crate::neural::lstm::{lstm_backward, lstm_forward};
use crate::neural::ops::cross_entropy;
use crate::neural::{Linear, LstmWeights, Tensor};

/// One LSTM cell followed by a linear read-out and cross-entropy, plus a
/// fixed linear probe on the new cell state so both outputs carry gradient.
pub struct CellObjective {
    pub cell: LstmWeights<f64>,
    pub readout: Linear<f64>,
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub probe: Vec<f64>,
    pub target: usize,
}

impl CellObjective {
    pub fn random(input: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vec = |n: usize| Tensor::<f64>::uniform(1, n, 1.0, &mut rng).as_slice().to_vec();
        let (x, h, c, probe) = (vec(input), vec(hidden), vec(hidden), vec(hidden));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        CellObjective {
            cell: LstmWeights {
                w: Tensor::uniform(4 * hidden, input + hidden, 0.5, &mut rng),
                b: Tensor::uniform(1, 4 * hidden, 0.5, &mut rng),
            },
            readout: Linear {
                w: Tensor::uniform(classes, hidden, 0.5, &mut rng),
                b: Tensor::uniform(1, classes, 0.5, &mut rng),
            },
            x,
            h,
            c,
            probe,
            target: classes / 2,
        }
    }
}

impl GradCheck for CellObjective {
    fn loss(&self) -> f64 {
        let (h, c, _) = lstm_forward(&self.cell, &self.x, &self.h, &self.c);
        let (ce, _) = cross_entropy(&self.readout.forward(&h), self.target).expect("target in range");
        ce + c.iter().zip(&self.probe).map(|(a, b)| a * b).sum::<f64>()
    }

    fn gradients(&self) -> Vec<Vec<f64>> {
        let (h, _, cache) = lstm_forward(&self.cell, &self.x, &self.h, &self.c);
        let (_, mut dlogits) =
            cross_entropy(&self.readout.forward(&h), self.target).expect("target in range");
        dlogits[self.target] -= 1.0;
        let mut readout = Linear::zeros(h.len(), dlogits.len());
        let mut dh = vec![0.0; h.len()];
        self.readout.backward(&h, &dlogits, &mut readout, &mut dh);
        let mut cell = LstmWeights::zeros(self.x.len(), h.len());
        let (dx, dh_prev, dc_prev) = lstm_backward(&self.cell, &cache, &dh, &self.probe, &mut cell);
        vec![
            cell.w.as_slice().to_vec(),
            cell.b.as_slice().to_vec(),
            readout.w.as_slice().to_vec(),
            readout.b.as_slice().to_vec(),
            dx,
            dh_prev,
            dc_prev,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.cell.w.as_mut_slice(),
            self.cell.b.as_mut_slice(),
            self.readout.w.as_mut_slice(),
            self.readout.b.as_mut_slice(),
            &mut self.x,
            &mut self.h,
            &mut self.c,
        ]
    }
}

/// Teacher-forced NLL of one sentence pair through the whole model. An empty
/// target gives a single decode step (BOS → EOS).
pub struct PairObjective {
    pub model: Model<f64>,
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

impl GradCheck for PairObjective {
    fn loss(&self) -> f64 {
        self.model.nll(&self.source, &self.target).expect("valid pair")
    }

    fn gradients(&self) -> Vec<Vec<f64>> {
        let (_, grads) = self
            .model
            .nll_gradient(&self.source, &self.target)
            .expect("valid pair");
        grads.tensors().iter().map(|t| t.as_slice().to_vec()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.model
            .params
            .tensors_mut()
            .into_iter()
            .map(|t| t.as_mut_slice())
            .collect()
    }
}
