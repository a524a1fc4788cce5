//! Small dense neural toolkit with hand-written backward passes: LSTM cells,
//! additive attention, softmax/cross-entropy, Adam, dropout, gradient clipping
//! and finite-difference gradient checking.
//!
//! Everything is generic over [`Real`] so the same code runs in `f32` for
//! training and in `f64` for gradient checks.

pub mod adam;
pub mod attention;
pub mod gradcheck;
pub mod lstm;
pub mod ops;
pub mod tensor;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

pub use adam::{AdamConfig, AdamState};
pub use attention::{AttentionCache, AttentionWeights};
pub use lstm::{lstm_cell, LstmCache, LstmWeights};
pub use ops::{clip_gradients, cross_entropy, dropout, dropout_mask, global_norm, softmax};
pub use tensor::{Linear, Tensor};

pub trait Real:
    Float
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}
