//! Small differentiable core: dense layers, an LSTM cell, softmax/entropy and
//! logistic losses, each with a hand-written backward pass, plus a central
//! finite-difference gradient checker and the parameter checkpoint format.
//!
//! Everything is generic over [`Scalar`] so training can run in `f32` while
//! gradient checks run in `f64`.

mod checkpoint;
mod dense;
mod functions;
mod gradcheck;
mod lstm;
mod params;

use ndarray::{Array2, ArrayBase, Data, Dimension, NdFloat};
use num_traits::Float;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use dense::{Activation, Dense, DenseCache};
pub use functions::{
    entropy, log_softmax_rows, logistic_loss, logistic_loss_grad, sigmoid, softmax,
    softmax_rows, softplus,
};
pub use gradcheck::{gradient_check, EntryReport, GradCheckOptions, GradCheckReport};
pub use lstm::{Lstm, LstmCache, LstmState};
pub use params::{uniform_init, ParamId, ParameterStore};

use crate::error::{Error, Result};

/// Floating point type the network can be evaluated in.
pub trait Scalar: NdFloat + Default {
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense row-major array used for activations and parameters.
pub type ValueArray<T> = Array2<T>;

/// Fails with [`Error::NonFinite`] if any entry is NaN or infinite.
pub fn check_finite<S, D>(array: &ArrayBase<S, D>, context: &str) -> Result<()>
where
    S: Data,
    S::Elem: Scalar,
    D: Dimension,
{
    if array.iter().all(|v| Float::is_finite(*v)) {
        Ok(())
    } else {
        Err(Error::NonFinite(context.to_string()))
    }
}
