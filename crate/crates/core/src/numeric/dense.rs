use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{uniform_init, ParamId, ParameterStore, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
        }
    }
}

/// Fully connected layer `activation(x W + b)` over a batch of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone)]
pub struct DenseCache<T> {
    pub input: Array2<T>,
    pub output: Array2<T>,
}

impl Dense {
    /// Registers `{name}.weight` (in x out) and `{name}.bias` (1 x out).
    pub fn register<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.register(
            format!("{name}.weight"),
            uniform_init(in_dim, out_dim, in_dim, rng),
        )?;
        let bias = store.register(format!("{name}.bias"), Array2::zeros((1, out_dim)))?;
        Ok(Self {
            weight,
            bias,
            activation,
            in_dim,
            out_dim,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParameterStore<T>,
        input: ArrayView2<T>,
    ) -> Result<(Array2<T>, DenseCache<T>)> {
        let output = self.apply(store, input)?;
        Ok((
            output.clone(),
            DenseCache {
                input: input.to_owned(),
                output,
            },
        ))
    }

    /// Forward pass without keeping a cache.
    pub fn apply<T: Scalar>(&self, store: &ParameterStore<T>, input: ArrayView2<T>) -> Result<Array2<T>> {
        if input.ncols() != self.in_dim {
            return Err(Error::shape("dense input", &[input.nrows(), self.in_dim], input.shape()));
        }
        let w = store.value(self.weight);
        let b = store.value(self.bias);
        let mut out = input.dot(w);
        out += b;
        if self.activation != Activation::Identity {
            let act = self.activation;
            out.mapv_inplace(|v| act.apply(v));
        }
        Ok(out)
    }

    /// Accumulates parameter gradients and returns the gradient with respect
    /// to the input when `want_input_grad` is set.
    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParameterStore<T>,
        cache: &DenseCache<T>,
        grad_output: ArrayView2<T>,
        want_input_grad: bool,
    ) -> Option<Array2<T>> {
        let grad_pre = if self.activation == Activation::Identity {
            grad_output.to_owned()
        } else {
            let act = self.activation;
            let mut g = grad_output.to_owned();
            g.zip_mut_with(&cache.output, |g, &y| *g *= act.derivative_from_output(y));
            g
        };
        let (values, grads) = store.split_mut();
        general_mat_mul(
            T::one(),
            &cache.input.t(),
            &grad_pre,
            T::one(),
            &mut grads[self.weight.index()],
        );
        grads[self.bias.index()] += &grad_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
        want_input_grad.then(|| grad_pre.dot(&values[self.weight.index()].t()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};

    fn store_with(w: Array2<f64>, b: Array2<f64>, act: Activation) -> (ParameterStore<f64>, Dense) {
        let mut store = ParameterStore::new();
        let (i, o) = w.dim();
        let weight = store.register("d.weight", w).unwrap();
        let bias = store.register("d.bias", b).unwrap();
        (
            store,
            Dense {
                weight,
                bias,
                activation: act,
                in_dim: i,
                out_dim: o,
            },
        )
    }

    #[test]
    fn zero_layer_gives_zero() {
        let (store, d) = store_with(Array2::zeros((3, 2)), Array2::zeros((1, 2)), Activation::Identity);
        let (out, _) = d.forward(&store, arr2(&[[1.0, -2.0, 3.0]]).view()).unwrap();
        assert_eq!(out, Array2::<f64>::zeros((1, 2)));
    }

    #[test]
    fn identity_relu() {
        let (store, d) = store_with(Array2::eye(2), Array2::zeros((1, 2)), Activation::Relu);
        let (out, _) = d.forward(&store, arr2(&[[-1.0, 2.0]]).view()).unwrap();
        assert_eq!(out, arr2(&[[0.0, 2.0]]));
    }

    #[test]
    fn tanh_bounded() {
        let (store, d) = store_with(Array2::eye(2) * 100.0, Array2::zeros((1, 2)), Activation::Tanh);
        let out = d.apply(&store, arr2(&[[-3.0, 2.0]]).view()).unwrap();
        assert!(out.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn shape_mismatch_errors() {
        let (store, d) = store_with(Array2::zeros((3, 2)), Array2::zeros((1, 2)), Activation::Identity);
        assert!(matches!(
            d.forward(&store, arr2(&[[1.0, 2.0]]).view()),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn backward_accumulates() {
        let (mut store, d) = store_with(arr2(&[[1.0], [2.0]]), arr2(&[[0.5]]), Activation::Identity);
        let x = arr2(&[[1.0, 1.0]]);
        let (_, cache) = d.forward(&store, x.view()).unwrap();
        let gin = d.backward(&mut store, &cache, arr2(&[[1.0]]).view(), true).unwrap();
        d.backward(&mut store, &cache, arr2(&[[1.0]]).view(), false);
        assert_eq!(gin, arr2(&[[1.0, 2.0]]));
        assert_eq!(store.grad(d.weight), &arr2(&[[2.0], [2.0]]));
        assert_eq!(store.grad(d.bias), &arr2(&[[2.0]]));
    }
}
