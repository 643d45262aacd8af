use std::collections::HashMap;

use ndarray::Array2;
use rand::distr::{Distribution, Uniform};
use rand::Rng;

use super::Scalar;
use crate::error::{Error, Result};

/// Handle to one entry of a [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable arrays with co-indexed gradient buffers.
///
/// Entries keep their registration order, which fixes the iteration order
/// used by the optimizer, the checkpoint format and gradient-norm sums.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore<T> {
    names: Vec<String>,
    values: Vec<Array2<T>>,
    grads: Vec<Array2<T>>,
    lookup: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParameterStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, value: Array2<T>) -> Result<ParamId> {
        let name = name.into();
        if self.lookup.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let id = self.values.len();
        self.grads.push(Array2::zeros(value.raw_dim()));
        self.values.push(value);
        self.lookup.insert(name.clone(), id);
        self.names.push(name);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn value(&self, id: ParamId) -> &Array2<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Array2<T> {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.grads[id.0]
    }

    pub fn values(&self) -> &[Array2<T>] {
        &self.values
    }

    pub fn grads(&self) -> &[Array2<T>] {
        &self.grads
    }

    /// Read-only values alongside writable gradients, for backward passes.
    pub fn split_mut(&mut self) -> (&[Array2<T>], &mut [Array2<T>]) {
        (&self.values, &mut self.grads)
    }

    /// Writable values alongside read-only gradients, for optimizer steps.
    pub fn split_update(&mut self) -> (&mut [Array2<T>], &[Array2<T>]) {
        (&mut self.values, &self.grads)
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.fill(T::zero());
        }
    }

    /// L2 norm over every gradient entry, accumulated in f64.
    pub fn grad_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| {
                let v = v.as_f64();
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_grads(&mut self, factor: T) {
        for g in &mut self.grads {
            g.mapv_inplace(|v| v * factor);
        }
    }

    /// Same entries converted to another precision; gradients are zeroed.
    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        ParameterStore {
            names: self.names.clone(),
            values: self
                .values
                .iter()
                .map(|v| v.mapv(|x| U::of(x.as_f64())))
                .collect(),
            grads: self.grads.iter().map(|g| Array2::zeros(g.raw_dim())).collect(),
            lookup: self.lookup.clone(),
        }
    }

    /// Copies values from `other`, which must have the same names and shapes.
    pub fn load_values_from<U: Scalar>(&mut self, other: &ParameterStore<U>) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            let j = other
                .lookup
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            let src = &other.values[*j];
            if src.shape() != self.values[i].shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: expected shape {:?}, found {:?}",
                    self.values[i].shape(),
                    src.shape()
                )));
            }
            self.values[i].zip_mut_with(src, |d, s| *d = T::of(s.as_f64()));
        }
        if other.len() != self.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }
}

/// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) matrix of the given shape.
pub fn uniform_init<T: Scalar, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    rng: &mut R,
) -> Array2<T> {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Array2::from_shape_simple_fn((rows, cols), || T::of(dist.sample(rng)))
}
