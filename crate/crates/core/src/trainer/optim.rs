use ndarray::Array2;

use crate::error::{Error, Result};
use crate::numeric::{ParameterStore, Scalar};

/// RMSProp with global gradient-norm clipping:
/// `s = decay * s + (1 - decay) * g^2`, `p -= lr * g / (sqrt(s) + eps)`.
#[derive(Debug, Clone)]
pub struct RmsProp<T> {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    square_avg: Vec<Array2<T>>,
}

impl<T: Scalar> RmsProp<T> {
    pub fn new(params: &ParameterStore<T>, learning_rate: f64, decay: f64, epsilon: f64, clip_norm: f64) -> Self {
        Self {
            learning_rate,
            decay,
            epsilon,
            clip_norm,
            square_avg: params.values().iter().map(|v| Array2::zeros(v.raw_dim())).collect(),
        }
    }

    /// Clips, applies one update and zeroes the gradients. Returns the
    /// gradient norm before clipping.
    pub fn step(&mut self, params: &mut ParameterStore<T>) -> Result<f64> {
        let norm = params.grad_norm();
        if !norm.is_finite() {
            params.zero_grad();
            return Err(Error::NonFinite("gradient norm".into()));
        }
        let scale = if self.clip_norm > 0.0 && norm > self.clip_norm {
            T::of(self.clip_norm / norm)
        } else {
            T::one()
        };
        let lr = T::of(self.learning_rate);
        let decay = T::of(self.decay);
        let keep = T::one() - decay;
        let eps = T::of(self.epsilon);
        let (values, grads) = params.split_update();
        for ((value, grad), sq) in values.iter_mut().zip(grads).zip(&mut self.square_avg) {
            ndarray::Zip::from(value).and(grad).and(sq).for_each(|p, &g, s| {
                let g = g * scale;
                *s = decay * *s + keep * g * g;
                *p -= lr * g / (s.sqrt() + eps);
            });
        }
        params.zero_grad();
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn store() -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.register("a", arr2(&[[1.0, 2.0]])).unwrap();
        s.register("b", arr2(&[[-1.0]])).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = store();
        let before = s.clone();
        let mut opt = RmsProp::new(&s, 7e-4, 0.99, 1e-5, 0.5);
        for _ in 0..3 {
            assert_eq!(opt.step(&mut s).unwrap(), 0.0);
        }
        assert_eq!(s.values(), before.values());
    }

    #[test]
    fn clipping_scales_to_norm() {
        // With decay 0 the update is lr * g_c / (|g_c| + eps), so the applied
        // clipped gradient can be read off from a single entry.
        let mut s = store();
        let a = s.id("a").unwrap();
        s.grad_mut(a).assign(&arr2(&[[6.0, 8.0]]));
        let mut opt = RmsProp::new(&s, 1.0, 0.0, 0.0, 0.5);
        let norm = opt.step(&mut s).unwrap();
        assert_eq!(norm, 10.0);
        // sqrt(s) = |g_c|, so each entry moves by exactly lr * sign(g).
        assert_eq!(s.value(a), &arr2(&[[0.0, 1.0]]));
        let clipped: f64 = opt.square_avg.iter().flat_map(|q| q.iter()).sum::<f64>().sqrt();
        assert!((clipped - 0.5).abs() < 1e-12);
        assert_eq!(s.grad_norm(), 0.0);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut s = store();
        let a = s.id("a").unwrap();
        s.grad_mut(a)[[0, 0]] = f64::NAN;
        let before = s.clone();
        let mut opt = RmsProp::new(&s, 1e-3, 0.99, 1e-5, 0.5);
        assert!(opt.step(&mut s).is_err());
        assert_eq!(s.values(), before.values());
    }
}
