use ndarray::{Array2, ArrayView2};

use super::Scalar;

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `|x|`.
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Softmax with max subtraction.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// Row-wise softmax of a `[batch, classes]` array.
pub fn softmax_rows<T: Scalar>(logits: ArrayView2<T>) -> Array2<T> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let p = softmax(row.as_slice().expect("row-major"));
        row.iter_mut().zip(p).for_each(|(d, v)| *d = v);
    }
    out
}

/// Row-wise log-softmax, `z - max - ln(sum exp(z - max))`.
pub fn log_softmax_rows<T: Scalar>(logits: ArrayView2<T>) -> Array2<T> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = row
            .iter()
            .map(|&z| (z - max).exp())
            .fold(T::zero(), |a, b| a + b)
            .ln();
        row.mapv_inplace(|z| z - max - lse);
    }
    out
}

/// Shannon entropy in nats; zero-probability terms contribute nothing.
pub fn entropy<T: Scalar>(dist: &[T]) -> T {
    dist.iter()
        .filter(|&&p| p > T::zero())
        .map(|&p| -p * p.ln())
        .fold(T::zero(), |a, b| a + b)
}

/// `ln(1 + exp(-label * logit))` for `label` in {+1, -1}.
pub fn logistic_loss<T: Scalar>(logit: T, label: T) -> T {
    softplus(-label * logit)
}

/// Derivative of [`logistic_loss`] with respect to the logit.
pub fn logistic_loss_grad<T: Scalar>(logit: T, label: T) -> T {
    -label * sigmoid(-label * logit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn softmax_uniform_and_stable() {
        let p = softmax(&[0.3f64; 5]);
        for v in &p {
            assert_relative_eq!(*v, 0.2, epsilon = 1e-15);
        }
        let p = softmax(&[1000.0f64, 0.0, 0.0, 0.0, 0.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert_relative_eq!(p[0], 1.0, epsilon = 1e-12);
        assert!(p[1] < 1e-300 || p[1] == 0.0);
    }

    #[test]
    fn log_softmax_matches_softmax() {
        let z = ndarray::arr2(&[[0.5f64, -1.0, 2.0, 0.0, 3.0]]);
        let p = softmax_rows(z.view());
        let lp = log_softmax_rows(z.view());
        for (a, b) in p.iter().zip(lp.iter()) {
            assert_relative_eq!(a.ln(), *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn entropy_examples() {
        assert_relative_eq!(entropy(&[0.2f64; 5]), 5f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(5f64.ln(), 1.60944, epsilon = 1e-5);
        assert_eq!(entropy(&[0.0f64, 1.0, 0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn logistic_examples() {
        assert_relative_eq!(logistic_loss(0.0f64, 1.0), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(logistic_loss(0.0f64, -1.0), 2f64.ln(), epsilon = 1e-15);
        assert!(logistic_loss(100.0f64, 1.0) < 1e-40);
        assert_relative_eq!(logistic_loss(100.0f64, -1.0), 100.0, epsilon = 1e-12);
        assert!(logistic_loss(1000.0f32, -1.0).is_finite());
        assert_relative_eq!(logistic_loss(10.0f64, 1.0), 4.5398899e-5, max_relative = 1e-6);
    }

    proptest! {
        #[test]
        fn softmax_valid_and_shift_invariant(
            z in proptest::collection::vec(-50.0f64..50.0, 5),
            shift in -100.0f64..100.0,
        ) {
            let p = softmax(&z);
            prop_assert!(p.iter().all(|&v| v > 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let h = entropy(&p);
            prop_assert!(h >= 0.0 && h <= 5f64.ln() + 1e-12);
        }

        #[test]
        fn logistic_symmetric_nonnegative(z in -1000.0f64..1000.0) {
            let a = logistic_loss(z, 1.0);
            prop_assert!(a >= 0.0 && a.is_finite());
            prop_assert_eq!(a, logistic_loss(-z, -1.0));
        }

        #[test]
        fn logistic_grad_matches_difference(z in -20.0f64..20.0, pos in any::<bool>()) {
            let y = if pos { 1.0 } else { -1.0 };
            let h = 1e-6;
            let fd = (logistic_loss(z + h, y) - logistic_loss(z - h, y)) / (2.0 * h);
            prop_assert!((fd - logistic_loss_grad(z, y)).abs() < 1e-7);
        }
    }
}
