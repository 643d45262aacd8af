use serde::Serialize;

use super::ParameterStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Pass threshold on the maximum relative error.
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator, so that gradients
    /// which are zero up to rounding compare on an absolute scale.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EntryReport {
    pub name: String,
    pub count: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub entries: Vec<EntryReport>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&EntryReport> {
        self.entries
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Compares analytic gradients against central finite differences.
///
/// `objective` must evaluate the loss at the store's current values and
/// accumulate its analytic gradient into the (zeroed) gradient buffers.
/// Every scalar parameter is perturbed in turn, so the cost is
/// `2 * num_scalars + 1` objective evaluations.
pub fn gradient_check<F>(
    store: &mut ParameterStore<f64>,
    mut objective: F,
    options: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParameterStore<f64>) -> Result<f64>,
{
    store.zero_grad();
    let base = objective(store)?;
    if !base.is_finite() {
        return Err(Error::NonFinite("gradient check objective".into()));
    }
    let analytic: Vec<_> = store.grads().to_vec();
    let ids: Vec<_> = store.ids().collect();
    let mut entries = Vec::with_capacity(ids.len());
    for (id, grad) in ids.into_iter().zip(analytic) {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for idx in 0..grad.len() {
            let (r, c) = (idx / grad.ncols(), idx % grad.ncols());
            let original = store.value(id)[[r, c]];
            store.value_mut(id)[[r, c]] = original + options.step;
            store.zero_grad();
            let plus = objective(store)?;
            store.value_mut(id)[[r, c]] = original - options.step;
            store.zero_grad();
            let minus = objective(store)?;
            store.value_mut(id)[[r, c]] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "perturbed objective at {}[{r},{c}]",
                    store.name(id)
                )));
            }
            let numeric = (plus - minus) / (2.0 * options.step);
            let a = grad[[r, c]];
            if !a.is_finite() {
                return Err(Error::NonFinite(format!("analytic gradient of {}", store.name(id))));
            }
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(options.floor);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        entries.push(EntryReport {
            name: store.name(id).to_string(),
            count: grad.len(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
        });
    }
    store.zero_grad();
    let max_rel_error = entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        entries,
        max_rel_error,
        tolerance: options.tolerance,
        passed: max_rel_error < options.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn quadratic_store() -> ParameterStore<f64> {
        let mut store = ParameterStore::new();
        store.register("x", arr2(&[[1.5, -2.0, 0.25]])).unwrap();
        store
    }

    #[test]
    fn exact_gradient_passes() {
        let mut store = quadratic_store();
        let report = gradient_check(
            &mut store,
            |s| {
                let id = s.id("x").unwrap();
                let x = s.value(id).clone();
                *s.grad_mut(id) += &(&x * 2.0);
                Ok(x.iter().map(|v| v * v).sum())
            },
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn sign_flipped_gradient_fails() {
        let mut store = quadratic_store();
        let report = gradient_check(
            &mut store,
            |s| {
                let id = s.id("x").unwrap();
                let x = s.value(id).clone();
                *s.grad_mut(id) -= &(&x * 2.0);
                Ok(x.iter().map(|v| v * v).sum())
            },
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(!report.passed);
        assert!(report.max_rel_error > 1.0);
    }

    #[test]
    fn non_finite_objective_errors() {
        let mut store = quadratic_store();
        let r = gradient_check(&mut store, |_| Ok(f64::NAN), GradCheckOptions::default());
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
