//! Temporal-order auxiliary loss.
//!
//! Each worker keeps the last `k` observations of its current episode. At
//! every step index pairs `a < b` are drawn from that window and each pair is
//! emitted twice, `(o_a, o_b)` labelled +1 and `(o_b, o_a)` labelled -1. The
//! classifier is scored with the logistic loss `ln(1 + exp(-y z))`.

use std::collections::{HashMap, VecDeque};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{observation_batch, Agent};
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::numeric::{logistic_loss, logistic_loss_grad, ParameterStore, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxConfig {
    /// Master switch; when false no pairs are classified regardless of `beta`.
    pub enabled: bool,
    pub k: usize,
    pub pairs_per_step: usize,
    pub beta: f32,
}

impl Default for AuxConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            k: 10,
            pairs_per_step: 2,
            beta: 0.1,
        }
    }
}

impl AuxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("aux window k must be >= 2, got {}", self.k)));
        }
        if self.pairs_per_step < 2 || !self.pairs_per_step.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "pairs_per_step must be even and >= 2, got {}",
                self.pairs_per_step
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }

    /// Whether the loss contributes anything. A zero weight takes exactly the
    /// baseline code path.
    pub fn active(&self) -> bool {
        self.enabled && self.beta > 0.0
    }
}

/// The last `k` observations of the current episode with their step indices.
#[derive(Debug, Clone)]
pub struct ObservationHistory {
    capacity: usize,
    entries: VecDeque<(usize, Observation)>,
}

impl ObservationHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity + 1),
        }
    }

    /// Appends the observation seen at episode step `index`.
    ///
    /// # Panics
    /// If `index` does not exceed the newest stored index.
    pub fn push(&mut self, index: usize, obs: Observation) {
        if let Some((last, _)) = self.entries.back() {
            assert!(index > *last, "history indices must increase ({index} after {last})");
        }
        self.entries.push_back((index, obs));
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&(usize, Observation)> {
        self.entries.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, Observation)> {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderedPair {
    pub first: Observation,
    pub second: Observation,
    pub first_index: usize,
    pub second_index: usize,
    /// +1 when `first` was observed before `second`, otherwise -1.
    pub label: i8,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairBatch {
    pub pairs: Vec<OrderedPair>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Draws `pairs_per_step / 2` distinct index pairs from the window and emits
/// each in both orders. Histories with fewer than two entries give an empty
/// batch; short windows give as many pairs as exist.
pub fn sample_pairs<R: Rng + ?Sized>(
    history: &ObservationHistory,
    config: &AuxConfig,
    rng: &mut R,
) -> PairBatch {
    let n = history.len();
    if n < 2 {
        return PairBatch::default();
    }
    let total = n * (n - 1) / 2;
    let wanted = (config.pairs_per_step / 2).min(total);
    let mut pairs = Vec::with_capacity(2 * wanted);
    for linear in index::sample(rng, total, wanted).into_iter() {
        let (a, b) = unrank_pair(linear, n);
        let (ia, oa) = history.get(a).expect("in range");
        let (ib, ob) = history.get(b).expect("in range");
        pairs.push(OrderedPair {
            first: oa.clone(),
            second: ob.clone(),
            first_index: *ia,
            second_index: *ib,
            label: 1,
        });
        pairs.push(OrderedPair {
            first: ob.clone(),
            second: oa.clone(),
            first_index: *ib,
            second_index: *ia,
            label: -1,
        });
    }
    PairBatch { pairs }
}

/// Maps `0..n(n-1)/2` onto position pairs `(a, b)` with `a < b`, row by row.
fn unrank_pair(mut linear: usize, n: usize) -> (usize, usize) {
    let mut a = 0;
    loop {
        let row = n - 1 - a;
        if linear < row {
            return (a, a + 1 + linear);
        }
        linear -= row;
        a += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxStepLoss {
    /// Mean logistic loss over the batch (before the `beta` weight).
    pub loss: f64,
    /// Fraction of pairs with `sign(logit) == label`; `None` for empty batches.
    pub accuracy: Option<f64>,
}

/// Per-pair loss, logit gradient and correctness.
pub fn order_loss_terms<T: Scalar>(logits: ArrayView1<T>, labels: &[i8]) -> (Vec<T>, Vec<T>, usize) {
    let mut losses = Vec::with_capacity(labels.len());
    let mut grads = Vec::with_capacity(labels.len());
    let mut correct = 0;
    for (&z, &y) in logits.iter().zip(labels) {
        let yt = T::of(y as f64);
        losses.push(logistic_loss(z, yt));
        grads.push(logistic_loss_grad(z, yt));
        if (z > T::zero() && y > 0) || (z < T::zero() && y < 0) {
            correct += 1;
        }
    }
    (losses, grads, correct)
}

/// Auxiliary loss of one step's batch against the hidden vector `h`.
pub fn aux_loss_for_step<T: Scalar>(
    agent: &Agent,
    params: &ParameterStore<T>,
    h: ArrayView1<T>,
    batch: &PairBatch,
) -> Result<AuxStepLoss> {
    if batch.is_empty() {
        return Ok(AuxStepLoss {
            loss: 0.0,
            accuracy: None,
        });
    }
    let obs_dim = agent.config().obs_dim;
    let first = observation_batch::<T>(batch.pairs.iter().map(|p| &p.first), obs_dim);
    let second = observation_batch::<T>(batch.pairs.iter().map(|p| &p.second), obs_dim);
    let hs = h
        .insert_axis(Axis(0))
        .broadcast((batch.len(), h.len()))
        .expect("broadcast")
        .to_owned();
    let (logits, _) = agent.classify_order(params, hs.view(), first.view(), second.view())?;
    let labels: Vec<i8> = batch.pairs.iter().map(|p| p.label).collect();
    let (losses, _, correct) = order_loss_terms(logits.view(), &labels);
    let n = batch.len() as f64;
    Ok(AuxStepLoss {
        loss: losses.iter().map(|l| l.as_f64()).sum::<f64>() / n,
        accuracy: Some(correct as f64 / n),
    })
}

/// Result of [`aux_forward_backward`].
#[derive(Debug, Clone)]
pub struct AuxBackward<T> {
    /// `weight * sum over groups of the group's mean loss`.
    pub objective: f64,
    /// Mean over non-empty groups of the group mean loss.
    pub mean_loss: Option<f64>,
    pub accuracy: Option<f64>,
    /// Gradient of `objective` with respect to each hidden row.
    pub grad_h: Array2<T>,
}

/// Weighted auxiliary loss over many steps at once, with gradients.
///
/// `groups` pairs a row of `h_rows` with the batch sampled at that step. The
/// objective is `weight * sum_g mean_loss(g)`; parameter gradients of the
/// classifier (and of the trunk, through the pair embeddings) are accumulated
/// into `params` and the gradient for every row of `h_rows` is returned.
/// Identical observations are embedded once and their gradients summed.
pub fn aux_forward_backward<T: Scalar>(
    agent: &Agent,
    params: &mut ParameterStore<T>,
    h_rows: ArrayView2<T>,
    groups: &[(usize, &PairBatch)],
    weight: T,
) -> Result<AuxBackward<T>> {
    let mut grad_h = Array2::zeros(h_rows.raw_dim());
    let mut unique: Vec<&Observation> = Vec::new();
    let mut slot: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut first_slot = Vec::new();
    let mut second_slot = Vec::new();
    let mut row_of_pair = Vec::new();
    let mut labels = Vec::new();
    let mut group_of_pair = Vec::new();
    let mut group_sizes = Vec::new();
    for (g, (row, batch)) in groups.iter().enumerate() {
        group_sizes.push(batch.len());
        for p in &batch.pairs {
            for (obs, dst) in [(&p.first, &mut first_slot), (&p.second, &mut second_slot)] {
                let next = unique.len();
                let s = *slot.entry(obs.key()).or_insert(next);
                if s == next {
                    unique.push(obs);
                }
                dst.push(s);
            }
            row_of_pair.push(*row);
            labels.push(p.label);
            group_of_pair.push(g);
        }
    }
    if labels.is_empty() {
        return Ok(AuxBackward {
            objective: 0.0,
            mean_loss: None,
            accuracy: None,
            grad_h,
        });
    }

    let obs = observation_batch::<T>(unique.iter().copied(), agent.config().obs_dim);
    let (emb, trunk_cache) = agent.embed(params, obs.view())?;
    let first = emb.select(Axis(0), &first_slot);
    let second = emb.select(Axis(0), &second_slot);
    let hs = h_rows.select(Axis(0), &row_of_pair);
    let (logits, cache) = agent.classify_embedded(params, hs.view(), first.view(), second.view())?;
    let (losses, dlosses, correct) = order_loss_terms(logits.view(), &labels);

    let mut group_loss = vec![0.0f64; groups.len()];
    let mut dlogits = Array1::zeros(labels.len());
    for (i, g) in group_of_pair.iter().enumerate() {
        let n = group_sizes[*g];
        group_loss[*g] += losses[i].as_f64() / n as f64;
        dlogits[i] = weight * dlosses[i] / T::of(n as f64);
    }
    let non_empty: Vec<f64> = group_loss
        .iter()
        .zip(&group_sizes)
        .filter(|(_, &n)| n > 0)
        .map(|(l, _)| *l)
        .collect();
    let objective = weight.as_f64() * group_loss.iter().sum::<f64>();
    if !objective.is_finite() {
        return Err(Error::NonFinite("auxiliary loss".into()));
    }

    let grads = agent.classify_embedded_backward(params, &cache, &dlogits);
    for (i, &row) in row_of_pair.iter().enumerate() {
        let mut dst = grad_h.row_mut(row);
        dst += &grads.h.row(i);
    }
    if !agent.config().stop_pair_gradient {
        let mut d_emb = Array2::zeros(emb.raw_dim());
        for (i, (&a, &b)) in first_slot.iter().zip(&second_slot).enumerate() {
            let mut da = d_emb.row_mut(a);
            da += &grads.first.row(i);
            let mut db = d_emb.row_mut(b);
            db += &grads.second.row(i);
        }
        agent.embed_backward(params, &trunk_cache, d_emb);
    }
    Ok(AuxBackward {
        objective,
        mean_loss: Some(non_empty.iter().sum::<f64>() / non_empty.len() as f64),
        accuracy: Some(correct as f64 / labels.len() as f64),
        grad_h,
    })
}
