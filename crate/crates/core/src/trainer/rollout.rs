use ndarray::Array2;

use crate::auxloss::PairBatch;
use crate::env::{Action, Observation};
use crate::numeric::LstmState;

/// One collection phase: `[step][worker]` transitions plus the recurrent
/// state each worker entered the rollout with.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub n_workers: usize,
    /// Detached state at the first step; no gradient flows into it.
    pub initial_state: LstmState<f32>,
    pub observations: Vec<Vec<Observation>>,
    pub actions: Vec<Vec<Action>>,
    pub log_probs: Vec<Vec<f32>>,
    pub rewards: Vec<Vec<f32>>,
    pub values: Vec<Vec<f32>>,
    pub dones: Vec<Vec<bool>>,
    /// Recurrent output `h_t` after each step, `[workers, hidden]`; the order
    /// classifier at step `t` reads this state.
    pub hidden: Vec<Array2<f32>>,
    pub pairs: Vec<Vec<PairBatch>>,
    /// `V(o_T, h_T)` for the observation following the last step.
    pub bootstrap_values: Vec<f32>,
}

impl RolloutBuffer {
    pub fn new(n_workers: usize, initial_state: LstmState<f32>) -> Self {
        Self {
            n_workers,
            initial_state,
            observations: Vec::new(),
            actions: Vec::new(),
            log_probs: Vec::new(),
            rewards: Vec::new(),
            values: Vec::new(),
            dones: Vec::new(),
            hidden: Vec::new(),
            pairs: Vec::new(),
            bootstrap_values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn transitions(&self) -> usize {
        self.len() * self.n_workers
    }
}
