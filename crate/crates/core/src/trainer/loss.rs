use ndarray::{Array2, Axis};

use super::RolloutBuffer;
use crate::agent::{observation_batch, Agent, AgentOutput, StepCache};
use crate::auxloss::{aux_forward_backward, PairBatch};
use crate::error::{Error, Result};
use crate::numeric::{LstmState, ParameterStore, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub entropy: f64,
    pub value: f64,
    pub aux: f64,
    /// When false the classifier is never evaluated.
    pub aux_active: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossStats {
    pub total: f64,
    /// Mean of `-log pi(a_t) * advantage_t`.
    pub policy_loss: f64,
    /// Mean of `(R_t - V_t)^2`.
    pub value_loss: f64,
    pub entropy: f64,
    pub aux_loss: Option<f64>,
    pub aux_accuracy: Option<f64>,
}

/// Replays the rollout through the network, accumulates the gradient of the
/// minimized objective into `params` and returns its value.
///
/// Per transition the objective is
/// `-log pi(a_t) A_t - entropy * H(pi_t) + aux * L_aux(t) + value * (R_t - V_t)^2`,
/// averaged over all `steps * workers` transitions. `returns` and
/// `advantages` enter as constants. Backpropagation runs through time over
/// the whole rollout and stops at episode starts and at the rollout's
/// initial state.
pub fn assemble_loss<T: Scalar>(
    agent: &Agent,
    params: &mut ParameterStore<T>,
    buffer: &RolloutBuffer,
    returns: &[Vec<f64>],
    advantages: &[Vec<f64>],
    weights: LossWeights,
) -> Result<LossStats> {
    let steps = buffer.len();
    let workers = buffer.n_workers;
    let hidden = agent.hidden_size();
    let obs_dim = agent.config().obs_dim;
    let n = (steps * workers) as f64;
    let inv_n = 1.0 / n;

    let mut state = LstmState {
        h: buffer.initial_state.h.mapv(|v| T::of(v as f64)),
        c: buffer.initial_state.c.mapv(|v| T::of(v as f64)),
    };
    let mut outputs: Vec<AgentOutput<T>> = Vec::with_capacity(steps);
    let mut caches: Vec<StepCache<T>> = Vec::with_capacity(steps);
    for t in 0..steps {
        let obs = observation_batch::<T>(&buffer.observations[t], obs_dim);
        let (out, cache) = agent.step(params, obs.view(), &state)?;
        state = out.next_state.clone();
        for (w, &done) in buffer.dones[t].iter().enumerate() {
            if done {
                state.reset_row(w);
            }
        }
        outputs.push(out);
        caches.push(cache);
    }

    let mut policy_sum = 0.0;
    let mut value_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut grad_logits = Vec::with_capacity(steps);
    let mut grad_values = Vec::with_capacity(steps);
    for t in 0..steps {
        let out = &outputs[t];
        let mut gl = Array2::zeros(out.logits.raw_dim());
        let mut gv = Array2::zeros((workers, 1));
        for w in 0..workers {
            let p = out.policy.row(w);
            let lp = out.log_policy.row(w);
            let a = buffer.actions[t][w].index();
            let adv = advantages[t][w];
            let ent: f64 = -p.iter().zip(lp.iter()).map(|(&p, &l)| (p * l).as_f64()).sum::<f64>();
            policy_sum += -lp[a].as_f64() * adv;
            entropy_sum += ent;
            // d/dz of -A log p_a is A (p - onehot_a); d/dz of -H is p (log p + H).
            for k in 0..p.len() {
                let pk = p[k].as_f64();
                let onehot = if k == a { 1.0 } else { 0.0 };
                let g = adv * (pk - onehot) + weights.entropy * pk * (lp[k].as_f64() + ent);
                gl[[w, k]] = T::of(g * inv_n);
            }
            let err = returns[t][w] - out.value[w].as_f64();
            value_sum += err * err;
            gv[[w, 0]] = T::of(-2.0 * weights.value * err * inv_n);
        }
        grad_logits.push(gl);
        grad_values.push(gv);
    }

    let (aux_objective, aux_loss, aux_accuracy, aux_grad_h) = if weights.aux_active {
        let h_rows = ndarray::concatenate(
            Axis(0),
            &outputs.iter().map(|o| o.next_state.h.view()).collect::<Vec<_>>(),
        )
        .expect("uniform widths");
        let groups: Vec<(usize, &PairBatch)> = (0..steps)
            .flat_map(|t| (0..workers).map(move |w| (t, w)))
            .map(|(t, w)| (t * workers + w, &buffer.pairs[t][w]))
            .collect();
        let aux = aux_forward_backward(agent, params, h_rows.view(), &groups, T::of(weights.aux * inv_n))?;
        (aux.objective, aux.mean_loss, aux.accuracy, Some(aux.grad_h))
    } else {
        (0.0, None, None, None)
    };

    let policy_loss = policy_sum * inv_n;
    let value_loss = value_sum * inv_n;
    let entropy = entropy_sum * inv_n;
    let total = policy_loss - weights.entropy * entropy + weights.value * value_loss + aux_objective;
    if !total.is_finite() {
        return Err(Error::NonFinite("rollout loss".into()));
    }

    let mut carry = LstmState::<T>::zeros(workers, hidden);
    for t in (0..steps).rev() {
        let mut grad_h = carry.h;
        if let Some(g) = &aux_grad_h {
            grad_h += &g.slice(ndarray::s![t * workers..(t + 1) * workers, ..]);
        }
        carry = agent.step_backward(
            params,
            &caches[t],
            grad_logits[t].view(),
            grad_values[t].view(),
            grad_h,
            carry.c.view(),
        );
        if t > 0 {
            for (w, &done) in buffer.dones[t - 1].iter().enumerate() {
                if done {
                    carry.reset_row(w);
                }
            }
        }
    }

    Ok(LossStats {
        total,
        policy_loss,
        value_loss,
        entropy,
        aux_loss,
        aux_accuracy,
    })
}
