use serde::{Deserialize, Serialize};

/// How advantages bootstrap from the value function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TdHorizon {
    /// `r_{t+1} + gamma * V_{t+1} - V_t`.
    OneStep,
    /// n-step return to the end of the rollout, cut at episode ends.
    Rollout,
}

/// Targets and advantages for a `[step][worker]` rollout.
///
/// `dones[t][w]` marks that the transition at `t` ended the episode, so
/// nothing after it is bootstrapped into `t`. `bootstrap[w]` is the value of
/// the state following the last step.
pub fn compute_returns_and_advantages(
    rewards: &[Vec<f32>],
    values: &[Vec<f32>],
    dones: &[Vec<bool>],
    bootstrap: &[f32],
    gamma: f64,
    horizon: TdHorizon,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let steps = rewards.len();
    let workers = bootstrap.len();
    let mut returns = vec![vec![0.0; workers]; steps];
    let mut advantages = vec![vec![0.0; workers]; steps];
    for w in 0..workers {
        let mut running = bootstrap[w] as f64;
        for t in (0..steps).rev() {
            let cont = if dones[t][w] { 0.0 } else { 1.0 };
            let target = match horizon {
                TdHorizon::OneStep => {
                    let next = if t + 1 < steps {
                        values[t + 1][w] as f64
                    } else {
                        bootstrap[w] as f64
                    };
                    rewards[t][w] as f64 + gamma * cont * next
                }
                TdHorizon::Rollout => {
                    running = rewards[t][w] as f64 + gamma * cont * running;
                    running
                }
            };
            returns[t][w] = target;
            advantages[t][w] = target - values[t][w] as f64;
        }
    }
    (returns, advantages)
}
