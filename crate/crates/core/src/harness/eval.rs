//! Policy evaluation on fresh episodes.
//!
//! Episode `e` draws its start state and its action samples from two
//! dedicated streams of the evaluation seed, so results do not depend on how
//! episodes are batched and never share randomness with training.

use std::collections::HashSet;

use ndarray::Array2;
use rand::distr::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{argmax, observation_batch, sample_action, Agent};
use crate::env::{Action, GridConfig, GridEnv, Observation, Position};
use crate::error::{Error, Result};
use crate::numeric::{LstmState, ParameterStore};
use crate::trainer::stream_rng;

/// First random stream used by evaluation; training uses low stream ids.
pub const EVAL_STREAM_BASE: u64 = 1 << 40;

/// Episodes stepped together in one batch.
const EVAL_BATCH: usize = 32;

/// A policy that can be run on a batch of episodes in lockstep.
pub trait EvalPolicy {
    /// Called before the first step of a batch of `n` new episodes.
    fn begin(&mut self, n: usize);
    fn act(&mut self, obs: &[Observation], rngs: &mut [ChaCha8Rng]) -> Result<Vec<Action>>;
}

/// The trained network, acting from its recurrent state.
pub struct AgentPolicy<'a> {
    agent: &'a Agent,
    params: &'a ParameterStore<f32>,
    greedy: bool,
    state: LstmState<f32>,
}

impl<'a> AgentPolicy<'a> {
    pub fn new(agent: &'a Agent, params: &'a ParameterStore<f32>, greedy: bool) -> Self {
        Self {
            agent,
            params,
            greedy,
            state: agent.initial_state(0),
        }
    }
}

impl EvalPolicy for AgentPolicy<'_> {
    fn begin(&mut self, n: usize) {
        self.state = self.agent.initial_state(n);
    }

    fn act(&mut self, obs: &[Observation], rngs: &mut [ChaCha8Rng]) -> Result<Vec<Action>> {
        let x: Array2<f32> = observation_batch(obs, self.agent.config().obs_dim);
        let (out, _) = self.agent.step(self.params, x.view(), &self.state)?;
        let actions = (0..obs.len())
            .map(|i| {
                let lp = out.log_policy.row(i);
                let lp = lp.as_slice().expect("row-major");
                if self.greedy {
                    Action::from_index(argmax(lp)).expect("policy width")
                } else {
                    let p = out.policy.row(i);
                    sample_action(p.as_slice().expect("row-major"), lp, &mut rngs[i]).0
                }
            })
            .collect();
        self.state = out.next_state;
        Ok(actions)
    }
}

/// Uniformly random actions.
pub struct RandomPolicy;

impl EvalPolicy for RandomPolicy {
    fn begin(&mut self, _n: usize) {}

    fn act(&mut self, obs: &[Observation], rngs: &mut [ChaCha8Rng]) -> Result<Vec<Action>> {
        let dist = Uniform::new(0, Action::COUNT).expect("non-empty range");
        Ok(rngs[..obs.len()]
            .iter_mut()
            .map(|r| Action::ALL[dist.sample(r)])
            .collect())
    }
}

/// Scripted searcher: walks to the nearest unvisited cell until it stands on
/// the goal, then stays there.
pub struct SweepSearchPolicy {
    width: usize,
    height: usize,
    visited: Vec<HashSet<Position>>,
}

impl SweepSearchPolicy {
    pub fn new(config: &GridConfig) -> Self {
        Self {
            width: config.width,
            height: config.height,
            visited: Vec::new(),
        }
    }

    fn choose(&self, at: Position, visited: &HashSet<Position>) -> Action {
        let mut best: Option<(usize, Position)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                let p = Position::new(x, y);
                if visited.contains(&p) {
                    continue;
                }
                let d = at.x.abs_diff(x) + at.y.abs_diff(y);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, p));
                }
            }
        }
        match best {
            None => Action::Stay,
            Some((_, target)) if target.x > at.x => Action::East,
            Some((_, target)) if target.x < at.x => Action::West,
            Some((_, target)) if target.y > at.y => Action::North,
            Some(_) => Action::South,
        }
    }
}

impl EvalPolicy for SweepSearchPolicy {
    fn begin(&mut self, n: usize) {
        self.visited = vec![HashSet::new(); n];
    }

    fn act(&mut self, obs: &[Observation], _rngs: &mut [ChaCha8Rng]) -> Result<Vec<Action>> {
        obs.iter()
            .enumerate()
            .map(|(i, o)| {
                if o.on_goal() {
                    return Ok(Action::Stay);
                }
                let at = o
                    .position(self.width)
                    .ok_or_else(|| Error::Config("observation without a position".into()))?;
                self.visited[i].insert(at);
                Ok(self.choose(at, &self.visited[i]))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub episodes: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub stderr: f64,
    pub greedy: bool,
    pub seed: u64,
}

impl EvalRecord {
    pub fn from_returns(returns: &[f64], greedy: bool, seed: u64) -> Self {
        let n = returns.len();
        let (mean, std) = mean_and_std(returns);
        Self {
            episodes: n,
            mean,
            std,
            min: returns.iter().copied().fold(f64::INFINITY, f64::min),
            max: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            stderr: std / (n as f64).sqrt(),
            greedy,
            seed,
        }
    }
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Undiscounted return of each of `episodes` fresh episodes.
pub fn episode_returns<P: EvalPolicy>(
    policy: &mut P,
    env: &GridConfig,
    episodes: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    env.validate()?;
    let mut returns = Vec::with_capacity(episodes);
    let mut start = 0;
    while start < episodes {
        let n = EVAL_BATCH.min(episodes - start);
        let mut env_rngs: Vec<ChaCha8Rng> = (0..n)
            .map(|i| stream_rng(seed, EVAL_STREAM_BASE + 2 * (start + i) as u64))
            .collect();
        let mut action_rngs: Vec<ChaCha8Rng> = (0..n)
            .map(|i| stream_rng(seed, EVAL_STREAM_BASE + 2 * (start + i) as u64 + 1))
            .collect();
        let (mut envs, mut obs): (Vec<GridEnv>, Vec<Observation>) =
            env_rngs.iter_mut().map(|r| GridEnv::new(*env, r)).unzip();
        let mut totals = vec![0.0f64; n];
        policy.begin(n);
        for _ in 0..env.episode_length {
            let actions = policy.act(&obs, &mut action_rngs)?;
            for i in 0..n {
                let r = envs[i].step(actions[i])?;
                totals[i] += r.reward as f64;
                obs[i] = r.observation;
            }
        }
        returns.extend(totals);
        start += n;
    }
    Ok(returns)
}

pub fn evaluate<P: EvalPolicy>(
    policy: &mut P,
    env: &GridConfig,
    episodes: usize,
    seed: u64,
    greedy: bool,
) -> Result<EvalRecord> {
    let returns = episode_returns(policy, env, episodes, seed)?;
    Ok(EvalRecord::from_returns(&returns, greedy, seed))
}
