//! Synchronous advantage actor-critic.
//!
//! All workers step in lockstep as one batch against read-only parameters;
//! a single update then replays the rollout, backpropagates through time and
//! applies one RMSProp step. Every worker owns separate random streams for
//! environment resets, action sampling and pair sampling, so enabling or
//! disabling the auxiliary loss never perturbs the trajectories it sees.

mod loss;
mod optim;
mod returns;
mod rollout;

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use loss::{assemble_loss, LossStats, LossWeights};
pub use optim::RmsProp;
pub use returns::{compute_returns_and_advantages, TdHorizon};
pub use rollout::RolloutBuffer;

use crate::agent::{observation_batch, sample_action, Agent, AgentConfig};
use crate::auxloss::{sample_pairs, AuxConfig, ObservationHistory, PairBatch};
use crate::env::{GridConfig, GridEnv, Observation};
use crate::error::{Error, Result};
use crate::numeric::{LstmState, ParameterStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub n_workers: usize,
    pub gamma: f64,
    /// Entropy bonus weight.
    pub alpha: f64,
    pub value_coef: f64,
    pub rollout_len: usize,
    pub learning_rate: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub grad_clip_norm: f64,
    pub total_env_steps: u64,
    pub td_horizon: TdHorizon,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            n_workers: 32,
            gamma: 0.95,
            alpha: 0.01,
            value_coef: 0.5,
            rollout_len: 20,
            learning_rate: 7e-4,
            rmsprop_decay: 0.99,
            rmsprop_epsilon: 1e-5,
            grad_clip_norm: 0.5,
            total_env_steps: 5_000_000,
            td_horizon: TdHorizon::Rollout,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1), got {}", self.gamma));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("value_coef", self.value_coef),
            ("learning_rate", self.learning_rate),
            ("rmsprop_epsilon", self.rmsprop_epsilon),
            ("grad_clip_norm", self.grad_clip_norm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) {
            return bad(format!("rmsprop_decay must be in [0, 1), got {}", self.rmsprop_decay));
        }
        if self.rollout_len < 1 || self.n_workers < 1 {
            return bad("rollout_len and n_workers must be >= 1".into());
        }
        Ok(())
    }

    pub fn steps_per_update(&self) -> u64 {
        (self.n_workers * self.rollout_len) as u64
    }

    /// Number of updates needed to consume the step budget.
    pub fn total_updates(&self) -> u64 {
        self.total_env_steps.div_ceil(self.steps_per_update())
    }
}

/// Random stream ids; each worker `w` uses `1 + 3w + purpose`.
const STREAM_ENV: u64 = 0;
const STREAM_ACTION: u64 = 1;
const STREAM_PAIRS: u64 = 2;

/// ChaCha8 generator on stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone)]
struct Worker {
    env: GridEnv,
    obs: Observation,
    /// Episode step index of `obs`.
    index: usize,
    episode_return: f32,
    history: ObservationHistory,
    env_rng: ChaCha8Rng,
    action_rng: ChaCha8Rng,
    pair_rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub update: u64,
    pub env_steps: u64,
    /// Mean undiscounted return of the last (up to) 100 finished episodes.
    pub mean_return_100ep: Option<f64>,
    pub episodes: u64,
    pub loss: LossStats,
    pub grad_norm: f64,
}

pub struct Trainer {
    env_config: GridConfig,
    aux: AuxConfig,
    config: TrainerConfig,
    agent: Agent,
    params: ParameterStore<f32>,
    optimizer: RmsProp<f32>,
    workers: Vec<Worker>,
    state: LstmState<f32>,
    recent_returns: VecDeque<f32>,
    episodes: u64,
    updates: u64,
    env_steps: u64,
}

impl Trainer {
    pub fn new(
        env_config: GridConfig,
        agent_config: AgentConfig,
        aux: AuxConfig,
        config: TrainerConfig,
        seed: u64,
    ) -> Result<Self> {
        env_config.validate()?;
        aux.validate()?;
        config.validate()?;
        if agent_config.obs_dim != env_config.observation_dim() {
            return Err(Error::Config(format!(
                "agent obs_dim {} does not match environment observation size {}",
                agent_config.obs_dim,
                env_config.observation_dim()
            )));
        }
        let mut init_rng = stream_rng(seed, 0);
        let (agent, params) = Agent::new::<f32, _>(agent_config, &mut init_rng)?;
        let optimizer = RmsProp::new(
            &params,
            config.learning_rate,
            config.rmsprop_decay,
            config.rmsprop_epsilon,
            config.grad_clip_norm,
        );
        let workers = (0..config.n_workers as u64)
            .map(|w| {
                let base = 1 + 3 * w;
                let mut env_rng = stream_rng(seed, base + STREAM_ENV);
                let (env, obs) = GridEnv::new(env_config, &mut env_rng);
                Worker {
                    env,
                    obs,
                    index: 0,
                    episode_return: 0.0,
                    history: ObservationHistory::new(aux.k),
                    env_rng,
                    action_rng: stream_rng(seed, base + STREAM_ACTION),
                    pair_rng: stream_rng(seed, base + STREAM_PAIRS),
                }
            })
            .collect();
        let state = agent.initial_state(config.n_workers);
        Ok(Self {
            env_config,
            aux,
            config,
            agent,
            params,
            optimizer,
            workers,
            state,
            recent_returns: VecDeque::with_capacity(100),
            episodes: 0,
            updates: 0,
            env_steps: 0,
        })
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn params(&self) -> &ParameterStore<f32> {
        &self.params
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn env_config(&self) -> &GridConfig {
        &self.env_config
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn mean_recent_return(&self) -> Option<f64> {
        if self.recent_returns.is_empty() {
            None
        } else {
            Some(self.recent_returns.iter().map(|&r| r as f64).sum::<f64>() / self.recent_returns.len() as f64)
        }
    }

    /// Advances every worker `rollout_len` steps with the current policy.
    pub fn collect_rollouts(&mut self) -> Result<RolloutBuffer> {
        let obs_dim = self.agent.config().obs_dim;
        let aux_active = self.aux.active();
        let mut buffer = RolloutBuffer::new(self.workers.len(), self.state.clone());
        for _ in 0..self.config.rollout_len {
            let mut pairs = Vec::with_capacity(self.workers.len());
            for w in &mut self.workers {
                w.history.push(w.index, w.obs.clone());
                pairs.push(if aux_active {
                    sample_pairs(&w.history, &self.aux, &mut w.pair_rng)
                } else {
                    PairBatch::default()
                });
            }
            let observations: Vec<Observation> = self.workers.iter().map(|w| w.obs.clone()).collect();
            let x = observation_batch::<f32>(&observations, obs_dim);
            let (out, _) = self.agent.step(&self.params, x.view(), &self.state)?;

            let n = self.workers.len();
            let (mut actions, mut log_probs, mut rewards, mut dones) =
                (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
            let mut next_state = out.next_state.clone();
            for (i, w) in self.workers.iter_mut().enumerate() {
                let p = out.policy.row(i);
                let lp = out.log_policy.row(i);
                let (action, log_prob) = sample_action(
                    p.as_slice().expect("row-major"),
                    lp.as_slice().expect("row-major"),
                    &mut w.action_rng,
                );
                let step = w.env.step(action)?;
                w.episode_return += step.reward;
                if step.done {
                    self.episodes += 1;
                    if self.recent_returns.len() == 100 {
                        self.recent_returns.pop_front();
                    }
                    self.recent_returns.push_back(w.episode_return);
                    w.episode_return = 0.0;
                    w.obs = w.env.reset(&mut w.env_rng);
                    w.index = 0;
                    w.history.clear();
                    next_state.reset_row(i);
                } else {
                    w.obs = step.observation;
                    w.index += 1;
                }
                actions.push(action);
                log_probs.push(log_prob);
                rewards.push(step.reward);
                dones.push(step.done);
            }
            buffer.observations.push(observations);
            buffer.actions.push(actions);
            buffer.log_probs.push(log_probs);
            buffer.rewards.push(rewards);
            buffer.values.push(out.value.to_vec());
            buffer.dones.push(dones);
            buffer.hidden.push(out.next_state.h);
            buffer.pairs.push(pairs);
            self.state = next_state;
            self.env_steps += n as u64;
        }
        let observations: Vec<Observation> = self.workers.iter().map(|w| w.obs.clone()).collect();
        let x = observation_batch::<f32>(&observations, obs_dim);
        let (out, _) = self.agent.step(&self.params, x.view(), &self.state)?;
        buffer.bootstrap_values = out.value.to_vec();
        Ok(buffer)
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            entropy: self.config.alpha,
            value: self.config.value_coef,
            aux: self.aux.beta as f64,
            aux_active: self.aux.active(),
        }
    }

    /// One collection phase followed by one optimizer step.
    pub fn update(&mut self) -> Result<UpdateStats> {
        let buffer = self.collect_rollouts()?;
        let (returns, advantages) = compute_returns_and_advantages(
            &buffer.rewards,
            &buffer.values,
            &buffer.dones,
            &buffer.bootstrap_values,
            self.config.gamma,
            self.config.td_horizon,
        );
        self.params.zero_grad();
        let weights = self.loss_weights();
        let loss = match assemble_loss(&self.agent, &mut self.params, &buffer, &returns, &advantages, weights) {
            Ok(l) => l,
            Err(e) => {
                log::error!("update {} aborted: {e}", self.updates + 1);
                self.params.zero_grad();
                return Err(e);
            }
        };
        let grad_norm = self.optimizer.step(&mut self.params).inspect_err(|e| {
            log::error!("update {} aborted: {e}", self.updates + 1);
        })?;
        self.updates += 1;
        Ok(UpdateStats {
            update: self.updates,
            env_steps: self.env_steps,
            mean_return_100ep: self.mean_recent_return(),
            episodes: self.episodes,
            loss,
            grad_norm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> TrainerConfig {
        TrainerConfig {
            n_workers: 4,
            rollout_len: 5,
            total_env_steps: 200,
            ..Default::default()
        }
    }

    fn trainer(aux: AuxConfig, config: TrainerConfig, seed: u64) -> Trainer {
        Trainer::new(GridConfig::default(), AgentConfig::default(), aux, config, seed).unwrap()
    }

    #[test]
    fn buffer_dimensions() {
        let mut t = trainer(AuxConfig::default(), TrainerConfig::default(), 0);
        let b = t.collect_rollouts().unwrap();
        assert_eq!(b.transitions(), 640);
        assert_eq!(b.len(), 20);
        assert!(b.rewards.iter().flatten().all(|&r| r == 0.0 || r == 1.0));
        assert_eq!(b.bootstrap_values.len(), 32);
        assert_eq!(b.hidden[0].dim(), (32, 64));
    }

    #[test]
    fn episode_boundary_resets_worker() {
        // Episodes of 7 steps: the 8th transition starts a fresh episode
        // with a zero recurrent state and an emptied pair window.
        let env = GridConfig {
            episode_length: 7,
            ..Default::default()
        };
        let cfg = TrainerConfig {
            n_workers: 2,
            rollout_len: 10,
            ..Default::default()
        };
        let mut t = Trainer::new(env, AgentConfig::default(), AuxConfig::default(), cfg, 3).unwrap();
        let b = t.collect_rollouts().unwrap();
        assert!(b.dones[6].iter().all(|&d| d));
        assert!(b.dones[..6].iter().flatten().all(|&d| !d));
        // Step 7's window holds just the new episode's first observation.
        assert!(b.pairs[7].iter().all(|p| p.is_empty()));
        assert!(b.pairs[8].iter().all(|p| p.pairs.iter().all(|q| q.first_index <= 1 && q.second_index <= 1)));
        // Replaying step 7 from a zero state reproduces the stored hidden output.
        let x = observation_batch::<f32>(&b.observations[7], 13);
        let (out, _) = t.agent.step(&t.params, x.view(), &t.agent.initial_state(2)).unwrap();
        assert_eq!(out.next_state.h, b.hidden[7]);
        assert_eq!(t.episodes(), 2);
    }

    #[test]
    fn identical_seeds_identical_params() {
        let run = || {
            let mut t = trainer(AuxConfig::default(), small_config(), 5);
            for _ in 0..10 {
                t.update().unwrap();
            }
            t.params.clone()
        };
        assert_eq!(run().values(), run().values());
    }

    #[test]
    fn zero_beta_matches_disabled_aux() {
        let run = |aux: AuxConfig| {
            let mut t = trainer(aux, small_config(), 9);
            let stats: Vec<_> = (0..8).map(|_| t.update().unwrap()).collect();
            (t.params.clone(), stats)
        };
        let (p0, s0) = run(AuxConfig {
            beta: 0.0,
            ..Default::default()
        });
        let (p1, s1) = run(AuxConfig {
            enabled: false,
            ..Default::default()
        });
        assert_eq!(p0.values(), p1.values());
        assert_eq!(s0, s1);
        let (p2, _) = run(AuxConfig::default());
        assert_ne!(p0.values(), p2.values());
    }

    #[test]
    fn aux_does_not_change_first_rollout() {
        let mut a = trainer(AuxConfig::default(), small_config(), 2);
        let mut b = trainer(AuxConfig { enabled: false, ..Default::default() }, small_config(), 2);
        let ra = a.collect_rollouts().unwrap();
        let rb = b.collect_rollouts().unwrap();
        assert_eq!(ra.actions, rb.actions);
        assert_eq!(ra.rewards, rb.rewards);
        assert!(ra.pairs.iter().flatten().any(|p| !p.is_empty()));
        assert!(rb.pairs.iter().flatten().all(|p| p.is_empty()));
    }

    #[test]
    fn rejects_bad_config() {
        for cfg in [
            TrainerConfig { gamma: 1.0, ..Default::default() },
            TrainerConfig { n_workers: 0, ..Default::default() },
            TrainerConfig { rollout_len: 0, ..Default::default() },
            TrainerConfig { alpha: -1.0, ..Default::default() },
        ] {
            assert!(Trainer::new(GridConfig::default(), AgentConfig::default(), AuxConfig::default(), cfg, 0).is_err());
        }
    }
}
