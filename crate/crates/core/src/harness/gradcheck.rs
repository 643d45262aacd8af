//! Finite-difference verification of every hand-written backward pass.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::agent::{Agent, AgentConfig};
use crate::auxloss::AuxConfig;
use crate::env::GridConfig;
use crate::error::Result;
use crate::numeric::{
    gradient_check, logistic_loss, logistic_loss_grad, Activation, Dense, GradCheckOptions,
    GradCheckReport, Lstm, LstmState, ParameterStore,
};
use crate::trainer::{assemble_loss, compute_returns_and_advantages, stream_rng, Trainer, TrainerConfig};

#[derive(Debug, Clone, Serialize)]
pub struct CaseResult {
    pub name: String,
    /// Negative controls are expected to fail.
    pub expect_pass: bool,
    pub report: GradCheckReport,
}

impl CaseResult {
    pub fn ok(&self) -> bool {
        self.report.passed == self.expect_pass
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub cases: Vec<CaseResult>,
}

impl SuiteReport {
    pub fn ok(&self) -> bool {
        self.cases.iter().all(CaseResult::ok)
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// `sum(out * weights)`, whose gradient with respect to `out` is `weights`.
fn probe(out: &Array2<f64>, weights: &Array2<f64>) -> f64 {
    (out * weights).sum()
}

pub fn check_dense(activation: Activation, flip_sign: bool, opts: GradCheckOptions) -> Result<GradCheckReport> {
    let mut rng = stream_rng(11, activation as u64);
    let mut store = ParameterStore::<f64>::new();
    let layer = Dense::register(&mut store, "dense", 4, 3, activation, &mut rng)?;
    // Non-zero biases keep ReLU pre-activations away from the kink.
    let bias = store.id("dense.bias").expect("registered");
    *store.value_mut(bias) = random_matrix(1, 3, &mut rng);
    let x = random_matrix(6, 4, &mut rng);
    let w = random_matrix(6, 3, &mut rng);
    gradient_check(
        &mut store,
        |s| {
            let (y, cache) = layer.forward(s, x.view())?;
            layer.backward(s, &cache, w.view(), false);
            if flip_sign {
                s.scale_grads(-1.0);
            }
            Ok(probe(&y, &w))
        },
        opts,
    )
}

/// LSTM unrolled over `steps` from a non-zero state; the probe reads every
/// hidden output and the final cell.
pub fn check_lstm(hidden: usize, steps: usize, opts: GradCheckOptions) -> Result<GradCheckReport> {
    let mut rng = stream_rng(12, 0);
    let (batch, input) = (3, 4);
    let mut store = ParameterStore::<f64>::new();
    let lstm = Lstm::register(&mut store, "lstm", input, hidden, &mut rng)?;
    let xs: Vec<_> = (0..steps).map(|_| random_matrix(batch, input, &mut rng)).collect();
    let wh: Vec<_> = (0..steps).map(|_| random_matrix(batch, hidden, &mut rng)).collect();
    let wc = random_matrix(batch, hidden, &mut rng);
    let init = LstmState {
        h: random_matrix(batch, hidden, &mut rng) * 0.5,
        c: random_matrix(batch, hidden, &mut rng) * 0.5,
    };
    gradient_check(
        &mut store,
        |s| {
            let mut state = init.clone();
            let mut caches = Vec::with_capacity(steps);
            let mut loss = 0.0;
            for (x, w) in xs.iter().zip(&wh) {
                let (next, cache) = lstm.forward(s, x.view(), &state)?;
                loss += probe(&next.h, w);
                caches.push(cache);
                state = next;
            }
            loss += probe(&state.c, &wc);
            let mut dh = Array2::zeros((batch, hidden));
            let mut dc = wc.clone();
            for (cache, w) in caches.iter().zip(&wh).rev() {
                let gh = &dh + w;
                let (_, prev) = lstm.backward(s, cache, gh.view(), dc.view());
                dh = prev.h;
                dc = prev.c;
            }
            Ok(loss)
        },
        opts,
    )
}

/// Order classifier on pairs of observations, including the shared trunk.
pub fn check_classifier(opts: GradCheckOptions) -> Result<GradCheckReport> {
    let mut rng = stream_rng(13, 0);
    let config = AgentConfig::tiny(13);
    let (agent, mut store) = Agent::new::<f64, _>(config, &mut rng)?;
    let rows = 6;
    let h = random_matrix(rows, config.lstm_hidden, &mut rng);
    let first = random_matrix(rows, config.obs_dim, &mut rng);
    let second = random_matrix(rows, config.obs_dim, &mut rng);
    let labels: Vec<f64> = (0..rows).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    gradient_check(
        &mut store,
        |s| {
            let (logits, cache) = agent.classify_order(s, h.view(), first.view(), second.view())?;
            let loss: f64 = logits.iter().zip(&labels).map(|(&z, &y)| logistic_loss(z, y)).sum();
            let grads: Array1<f64> = logits
                .iter()
                .zip(&labels)
                .map(|(&z, &y)| logistic_loss_grad(z, y))
                .collect();
            agent.classify_order_backward(s, &cache, &grads);
            Ok(loss)
        },
        opts,
    )
}

/// The complete training objective of a small agent over a short rollout
/// that crosses episode boundaries, auxiliary loss included.
pub fn check_assembled_loss(opts: GradCheckOptions) -> Result<GradCheckReport> {
    let env = GridConfig {
        episode_length: 3,
        ..Default::default()
    };
    let cfg = TrainerConfig {
        n_workers: 2,
        rollout_len: 5,
        ..Default::default()
    };
    let aux = AuxConfig {
        beta: 0.5,
        ..Default::default()
    };
    let mut trainer = Trainer::new(env, AgentConfig::tiny(env.observation_dim()), aux, cfg, 14)?;
    // One update first so the rollout starts from a non-zero recurrent state.
    trainer.update()?;
    let buffer = trainer.collect_rollouts()?;
    let (returns, advantages) = compute_returns_and_advantages(
        &buffer.rewards,
        &buffer.values,
        &buffer.dones,
        &buffer.bootstrap_values,
        cfg.gamma,
        cfg.td_horizon,
    );
    let weights = trainer.loss_weights();
    let agent = trainer.agent();
    let mut store = trainer.params().cast::<f64>();
    gradient_check(
        &mut store,
        |s| Ok(assemble_loss(agent, s, &buffer, &returns, &advantages, weights)?.total),
        opts,
    )
}

/// Runs every case plus a sign-flipped negative control.
pub fn run_suite(opts: GradCheckOptions) -> Result<SuiteReport> {
    let mut cases = Vec::new();
    let mut push = |name: &str, expect_pass: bool, report: GradCheckReport| {
        cases.push(CaseResult {
            name: name.to_string(),
            expect_pass,
            report,
        })
    };
    push("dense identity 4x3", true, check_dense(Activation::Identity, false, opts)?);
    push("dense relu 4x3", true, check_dense(Activation::Relu, false, opts)?);
    push("dense tanh 4x3", true, check_dense(Activation::Tanh, false, opts)?);
    push("lstm hidden 8, 5-step unroll", true, check_lstm(8, 5, opts)?);
    push("order classifier", true, check_classifier(opts)?);
    push("assembled loss, tiny agent", true, check_assembled_loss(opts)?);
    push("negative control: flipped dense backward", false, check_dense(Activation::Tanh, true, opts)?);
    Ok(SuiteReport { cases })
}
