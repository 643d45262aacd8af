//! Recurrent actor-critic network.
//!
//! A fully connected trunk embeds each observation, an LSTM summarizes the
//! embedded history, and three heads read the LSTM output: the policy
//! logits, the state value, and the temporal-order classifier. The
//! classifier scores `concat(h_t, trunk(o_i), trunk(o_j))`; the pair
//! embeddings reuse the trunk parameters of the acting path.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, Observation};
use crate::error::{Error, Result};
use crate::numeric::{
    check_finite, log_softmax_rows, Activation, Dense, DenseCache, Lstm, LstmCache, LstmState,
    ParameterStore, Scalar,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub obs_dim: usize,
    pub trunk_width: usize,
    pub trunk_layers: usize,
    pub lstm_hidden: usize,
    pub n_actions: usize,
    pub classifier_hidden: usize,
    /// Treat pair embeddings as constants in the auxiliary loss.
    pub stop_pair_gradient: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            obs_dim: 13,
            trunk_width: 64,
            trunk_layers: 2,
            lstm_hidden: 64,
            n_actions: Action::COUNT,
            classifier_hidden: 64,
            stop_pair_gradient: false,
        }
    }
}

impl AgentConfig {
    /// Small network used by gradient checks.
    pub fn tiny(obs_dim: usize) -> Self {
        Self {
            obs_dim,
            trunk_width: 8,
            trunk_layers: 2,
            lstm_hidden: 8,
            n_actions: Action::COUNT,
            classifier_hidden: 8,
            stop_pair_gradient: false,
        }
    }

    pub fn classifier_input(&self) -> usize {
        self.lstm_hidden + 2 * self.trunk_width
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.obs_dim,
            self.trunk_width,
            self.trunk_layers,
            self.lstm_hidden,
            self.classifier_hidden,
        ];
        if sizes.contains(&0) {
            return Err(Error::Config("agent layer sizes must be positive".into()));
        }
        if self.n_actions != Action::COUNT {
            return Err(Error::Config(format!(
                "policy head must have {} outputs, got {}",
                Action::COUNT,
                self.n_actions
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    trunk: Vec<Dense>,
    lstm: Lstm,
    policy: Dense,
    value: Dense,
    classifier: [Dense; 2],
}

#[derive(Debug, Clone)]
pub struct AgentOutput<T> {
    pub logits: Array2<T>,
    pub policy: Array2<T>,
    pub log_policy: Array2<T>,
    pub value: Array1<T>,
    pub next_state: LstmState<T>,
}

#[derive(Debug, Clone)]
pub struct TrunkCache<T> {
    layers: Vec<DenseCache<T>>,
}

#[derive(Debug, Clone)]
pub struct StepCache<T> {
    trunk: TrunkCache<T>,
    lstm: LstmCache<T>,
    policy: DenseCache<T>,
    value: DenseCache<T>,
}

#[derive(Debug, Clone)]
pub struct ClassifierCache<T> {
    hidden: DenseCache<T>,
    out: DenseCache<T>,
}

/// Gradients of the classifier inputs.
#[derive(Debug, Clone)]
pub struct ClassifierGrads<T> {
    pub h: Array2<T>,
    pub first: Array2<T>,
    pub second: Array2<T>,
}

/// Cache for the all-in-one [`Agent::classify_order`] route.
#[derive(Debug, Clone)]
pub struct OrderCache<T> {
    first: TrunkCache<T>,
    second: TrunkCache<T>,
    classifier: ClassifierCache<T>,
}

impl Agent {
    /// Builds the network and a freshly initialized parameter store.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        config: AgentConfig,
        rng: &mut R,
    ) -> Result<(Self, ParameterStore<T>)> {
        config.validate()?;
        let mut store = ParameterStore::new();
        let mut trunk = Vec::with_capacity(config.trunk_layers);
        let mut width = config.obs_dim;
        for i in 0..config.trunk_layers {
            trunk.push(Dense::register(
                &mut store,
                &format!("trunk.{i}"),
                width,
                config.trunk_width,
                Activation::Relu,
                rng,
            )?);
            width = config.trunk_width;
        }
        let lstm = Lstm::register(&mut store, "lstm", width, config.lstm_hidden, rng)?;
        let h = config.lstm_hidden;
        let policy = Dense::register(&mut store, "policy", h, config.n_actions, Activation::Identity, rng)?;
        let value = Dense::register(&mut store, "value", h, 1, Activation::Identity, rng)?;
        let classifier = [
            Dense::register(
                &mut store,
                "classifier.0",
                config.classifier_input(),
                config.classifier_hidden,
                Activation::Relu,
                rng,
            )?,
            Dense::register(
                &mut store,
                "classifier.1",
                config.classifier_hidden,
                1,
                Activation::Identity,
                rng,
            )?,
        ];
        Ok((
            Self {
                config,
                trunk,
                lstm,
                policy,
                value,
                classifier,
            },
            store,
        ))
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn hidden_size(&self) -> usize {
        self.config.lstm_hidden
    }

    pub fn trunk_layers(&self) -> &[Dense] {
        &self.trunk
    }

    pub fn initial_state<T: Scalar>(&self, batch: usize) -> LstmState<T> {
        LstmState::zeros(batch, self.config.lstm_hidden)
    }

    pub fn embed<T: Scalar>(
        &self,
        params: &ParameterStore<T>,
        obs: ArrayView2<T>,
    ) -> Result<(Array2<T>, TrunkCache<T>)> {
        let mut layers = Vec::with_capacity(self.trunk.len());
        let mut x = obs.to_owned();
        for layer in &self.trunk {
            let (y, cache) = layer.forward(params, x.view())?;
            layers.push(cache);
            x = y;
        }
        Ok((x, TrunkCache { layers }))
    }

    /// Backpropagates into the trunk parameters only.
    pub fn embed_backward<T: Scalar>(
        &self,
        params: &mut ParameterStore<T>,
        cache: &TrunkCache<T>,
        grad: Array2<T>,
    ) {
        let mut g = grad;
        for (i, (layer, c)) in self.trunk.iter().zip(&cache.layers).enumerate().rev() {
            match layer.backward(params, c, g.view(), i > 0) {
                Some(next) => g = next,
                None => break,
            }
        }
    }

    /// One recurrent step over a batch of observations.
    pub fn step<T: Scalar>(
        &self,
        params: &ParameterStore<T>,
        obs: ArrayView2<T>,
        state: &LstmState<T>,
    ) -> Result<(AgentOutput<T>, StepCache<T>)> {
        if obs.ncols() != self.config.obs_dim {
            return Err(Error::shape(
                "observation",
                &[obs.nrows(), self.config.obs_dim],
                obs.shape(),
            ));
        }
        let (e, trunk) = self.embed(params, obs)?;
        let (next_state, lstm) = self.lstm.forward(params, e.view(), state)?;
        let (logits, policy_cache) = self.policy.forward(params, next_state.h.view())?;
        let (value, value_cache) = self.value.forward(params, next_state.h.view())?;
        check_finite(&logits, "policy logits")?;
        check_finite(&value, "value head")?;
        let log_policy = log_softmax_rows(logits.view());
        let policy = log_policy.mapv(|v| v.exp());
        Ok((
            AgentOutput {
                logits,
                policy,
                log_policy,
                value: value.column(0).to_owned(),
                next_state,
            },
            StepCache {
                trunk,
                lstm,
                policy: policy_cache,
                value: value_cache,
            },
        ))
    }

    /// Backward through one step. `grad_h`/`grad_c` carry the gradient
    /// reaching this step's recurrent output from later steps and from the
    /// auxiliary classifier. Returns the gradient for the previous state.
    pub fn step_backward<T: Scalar>(
        &self,
        params: &mut ParameterStore<T>,
        cache: &StepCache<T>,
        grad_logits: ArrayView2<T>,
        grad_value: ArrayView2<T>,
        mut grad_h: Array2<T>,
        grad_c: ArrayView2<T>,
    ) -> LstmState<T> {
        grad_h += &self
            .policy
            .backward(params, &cache.policy, grad_logits, true)
            .expect("input grad requested");
        grad_h += &self
            .value
            .backward(params, &cache.value, grad_value, true)
            .expect("input grad requested");
        let (d_embed, d_prev) = self.lstm.backward(params, &cache.lstm, grad_h.view(), grad_c);
        self.embed_backward(params, &cache.trunk, d_embed);
        d_prev
    }

    /// Order logits from hidden states and already-embedded observations.
    pub fn classify_embedded<T: Scalar>(
        &self,
        params: &ParameterStore<T>,
        h: ArrayView2<T>,
        first: ArrayView2<T>,
        second: ArrayView2<T>,
    ) -> Result<(Array1<T>, ClassifierCache<T>)> {
        if h.nrows() != first.nrows() || h.nrows() != second.nrows() {
            return Err(Error::shape("classifier rows", &[h.nrows()], &[first.nrows(), second.nrows()]));
        }
        let x = concatenate(Axis(1), &[h, first, second])
            .map_err(|_| Error::shape("classifier input", &[self.config.classifier_input()], &[h.ncols() + first.ncols() + second.ncols()]))?;
        let (z, hidden) = self.classifier[0].forward(params, x.view())?;
        let (logit, out) = self.classifier[1].forward(params, z.view())?;
        Ok((logit.column(0).to_owned(), ClassifierCache { hidden, out }))
    }

    pub fn classify_embedded_backward<T: Scalar>(
        &self,
        params: &mut ParameterStore<T>,
        cache: &ClassifierCache<T>,
        grad_logits: &Array1<T>,
    ) -> ClassifierGrads<T> {
        let g = grad_logits.view().insert_axis(Axis(1));
        let dz = self.classifier[1]
            .backward(params, &cache.out, g, true)
            .expect("input grad requested");
        let dx = self.classifier[0]
            .backward(params, &cache.hidden, dz.view(), true)
            .expect("input grad requested");
        let hsz = self.config.lstm_hidden;
        let e = self.config.trunk_width;
        ClassifierGrads {
            h: dx.slice(s![.., ..hsz]).to_owned(),
            first: dx.slice(s![.., hsz..hsz + e]).to_owned(),
            second: dx.slice(s![.., hsz + e..]).to_owned(),
        }
    }

    /// Order logit `f(h, o_i, o_j)` for a batch of rows; positive predicts
    /// that `o_i` came first.
    pub fn classify_order<T: Scalar>(
        &self,
        params: &ParameterStore<T>,
        h: ArrayView2<T>,
        obs_first: ArrayView2<T>,
        obs_second: ArrayView2<T>,
    ) -> Result<(Array1<T>, OrderCache<T>)> {
        let (e1, first) = self.embed(params, obs_first)?;
        let (e2, second) = self.embed(params, obs_second)?;
        let (logits, classifier) = self.classify_embedded(params, h, e1.view(), e2.view())?;
        Ok((
            logits,
            OrderCache {
                first,
                second,
                classifier,
            },
        ))
    }

    /// Backward for [`Agent::classify_order`]; returns the gradient with
    /// respect to `h`.
    pub fn classify_order_backward<T: Scalar>(
        &self,
        params: &mut ParameterStore<T>,
        cache: &OrderCache<T>,
        grad_logits: &Array1<T>,
    ) -> Array2<T> {
        let g = self.classify_embedded_backward(params, &cache.classifier, grad_logits);
        if !self.config.stop_pair_gradient {
            self.embed_backward(params, &cache.first, g.first);
            self.embed_backward(params, &cache.second, g.second);
        }
        g.h
    }
}

/// Stacks observations into a `[n, obs_dim]` array.
pub fn observation_batch<'a, T: Scalar>(
    observations: impl IntoIterator<Item = &'a Observation>,
    obs_dim: usize,
) -> Array2<T> {
    let mut data = Vec::new();
    let mut rows = 0;
    for o in observations {
        debug_assert_eq!(o.len(), obs_dim);
        data.extend(o.values().iter().map(|&v| T::of(v as f64)));
        rows += 1;
    }
    Array2::from_shape_vec((rows, obs_dim), data).expect("observation width")
}

/// Samples an action from `policy`; returns it with its log-probability.
pub fn sample_action<R: Rng + ?Sized>(policy: &[f32], log_policy: &[f32], rng: &mut R) -> (Action, f32) {
    let idx = match WeightedIndex::new(policy) {
        Ok(dist) => dist.sample(rng),
        // All-zero or invalid weights: fall back to the most likely entry.
        Err(_) => argmax(log_policy),
    };
    (Action::from_index(idx).expect("policy width"), log_policy[idx])
}

pub fn argmax(values: &[f32]) -> usize {
    values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}
