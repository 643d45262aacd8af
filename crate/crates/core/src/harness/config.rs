use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::auxloss::AuxConfig;
use crate::env::GridConfig;
use crate::error::{Error, Result};
use crate::trainer::TrainerConfig;

/// Everything needed to reproduce one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: GridConfig,
    pub agent: AgentConfig,
    pub aux: AuxConfig,
    pub trainer: TrainerConfig,
    pub seed: u64,
    pub eval_episodes: usize,
    /// Evaluate with the most likely action instead of sampling.
    pub eval_greedy: bool,
    /// Write a metrics row every this many updates.
    pub log_every: u64,
    /// Record elapsed wall time in `metrics.csv`. Off by default so that
    /// repeated runs produce byte-identical files.
    pub log_wall_time: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: GridConfig::default(),
            agent: AgentConfig::default(),
            aux: AuxConfig::default(),
            trainer: TrainerConfig::default(),
            seed: 0,
            eval_episodes: 1000,
            eval_greedy: false,
            log_every: 50,
            log_wall_time: false,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.agent.validate()?;
        self.aux.validate()?;
        self.trainer.validate()?;
        if self.agent.obs_dim != self.env.observation_dim() {
            return Err(Error::Config(format!(
                "agent.obs_dim {} does not match the {}x{} grid encoding ({})",
                self.agent.obs_dim,
                self.env.width,
                self.env.height,
                self.env.observation_dim()
            )));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be >= 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Pretty JSON with every default spelled out.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    /// The same run with the auxiliary loss weighted to zero.
    pub fn as_baseline(&self) -> Self {
        let mut c = self.clone();
        c.aux.beta = 0.0;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c = RunConfig::from_json(r#"{"seed": 7, "aux": {"beta": 0.0}}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.aux.beta, 0.0);
        assert_eq!(c.aux.k, 10);
        assert_eq!(c.trainer.n_workers, 32);
        assert_eq!(c.trainer.gamma, 0.95);
        assert_eq!(c.env.episode_length, 50);
    }

    #[test]
    fn invalid_inputs_are_config_errors() {
        for text in [
            "not json",
            r#"{"unknown_field": 1}"#,
            r#"{"trainer": {"gamma": 1.5}}"#,
            r#"{"eval_episodes": 0}"#,
            r#"{"env": {"width": 7}}"#,
        ] {
            let err = RunConfig::from_json(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }
}
