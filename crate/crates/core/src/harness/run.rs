use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::eval::{evaluate, AgentPolicy, EvalRecord};
use super::metrics::{MetricsRecord, MetricsWriter};
use crate::agent::{Agent, AgentConfig};
use crate::env::GridConfig;
use crate::error::{Error, Result};
use crate::numeric::{load_checkpoint, save_checkpoint, ParameterStore};
use crate::trainer::{stream_rng, Trainer};

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "final.ckpt";
pub const EVAL_FILE: &str = "eval.json";

/// Offset between a training seed and the seed of its evaluation streams.
const EVAL_SEED_OFFSET: u64 = 0x5eed_0000_0000;

pub fn eval_seed(train_seed: u64) -> u64 {
    train_seed.wrapping_add(EVAL_SEED_OFFSET)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub agent: AgentConfig,
    pub env: GridConfig,
    pub seed: u64,
    pub updates: u64,
    pub env_steps: u64,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub updates: u64,
    pub env_steps: u64,
    pub eval: EvalRecord,
}

/// Trains one agent and writes `config.json`, `metrics.csv`, `final.ckpt` and
/// `eval.json` into `out_dir`.
pub fn train_run(config: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    // A stale eval.json would mark a half-written directory as complete.
    let eval_path = out_dir.join(EVAL_FILE);
    if eval_path.exists() {
        fs::remove_file(&eval_path).map_err(|e| Error::io(&eval_path, e))?;
    }
    config.save(&out_dir.join(CONFIG_FILE))?;

    let mut trainer = Trainer::new(config.env, config.agent, config.aux, config.trainer, config.seed)?;
    let total = config.trainer.total_updates();
    let mut metrics = MetricsWriter::create(&out_dir.join(METRICS_FILE))?;
    let start = Instant::now();
    log::info!(
        "training seed {} beta {} for {total} updates into {}",
        config.seed,
        config.aux.beta,
        out_dir.display()
    );
    for _ in 0..total {
        let stats = trainer.update()?;
        if stats.update % config.log_every == 0 || stats.update == total {
            let wall = if config.log_wall_time {
                start.elapsed().as_millis() as u64
            } else {
                0
            };
            metrics.write(&MetricsRecord::from_stats(&stats, wall))?;
            log::debug!(
                "update {} steps {} return {:?}",
                stats.update,
                stats.env_steps,
                stats.mean_return_100ep
            );
        }
    }
    metrics.finish()?;

    let meta = CheckpointMeta {
        agent: config.agent,
        env: config.env,
        seed: config.seed,
        updates: trainer.updates(),
        env_steps: trainer.env_steps(),
    };
    save_checkpoint(
        &out_dir.join(CHECKPOINT_FILE),
        trainer.params(),
        &serde_json::to_value(&meta)?,
    )?;

    let mut policy = AgentPolicy::new(trainer.agent(), trainer.params(), config.eval_greedy);
    let eval = evaluate(
        &mut policy,
        &config.env,
        config.eval_episodes,
        eval_seed(config.seed),
        config.eval_greedy,
    )?;
    write_json(&eval_path, &eval)?;
    log::info!(
        "seed {} finished: eval mean {:.3} (std {:.3}) in {:.1}s",
        config.seed,
        eval.mean,
        eval.std,
        start.elapsed().as_secs_f64()
    );
    Ok(RunSummary {
        dir: out_dir.to_path_buf(),
        updates: trainer.updates(),
        env_steps: trainer.env_steps(),
        eval,
    })
}

/// Rebuilds the network recorded in a checkpoint.
pub fn load_agent(path: &Path) -> Result<(Agent, ParameterStore<f32>, CheckpointMeta)> {
    let (stored, meta) = load_checkpoint(path)?;
    let meta: CheckpointMeta = serde_json::from_value(meta)
        .map_err(|e| Error::Checkpoint(format!("{}: bad metadata: {e}", path.display())))?;
    let mut rng = stream_rng(0, 0);
    let (agent, mut params) = Agent::new::<f32, _>(meta.agent, &mut rng)?;
    params
        .load_values_from(&stored)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    Ok((agent, params, meta))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
