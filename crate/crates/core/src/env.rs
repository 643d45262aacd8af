//! Partially observable goal-search gridworld.
//!
//! The agent and a static goal are spawned on random cells. Each step the
//! agent moves one cell in a cardinal direction or stays put; moves into a
//! wall are no-ops. The agent sees only its own coordinates (one-hot per
//! axis) and whether its current cell holds the goal, and collects
//! `reward_on_goal` on every step that ends on the goal.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub episode_length: usize,
    pub reward_on_goal: f32,
    pub allow_overlap_spawn: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            width: 6,
            height: 6,
            episode_length: 50,
            reward_on_goal: 1.0,
            allow_overlap_spawn: false,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::Config(format!(
                "grid must be at least 2x2, got {}x{}",
                self.width, self.height
            )));
        }
        if self.episode_length < 1 {
            return Err(Error::Config("episode_length must be >= 1".into()));
        }
        if !self.reward_on_goal.is_finite() {
            return Err(Error::Config("reward_on_goal must be finite".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    /// Length of the encoded observation vector.
    pub fn observation_dim(&self) -> usize {
        self.width + self.height + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Position {
    pub x: usize,
    pub y: usize,
}

impl Position {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EnvState {
    pub agent_pos: Position,
    pub goal_pos: Position,
    pub t: usize,
}

impl EnvState {
    pub fn on_goal(&self) -> bool {
        self.agent_pos == self.goal_pos
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    North,
    South,
    East,
    West,
    Stay,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; Action::COUNT] = [
        Action::North,
        Action::South,
        Action::East,
        Action::West,
        Action::Stay,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Self::ALL.get(index).copied()
    }

    /// Displacement as (dx, dy); North is +y.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::North => (0, 1),
            Action::South => (0, -1),
            Action::East => (1, 0),
            Action::West => (-1, 0),
            Action::Stay => (0, 0),
        }
    }
}

/// One-hot x, one-hot y, then the on-goal bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    values: Vec<f32>,
}

impl Observation {
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn on_goal(&self) -> bool {
        self.values.last().is_some_and(|&v| v > 0.5)
    }

    /// Bit pattern usable as a hash key; equal observations share a key.
    pub fn key(&self) -> Vec<u32> {
        self.values.iter().map(|v| v.to_bits()).collect()
    }

    /// Decodes the agent position, assuming `width` x-slots come first.
    pub fn position(&self, width: usize) -> Option<Position> {
        let x = self.values[..width].iter().position(|&v| v > 0.5)?;
        let y = self.values[width..self.values.len() - 1]
            .iter()
            .position(|&v| v > 0.5)?;
        Some(Position::new(x, y))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f32,
    pub done: bool,
    pub t: usize,
}

/// Draws a fresh episode start from `rng`.
pub fn reset_with<R: Rng + ?Sized>(config: &GridConfig, rng: &mut R) -> (EnvState, Observation) {
    let cells = config.cells();
    let agent = rng.random_range(0..cells);
    let mut goal = rng.random_range(0..cells);
    while !config.allow_overlap_spawn && goal == agent {
        goal = rng.random_range(0..cells);
    }
    let to_pos = |i: usize| Position::new(i % config.width, i / config.width);
    let state = EnvState {
        agent_pos: to_pos(agent),
        goal_pos: to_pos(goal),
        t: 0,
    };
    let obs = encode(&state, config);
    (state, obs)
}

pub fn reset(config: &GridConfig, seed: u64) -> (EnvState, Observation) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    reset_with(config, &mut rng)
}

pub fn step(state: &EnvState, action: Action, config: &GridConfig) -> Result<(EnvState, StepResult)> {
    if state.t >= config.episode_length {
        return Err(Error::EpisodeExhausted {
            t: state.t,
            episode_length: config.episode_length,
        });
    }
    let (dx, dy) = action.delta();
    let clamp = |v: usize, d: isize, n: usize| -> usize {
        let moved = v as isize + d;
        if moved < 0 || moved >= n as isize {
            v
        } else {
            moved as usize
        }
    };
    let next = EnvState {
        agent_pos: Position::new(
            clamp(state.agent_pos.x, dx, config.width),
            clamp(state.agent_pos.y, dy, config.height),
        ),
        goal_pos: state.goal_pos,
        t: state.t + 1,
    };
    let reward = if next.on_goal() {
        config.reward_on_goal
    } else {
        0.0
    };
    let result = StepResult {
        observation: encode(&next, config),
        reward,
        done: next.t == config.episode_length,
        t: next.t,
    };
    Ok((next, result))
}

pub fn encode(state: &EnvState, config: &GridConfig) -> Observation {
    let mut values = vec![0.0; config.observation_dim()];
    values[state.agent_pos.x] = 1.0;
    values[config.width + state.agent_pos.y] = 1.0;
    if state.on_goal() {
        values[config.width + config.height] = 1.0;
    }
    Observation { values }
}

/// A single environment instance with its own episode state.
#[derive(Debug, Clone)]
pub struct GridEnv {
    config: GridConfig,
    state: EnvState,
}

impl GridEnv {
    pub fn new<R: Rng + ?Sized>(config: GridConfig, rng: &mut R) -> (Self, Observation) {
        let (state, obs) = reset_with(&config, rng);
        (Self { config, state }, obs)
    }

    pub fn from_state(config: GridConfig, state: EnvState) -> Self {
        Self { config, state }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Observation {
        let (state, obs) = reset_with(&self.config, rng);
        self.state = state;
        obs
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        let (next, result) = step(&self.state, action, &self.config)?;
        self.state = next;
        Ok(result)
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn observation(&self) -> Observation {
        encode(&self.state, &self.config)
    }
}

/// ASCII rendering with the top row printed first (north up).
pub struct Render<'a> {
    pub state: &'a EnvState,
    pub config: &'a GridConfig,
}

impl fmt::Display for Render<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for y in (0..self.config.height).rev() {
            for x in 0..self.config.width {
                let p = Position::new(x, y);
                let c = if p == self.state.agent_pos {
                    'A'
                } else if p == self.state.goal_pos {
                    'G'
                } else {
                    '.'
                };
                write!(f, "{c}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
