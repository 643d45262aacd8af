//! Reference implementations shared by the integration tests. Nothing here
//! calls into the crate's environment, so the oracles stay independent.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Monte Carlo estimate of the undiscounted return of a uniformly random
/// policy on a `width` x `height` grid: agent and goal spawn on distinct
/// uniform cells, moves into walls leave the agent in place, and every step
/// that ends on the goal pays 1.
pub fn random_walk_return(width: i64, height: i64, steps: usize, episodes: usize, seed: u64) -> (f64, f64) {
    let mut rng = StdRng::seed_from_u64(seed);
    let cells = width * height;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..episodes {
        let a = rng.random_range(0..cells);
        let g = loop {
            let g = rng.random_range(0..cells);
            if g != a {
                break g;
            }
        };
        let (mut x, mut y) = (a % width, a / width);
        let (gx, gy) = (g % width, g / width);
        let mut ret = 0.0;
        for _ in 0..steps {
            let (dx, dy) = [(0, 1), (0, -1), (1, 0), (-1, 0), (0, 0)][rng.random_range(0..5)];
            if (0..width).contains(&(x + dx)) {
                x += dx;
            }
            if (0..height).contains(&(y + dy)) {
                y += dy;
            }
            if x == gx && y == gy {
                ret += 1.0;
            }
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    let n = episodes as f64;
    let mean = sum / n;
    let var = (sum_sq - n * mean * mean) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Steps a random policy through `steps` transitions and checks every rule
/// of the environment, returning the first violation.
pub fn fuzz_environment(steps: usize, seed: u64) -> Result<usize, String> {
    use rand_chacha::ChaCha8Rng;
    use torl::env::{Action, GridConfig, GridEnv};

    let cfg = GridConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut env, _) = GridEnv::new(cfg, &mut rng);
    let mut episode_steps = 0;
    let mut episodes = 0;
    for i in 0..steps {
        let before = *env.state();
        let action = Action::ALL[rng.random_range(0..Action::COUNT)];
        let r = env.step(action).map_err(|e| format!("step {i}: {e}"))?;
        let s = *env.state();
        episode_steps += 1;
        let fail = |what: &str| Err(format!("step {i}: {what} ({before:?} -> {s:?})"));
        if s.agent_pos.x >= cfg.width || s.agent_pos.y >= cfg.height {
            return fail("agent out of bounds");
        }
        if s.goal_pos != before.goal_pos {
            return fail("goal moved");
        }
        if s.agent_pos.x.abs_diff(before.agent_pos.x) + s.agent_pos.y.abs_diff(before.agent_pos.y) > 1 {
            return fail("agent jumped");
        }
        if r.reward != 0.0 && r.reward != 1.0 {
            return fail("reward outside {0, 1}");
        }
        if (r.reward == 1.0) != (s.agent_pos == s.goal_pos) {
            return fail("reward does not match goal occupancy");
        }
        if r.observation.on_goal() != (s.agent_pos == s.goal_pos) {
            return fail("on-goal bit wrong");
        }
        if r.observation.position(cfg.width) != Some(s.agent_pos) {
            return fail("observation does not encode the position");
        }
        if r.done != (episode_steps == cfg.episode_length) {
            return fail("episode did not end after exactly 50 steps");
        }
        if r.done {
            if env.step(Action::Stay).is_ok() {
                return fail("finished episode accepted another step");
            }
            env.reset(&mut rng);
            episode_steps = 0;
            episodes += 1;
        }
    }
    Ok(episodes)
}

/// Chi-square z-scores of the spawn distribution: agent cell over all cells,
/// and goal offset from the agent over the remaining cells.
pub fn spawn_chi_square(samples: usize, seed: u64) -> [f64; 2] {
    use rand_chacha::ChaCha8Rng;
    use torl::env::{reset_with, GridConfig};

    let cfg = GridConfig::default();
    let cells = cfg.cells();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = vec![0usize; cells];
    let mut offset = vec![0usize; cells - 1];
    for _ in 0..samples {
        let (s, _) = reset_with(&cfg, &mut rng);
        let a = s.agent_pos.y * cfg.width + s.agent_pos.x;
        let g = s.goal_pos.y * cfg.width + s.goal_pos.x;
        assert_ne!(a, g, "agent spawned on the goal");
        agent[a] += 1;
        offset[(g + cells - a) % cells - 1] += 1;
    }
    [&agent, &offset].map(|counts| {
        let k = counts.len() as f64;
        let expected = samples as f64 / k;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let dof = k - 1.0;
        (chi2 - dof) / (2.0 * dof).sqrt()
    })
}

/// Trains only the order classifier (and the trunk feeding it) on pairs from
/// straight eastward and northward walks, with a zero recurrent state.
/// Returns the first checkpoint (every 25 updates) at which accuracy on
/// walks along held-out rows and columns exceeds `target`, and the final
/// held-out accuracy.
pub fn train_order_classifier(max_updates: usize, target: f64) -> (Option<usize>, f64) {
    use ndarray::{Array1, Array2};
    use torl::agent::{observation_batch, Agent, AgentConfig};
    use torl::env::{encode, EnvState, GridConfig, Observation, Position};
    use torl::numeric::{logistic_loss, logistic_loss_grad, ParameterStore};
    use torl::trainer::{stream_rng, RmsProp};

    let cfg = GridConfig::default();
    let config = AgentConfig::default();
    let walks = |rows: &[usize], cols: &[usize]| -> Vec<Vec<Observation>> {
        // The goal sits off the grid so the on-goal bit stays clear.
        let obs = |x, y| {
            encode(
                &EnvState {
                    agent_pos: Position::new(x, y),
                    goal_pos: Position::new(usize::MAX, usize::MAX),
                    t: 0,
                },
                &cfg,
            )
        };
        let mut out: Vec<Vec<Observation>> = rows.iter().map(|&y| (0..cfg.width).map(|x| obs(x, y)).collect()).collect();
        out.extend(cols.iter().map(|&x| (0..cfg.height).map(|y| obs(x, y)).collect()));
        out
    };
    let pairs = |walks: &[Vec<Observation>]| {
        let (mut a, mut b, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for w in walks {
            for i in 0..w.len() {
                for j in i + 1..w.len() {
                    a.extend([w[i].clone(), w[j].clone()]);
                    b.extend([w[j].clone(), w[i].clone()]);
                    y.extend([1.0f32, -1.0]);
                }
            }
        }
        let a: Array2<f32> = observation_batch(&a, config.obs_dim);
        let b: Array2<f32> = observation_batch(&b, config.obs_dim);
        let h = Array2::<f32>::zeros((y.len(), config.lstm_hidden));
        (a, b, h, y)
    };
    let train = pairs(&walks(&[0, 1, 3, 5], &[0, 2, 4, 5]));
    let test = pairs(&walks(&[2, 4], &[1, 3]));

    let mut rng = stream_rng(21, 0);
    let (agent, mut params) = Agent::new::<f32, _>(config, &mut rng).unwrap();
    let mut opt = RmsProp::new(&params, 1e-3, 0.99, 1e-5, 0.0);
    let accuracy = |params: &ParameterStore<f32>| {
        let (z, _) = agent.classify_order(params, test.2.view(), test.0.view(), test.1.view()).unwrap();
        z.iter().zip(&test.3).filter(|(&z, &y)| z * y > 0.0).count() as f64 / test.3.len() as f64
    };
    let n = train.3.len() as f32;
    for update in 1..=max_updates {
        params.zero_grad();
        let (z, cache) = agent.classify_order(&params, train.2.view(), train.0.view(), train.1.view()).unwrap();
        let g: Array1<f32> = z.iter().zip(&train.3).map(|(&z, &y)| logistic_loss_grad(z, y) / n).collect();
        let loss: f32 = z.iter().zip(&train.3).map(|(&z, &y)| logistic_loss(z, y)).sum::<f32>() / n;
        assert!(loss.is_finite());
        agent.classify_order_backward(&mut params, &cache, &g);
        opt.step(&mut params).unwrap();
        if update % 25 == 0 {
            let acc = accuracy(&params);
            if acc > target {
                return (Some(update), acc);
            }
        }
    }
    (None, accuracy(&params))
}
