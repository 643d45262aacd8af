mod common;

use torl::agent::{Agent, AgentConfig};
use torl::env::GridConfig;
use torl::harness::eval::{evaluate, AgentPolicy, RandomPolicy, SweepSearchPolicy};
use torl::trainer::stream_rng;

#[test]
fn untrained_agent_matches_random_walk() {
    let cfg = GridConfig::default();
    let (oracle_mean, oracle_se) = common::random_walk_return(6, 6, 50, 200_000, 17);
    let mut rng = stream_rng(3, 0);
    let (agent, params) = Agent::new::<f32, _>(AgentConfig::default(), &mut rng).unwrap();
    let mut policy = AgentPolicy::new(&agent, &params, false);
    let eval = evaluate(&mut policy, &cfg, 1000, 7, false).unwrap();
    let se = (eval.stderr.powi(2) + oracle_se.powi(2)).sqrt();
    assert!(
        (eval.mean - oracle_mean).abs() < 2.0 * se,
        "agent {:.3} vs random walk {oracle_mean:.3} (se {se:.3})",
        eval.mean
    );
}

#[test]
fn random_policy_matches_random_walk() {
    let cfg = GridConfig::default();
    let (oracle_mean, oracle_se) = common::random_walk_return(6, 6, 50, 200_000, 18);
    let eval = evaluate(&mut RandomPolicy, &cfg, 4000, 1, false).unwrap();
    let se = (eval.stderr.powi(2) + oracle_se.powi(2)).sqrt();
    assert!((eval.mean - oracle_mean).abs() < 2.0 * se, "{} vs {oracle_mean}", eval.mean);
}

#[test]
fn scripted_searcher_beats_random() {
    let cfg = GridConfig::default();
    let random = evaluate(&mut RandomPolicy, &cfg, 1000, 4, false).unwrap();
    let searcher = evaluate(&mut SweepSearchPolicy::new(&cfg), &cfg, 1000, 4, false).unwrap();
    assert!(searcher.mean > random.mean + 10.0, "{} vs {}", searcher.mean, random.mean);
    assert!(searcher.max <= 50.0);
}

#[test]
fn zero_episodes_is_an_error() {
    let cfg = GridConfig::default();
    assert!(evaluate(&mut RandomPolicy, &cfg, 0, 0, false).is_err());
}
