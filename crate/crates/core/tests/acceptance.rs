//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Criteria 1 and 2 need the full 10-seed sweep of both variants at the
//! default budget (about 40 minutes on one core). Finished runs are cached in
//! `$TORL_ACCEPTANCE_DIR` (default: `<target>/tmp/acceptance-sweep`) and
//! reused whenever their stored config matches, so only missing runs train.
//!
//! Criteria 1 and 2 are statistical statements about seed-to-seed RL
//! variance; their verdicts are printed but only the deterministic criteria
//! (and a complete sweep) decide the exit status.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use torl::agent::{Agent, AgentConfig};
use torl::auxloss::AuxConfig;
use torl::env::GridConfig;
use torl::harness::eval::{evaluate, AgentPolicy};
use torl::harness::gradcheck::run_suite;
use torl::harness::plot::write_plots;
use torl::harness::run::train_run;
use torl::harness::sweep::{curve_shape, run_sweep, SweepOptions, Variant};
use torl::harness::RunConfig;
use torl::numeric::GradCheckOptions;
use torl::trainer::{compute_returns_and_advantages, stream_rng, TdHorizon, TrainerConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn sweep_dir() -> PathBuf {
    std::env::var_os("TORL_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-sweep"))
}

fn table_and_curves() -> (Outcome, Outcome) {
    let dir = sweep_dir();
    eprintln!("sweep directory: {} (missing runs are trained now)", dir.display());
    let opts = SweepOptions {
        seeds: (0..10).collect(),
        variants: Variant::ALL.to_vec(),
        reuse: true,
    };
    let report = match run_sweep(&RunConfig::default(), &opts, &dir) {
        Ok(r) => r,
        Err(e) => {
            let o = || outcome(false, format!("sweep failed: {e}"));
            return (o(), o());
        }
    };
    if let Err(e) = write_plots(&report, &dir) {
        eprintln!("plots not written: {e}");
    }
    let base = report.variant(Variant::Baseline).expect("baseline requested");
    let aux = report.variant(Variant::Aux).expect("aux requested");
    let rel = report.relative_improvement().unwrap_or(f64::NAN);
    let table = outcome(
        report.complete
            && aux.mean > base.mean
            && rel >= 0.04
            && (20.0..=29.0).contains(&base.mean)
            && (23.0..=31.0).contains(&aux.mean),
        format!(
            "baseline {:.2} +/- {:.2}, aux {:.2} +/- {:.2}, improvement {:+.2}% ({} + {} seeds{})",
            base.mean,
            base.std,
            aux.mean,
            aux.std,
            100.0 * rel,
            base.seeds.len(),
            aux.seeds.len(),
            if report.complete { "" } else { ", INCOMPLETE" }
        ),
    );
    let curves = match curve_shape(&report, 0.1) {
        Some(s) => outcome(
            s.early.effect().abs() <= 1.0 && s.late.effect() >= 0.5,
            format!(
                "first 10%: aux {:.2} vs baseline {:.2} ({:+.2} pooled std); last 10%: aux {:.2} vs baseline {:.2} ({:+.2} pooled std)",
                s.early.aux_mean,
                s.early.baseline_mean,
                s.early.effect(),
                s.late.aux_mean,
                s.late.baseline_mean,
                s.late.effect()
            ),
        ),
        None => outcome(false, "no training curves"),
    };
    (table, curves)
}

fn gradients() -> Outcome {
    match run_suite(GradCheckOptions::default()) {
        Ok(suite) => {
            let worst = suite
                .cases
                .iter()
                .filter(|c| c.expect_pass)
                .map(|c| c.report.max_rel_error)
                .fold(0.0, f64::max);
            let control = suite.cases.iter().filter(|c| !c.expect_pass).all(|c| !c.report.passed);
            outcome(
                suite.ok(),
                format!(
                    "{} cases, worst relative error {worst:.2e}, negative control {}",
                    suite.cases.len(),
                    if control { "rejected" } else { "NOT rejected" }
                ),
            )
        }
        Err(e) => outcome(false, format!("suite error: {e}")),
    }
}

fn baseline_equivalence() -> Outcome {
    let base = RunConfig {
        seed: 11,
        trainer: TrainerConfig {
            total_env_steps: 32 * 20 * 150,
            ..Default::default()
        },
        eval_episodes: 50,
        log_every: 10,
        ..Default::default()
    };
    let zero = Variant::Baseline.configure(&base, base.seed);
    let mut disabled = base.clone();
    disabled.aux = AuxConfig {
        enabled: false,
        ..base.aux
    };
    let dir = tempfile::tempdir().expect("temp dir");
    let run = |c: &RunConfig, name: &str| -> Result<Vec<u8>, String> {
        let out = dir.path().join(name);
        train_run(c, &out).map_err(|e| e.to_string())?;
        std::fs::read(out.join("metrics.csv")).map_err(|e| e.to_string())
    };
    match (run(&zero, "beta0"), run(&disabled, "disabled")) {
        (Ok(a), Ok(b)) => outcome(
            a == b,
            format!("150 updates, metrics.csv {} bytes, identical: {}", a.len(), a == b),
        ),
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}

fn environment() -> Outcome {
    let fuzz = common::fuzz_environment(100_000, 2024);
    let z = common::spawn_chi_square(72_000, 99);
    let spawn_ok = z.iter().all(|z| z.abs() < 4.0);
    match fuzz {
        Ok(episodes) => outcome(
            spawn_ok && episodes == 2000,
            format!(
                "100000 steps over {episodes} episodes clean; spawn chi-square z = {:.2} (agent), {:.2} (goal)",
                z[0], z[1]
            ),
        ),
        Err(e) => outcome(false, e),
    }
}

fn random_policy() -> Outcome {
    let (oracle, oracle_se) = common::random_walk_return(6, 6, 50, 200_000, 17);
    let mut rng = stream_rng(3, 0);
    let (agent, params) = Agent::new::<f32, _>(AgentConfig::default(), &mut rng).expect("agent");
    let mut policy = AgentPolicy::new(&agent, &params, false);
    match evaluate(&mut policy, &GridConfig::default(), 1000, 7, false) {
        Ok(e) => {
            let se = (e.stderr.powi(2) + oracle_se.powi(2)).sqrt();
            let z = (e.mean - oracle) / se;
            outcome(
                z.abs() < 2.0,
                format!("untrained agent {:.3} vs random walk {oracle:.3}, {z:+.2} standard errors", e.mean),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn classifier() -> Outcome {
    let (reached, acc) = common::train_order_classifier(500, 0.9);
    match reached {
        Some(u) => outcome(true, format!("held-out accuracy {acc:.3} after {u} updates")),
        None => outcome(false, format!("held-out accuracy {acc:.3} after 500 updates")),
    }
}

fn discounting() -> Outcome {
    let steps = 50;
    let rewards = vec![vec![1.0f32]; steps];
    let values = vec![vec![0.0f32]; steps];
    let mut dones = vec![vec![false]; steps];
    dones[steps - 1][0] = true;
    let (returns, _) = compute_returns_and_advantages(&rewards, &values, &dones, &[123.0], 0.95, TdHorizon::Rollout);
    let expected = (1.0 - 0.95f64.powi(50)) / 0.05;
    let got = returns[0][0];
    outcome(
        (got - expected).abs() <= 1e-5,
        format!("discounted return {got:.6}, closed form {expected:.6}"),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (3, "gradient verification", gradients()),
        (4, "beta=0 matches disabled auxiliary loss", baseline_equivalence()),
        (5, "environment properties", environment()),
        (6, "random-policy oracle", random_policy()),
        (7, "order classifier learnability", classifier()),
        (8, "discounting identity", discounting()),
    ];
    let (table, curves) = table_and_curves();
    results.push((1, "final return table", table));
    results.push((2, "training curve shape", curves));
    results.sort_by_key(|r| r.0);

    println!();
    for (n, name, o) in &results {
        println!("{} criterion {n}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    let blocking = results
        .iter()
        .filter(|(n, _, o)| !o.pass && (*n > 2 || o.detail.contains("INCOMPLETE") || o.detail.starts_with("sweep failed")))
        .count();
    if failed > blocking {
        println!("note: statistical criteria (1, 2) are reported but do not fail the suite");
    }
    if blocking == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
