use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;

use torl::env::{Action, GridEnv, Render};
use torl::harness::eval::{evaluate, AgentPolicy};
use torl::harness::gradcheck::run_suite;
use torl::harness::plot::write_plots;
use torl::harness::run::{eval_seed, load_agent, train_run};
use torl::harness::sweep::{collect_report, curve_shape, discover_seeds, run_sweep, SweepOptions, SweepReport, Variant, REPORT_FILE};
use torl::harness::RunConfig;
use torl::numeric::GradCheckOptions;
use torl::trainer::stream_rng;
use torl::{Error, Result};

#[derive(Parser)]
#[command(name = "torl", version, about = "Recurrent A2C with a temporal-order auxiliary loss on a POMDP gridworld")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the auxiliary loss weight.
    #[arg(long)]
    beta: Option<f32>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(b) = self.beta {
            c.aux.beta = b;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and evaluate it.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory (defaults to the config's output_dir, then runs/seed_<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Train the baseline or the auxiliary-loss variant.
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Evaluate a checkpoint on fresh episodes.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        /// Evaluation seed (defaults to the one derived from the training seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Take the most likely action instead of sampling.
        #[arg(long)]
        greedy: bool,
    },
    /// Train both variants over several seeds and write the summary table.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Seeds as a list and/or ranges, e.g. `0-9` or `0,3,5`.
        #[arg(long, default_value = "0-9")]
        seeds: String,
        /// Restrict to one variant.
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
        /// Retrain runs even if a finished run with the same config exists.
        #[arg(long)]
        force: bool,
    },
    /// Rebuild the sweep report from run directories.
    Report {
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Write curves.csv and curves.svg from a sweep report.
    Plot {
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Print the grid, optionally after some random steps.
    Gridshow {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        steps: usize,
    },
    /// Run the finite-difference gradient verification suite.
    Gradcheck,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("invalid seed list {text:?}"));
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn print_report(report: &SweepReport) {
    println!("{:<34} {:>8} {:>8} {:>6}", "model", "mean", "std", "seeds");
    for v in &report.variants {
        println!("{:<34} {:>8.3} {:>8.3} {:>6}", v.label, v.mean, v.std, v.seeds.len());
    }
    if let Some(r) = report.relative_improvement() {
        println!("relative improvement: {:+.2}%", 100.0 * r);
    }
    if let Some(shape) = curve_shape(report, 0.1) {
        println!(
            "first 10% of updates: {:+.3} pooled std; last 10%: {:+.3} pooled std",
            shape.early.effect(),
            shape.late.effect()
        );
    }
    for f in &report.failures {
        println!("missing {} seed {}: {}", f.variant, f.seed, f.error);
    }
    if !report.complete {
        println!("report is INCOMPLETE");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            variant,
        } => {
            let mut c = config.load()?;
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(v) = variant {
                c = v.configure(&c, c.seed);
            }
            let dir = out
                .or_else(|| c.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from(format!("runs/seed_{}", c.seed)));
            let s = train_run(&c, &dir)?;
            println!(
                "{}: {} updates, {} env steps, eval mean {:.3} std {:.3} over {} episodes",
                s.dir.display(),
                s.updates,
                s.env_steps,
                s.eval.mean,
                s.eval.std,
                s.eval.episodes
            );
        }
        Command::Eval {
            checkpoint,
            episodes,
            seed,
            greedy,
        } => {
            let (agent, params, meta) = load_agent(&checkpoint)?;
            let mut policy = AgentPolicy::new(&agent, &params, greedy);
            let seed = seed.unwrap_or_else(|| eval_seed(meta.seed));
            let record = evaluate(&mut policy, &meta.env, episodes, seed, greedy)?;
            println!("{}", serde_json::to_string_pretty(&record)?);
        }
        Command::Sweep {
            config,
            seeds,
            variant,
            out,
            force,
        } => {
            let c = config.load()?;
            let opts = SweepOptions {
                seeds: parse_seeds(&seeds)?,
                variants: variant.map_or(Variant::ALL.to_vec(), |v| vec![v]),
                reuse: !force,
            };
            let report = run_sweep(&c, &opts, &out)?;
            write_plots(&report, &out)?;
            print_report(&report);
        }
        Command::Report { out } => {
            let seeds = discover_seeds(&out)?;
            if seeds.is_empty() {
                return Err(Error::Config(format!("no runs found under {}", out.display())));
            }
            let report = collect_report(&out, &seeds, &Variant::ALL)?;
            report.write(&out)?;
            print_report(&report);
        }
        Command::Plot { out } => {
            let (path, dir) = if out.is_dir() {
                (out.join(REPORT_FILE), out.clone())
            } else {
                (out.clone(), out.parent().map_or_else(PathBuf::new, Path::to_path_buf))
            };
            let report = SweepReport::load(&path)?;
            write_plots(&report, &dir)?;
            println!("wrote curves.csv and curves.svg to {}", dir.display());
        }
        Command::Gridshow { config, seed, steps } => {
            let c = config.load()?;
            let mut rng = stream_rng(seed, 0);
            let (mut env, _) = GridEnv::new(c.env, &mut rng);
            println!("t={}\n{}", env.state().t, Render { state: env.state(), config: env.config() });
            for _ in 0..steps.min(c.env.episode_length) {
                let a = Action::ALL[rng.random_range(0..Action::COUNT)];
                let r = env.step(a)?;
                println!("{a:?} reward {}\nt={}\n{}", r.reward, r.t, Render { state: env.state(), config: env.config() });
            }
        }
        Command::Gradcheck => {
            let suite = run_suite(GradCheckOptions::default())?;
            for c in &suite.cases {
                println!(
                    "{} {:<44} max rel error {:.3e}{}",
                    if c.ok() { "ok  " } else { "FAIL" },
                    c.name,
                    c.report.max_rel_error,
                    if c.expect_pass { "" } else { " (expected to fail)" }
                );
            }
            if !suite.ok() {
                return Err(Error::GradientCheck("analytic and numeric gradients disagree".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
