//! Multi-seed sweeps over the baseline and auxiliary-loss variants.
//!
//! Runs live in `<out>/<variant>/seed_<s>`. A run counts as complete once its
//! `eval.json` exists; the report is rebuilt from completed directories only.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::eval::{mean_and_std, EvalRecord};
use super::metrics::read_metrics;
use super::run::{read_json, train_run, write_json, CONFIG_FILE, EVAL_FILE, METRICS_FILE};
use crate::error::{Error, Result};

pub const REPORT_FILE: &str = "sweep_report.json";
pub const TABLE_FILE: &str = "table1.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    Aux,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Baseline, Variant::Aux];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Aux => "aux",
        }
    }

    /// Row label in `table1.csv`.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Baseline => "Baseline",
            Variant::Aux => "State Order Auxiliary Loss Agent",
        }
    }

    /// The run configuration of this variant for one seed.
    pub fn configure(self, base: &RunConfig, seed: u64) -> RunConfig {
        let mut c = match self {
            Variant::Baseline => base.as_baseline(),
            Variant::Aux => base.clone(),
        };
        c.seed = seed;
        c.output_dir = None;
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "aux" => Ok(Variant::Aux),
            _ => Err(Error::Config(format!("unknown variant {s:?} (expected baseline or aux)"))),
        }
    }
}

pub fn run_dir(out: &Path, variant: Variant, seed: u64) -> PathBuf {
    out.join(variant.name()).join(format!("seed_{seed}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub update: u64,
    pub env_steps: u64,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Mean undiscounted return of the final evaluation.
    pub final_return: f64,
    pub eval: EvalRecord,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub label: String,
    pub seeds: Vec<SeedResult>,
    pub mean: f64,
    /// Sample standard deviation across seeds.
    pub std: f64,
}

impl VariantSummary {
    fn from_seeds(variant: Variant, seeds: Vec<SeedResult>) -> Self {
        let finals: Vec<f64> = seeds.iter().map(|s| s.final_return).collect();
        let (mean, std) = mean_and_std(&finals);
        Self {
            variant,
            label: variant.label().to_string(),
            seeds,
            mean,
            std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub variant: Variant,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub requested_seeds: Vec<u64>,
    pub variants: Vec<VariantSummary>,
    pub failures: Vec<RunFailure>,
    /// False when any requested run is missing or failed.
    pub complete: bool,
}

impl SweepReport {
    pub fn variant(&self, v: Variant) -> Option<&VariantSummary> {
        self.variants.iter().find(|s| s.variant == v)
    }

    /// Relative improvement of the aux mean over the baseline mean.
    pub fn relative_improvement(&self) -> Option<f64> {
        let b = self.variant(Variant::Baseline)?;
        let a = self.variant(Variant::Aux)?;
        Some((a.mean - b.mean) / b.mean)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Writes `sweep_report.json` and `table1.csv` into `out`.
    pub fn write(&self, out: &Path) -> Result<()> {
        write_json(&out.join(REPORT_FILE), self)?;
        let path = out.join(TABLE_FILE);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["model", "mean", "std"])?;
        for v in &self.variants {
            w.write_record([v.label.clone(), format!("{:.4}", v.mean), format!("{:.4}", v.std)])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    /// Keep runs whose directory already holds a finished run of the same
    /// configuration.
    pub reuse: bool,
}

/// True when `dir` holds a finished run of exactly `config`.
pub fn run_is_complete(dir: &Path, config: &RunConfig) -> bool {
    if !dir.join(EVAL_FILE).is_file() || !dir.join(METRICS_FILE).is_file() {
        return false;
    }
    matches!(RunConfig::load(&dir.join(CONFIG_FILE)), Ok(c) if &c == config)
}

/// Trains every requested (variant, seed) pair, then aggregates.
pub fn run_sweep(base: &RunConfig, opts: &SweepOptions, out: &Path) -> Result<SweepReport> {
    base.validate()?;
    if opts.seeds.is_empty() || opts.variants.is_empty() {
        return Err(Error::Config("sweep needs at least one seed and one variant".into()));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut failures = Vec::new();
    for &seed in &opts.seeds {
        for &variant in &opts.variants {
            let config = variant.configure(base, seed);
            let dir = run_dir(out, variant, seed);
            if opts.reuse && run_is_complete(&dir, &config) {
                log::info!("reusing {}", dir.display());
                continue;
            }
            if let Err(e) = train_run(&config, &dir) {
                // Config errors are the caller's fault and apply to every run.
                if let Error::Config(_) = e {
                    return Err(e);
                }
                log::error!("{variant} seed {seed} failed: {e}");
                failures.push(RunFailure {
                    variant,
                    seed,
                    error: e.to_string(),
                });
            }
        }
    }
    let mut report = collect_report(out, &opts.seeds, &opts.variants)?;
    for f in failures {
        if !report.failures.iter().any(|g| g.variant == f.variant && g.seed == f.seed) {
            report.failures.push(f);
        }
    }
    report.complete = report.failures.is_empty();
    report.write(out)?;
    Ok(report)
}

/// Builds a report from run directories. Missing or unreadable runs are
/// listed as failures.
pub fn collect_report(out: &Path, seeds: &[u64], variants: &[Variant]) -> Result<SweepReport> {
    let mut summaries = Vec::new();
    let mut failures = Vec::new();
    for &variant in variants {
        let mut results = Vec::new();
        for &seed in seeds {
            match load_seed(&run_dir(out, variant, seed), seed) {
                Ok(r) => results.push(r),
                Err(e) => failures.push(RunFailure {
                    variant,
                    seed,
                    error: e.to_string(),
                }),
            }
        }
        summaries.push(VariantSummary::from_seeds(variant, results));
    }
    Ok(SweepReport {
        requested_seeds: seeds.to_vec(),
        variants: summaries,
        complete: failures.is_empty(),
        failures,
    })
}

/// Finds every `seed_<s>` directory under `<out>/<variant>`.
pub fn discover_seeds(out: &Path) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for v in Variant::ALL {
        let dir = out.join(v.name());
        let Ok(entries) = fs::read_dir(&dir) else { continue };
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let name = entry.file_name();
            if let Some(s) = name.to_str().and_then(|n| n.strip_prefix("seed_")).and_then(|s| s.parse().ok()) {
                if !seeds.contains(&s) {
                    seeds.push(s);
                }
            }
        }
    }
    seeds.sort_unstable();
    Ok(seeds)
}

fn load_seed(dir: &Path, seed: u64) -> Result<SeedResult> {
    let eval: EvalRecord = read_json(&dir.join(EVAL_FILE))?;
    let curve = read_metrics(&dir.join(METRICS_FILE))?
        .into_iter()
        .filter_map(|m| {
            m.mean_return_100ep.map(|r| CurvePoint {
                update: m.update,
                env_steps: m.env_steps,
                mean_return: r,
            })
        })
        .collect();
    Ok(SeedResult {
        seed,
        final_return: eval.mean,
        eval,
        curve,
    })
}

/// Mean return of each variant over the earliest and latest tenth of the
/// logged updates, with seed-level spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseComparison {
    pub baseline_mean: f64,
    pub aux_mean: f64,
    /// sqrt of the average of the two across-seed variances.
    pub pooled_std: f64,
}

impl PhaseComparison {
    /// (aux - baseline) in pooled standard deviations.
    pub fn effect(&self) -> f64 {
        let d = self.aux_mean - self.baseline_mean;
        if self.pooled_std > 0.0 {
            d / self.pooled_std
        } else if d == 0.0 {
            0.0
        } else {
            d.signum() * f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveShape {
    pub early: PhaseComparison,
    pub late: PhaseComparison,
}

/// Compares the training curves over the first and last `fraction` of the
/// updates logged by every run.
pub fn curve_shape(report: &SweepReport, fraction: f64) -> Option<CurveShape> {
    let b = report.variant(Variant::Baseline)?;
    let a = report.variant(Variant::Aux)?;
    let mut updates: Vec<u64> = b.seeds.first()?.curve.iter().map(|p| p.update).collect();
    for s in b.seeds.iter().chain(&a.seeds) {
        updates.retain(|u| s.curve.iter().any(|p| p.update == *u));
    }
    if updates.is_empty() {
        return None;
    }
    let n = ((updates.len() as f64 * fraction).ceil() as usize).clamp(1, updates.len());
    let early = &updates[..n];
    let late = &updates[updates.len() - n..];
    Some(CurveShape {
        early: compare(b, a, early),
        late: compare(b, a, late),
    })
}

fn compare(b: &VariantSummary, a: &VariantSummary, updates: &[u64]) -> PhaseComparison {
    let window_means = |v: &VariantSummary| -> Vec<f64> {
        v.seeds
            .iter()
            .map(|s| {
                let vals: Vec<f64> = s
                    .curve
                    .iter()
                    .filter(|p| updates.contains(&p.update))
                    .map(|p| p.mean_return)
                    .collect();
                vals.iter().sum::<f64>() / vals.len() as f64
            })
            .collect()
    };
    let (bm, bs) = mean_and_std(&window_means(b));
    let (am, as_) = mean_and_std(&window_means(a));
    PhaseComparison {
        baseline_mean: bm,
        aux_mean: am,
        pooled_std: ((bs * bs + as_ * as_) / 2.0).sqrt(),
    }
}
