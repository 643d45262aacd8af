//! Training curve export: long-format CSV and an SVG with one mean line and
//! a one-standard-deviation band per variant.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::eval::mean_and_std;
use super::sweep::{SweepReport, Variant, VariantSummary};
use crate::error::{Error, Result};

pub const CURVES_CSV: &str = "curves.csv";
pub const CURVES_SVG: &str = "curves.svg";

/// Across-seed statistics at one logged update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub env_steps: u64,
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample std over the seeds that logged each update.
pub fn band(summary: &VariantSummary) -> Vec<BandPoint> {
    let mut updates: Vec<(u64, u64)> = summary
        .seeds
        .iter()
        .flat_map(|s| s.curve.iter().map(|p| (p.update, p.env_steps)))
        .collect();
    updates.sort_unstable();
    updates.dedup();
    updates
        .into_iter()
        .map(|(u, steps)| {
            let vals: Vec<f64> = summary
                .seeds
                .iter()
                .filter_map(|s| s.curve.iter().find(|p| p.update == u).map(|p| p.mean_return))
                .collect();
            let (mean, std) = mean_and_std(&vals);
            BandPoint {
                env_steps: steps,
                mean,
                std,
            }
        })
        .collect()
}

pub fn write_curves_csv(report: &SweepReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variant", "seed", "update", "env_steps", "mean_return"])?;
    for v in &report.variants {
        for s in &v.seeds {
            for p in &s.curve {
                w.write_record([
                    v.variant.name().to_string(),
                    s.seed.to_string(),
                    p.update.to_string(),
                    p.env_steps.to_string(),
                    p.mean_return.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 56.0;

fn colour(v: Variant) -> &'static str {
    match v {
        Variant::Baseline => "#1f77b4",
        Variant::Aux => "#d62728",
    }
}

pub fn render_svg(report: &SweepReport) -> String {
    let bands: Vec<(Variant, &str, Vec<BandPoint>)> = report
        .variants
        .iter()
        .map(|v| (v.variant, v.label.as_str(), band(v)))
        .filter(|(_, _, b)| !b.is_empty())
        .collect();
    let x_max = bands
        .iter()
        .flat_map(|(_, _, b)| b.iter().map(|p| p.env_steps))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let y_max = bands
        .iter()
        .flat_map(|(_, _, b)| b.iter().map(|p| p.mean + p.std))
        .fold(1.0f64, f64::max)
        .ceil();
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + x / x_max * plot_w;
    let sy = |y: f64| MARGIN_TOP + (1.0 - y.clamp(0.0, y_max) / y_max) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, y0, x1, y1) = (sx(0.0), sy(0.0), sx(x_max), sy(y_max));
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let y = y_max * i as f64 / 5.0;
        let py = sy(y);
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{x0:.1}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{y:.1}</text>"#,
            x0 - 4.0,
            x0 - 6.0,
            py + 4.0
        );
        let x = x_max * i as f64 / 5.0;
        let px = sx(x);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.1}" y1="{y0:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            y0 + 4.0,
            y0 + 18.0,
            format_steps(x)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">environment steps</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16,{:.1}) rotate(-90)" text-anchor="middle">mean episode return (last 100)</text>"#,
        MARGIN_TOP + plot_h / 2.0
    );

    for (variant, label, b) in &bands {
        let c = colour(*variant);
        let upper: Vec<String> = b
            .iter()
            .map(|p| format!("{:.1},{:.1}", sx(p.env_steps as f64), sy(p.mean + p.std)))
            .collect();
        let lower: Vec<String> = b
            .iter()
            .rev()
            .map(|p| format!("{:.1},{:.1}", sx(p.env_steps as f64), sy(p.mean - p.std)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon class="band" data-variant="{}" points="{} {}" fill="{c}" fill-opacity="0.2" stroke="none"/>"#,
            variant.name(),
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = b
            .iter()
            .map(|p| format!("{:.1},{:.1}", sx(p.env_steps as f64), sy(p.mean)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="mean" data-variant="{}" points="{}" fill="none" stroke="{c}" stroke-width="1.5"><title>{}</title></polyline>"#,
            variant.name(),
            line.join(" "),
            escape(label)
        );
    }
    for (i, (variant, label, _)) in bands.iter().enumerate() {
        let y = MARGIN_TOP + 16.0 + 18.0 * i as f64;
        let x = MARGIN_LEFT + plot_w - 260.0;
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            x + 20.0,
            colour(*variant),
            x + 26.0,
            y + 4.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn format_steps(x: f64) -> String {
    if x >= 1e6 {
        format!("{:.1}M", x / 1e6)
    } else if x >= 1e3 {
        format!("{:.0}k", x / 1e3)
    } else {
        format!("{x:.0}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `curves.csv` and `curves.svg` into `out`.
pub fn write_plots(report: &SweepReport, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_curves_csv(report, &out.join(CURVES_CSV))?;
    let path = out.join(CURVES_SVG);
    fs::write(&path, render_svg(report)).map_err(|e| Error::io(&path, e))
}
