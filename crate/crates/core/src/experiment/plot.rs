//! Reward-versus-episode SVG charts: mean line with a ±1 sd band per
//! series and horizontal lines for fixed baselines.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::metrics::{aggregate, read_metrics, AggregateRow};
use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Per-seed metrics files forming one curve.
#[derive(Clone, Debug)]
pub struct SeriesInput {
    pub label: String,
    pub files: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Baseline {
    pub label: String,
    pub value: f64,
}

/// Which reward column to draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardColumn {
    Eval,
    Reported,
}

fn band(row: &AggregateRow, col: RewardColumn) -> (f64, f64) {
    match col {
        RewardColumn::Eval => (row.eval_reward_mean, row.eval_reward_sd),
        RewardColumn::Reported => (row.reported_reward_mean, row.reported_reward_sd),
    }
}

/// Renders aggregated series and baselines as a standalone SVG document.
pub fn render_svg(series: &[(String, Vec<AggregateRow>)], baselines: &[Baseline], col: RewardColumn, title: &str) -> String {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut max_ep = 1usize;
    for (_, rows) in series {
        for r in rows {
            let (m, s) = band(r, col);
            lo = lo.min(m - s);
            hi = hi.max(m + s);
            max_ep = max_ep.max(r.episode);
        }
    }
    for b in baselines {
        lo = lo.min(b.value);
        hi = hi.max(b.value);
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let x = |e: f64| MARGIN_L + pw * e / max_ep as f64;
    let y = |v: f64| MARGIN_T + ph * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, MARGIN_L + pw / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{:.0}</text>"#,
            MARGIN_L - 6.0,
            y(v) + 4.0,
            v
        );
        let e = max_ep as f64 * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{:.0}</text>"#,
            x(e),
            HEIGHT - MARGIN_B + 18.0,
            e
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">episode</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 10.0
    );

    let mut legend_y = MARGIN_T + 10.0;
    for (i, (label, rows)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut upper = String::new();
        let mut lower = Vec::new();
        let mut line = String::new();
        for r in rows {
            let (m, sd) = band(r, col);
            let ex = x(r.episode as f64);
            let _ = write!(upper, "{:.2},{:.2} ", ex, y(m + sd));
            lower.push(format!("{:.2},{:.2}", ex, y(m - sd)));
            let _ = write!(line, "{:.2},{:.2} ", ex, y(m));
        }
        lower.reverse();
        let _ = writeln!(
            s,
            r#"<polygon class="band" points="{}{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper,
            lower.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.trim_end()
        );
        legend_entry(&mut s, legend_y, color, "", label);
        legend_y += 18.0;
    }
    for (i, b) in baselines.iter().enumerate() {
        let dash = if i % 2 == 0 { "6,4" } else { "2,3" };
        let by = y(b.value);
        let _ = writeln!(
            s,
            r#"<line class="baseline" x1="{MARGIN_L}" y1="{by:.2}" x2="{:.2}" y2="{by:.2}" stroke="black" stroke-dasharray="{dash}"/>"#,
            MARGIN_L + pw
        );
        legend_entry(&mut s, legend_y, "black", dash, &b.label);
        legend_y += 18.0;
    }
    s.push_str("</svg>\n");
    s
}

fn legend_entry(s: &mut String, y: f64, color: &str, dash: &str, label: &str) {
    let x0 = WIDTH - MARGIN_R + 10.0;
    let _ = writeln!(
        s,
        r#"<line x1="{x0}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2" stroke-dasharray="{dash}"/>"#,
        x0 + 20.0
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x0 + 26.0, y + 4.0, escape(label));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Reads and aggregates every series, then writes one SVG to `out`.
pub fn emit_plots(
    series: &[SeriesInput],
    baselines: &[Baseline],
    col: RewardColumn,
    title: &str,
    out: &Path,
) -> Result<()> {
    if series.is_empty() {
        return Err(Error::Config("nothing to plot".into()));
    }
    let mut data = Vec::with_capacity(series.len());
    for si in series {
        if si.files.is_empty() {
            return Err(Error::Config(format!("series `{}` has no metrics files", si.label)));
        }
        let runs = si.files.iter().map(|f| read_metrics(f)).collect::<Result<Vec<_>>>()?;
        data.push((si.label.clone(), aggregate(&runs)?));
    }
    let svg = render_svg(&data, baselines, col, title);
    std::fs::write(out, svg).map_err(|e| Error::io(out, e))
}
