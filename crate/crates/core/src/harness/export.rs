use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::runner::{AggregateResult, ExperimentRun};
use crate::error::{Error, Result};

/// Rounds `x` to 6 significant digits and prints the shortest decimal that
/// reads back as the rounded value.
pub fn format_sig6(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let rounded: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    format!("{rounded}")
}

/// One data row of the aggregate CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub t: usize,
    pub policy: String,
    pub mean_regret: f64,
    pub sd_regret: f64,
}

/// Writes `t,policy,mean_regret,sd_regret` rows for every `thin`-th round,
/// sorted by policy label and then round.
pub fn export_csv(result: &AggregateResult, path: &Path, thin: usize) -> Result<()> {
    if thin == 0 {
        return Err(Error::InvalidParameter("thin must be at least 1".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);

    writeln!(out, "t,policy,mean_regret,sd_regret").map_err(io)?;
    let mut order: Vec<usize> = (0..result.policies.len()).collect();
    order.sort_by(|&a, &b| result.policies[a].label.cmp(&result.policies[b].label));
    for i in order {
        let p = &result.policies[i];
        for t in (thin..=p.mean.len()).step_by(thin) {
            writeln!(
                out,
                "{},{},{},{}",
                t,
                p.label,
                format_sig6(p.mean[t - 1]),
                format_sig6(p.sd[t - 1])
            )
            .map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header != vec!["t", "policy", "mean_regret", "sd_regret"] {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            message: "unexpected header".into(),
        });
    }
    reader
        .deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Parse {
            path: path.into(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// One round of one repetition in the raw trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub rep: usize,
    pub policy: String,
    pub chosen: usize,
    pub inst_regret: f64,
    /// `inf` when every action has the same mean reward.
    pub gap: f64,
    pub v: f64,
    /// Restricted covariance norm, on rounds where it was recorded.
    pub opnorm: Option<f64>,
}

/// Writes every round of every episode, ordered by repetition, then policy
/// in configuration order, then round.
pub fn write_trace(run: &ExperimentRun, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for episodes in &run.episodes {
        for ep in episodes {
            let opnorms: HashMap<usize, f64> = ep.expansion.iter().copied().collect();
            for r in ep.trace.records() {
                writer
                    .serialize(TraceRow {
                        t: r.round,
                        rep: ep.repetition,
                        policy: ep.trace.policy_label.clone(),
                        chosen: r.chosen,
                        inst_regret: r.inst_regret,
                        gap: r.gap,
                        v: r.uncertainty,
                        opnorm: opnorms.get(&r.round).copied(),
                    })
                    .map_err(|e| csv_error(path, e))?;
            }
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 60.0;
const MAX_POINTS: usize = 2000;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Linear map from data to plot coordinates. The SVG carries its parameters
/// as `data-*` attributes on the plot group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisScale {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl AxisScale {
    pub fn px(&self, t: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(f64::MIN_POSITIVE);
        MARGIN_LEFT + (t - self.x_min) / span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    pub fn py(&self, y: f64) -> f64 {
        let span = self.y_max - self.y_min;
        HEIGHT - MARGIN_BOTTOM - (y - self.y_min) / span * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }

    /// Plot units per unit of regret.
    pub fn y_per_unit(&self) -> f64 {
        (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM) / (self.y_max - self.y_min)
    }
}

fn axis_scale(result: &AggregateResult) -> AxisScale {
    let mut lo = 0.0f64;
    let mut hi = f64::NEG_INFINITY;
    for p in &result.policies {
        for (m, s) in p.mean.iter().zip(&p.sd) {
            lo = lo.min(m - 2.0 * s);
            hi = hi.max(m + 2.0 * s);
        }
    }
    if !(hi > lo) {
        hi = lo + 1.0;
    }
    AxisScale {
        x_min: 1.0,
        x_max: result.horizon.max(2) as f64,
        y_min: lo,
        y_max: hi,
    }
}

fn sample_rounds(horizon: usize) -> Vec<usize> {
    let step = horizon.div_ceil(MAX_POINTS).max(1);
    let mut ts: Vec<usize> = (1..=horizon).step_by(step).collect();
    if ts.last() != Some(&horizon) {
        ts.push(horizon);
    }
    ts
}

fn fmt_coord(x: f64) -> String {
    format!("{x:.3}")
}

/// Renders the mean curves with ±2·SD bands as a standalone SVG document.
pub fn render_plot_svg(result: &AggregateResult, path: &Path) -> Result<()> {
    let svg = plot_svg(result)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

pub fn plot_svg(result: &AggregateResult) -> Result<String> {
    if result.policies.is_empty() || result.horizon == 0 {
        return Err(Error::Empty("aggregate result"));
    }
    let scale = axis_scale(result);
    let ts = sample_rounds(result.horizon);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g id="plot" data-x-min="{}" data-x-max="{}" data-y-min="{:e}" data-y-max="{:e}" data-y-per-unit="{:e}">"#,
        scale.x_min,
        scale.x_max,
        scale.y_min,
        scale.y_max,
        scale.y_per_unit()
    );

    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
    );
    for i in 0..=5 {
        let frac = i as f64 / 5.0;
        let tx = scale.x_min + frac * (scale.x_max - scale.x_min);
        let ty = scale.y_min + frac * (scale.y_max - scale.y_min);
        let px = scale.px(tx);
        let py = scale.py(ty);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            fmt_coord(px),
            y0 + 16.0,
            tx.round()
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            fmt_coord(py + 4.0),
            format_sig6(ty)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">round</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">cumulative regret</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    for (i, p) in result.policies.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let label = escape(&p.label);
        let upper: Vec<String> = ts
            .iter()
            .map(|&t| {
                let y = p.mean[t - 1] + 2.0 * p.sd[t - 1];
                format!(
                    "{},{}",
                    fmt_coord(scale.px(t as f64)),
                    fmt_coord(scale.py(y))
                )
            })
            .collect();
        let lower: Vec<String> = ts
            .iter()
            .rev()
            .map(|&t| {
                let y = p.mean[t - 1] - 2.0 * p.sd[t - 1];
                format!(
                    "{},{}",
                    fmt_coord(scale.px(t as f64)),
                    fmt_coord(scale.py(y))
                )
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon class="band" data-policy="{label}" fill="{color}" fill-opacity="0.2" stroke="none" points="{} {}"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let mean: Vec<String> = ts
            .iter()
            .map(|&t| {
                format!(
                    "{},{}",
                    fmt_coord(scale.px(t as f64)),
                    fmt_coord(scale.py(p.mean[t - 1]))
                )
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="mean" data-policy="{label}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            mean.join(" ")
        );
        let ly = MARGIN_TOP + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line class="legend" x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#,
            x1 + 15.0,
            x1 + 40.0
        );
        let _ = writeln!(
            s,
            r#"<text class="legend" x="{}" y="{}">{label}</text>"#,
            x1 + 46.0,
            ly + 4.0
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_rounding() {
        assert_eq!(format_sig6(1234.5678), "1234.57");
        assert_eq!(format_sig6(0.000123456789), "0.000123457");
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(2.5), "2.5");
        assert_eq!(format_sig6(f64::INFINITY), "inf");
    }

    #[test]
    fn escapes_labels() {
        assert_eq!(escape("a<b&\"c\""), "a&lt;b&amp;&quot;c&quot;");
    }

    #[test]
    fn sampled_rounds_end_at_horizon() {
        let ts = sample_rounds(10_000);
        assert!(ts.len() <= MAX_POINTS + 1);
        assert_eq!(ts[0], 1);
        assert_eq!(*ts.last().unwrap(), 10_000);
        assert_eq!(sample_rounds(3), vec![1, 2, 3]);
    }
}
