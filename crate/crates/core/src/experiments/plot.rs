//! Minimal deterministic SVG rendering of report figures.
//!
//! Output depends only on the figure data: fixed canvas, fixed palette,
//! coordinates printed with two decimals, no timestamps or ids.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use super::report::{Figure, FigureKind, Report};
use super::stats::box_stats;
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const FONT: &str = "DejaVu Sans, Helvetica, Arial, sans-serif";
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Default)]
pub struct PlotOutput {
    pub written: Vec<PathBuf>,
    /// One message per figure that had nothing to draw.
    pub skipped: Vec<String>,
}

/// Renders every non-empty figure of `report` to
/// `<dir>/<experiment>_<figure>.svg`.
pub fn emit_plots(report: &Report, dir: &Path) -> Result<PlotOutput> {
    let mut out = PlotOutput::default();
    for fig in &report.figures {
        let Some(svg) = render(fig) else {
            let msg = format!("figure {} has no data; no file written", fig.name);
            warn!("{msg}");
            out.skipped.push(msg);
            continue;
        };
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("{}_{}.svg", report.experiment, fig.name));
        fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        out.written.push(path);
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Axis mapping, possibly logarithmic.
#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
    from: f64,
    to: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool, from: f64, to: f64) -> Option<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return None;
        }
        if hi - lo < 1e-12 * hi.abs().max(1.0) {
            let pad = if log { 0.5 } else { 0.5 * hi.abs().max(1.0) };
            lo -= pad;
            hi += pad;
        } else if log {
            lo = lo.floor();
            hi = hi.ceil();
        } else {
            let pad = 0.05 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Some(Self {
            lo,
            hi,
            log,
            from,
            to,
        })
    }

    fn map(&self, v: f64) -> Option<f64> {
        if !v.is_finite() || (self.log && v <= 0.0) {
            return None;
        }
        let v = if self.log { v.log10() } else { v };
        Some(self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from))
    }

    /// Tick positions in data units with their labels.
    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            let step = ((b - a) / 8 + 1).max(1);
            return (a..=b)
                .step_by(step as usize)
                .map(|k| (10f64.powi(k), decade_label(k)))
                .collect();
        }
        let span = self.hi - self.lo;
        let raw = span / 6.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let decimals = (-step.log10().floor()).max(0.0) as usize;
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        (first..=last)
            .map(|i| {
                let v = i as f64 * step;
                let v = if v.abs() < 1e-12 * step { 0.0 } else { v };
                (v, format!("{v:.decimals$}"))
            })
            .collect()
    }
}

fn decade_label(k: i32) -> String {
    if (-3..=3).contains(&k) {
        let v = 10f64.powi(k);
        if k < 0 {
            format!("{v:.*}", (-k) as usize)
        } else {
            format!("{v:.0}")
        }
    } else {
        format!("1e{k}")
    }
}

fn header(svg: &mut String, fig: &Figure) {
    let _ = writeln!(
        svg,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"{FONT}\" font-size=\"12\">"
    );
    let _ = writeln!(
        svg,
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        WIDTH / 2.0,
        escape(&fig.title)
    );
}

fn frame(svg: &mut String, fig: &Figure, x: Option<&Axis>, y: &Axis) {
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        svg,
        "<rect x=\"{x0:.2}\" y=\"{y1:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>",
        x1 - x0,
        y0 - y1
    );
    for (v, label) in y.ticks() {
        let Some(py) = y.map(v) else { continue };
        let _ = writeln!(
            svg,
            "<line x1=\"{x0:.2}\" y1=\"{py:.2}\" x2=\"{:.2}\" y2=\"{py:.2}\" stroke=\"black\"/><line x1=\"{x0:.2}\" y1=\"{py:.2}\" x2=\"{x1:.2}\" y2=\"{py:.2}\" stroke=\"#dddddd\"/>",
            x0 - 5.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            x0 - 8.0,
            py + 4.0,
            escape(&label)
        );
    }
    if let Some(x) = x {
        for (v, label) in x.ticks() {
            let Some(px) = x.map(v) else { continue };
            let _ = writeln!(
                svg,
                "<line x1=\"{px:.2}\" y1=\"{y0:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
                y0 + 5.0
            );
            let _ = writeln!(
                svg,
                "<text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
                y0 + 19.0,
                escape(&label)
            );
        }
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 14.0,
        escape(&fig.x_label)
    );
    let _ = writeln!(
        svg,
        "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(&fig.y_label)
    );
}

fn legend(svg: &mut String, labels: &[&str]) {
    if labels.len() < 2 {
        return;
    }
    let x = WIDTH - RIGHT - 150.0;
    for (i, label) in labels.iter().enumerate() {
        let y = TOP + 16.0 + 16.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            y - 4.0,
            x + 18.0,
            y - 4.0,
            x + 24.0,
            y,
            escape(label)
        );
    }
}

fn render_xy(fig: &Figure) -> Option<String> {
    let xs = fig.series.iter().flat_map(|s| s.x.iter().copied());
    let ys = fig.series.iter().flat_map(|s| s.y.iter().copied());
    let x = Axis::fit(xs, fig.log_x, LEFT, WIDTH - RIGHT)?;
    let y = Axis::fit(ys, fig.log_y, HEIGHT - BOTTOM, TOP)?;
    let mut svg = String::new();
    header(&mut svg, fig);
    frame(&mut svg, fig, Some(&x), &y);
    for (i, s) in fig.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> =
            s.x.iter()
                .zip(&s.y)
                .filter_map(|(a, b)| Some((x.map(*a)?, y.map(*b)?)))
                .collect();
        match fig.kind {
            FigureKind::Lines => {
                let path: Vec<String> = pts.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
                let _ = writeln!(
                    svg,
                    "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
                    path.join(" ")
                );
            }
            _ => {
                for (a, b) in pts {
                    let _ = writeln!(
                        svg,
                        "<circle cx=\"{a:.2}\" cy=\"{b:.2}\" r=\"3\" fill=\"{color}\"/>"
                    );
                }
            }
        }
    }
    let labels: Vec<&str> = fig.series.iter().map(|s| s.label.as_str()).collect();
    legend(&mut svg, &labels);
    svg.push_str("</svg>\n");
    Some(svg)
}

fn render_boxes(fig: &Figure) -> Option<String> {
    let ys = fig.series.iter().flat_map(|s| s.y.iter().copied());
    let y = Axis::fit(ys, fig.log_y, HEIGHT - BOTTOM, TOP)?;
    let mut svg = String::new();
    header(&mut svg, fig);
    frame(&mut svg, fig, None, &y);
    let slots = fig.series.len() as f64;
    let slot_w = (WIDTH - LEFT - RIGHT) / slots;
    for (i, s) in fig.series.iter().enumerate() {
        let cx = LEFT + slot_w * (i as f64 + 0.5);
        let _ = writeln!(
            svg,
            "<text x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            HEIGHT - BOTTOM + 19.0,
            escape(&s.label)
        );
        let Some(b) = box_stats(&s.y) else { continue };
        let half = (0.2 * slot_w).min(40.0);
        // whiskers reach the furthest points within 1.5 IQR of the box
        let reach = 1.5 * b.iqr();
        let inside: Vec<f64> = s
            .y
            .iter()
            .copied()
            .filter(|v| {
                v.is_finite() && *v >= b.lower_quartile - reach && *v <= b.upper_quartile + reach
            })
            .collect();
        let w_lo = inside.iter().copied().fold(b.lower_quartile, f64::min);
        let w_hi = inside.iter().copied().fold(b.upper_quartile, f64::max);
        let (Some(q1), Some(q3), Some(med), Some(lo), Some(hi)) = (
            y.map(b.lower_quartile),
            y.map(b.upper_quartile),
            y.map(b.median),
            y.map(w_lo),
            y.map(w_hi),
        ) else {
            continue;
        };
        let color = PALETTE[0];
        let _ = writeln!(
            svg,
            "<line x1=\"{cx:.2}\" y1=\"{lo:.2}\" x2=\"{cx:.2}\" y2=\"{q1:.2}\" stroke=\"black\" stroke-dasharray=\"4 3\"/><line x1=\"{cx:.2}\" y1=\"{q3:.2}\" x2=\"{cx:.2}\" y2=\"{hi:.2}\" stroke=\"black\" stroke-dasharray=\"4 3\"/>"
        );
        for w in [lo, hi] {
            let _ = writeln!(
                svg,
                "<line x1=\"{:.2}\" y1=\"{w:.2}\" x2=\"{:.2}\" y2=\"{w:.2}\" stroke=\"black\"/>",
                cx - half / 2.0,
                cx + half / 2.0
            );
        }
        let _ = writeln!(
            svg,
            "<rect x=\"{:.2}\" y=\"{q3:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            cx - half,
            2.0 * half,
            q1 - q3
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{med:.2}\" x2=\"{:.2}\" y2=\"{med:.2}\" stroke=\"#d62728\" stroke-width=\"2\"/>",
            cx - half,
            cx + half
        );
        for v in
            s.y.iter()
                .filter(|v| v.is_finite() && (**v < w_lo || **v > w_hi))
        {
            let Some(py) = y.map(*v) else { continue };
            let _ = writeln!(
                svg,
                "<path d=\"M{:.2},{py:.2}h8M{cx:.2},{:.2}v8\" stroke=\"#d62728\"/>",
                cx - 4.0,
                py - 4.0
            );
        }
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

/// SVG text for `fig`, or `None` when it has nothing to draw.
pub fn render(fig: &Figure) -> Option<String> {
    if fig.series.is_empty() || fig.is_empty() {
        return None;
    }
    match fig.kind {
        FigureKind::Boxes => render_boxes(fig),
        _ => render_xy(fig),
    }
}
