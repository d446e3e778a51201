//! Minimal standalone SVG line charts for training traces.
//!
//! Three panels per trace: δ against epoch, the loss components on a log axis, and
//! `|∂L/∂δ|` on a log axis. In the gradient panel positive values are drawn as a solid line
//! with filled markers and negative values as a dashed line with hollow markers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::training::TrainTrace;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

/// One plotted series.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
    pub hollow: bool,
    pub color: &'static str,
}

/// Data range of a panel in data coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub y_scale: Scale,
    pub series: Vec<Series>,
}

impl Panel {
    /// Bounds of all finite plottable points (positive ones on a log axis).
    pub fn range(&self) -> Option<Range> {
        let pts = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|(x, y)| x.is_finite() && y.is_finite() && (self.y_scale == Scale::Linear || *y > 0.0));
        let mut r: Option<Range> = None;
        for &(x, y) in pts {
            r = Some(match r {
                None => Range { x: (x, x), y: (y, y) },
                Some(r) => Range {
                    x: (r.x.0.min(x), r.x.1.max(x)),
                    y: (r.y.0.min(y), r.y.1.max(y)),
                },
            });
        }
        r
    }

    pub fn to_svg(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            esc(&self.title)
        );
        let Some(range) = self.range() else {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">no data</text>"#,
                W / 2.0,
                H / 2.0
            );
            s.push_str("</svg>\n");
            return s;
        };
        let (x0, x1) = pad(range.x, Scale::Linear);
        let (y0, y1) = pad(range.y, self.y_scale);
        let tf = |v: f64| match self.y_scale {
            Scale::Linear => v,
            Scale::Log => v.log10(),
        };
        let (ty0, ty1) = (tf(y0), tf(y1));
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
        let py = |y: f64| H - BOTTOM - (tf(y) - ty0) / (ty1 - ty0) * (H - TOP - BOTTOM);

        // frame and axes
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - LEFT - RIGHT,
            H - TOP - BOTTOM
        );
        for t in linear_ticks(x0, x1) {
            let x = px(t);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="black"/><text x="{x:.1}" y="{}" text-anchor="middle">{}</text>"#,
                H - BOTTOM,
                H - BOTTOM + 5.0,
                H - BOTTOM + 18.0,
                fmt_tick(t)
            );
        }
        let y_ticks = match self.y_scale {
            Scale::Linear => linear_ticks(y0, y1),
            Scale::Log => log_ticks(y0, y1),
        };
        for t in y_ticks {
            let y = py(t);
            let _ = writeln!(
                s,
                r##"<line x1="{}" y1="{y:.1}" x2="{LEFT}" y2="{y:.1}" stroke="black"/><line x1="{LEFT}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
                LEFT - 5.0,
                W - RIGHT,
                LEFT - 8.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (LEFT + W - RIGHT) / 2.0,
            H - 12.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            esc(&self.y_label)
        );

        for (k, series) in self.series.iter().enumerate() {
            let dash = if series.dashed {
                r#" stroke-dasharray="5,3""#
            } else {
                ""
            };
            for run in plottable_runs(&series.points, self.y_scale) {
                let path: Vec<String> = run.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
                    series.color,
                    path.join(" ")
                );
            }
            // markers, thinned to about 60 per series
            let pts: Vec<_> = series
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (self.y_scale == Scale::Linear || *y > 0.0))
                .collect();
            let stride = (pts.len() / 60).max(1);
            for &&(x, y) in pts.iter().step_by(stride) {
                let fill = if series.hollow { "white" } else { series.color };
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.2" fill="{fill}" stroke="{}"/>"#,
                    px(x),
                    py(y),
                    series.color
                );
            }
            let ly = TOP + 16.0 + 16.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="1.5"{dash}/><text x="{}" y="{}">{}</text>"#,
                W - RIGHT - 150.0,
                W - RIGHT - 125.0,
                series.color,
                W - RIGHT - 120.0,
                ly + 4.0,
                esc(&series.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Consecutive runs of plottable points; a gap breaks the line.
fn plottable_runs(points: &[(f64, f64)], scale: Scale) -> Vec<Vec<(f64, f64)>> {
    let mut runs = vec![];
    let mut cur = vec![];
    for &(x, y) in points {
        if x.is_finite() && y.is_finite() && (scale == Scale::Linear || y > 0.0) {
            cur.push((x, y));
        } else if !cur.is_empty() {
            runs.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        runs.push(cur);
    }
    runs
}

fn pad((lo, hi): (f64, f64), scale: Scale) -> (f64, f64) {
    match scale {
        Scale::Linear => {
            if hi > lo {
                let m = 0.05 * (hi - lo);
                (lo - m, hi + m)
            } else {
                let m = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
                (lo - m, hi + m)
            }
        }
        Scale::Log => {
            let (l, h) = (lo.log10(), hi.log10());
            if h > l {
                let m = 0.05 * (h - l);
                (10f64.powf(l - m), 10f64.powf(h + m))
            } else {
                (lo / 10.0, hi * 10.0)
            }
        }
    }
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let (a, b) = (lo.log10().ceil() as i32, hi.log10().floor() as i32);
    let every = ((b - a) / 6 + 1).max(1);
    (a..=b).step_by(every as usize).map(|e| 10f64.powi(e)).collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// The three panels for a trace.
pub fn trace_panels(trace: &TrainTrace) -> [Panel; 3] {
    let e = |f: fn(&crate::training::TraceRecord) -> f64| -> Vec<(f64, f64)> {
        trace.records.iter().map(|r| (r.epoch as f64, f(r))).collect()
    };
    let series = |label: &str, points, color, dashed, hollow| Series {
        label: label.into(),
        points,
        dashed,
        hollow,
        color,
    };
    let pos: Vec<(f64, f64)> = e(|r| r.dl_ddelta)
        .into_iter()
        .map(|(x, g)| (x, if g > 0.0 { g } else { f64::NAN }))
        .collect();
    let neg: Vec<(f64, f64)> = e(|r| r.dl_ddelta)
        .into_iter()
        .map(|(x, g)| (x, if g < 0.0 { -g } else { f64::NAN }))
        .collect();
    [
        Panel {
            title: "horizon".into(),
            x_label: "epoch".into(),
            y_label: "δ".into(),
            y_scale: Scale::Linear,
            series: vec![series("δ", e(|r| r.delta), COLORS[0], false, false)],
        },
        Panel {
            title: "loss".into(),
            x_label: "epoch".into(),
            y_label: "loss".into(),
            y_scale: Scale::Log,
            series: vec![
                series("R_s", e(|r| r.r_s), COLORS[0], false, false),
                series("R_d", e(|r| r.r_d), COLORS[1], false, false),
                series("total", e(|r| r.loss), COLORS[2], true, false),
            ],
        },
        Panel {
            title: "|∂L/∂δ|".into(),
            x_label: "epoch".into(),
            y_label: "|∂L/∂δ|".into(),
            y_scale: Scale::Log,
            series: vec![
                series("∂L/∂δ > 0", pos, COLORS[0], false, false),
                series("∂L/∂δ < 0", neg, COLORS[1], true, true),
            ],
        },
    ]
}

pub const PANEL_SUFFIXES: [&str; 3] = ["delta", "loss", "grad"];

/// Writes `<stem>.delta.svg`, `<stem>.loss.svg` and `<stem>.grad.svg`.
pub fn write_trace_panels(trace: &TrainTrace, dir: &Path, stem: &str) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = vec![];
    for (panel, suffix) in trace_panels(trace).iter().zip(PANEL_SUFFIXES) {
        let path = dir.join(format!("{stem}.{suffix}.svg"));
        fs::write(&path, panel.to_svg())?;
        out.push(path);
    }
    Ok(out)
}
