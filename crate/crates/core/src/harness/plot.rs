//! Minimal deterministic SVG plots: MSE against Neyman–Pearson power, and
//! density curves. Coordinates are printed at fixed precision so output is
//! byte-stable.

use std::fmt::Write;

use super::ScenarioRun;
use crate::error::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 58.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

/// Roughly five round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(svg: &mut String, f: &Frame, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let (bx, by) = (f.px(f.x0), f.py(f.y0));
    let _ = writeln!(
        svg,
        r#"<rect x="{bx:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        f.py(f.y1),
        f.px(f.x1) - bx,
        by - f.py(f.y1)
    );
    for t in ticks(f.x0, f.x1) {
        let x = f.px(t);
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{by:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, by + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, by + 19.0, tick_label(t));
    }
    for t in ticks(f.y0, f.y1) {
        let y = f.py(t);
        let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{y:.2}" x2="{bx:.2}" y2="{y:.2}" stroke="black"/>"#, bx - 5.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, bx - 8.0, y + 4.0, tick_label(t));
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, (bx + f.px(f.x1)) / 2.0, H - 14.0, escape(xlabel));
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{0:.2}" text-anchor="middle" transform="rotate(-90 18 {0:.2})">{1}</text>"#,
        (by + f.py(f.y1)) / 2.0,
        escape(ylabel)
    );
}

fn polyline(svg: &mut String, f: &Frame, pts: &[(f64, f64)], dash: bool) {
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", f.px(*x), f.py(*y))).collect();
    let dash = if dash { r#" stroke-dasharray="6 4""# } else { "" };
    let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="black"{dash}/>"#, coords.join(" "));
}

fn marker(svg: &mut String, style: usize, x: f64, y: f64) {
    match style {
        0 => {
            let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4.5" fill="black" stroke="black"/>"#);
        }
        1 => {
            let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4.5" fill="white" stroke="black"/>"#);
        }
        _ => {
            let _ = writeln!(svg, r#"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="white" stroke="black"/>"#, x - 4.0, y - 4.0);
        }
    }
}

/// MSE of each estimator against the empirical Neyman–Pearson power: the
/// efficient estimator in filled circles, the design-based one in open
/// circles, any third as open squares on a dashed line.
pub fn mse_power_svg(run: &ScenarioRun, title: &str) -> Result<String> {
    if run.summaries.is_empty() {
        return Err(Error::InvalidInput("cannot plot an empty summary".into()));
    }
    let mut order: Vec<usize> = (0..run.summaries.len()).collect();
    order.sort_by(|&a, &b| run.summaries[a].power_np.total_cmp(&run.summaries[b].power_np));
    let series: Vec<Vec<(f64, f64)>> = (0..run.estimator_names.len())
        .map(|j| {
            order
                .iter()
                .map(|&i| (run.summaries[i].power_np, run.summaries[i].estimators[j].mse))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect()
        })
        .collect();
    let ymax = series.iter().flatten().map(|p| p.1).fold(0.0, f64::max);
    let f = Frame {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: if ymax > 0.0 { ymax * 1.08 } else { 1.0 },
    };
    let mut svg = String::new();
    open(&mut svg, &f, title, "power of Neyman–Pearson test", "mean squared error");
    for (j, pts) in series.iter().enumerate() {
        polyline(&mut svg, &f, pts, j >= 2);
        for (x, y) in pts {
            marker(&mut svg, j, f.px(*x), f.py(*y));
        }
    }
    for (j, name) in run.estimator_names.iter().enumerate() {
        let y = TOP + 16.0 + 18.0 * j as f64;
        marker(&mut svg, j, LEFT + 16.0, y);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, LEFT + 28.0, y + 4.0, escape(name));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Density curves sampled on a common grid; the first solid, the rest dashed.
pub fn density_svg(curves: &[(&str, Vec<(f64, f64)>)], title: &str, xlabel: &str) -> Result<String> {
    let all: Vec<(f64, f64)> = curves.iter().flat_map(|c| c.1.iter().copied()).filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
    if all.is_empty() {
        return Err(Error::InvalidInput("cannot plot empty curves".into()));
    }
    let x0 = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x1 = all.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let ymax = all.iter().map(|p| p.1).fold(0.0, f64::max);
    let f = Frame {
        x0,
        x1: if x1 > x0 { x1 } else { x0 + 1.0 },
        y0: 0.0,
        y1: if ymax > 0.0 { ymax * 1.08 } else { 1.0 },
    };
    let mut svg = String::new();
    open(&mut svg, &f, title, xlabel, "density");
    for (j, (name, pts)) in curves.iter().enumerate() {
        polyline(&mut svg, &f, pts, j > 0);
        let y = TOP + 16.0 + 18.0 * j as f64;
        let dash = if j > 0 { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"{dash}/>"#, W - RIGHT - 150.0, W - RIGHT - 120.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, W - RIGHT - 112.0, y + 4.0, escape(name));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
