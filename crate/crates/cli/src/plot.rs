//! SVG line charts of sweep rows.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::sweep::Row;

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("need at least 2 finite points to plot, found {0}")]
    TooFewPoints(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Gamma,
    Mql1,
    Mql2,
    BlockingProb,
    Throughput,
    LossRate,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Gamma => "gamma",
            Metric::Mql1 => "mql1",
            Metric::Mql2 => "mql2",
            Metric::BlockingProb => "blocking_prob",
            Metric::Throughput => "throughput",
            Metric::LossRate => "loss_rate",
        }
    }

    fn get(self, r: &Row) -> Option<f64> {
        match self {
            Metric::Gamma => r.gamma,
            Metric::Mql1 => r.mql1,
            Metric::Mql2 => r.mql2,
            Metric::BlockingProb => r.blocking_prob,
            Metric::Throughput => r.throughput,
            Metric::LossRate => r.loss_rate,
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Metric::Gamma, Metric::Mql1, Metric::Mql2, Metric::BlockingProb, Metric::Throughput, Metric::LossRate]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub y: Metric,
    pub title: Option<String>,
    pub width: f64,
    pub height: f64,
}

impl Default for PlotSpec {
    fn default() -> Self {
        PlotSpec { y: Metric::Mql1, title: None, width: 720.0, height: 480.0 }
    }
}

const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Series in order of first appearance, each with its finite points.
fn series(rows: &[Row], y: Metric) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut out: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in rows {
        let pt = match y.get(r) {
            Some(v) if v.is_finite() && r.value.is_finite() => Some((r.value, v)),
            _ => None,
        };
        let idx = match out.iter().position(|(m, _)| *m == r.method) {
            Some(i) => i,
            None => {
                out.push((r.method.clone(), Vec::new()));
                out.len() - 1
            }
        };
        if let Some(pt) = pt {
            out[idx].1.push(pt);
        }
    }
    out.retain(|(_, pts)| !pts.is_empty());
    out
}

/// Tick positions covering `[lo, hi]` with a 1, 2 or 5 times power-of-ten step.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|k| k * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).floor() as i64;
    let last = (hi / step).ceil() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    let v = if v.abs() < 1e-9 * step { 0.0 } else { v };
    format!("{v:.decimals$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_plot(rows: &[Row], spec: &PlotSpec) -> Result<String, PlotError> {
    let lines = series(rows, spec.y);
    let total: usize = lines.iter().map(|(_, p)| p.len()).sum();
    if total < 2 {
        return Err(PlotError::TooFewPoints(total));
    }
    let all = lines.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let xt = nice_ticks(x0, x1, 6);
    let yt = nice_ticks(y0, y1, 6);
    let (xa, xb) = (xt[0], xt[xt.len() - 1]);
    let (ya, yb) = (yt[0], yt[yt.len() - 1]);

    let (w, h) = (spec.width, spec.height);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 55.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - xa) / (xb - xa) * pw;
    let sy = |y: f64| top + ph - (y - ya) / (yb - ya) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let xlabel = rows.first().map(|r| r.sweep_param.as_str()).unwrap_or("value");
    let title = spec.title.clone().unwrap_or_else(|| format!("{} vs {xlabel}", spec.y.name()));
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        left + pw / 2.0,
        escape(&title)
    );

    let xstep = xt.get(1).map_or(1.0, |t| t - xt[0]);
    for &t in &xt {
        let x = sx(t);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##, top + ph);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            top + ph + 18.0,
            tick_label(t, xstep)
        );
    }
    let ystep = yt.get(1).map_or(1.0, |t| t - yt[0]);
    for &t in &yt {
        let y = sy(t);
        let _ = writeln!(s, r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##, left + pw);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 8.0,
            y + 4.0,
            tick_label(t, ystep)
        );
    }
    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 14.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        spec.y.name()
    );

    for (k, (name, pts)) in lines.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = top + 10.0 + 18.0 * k as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}
