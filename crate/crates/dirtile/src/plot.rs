//! Static SVG scatter plots of measured ratios against one parameter.
//!
//! One file per axis; `y = log₁₀(ratio)`, `x = log₂` of `δ`/`σ` or the raw
//! integer `k`/`j`. Degenerate and zero ratios are left out.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::verify::ConstantReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Delta,
    Sigma,
    K,
    J,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::Delta, Axis::Sigma, Axis::K, Axis::J];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Delta => "delta",
            Axis::Sigma => "sigma",
            Axis::K => "k",
            Axis::J => "j",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Axis::Delta => "log2 delta",
            Axis::Sigma => "log2 sigma",
            Axis::K => "k",
            Axis::J => "j",
        }
    }

    fn value(self, r: &ConstantReport) -> Option<f64> {
        let v = match self {
            Axis::Delta => r.delta.filter(|&d| d > 0.0).map(f64::log2),
            Axis::Sigma => r.sigma.filter(|&s| s > 0.0).map(f64::log2),
            Axis::K => r.k.map(|k| k as f64),
            Axis::J => r.j.map(|j| j as f64),
        };
        v.filter(|x| x.is_finite())
    }
}

const PALETTE: [&str; 10] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

fn points(records: &[ConstantReport], axis: Axis) -> BTreeMap<&str, Vec<(f64, f64)>> {
    let mut out: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        let Some(x) = axis.value(r) else { continue };
        let Some(y) = r.ratio.filter(|&y| y > 0.0 && y.is_finite()) else { continue };
        out.entry(r.inequality_id.as_str()).or_default().push((x, y.log10()));
    }
    out
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn fmt_tick(x: f64) -> String {
    let s = format!("{x:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// SVG text for `ratio` against `axis`; deterministic for identical input.
pub fn scatter_svg(records: &[ConstantReport], axis: Axis, title: &str) -> String {
    let series = points(records, axis);
    let (x0, x1) = range(series.values().flatten().map(|p| p.0));
    let (y0, y1) = range(series.values().flatten().map(|p| p.1));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, LEFT + pw / 2.0, escape(title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for t in 0..=4 {
        let fx = x0 + (x1 - x0) * t as f64 / 4.0;
        let fy = y0 + (y1 - y0) * t as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(fx), TOP + ph + 16.0, fmt_tick(fx));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, sy(fy) + 4.0, fmt_tick(fy));
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, axis.label());
    let _ = writeln!(s, r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">log10 ratio</text>"#, TOP + ph / 2.0, TOP + ph / 2.0);
    for (i, (id, pts)) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, r#"<g fill="{c}" fill-opacity="0.6">"#);
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="2.5"/>"#, sx(x), sy(y));
        }
        let _ = writeln!(s, "</g>");
        let ly = TOP + 14.0 * i as f64 + 8.0;
        let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{c}"/>"#, W - RIGHT + 16.0, ly);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{} ({})</text>"#, W - RIGHT + 26.0, ly + 4.0, escape(id), pts.len());
    }
    if series.is_empty() {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">no data</text>"#, LEFT + pw / 2.0, TOP + ph / 2.0);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
