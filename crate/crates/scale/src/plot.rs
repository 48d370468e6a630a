//! Minimal SVG line charts of initialization time against cluster size.

use std::fmt::Write;

use crate::init::{simulate_init, SimConfig};
use crate::topology::TopologySpec;
use janus_core::ValidationError;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(x, y)` points in drawing order.
    pub points: Vec<(f64, f64)>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// P50 initialization time (seconds) against node count, one series per
/// host count.
pub fn init_curves(node_counts: &[usize], degree: f64, host_counts: &[usize], cfg: &SimConfig) -> Result<Vec<Series>, ValidationError> {
    host_counts
        .iter()
        .map(|&h| {
            let points = node_counts
                .iter()
                .map(|&n| simulate_init(&TopologySpec::uniform(n, degree, h), cfg).map(|p| (n as f64, p.p50 / 1e3)))
                .collect::<Result<_, _>>()?;
            Ok(Series { label: format!("H = {h}"), points })
        })
        .collect()
}

pub fn line_chart_svg(series: &[Series], x_label: &str, y_label: &str) -> String {
    let (w, h, m) = (640.0, 420.0, 56.0);
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x_max, mut y_max) = (0.0f64, 0.0f64);
    for &(x, y) in pts {
        x_max = x_max.max(x);
        y_max = y_max.max(y);
    }
    if x_max <= 0.0 {
        x_max = 1.0;
    }
    if y_max <= 0.0 {
        y_max = 1.0;
    }
    let sx = |x: f64| m + x / x_max * (w - 2.0 * m);
    let sy = |y: f64| h - m - y / y_max * (h - 2.0 * m);

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m);
    let _ = writeln!(out, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{}" text-anchor="middle">{:.0}</text>"#, sx(f * x_max), h - m + 16.0, f * x_max);
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{:.2}</text>"#, m - 6.0, sy(f * y_max) + 4.0, f * y_max);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 12.0, escape(x_label));
    let _ = writeln!(out, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#, h / 2.0, h / 2.0, escape(y_label));
    for (i, s) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#, path.join(" "));
        let _ = writeln!(out, r#"<text x="{}" y="{}" fill="{c}">{}</text>"#, m + 10.0, m + 16.0 * i as f64, escape(&s.label));
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
