//! Static SVG rendering of a sweep: seed-averaged metric against ε, one
//! polyline per method, logarithmic y axis. Written by hand so plotting
//! needs no external renderer; the CSV remains the authoritative output.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use crate::runner::ExperimentResult;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 55.0;

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn metric_of(row: &crate::runner::ResultRow) -> Option<f64> {
    row.excess_mse.or(row.zero_one_loss)
}

/// Seed-averaged metric per (method, ε), finite ε only.
fn series(result: &ExperimentResult) -> BTreeMap<&'static str, Vec<(f64, f64)>> {
    let mut acc: BTreeMap<(&'static str, u64), (f64, f64, usize)> = BTreeMap::new();
    for row in &result.rows {
        if !row.epsilon.is_finite() {
            continue;
        }
        let Some(metric) = metric_of(row) else {
            continue;
        };
        let entry = acc
            .entry((row.method, row.epsilon.to_bits()))
            .or_insert((row.epsilon, 0.0, 0));
        entry.1 += metric;
        entry.2 += 1;
    }
    let mut out: BTreeMap<&'static str, Vec<(f64, f64)>> = BTreeMap::new();
    for ((method, _), (eps, total, count)) in acc {
        out.entry(method)
            .or_default()
            .push((eps, total / count as f64));
    }
    for pts in out.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

pub fn render_svg(result: &ExperimentResult) -> String {
    let series = series(result);
    let mut svg = String::new();
    svg.push_str(&format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    ));
    svg.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);

    let points: Vec<(f64, f64)> = series.values().flatten().copied().collect();
    if points.is_empty() {
        svg.push_str(&format!(
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif">no finite-epsilon data</text>"#,
            WIDTH / 2.0,
            HEIGHT / 2.0
        ));
        svg.push_str("</svg>");
        return svg;
    }

    let (x_min, x_max) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.0), hi.max(p.0))
        });
    let positive_floor = 1e-300;
    let (mut y_min, mut y_max) =
        points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (
                    lo.min(p.1.max(positive_floor)),
                    hi.max(p.1.max(positive_floor)),
                )
            });
    if y_min == y_max {
        y_min /= 10.0;
        y_max *= 10.0;
    }
    let (ly_min, ly_max) = (y_min.log10().floor(), y_max.log10().ceil());
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };

    let x_of = |eps: f64| MARGIN_L + (eps - x_min) / x_span * (WIDTH - MARGIN_L - MARGIN_R);
    let y_of = |v: f64| {
        let lv = v.max(positive_floor).log10();
        HEIGHT - MARGIN_B - (lv - ly_min) / (ly_max - ly_min) * (HEIGHT - MARGIN_T - MARGIN_B)
    };

    // Axes.
    svg.push_str(&format!(
        r#"<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{}" stroke="black"/>"#,
        HEIGHT - MARGIN_B
    ));
    svg.push_str(&format!(
        r#"<line x1="{MARGIN_L}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R
    ));

    // y ticks at powers of ten.
    let mut exp = ly_min as i64;
    while exp <= ly_max as i64 {
        let y = y_of(10f64.powi(exp as i32));
        svg.push_str(&format!(
            r#"<line x1="{}" y1="{y:.1}" x2="{MARGIN_L}" y2="{y:.1}" stroke="black"/>"#,
            MARGIN_L - 5.0
        ));
        svg.push_str(&format!(
            r#"<text x="{}" y="{:.1}" text-anchor="end" font-size="11" font-family="sans-serif">1e{exp}</text>"#,
            MARGIN_L - 8.0,
            y + 4.0
        ));
        svg.push_str(&format!(
            r##"<line x1="{MARGIN_L}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#dddddd"/>"##,
            WIDTH - MARGIN_R
        ));
        exp += 1;
    }

    // x ticks at observed ε values.
    let mut eps_seen: Vec<f64> = points.iter().map(|p| p.0).collect();
    eps_seen.sort_by(|a, b| a.total_cmp(b));
    eps_seen.dedup();
    for eps in eps_seen {
        let x = x_of(eps);
        svg.push_str(&format!(
            r#"<line x1="{x:.1}" y1="{0}" x2="{x:.1}" y2="{1}" stroke="black"/>"#,
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 5.0
        ));
        svg.push_str(&format!(
            r#"<text x="{x:.1}" y="{}" text-anchor="middle" font-size="11" font-family="sans-serif">{eps}</text>"#,
            HEIGHT - MARGIN_B + 18.0
        ));
    }
    svg.push_str(&format!(
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12" font-family="sans-serif">privacy parameter epsilon</text>"#,
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        r#"<text x="16" y="{}" text-anchor="middle" font-size="12" font-family="sans-serif" transform="rotate(-90 16 {0})">seed-averaged metric (log)</text>"#,
        MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0
    ));

    // Series.
    for (i, (method, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|(e, v)| format!("{:.2},{:.2}", x_of(*e), y_of(*v)))
            .collect();
        if pts.len() > 1 {
            svg.push_str(&format!(
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            ));
        }
        for (e, v) in pts {
            svg.push_str(&format!(
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.2" fill="{color}"/>"#,
                x_of(*e),
                y_of(*v)
            ));
        }
        let ly = MARGIN_T + 18.0 * i as f64 + 10.0;
        svg.push_str(&format!(
            r#"<line x1="{0}" y1="{ly:.1}" x2="{1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            WIDTH - MARGIN_R + 10.0,
            WIDTH - MARGIN_R + 34.0
        ));
        svg.push_str(&format!(
            r#"<text x="{}" y="{:.1}" font-size="11" font-family="sans-serif">{method}</text>"#,
            WIDTH - MARGIN_R + 40.0,
            ly + 4.0
        ));
    }

    svg.push_str("</svg>");
    svg
}

pub fn emit_plot(result: &ExperimentResult, path: &Path) -> io::Result<()> {
    std::fs::write(path, render_svg(result))
}
