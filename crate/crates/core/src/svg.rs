//! Static SVG charts for training series: three stacked panels
//! (pass@1, mean response length, policy entropy), one polyline per arm.

use std::fmt::Write;

use crate::simulator::MetricsRecord;

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 180.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const GAP: f64 = 40.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

type Extract = fn(&MetricsRecord) -> f64;

const PANELS: [(&str, Extract); 3] = [
    ("pass@1", |r| r.pass1),
    ("mean response length", |r| r.mean_length),
    ("policy entropy (nats)", |r| r.entropy_nats),
];

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
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

/// Render `series` (label, records) as a standalone SVG document.
pub fn render_training_svg(series: &[(&str, &[MetricsRecord])]) -> String {
    let height = MARGIN_TOP + PANELS.len() as f64 * (PANEL_HEIGHT + GAP);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let max_step = series.iter().flat_map(|(_, r)| r.iter().map(|m| m.step)).max().unwrap_or(1).max(1) as f64;
    let min_step = series.iter().flat_map(|(_, r)| r.iter().map(|m| m.step)).min().unwrap_or(0) as f64;
    let span = (max_step - min_step).max(1.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);

    for (idx, (title, get)) in PANELS.iter().enumerate() {
        let top = MARGIN_TOP + idx as f64 * (PANEL_HEIGHT + GAP);
        let bottom = top + PANEL_HEIGHT;
        let (lo, hi) = bounds(series.iter().flat_map(|(_, r)| r.iter().map(get)));
        let _ = writeln!(s, r#"<text x="{MARGIN_LEFT}" y="{:.1}" font-weight="bold">{title}</text>"#, top - 8.0);
        let _ = writeln!(
            s,
            r##"<rect x="{MARGIN_LEFT}" y="{top:.1}" width="{plot_w:.1}" height="{PANEL_HEIGHT:.1}" fill="none" stroke="#999"/>"##
        );
        let _ =
            writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{hi:.3}</text>"#, MARGIN_LEFT - 4.0, top + 12.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{bottom:.1}" text-anchor="end">{lo:.3}</text>"#, MARGIN_LEFT - 4.0);

        for (k, (_, records)) in series.iter().enumerate() {
            if records.is_empty() {
                continue;
            }
            let mut d = String::new();
            for (i, r) in records.iter().enumerate() {
                let x = MARGIN_LEFT + (r.step as f64 - min_step) / span * plot_w;
                let y = bottom - (get(r) - lo) / (hi - lo) * PANEL_HEIGHT;
                let _ = write!(d, "{}{x:.2},{y:.2}", if i == 0 { "M" } else { " L" });
            }
            let _ =
                writeln!(s, r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.5"/>"#, COLORS[k % COLORS.len()]);
        }
    }

    for (k, (label, _)) in series.iter().enumerate() {
        let x = MARGIN_LEFT + 10.0 + k as f64 * 160.0;
        let y = height - 12.0;
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(s, r#"<rect x="{x:.1}" y="{:.1}" width="12" height="4" fill="{color}"/>"#, y - 4.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{y:.1}">{}</text>"#, x + 18.0, escape(label));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
