//! Minimal standalone SVG line charts for the metric reports. No rendering
//! dependencies; the output is a plain XML string.

use std::fmt::Write as _;

use crate::error::{CoreError, Result};

/// One polyline on the chart.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 48.0;
const TICKS: usize = 5;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn bounds(series: &[ChartSeries], pick: impl Fn(&(f64, f64)) -> f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for p in &s.points {
            lo = lo.min(pick(p));
            hi = hi.max(pick(p));
        }
    }
    if lo == hi {
        // Degenerate span: open up a unit window around the value.
        lo -= 0.5;
        hi += 0.5;
    }
    (lo, hi)
}

fn tick_text(v: f64) -> String {
    if v == 0.0 {
        return "0".into(); // covers -0.0 as well
    }
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render series as a self-contained SVG document. Axis bounds come from the
/// data; both axes get evenly spaced ticks and each series a legend entry.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[ChartSeries],
) -> Result<String> {
    if series.is_empty() {
        return Err(CoreError::EmptyMetric("chart with no series".into()));
    }
    for s in series {
        if s.points.is_empty() {
            return Err(CoreError::EmptyMetric(format!("series '{}' is empty", s.label)));
        }
        if s.points.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(CoreError::NonFinite(format!("series '{}'", s.label)));
        }
    }

    let (x_lo, x_hi) = bounds(series, |p| p.0);
    let (y_lo, y_hi) = bounds(series, |p| p.1);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| MARGIN_TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
        MARGIN_LEFT + plot_w / 2.0,
        escape(title)
    );

    // Frame.
    let _ = writeln!(
        out,
        "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#444\"/>"
    );

    for i in 0..TICKS {
        let t = i as f64 / (TICKS - 1) as f64;
        let xv = x_lo + t * (x_hi - x_lo);
        let yv = y_lo + t * (y_hi - y_lo);
        let xp = px(xv);
        let yp = py(yv);
        let _ = writeln!(
            out,
            "<line x1=\"{xp:.2}\" y1=\"{:.2}\" x2=\"{xp:.2}\" y2=\"{:.2}\" stroke=\"#444\"/>",
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 5.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{xp:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            MARGIN_TOP + plot_h + 18.0,
            tick_text(xv)
        );
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{yp:.2}\" x2=\"{MARGIN_LEFT}\" y2=\"{yp:.2}\" stroke=\"#444\"/>",
            MARGIN_LEFT - 5.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            MARGIN_LEFT - 8.0,
            yp + 4.0,
            tick_text(yv)
        );
    }

    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
            pts.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                out,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                px(x),
                py(y)
            );
        }
        // Legend, stacked top-right inside the frame.
        let ly = MARGIN_TOP + 14.0 + 16.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT - 150.0;
        let _ = writeln!(
            out,
            "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            lx + 20.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }

    out.push_str("</svg>\n");
    Ok(out)
}
