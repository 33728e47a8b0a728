//! Minimal SVG line and scatter charts. Plots are conveniences; the CSV
//! files are the canonical outputs.

use std::fmt::Write as _;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 40.0;
const TITLE_H: f64 = 30.0;

pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

#[derive(Debug, Clone, Default)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Dots,
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub style: Style,
    pub series: Vec<Series>,
    /// Horizontal dashed guide lines.
    pub guides: Vec<f64>,
}

impl Panel {
    pub fn new(title: &str, x_label: &str, y_label: &str, style: Style) -> Self {
        Panel {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            style,
            series: Vec::new(),
            guides: Vec::new(),
        }
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn bounds(panel: &Panel) -> ([f64; 2], [f64; 2]) {
    let mut x = [f64::INFINITY, f64::NEG_INFINITY];
    let mut y = x;
    let pts = panel.series.iter().flat_map(|s| s.points.iter());
    for &(px, py) in pts.filter(|(a, b)| a.is_finite() && b.is_finite()) {
        x = [x[0].min(px), x[1].max(px)];
        y = [y[0].min(py), y[1].max(py)];
    }
    for &g in &panel.guides {
        y = [y[0].min(g), y[1].max(g)];
    }
    let fix = |r: [f64; 2]| {
        if !r[0].is_finite() {
            [-1.0, 1.0]
        } else if r[1] - r[0] <= f64::EPSILON * r[0].abs().max(1.0) {
            let pad = r[0].abs().max(1.0) * 0.5;
            [r[0] - pad, r[1] + pad]
        } else {
            let pad = 0.05 * (r[1] - r[0]);
            [r[0] - pad, r[1] + pad]
        }
    };
    (fix(x), fix(y))
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if (1e-2..1e4).contains(&v.abs()) {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn render_panel(out: &mut String, panel: &Panel, ox: f64, oy: f64) {
    let (xr, yr) = bounds(panel);
    let pw = PANEL_W - MARGIN_L - MARGIN_R;
    let ph = PANEL_H - MARGIN_T - MARGIN_B;
    let (x0, y0) = (ox + MARGIN_L, oy + MARGIN_T);
    let sx = |v: f64| x0 + (v - xr[0]) / (xr[1] - xr[0]) * pw;
    let sy = |v: f64| y0 + ph - (v - yr[0]) / (yr[1] - yr[0]) * ph;

    writeln!(out, r##"<rect x="{x0:.2}" y="{y0:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#444"/>"##).unwrap();
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{}</text>"#,
        x0 + pw / 2.0,
        oy + 18.0,
        esc(&panel.title)
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
        x0 + pw / 2.0,
        y0 + ph + 34.0,
        esc(&panel.x_label)
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
        ox + 14.0,
        y0 + ph / 2.0,
        ox + 14.0,
        y0 + ph / 2.0,
        esc(&panel.y_label)
    )
    .unwrap();
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = xr[0] + f * (xr[1] - xr[0]);
        let yv = yr[0] + f * (yr[1] - yr[0]);
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="middle">{}</text>"#,
            sx(xv),
            y0 + ph + 14.0,
            tick_label(xv)
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            sy(yv) + 3.0,
            tick_label(yv)
        )
        .unwrap();
    }
    for &g in &panel.guides {
        writeln!(
            out,
            r##"<line x1="{x0:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="5,4"/>"##,
            sy(g),
            x0 + pw,
            sy(g)
        )
        .unwrap();
    }
    for s in &panel.series {
        match panel.style {
            Style::Line => {
                // non-finite values split the curve
                let mut seg: Vec<String> = Vec::new();
                let flush = |seg: &mut Vec<String>, out: &mut String| {
                    if seg.len() > 1 {
                        writeln!(
                            out,
                            r#"<polyline fill="none" stroke="{}" stroke-width="1.4" points="{}"/>"#,
                            s.color,
                            seg.join(" ")
                        )
                        .unwrap();
                    }
                    seg.clear();
                };
                for &(px, py) in &s.points {
                    if px.is_finite() && py.is_finite() {
                        seg.push(format!("{:.2},{:.2}", sx(px), sy(py)));
                    } else {
                        flush(&mut seg, out);
                    }
                }
                flush(&mut seg, out);
            }
            Style::Dots => {
                writeln!(out, r#"<g fill="{}" fill-opacity="0.7">"#, s.color).unwrap();
                for &(px, py) in s
                    .points
                    .iter()
                    .filter(|(a, b)| a.is_finite() && b.is_finite())
                {
                    writeln!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="1.6"/>"#,
                        sx(px),
                        sy(py)
                    )
                    .unwrap();
                }
                out.push_str("</g>\n");
            }
        }
    }
    // legend
    let labelled: Vec<&Series> = panel
        .series
        .iter()
        .filter(|s| !s.label.is_empty())
        .collect();
    for (i, s) in labelled.iter().enumerate() {
        let ly = y0 + 12.0 + 13.0 * i as f64;
        writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="3" fill="{}"/><text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
            x0 + pw - 120.0,
            ly - 3.0,
            s.color,
            x0 + pw - 106.0,
            ly + 1.0,
            esc(&s.label)
        )
        .unwrap();
    }
}

/// Lays `panels` out on a grid with `cols` columns.
pub fn render(title: &str, panels: &[Panel], cols: usize) -> String {
    let cols = cols.max(1);
    let rows = panels.len().div_ceil(cols).max(1);
    let w = PANEL_W * cols as f64;
    let h = TITLE_H + PANEL_H * rows as f64;
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{:.2}" y="20" font-size="15" text-anchor="middle">{}</text>"#,
        w / 2.0,
        esc(title)
    )
    .unwrap();
    for (i, p) in panels.iter().enumerate() {
        let ox = PANEL_W * (i % cols) as f64;
        let oy = TITLE_H + PANEL_H * (i / cols) as f64;
        render_panel(&mut out, p, ox, oy);
    }
    out.push_str("</svg>\n");
    out
}
