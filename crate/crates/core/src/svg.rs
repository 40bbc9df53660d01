//! Static SVG line and scatter plots.
//!
//! Output depends only on the input: coordinates are printed with a fixed
//! number of decimals and nothing (time, locale, randomness) leaks in.

use std::fmt::Write;

use crate::error::{Error, Result};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Series {
    /// A polyline. `x` defaults to `0, 1, 2, ...`.
    Line { name: String, x: Option<Vec<f64>>, y: Vec<f64> },
    /// Unconnected markers.
    Scatter { name: String, points: Vec<(f64, f64)> },
}

impl Series {
    pub fn line(name: impl Into<String>, y: Vec<f64>) -> Self {
        Series::Line {
            name: name.into(),
            x: None,
            y,
        }
    }

    pub fn line_xy(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Series::Line {
            name: name.into(),
            x: Some(x),
            y,
        }
    }

    pub fn scatter(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series::Scatter {
            name: name.into(),
            points,
        }
    }

    fn name(&self) -> &str {
        match self {
            Series::Line { name, .. } | Series::Scatter { name, .. } => name,
        }
    }

    fn points(&self) -> Vec<(f64, f64)> {
        match self {
            Series::Line { x, y, .. } => match x {
                Some(x) => x.iter().copied().zip(y.iter().copied()).collect(),
                None => y.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect(),
            },
            Series::Scatter { points, .. } => points.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: u32,
    pub height: u32,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            width: 640,
            height: 400,
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        // Flat data: centre it in a unit band.
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Renders the series into one SVG document.
pub fn emit_svg(series: &[Series], style: &PlotStyle) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points().is_empty()) {
        return Err(Error::EmptySeries);
    }
    let (w, h) = (style.width as f64, style.height as f64);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let all: Vec<(f64, f64)> = series.iter().flat_map(Series::points).collect();
    let (x0, x1) = range(all.iter().map(|p| p.0));
    let (y0, y1) = range(all.iter().map(|p| p.1));
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#,
        style.width, style.height, style.width, style.height
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{left:.2}" y="{top:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    if !style.title.is_empty() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            left + pw / 2.0,
            escape(&style.title)
        );
    }
    for (v, anchor, x, y) in [
        (x0, "start", left, top + ph + 16.0),
        (x1, "end", left + pw, top + ph + 16.0),
    ] {
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}">{v:.4e}</text>"#);
    }
    for (v, y) in [(y0, top + ph), (y1, top + 10.0)] {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{y:.2}" text-anchor="end">{v:.4e}</text>"#, left - 4.0);
    }
    if !style.x_label.is_empty() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            left + pw / 2.0,
            h - 12.0,
            escape(&style.x_label)
        );
    }
    if !style.y_label.is_empty() {
        let (cx, cy) = (16.0, top + ph / 2.0);
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{cy:.2}" text-anchor="middle" transform="rotate(-90 {cx:.2} {cy:.2})">{}</text>"#,
            escape(&style.y_label)
        );
    }

    for (k, series) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> = series.points().into_iter().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
        let _ = writeln!(s, r#"<g class="series" data-name="{}">"#, escape(series.name()));
        match series {
            Series::Line { .. } => {
                let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                    coords.join(" ")
                );
            }
            Series::Scatter { .. } => {
                for &(x, y) in &pts {
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{colour}"/>"#, sx(x), sy(y));
                }
            }
        }
        let _ = writeln!(s, "</g>");
        let ly = top + 10.0 + 18.0 * k as f64;
        let lx = left + pw + 12.0;
        match series {
            Series::Line { .. } => {
                let _ = writeln!(
                    s,
                    r#"<line class="legend" x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"/>"#,
                    lx + 16.0
                );
            }
            Series::Scatter { .. } => {
                let _ = writeln!(
                    s,
                    r#"<circle class="legend" cx="{:.2}" cy="{ly:.2}" r="4" fill="{colour}"/>"#,
                    lx + 8.0
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 22.0,
            ly + 4.0,
            escape(series.name())
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_is_a_horizontal_polyline() {
        let svg = emit_svg(&[Series::line("flat", vec![2.0; 5])], &PlotStyle::default()).unwrap();
        let start = svg.find("points=\"").unwrap() + 8;
        let pts = &svg[start..start + svg[start..].find('"').unwrap()];
        let ys: Vec<&str> = pts.split(' ').map(|p| p.split(',').nth(1).unwrap()).collect();
        assert_eq!(ys.len(), 5);
        assert!(ys.iter().all(|y| *y == ys[0]));
    }

    #[test]
    fn two_groups_get_distinct_markers_and_legend() {
        let svg = emit_svg(
            &[
                Series::scatter("level a", vec![(1.0, 2.0), (1.5, 2.5)]),
                Series::scatter("level b", vec![(-1.0, -2.0)]),
            ],
            &PlotStyle::default(),
        )
        .unwrap();
        assert_eq!(svg.matches(r#"class="series""#).count(), 2);
        assert!(svg.contains(PALETTE[0]) && svg.contains(PALETTE[1]));
        assert!(svg.contains(">level a</text>") && svg.contains(">level b</text>"));
    }

    #[test]
    fn output_is_deterministic() {
        let input = [Series::line("s", (0..50).map(|i| (i as f64).sin()).collect())];
        let style = PlotStyle {
            title: "a < b".into(),
            ..PlotStyle::default()
        };
        assert_eq!(emit_svg(&input, &style).unwrap(), emit_svg(&input, &style).unwrap());
        assert!(emit_svg(&input, &style).unwrap().contains("a &lt; b"));
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(emit_svg(&[], &PlotStyle::default()), Err(Error::EmptySeries)));
        assert!(matches!(
            emit_svg(&[Series::line("e", vec![])], &PlotStyle::default()),
            Err(Error::EmptySeries)
        ));
    }
}
