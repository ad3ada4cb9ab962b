//! Minimal self-contained SVG plotting: line series, scatter points, axes,
//! reference lines, and a legend. No dependencies, fully deterministic
//! output — the same data always renders to the same bytes, so plots can be
//! diffed like any other artifact.
//!
//! Non-finite coordinates are skipped rather than propagated into the
//! document, and degenerate ranges (a single value on an axis) are padded
//! symmetrically so every finite input renders.

use std::fmt::Write as _;

use crate::metrics::format_significant;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;
const TICK_COUNT: usize = 5;

/// Fixed palette cycled across series.
const PALETTE: &[&str] = &[
    "#1f6fb4", "#d0392b", "#2e8b57", "#8a56b0", "#c77f2c", "#4b7f8c",
];

/// One named line or point cloud.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
        }
    }
}

/// A horizontal reference line with a small label.
#[derive(Debug, Clone)]
pub struct ReferenceLine {
    pub y: f64,
    pub label: String,
}

/// How series are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotStyle {
    Lines,
    Points,
}

/// Everything one chart needs.
#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub style: PlotStyle,
    pub series: Vec<Series>,
    pub reference_lines: Vec<ReferenceLine>,
}

impl Plot {
    pub fn new(
        title: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
        style: PlotStyle,
    ) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            style,
            series: Vec::new(),
            reference_lines: Vec::new(),
        }
    }

    pub fn with_series(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }

    pub fn with_reference_line(mut self, y: f64, label: impl Into<String>) -> Self {
        self.reference_lines.push(ReferenceLine {
            y,
            label: label.into(),
        });
        self
    }

    /// Render the chart to a complete SVG document.
    pub fn render(&self) -> String {
        let finite: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        let (x_min, x_max) = padded_range(finite.iter().map(|p| p.0), 0.0, 1.0);
        let mut y_values: Vec<f64> = finite.iter().map(|p| p.1).collect();
        y_values.extend(self.reference_lines.iter().map(|line| line.y));
        let (y_min, y_max) = padded_range(y_values.into_iter(), 0.0, 1.0);

        let to_px = |x: f64, y: f64| -> (f64, f64) {
            let px = MARGIN_LEFT + (x - x_min) / (x_max - x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT);
            let py = HEIGHT - MARGIN_BOTTOM
                - (y - y_min) / (y_max - y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);
            (px, py)
        };

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
             font-family=\"monospace\" font-size=\"12\">"
        );
        let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
            WIDTH / 2.0,
            escape(&self.title)
        );

        // Axes.
        let (x0, y0) = (MARGIN_LEFT, HEIGHT - MARGIN_BOTTOM);
        let _ = writeln!(
            svg,
            "<line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{:.1}\" y2=\"{y0:.1}\" stroke=\"black\"/>",
            WIDTH - MARGIN_RIGHT
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x0:.1}\" y2=\"{MARGIN_TOP:.1}\" \
             stroke=\"black\"/>"
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" \
             transform=\"rotate(-90 16 {:.1})\">{}</text>",
            (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
            (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
            escape(&self.y_label)
        );

        // Ticks and grid.
        for i in 0..=TICK_COUNT {
            let fraction = i as f64 / TICK_COUNT as f64;
            let x = x_min + fraction * (x_max - x_min);
            let y = y_min + fraction * (y_max - y_min);
            let (px, _) = to_px(x, y_min);
            let (_, py) = to_px(x_min, y);
            let _ = writeln!(
                svg,
                "<line x1=\"{px:.1}\" y1=\"{y0:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" \
                 stroke=\"black\"/>",
                y0 + 5.0
            );
            let _ = writeln!(
                svg,
                "<text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
                y0 + 18.0,
                tick_label(x)
            );
            let _ = writeln!(
                svg,
                "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{x0:.1}\" y2=\"{py:.1}\" \
                 stroke=\"black\"/>",
                x0 - 5.0
            );
            let _ = writeln!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
                x0 - 8.0,
                py + 4.0,
                tick_label(y)
            );
            let _ = writeln!(
                svg,
                "<line x1=\"{x0:.1}\" y1=\"{py:.1}\" x2=\"{:.1}\" y2=\"{py:.1}\" \
                 stroke=\"#dddddd\" stroke-width=\"0.5\"/>",
                WIDTH - MARGIN_RIGHT
            );
        }

        // Reference lines.
        for line in &self.reference_lines {
            if !line.y.is_finite() || line.y < y_min || line.y > y_max {
                continue;
            }
            let (_, py) = to_px(x_min, line.y);
            let _ = writeln!(
                svg,
                "<line x1=\"{x0:.1}\" y1=\"{py:.1}\" x2=\"{:.1}\" y2=\"{py:.1}\" \
                 stroke=\"#888888\" stroke-dasharray=\"6 4\"/>",
                WIDTH - MARGIN_RIGHT
            );
            let _ = writeln!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" fill=\"#555555\">{}</text>",
                WIDTH - MARGIN_RIGHT - 4.0,
                py - 4.0,
                escape(&line.label)
            );
        }

        // Series.
        for (index, series) in self.series.iter().enumerate() {
            let color = PALETTE[index % PALETTE.len()];
            let visible: Vec<(f64, f64)> = series
                .points
                .iter()
                .copied()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| to_px(x, y))
                .collect();
            match self.style {
                PlotStyle::Lines => {
                    if visible.len() >= 2 {
                        let mut coords = String::new();
                        for (px, py) in &visible {
                            let _ = write!(coords, "{px:.2},{py:.2} ");
                        }
                        let _ = writeln!(
                            svg,
                            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" \
                             stroke-width=\"1.5\"/>",
                            coords.trim_end()
                        );
                    } else if visible.len() == 1 {
                        let (px, py) = visible[0];
                        let _ = writeln!(
                            svg,
                            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3\" fill=\"{color}\"/>"
                        );
                    }
                }
                PlotStyle::Points => {
                    for (px, py) in &visible {
                        let _ = writeln!(
                            svg,
                            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2.5\" fill=\"{color}\" \
                             fill-opacity=\"0.6\"/>"
                        );
                    }
                }
            }
            // Legend entry.
            let legend_y = MARGIN_TOP + 14.0 * index as f64 + 4.0;
            let _ = writeln!(
                svg,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{color}\"/>",
                MARGIN_LEFT + 10.0,
                legend_y - 9.0
            );
            let _ = writeln!(
                svg,
                "<text x=\"{:.1}\" y=\"{legend_y:.1}\">{}</text>",
                MARGIN_LEFT + 26.0,
                escape(&series.label)
            );
        }

        svg.push_str("</svg>\n");
        svg
    }
}

/// Tight range over finite values, padded 5% each side; falls back to the
/// given default when empty, and pads a degenerate (single-value) range by
/// one unit or 10% of its magnitude.
fn padded_range(
    values: impl Iterator<Item = f64>,
    default_min: f64,
    default_max: f64,
) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values.filter(|v| v.is_finite()) {
        min = min.min(v);
        max = max.max(v);
    }
    if min > max {
        return (default_min, default_max);
    }
    if min == max {
        let pad = if min == 0.0 { 1.0 } else { min.abs() * 0.1 };
        return (min - pad, max + pad);
    }
    let pad = (max - min) * 0.05;
    (min - pad, max + pad)
}

fn tick_label(x: f64) -> String {
    // Shorten long fractions for axis readability; ticks are labels, not
    // data, so 4 significant digits suffice.
    let full = format_significant(x);
    if full.len() <= 8 {
        return full;
    }
    let shortened = format!("{x:.3e}");
    match shortened.split_once('e') {
        Some((mantissa, exponent)) => {
            let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
            format!("{mantissa}e{exponent}")
        }
        None => shortened,
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
