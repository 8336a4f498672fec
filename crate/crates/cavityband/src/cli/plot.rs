//! Minimal self-contained SVG line plots.
//!
//! One fixed-size canvas, automatic data ranges, a handful of axis ticks and
//! a legend. Series render as polylines, point markers, or independent
//! segments. The output is a plain SVG string with no external references,
//! identical for identical inputs.

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 560.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 44.0;
const MARGIN_B: f64 = 56.0;
const N_TICKS: usize = 5;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// How a series is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesStyle {
    /// A polyline through the points in order.
    Line,
    /// A circle marker per point.
    Dots,
    /// Consecutive point pairs drawn as independent segments.
    Segments,
}

/// One named data series.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: SeriesStyle,
}

impl Series {
    pub fn new(label: &str, points: Vec<(f64, f64)>, style: SeriesStyle) -> Self {
        Series {
            label: label.to_string(),
            points,
            style,
        }
    }
}

/// A complete plot: labels plus the series to draw.
#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

impl PlotSpec {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        PlotSpec {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            series: Vec::new(),
        }
    }
}

fn data_range(series: &[Series]) -> ((f64, f64), (f64, f64)) {
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                xs.0 = xs.0.min(x);
                xs.1 = xs.1.max(x);
                ys.0 = ys.0.min(y);
                ys.1 = ys.1.max(y);
            }
        }
    }
    (pad_range(xs), pad_range(ys))
}

fn pad_range((lo, hi): (f64, f64)) -> (f64, f64) {
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let mag = v.abs();
    if (1e-3..1e5).contains(&mag) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.3e}")
    }
}

fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders the plot to an SVG document string.
pub fn render_svg(spec: &PlotSpec) -> String {
    let ((x0, x1), (y0, y1)) = data_range(&spec.series);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| MARGIN_T + (y1 - y) / (y1 - y0) * plot_h;
    let coord = |v: f64| format!("{v:.2}");

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"26\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape_text(&spec.title)
    ));

    for i in 0..=N_TICKS {
        let t = i as f64 / N_TICKS as f64;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        let xp = sx(xv);
        let yp = sy(yv);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
            coord(xp),
            coord(MARGIN_T),
            coord(xp),
            coord(HEIGHT - MARGIN_B)
        ));
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
            coord(MARGIN_L),
            coord(yp),
            coord(WIDTH - MARGIN_R),
            coord(yp)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            coord(xp),
            coord(HEIGHT - MARGIN_B + 18.0),
            tick_label(xv)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
            coord(MARGIN_L - 6.0),
            coord(yp + 4.0),
            tick_label(yv)
        ));
    }

    svg.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333333\"/>\n",
        coord(MARGIN_L),
        coord(MARGIN_T),
        coord(plot_w),
        coord(plot_h)
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0,
        escape_text(&spec.x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {:.2})\">{}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        escape_text(&spec.y_label)
    ));

    for (i, series) in spec.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let finite: Vec<(f64, f64)> = series
            .points
            .iter()
            .copied()
            .filter(|&(x, y)| x.is_finite() && y.is_finite())
            .collect();
        match series.style {
            SeriesStyle::Line => {
                if finite.len() >= 2 {
                    let pts: Vec<String> = finite
                        .iter()
                        .map(|&(x, y)| format!("{},{}", coord(sx(x)), coord(sy(y))))
                        .collect();
                    svg.push_str(&format!(
                        "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\"/>\n",
                        pts.join(" "),
                        color
                    ));
                }
            }
            SeriesStyle::Dots => {
                for &(x, y) in &finite {
                    svg.push_str(&format!(
                        "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\"/>\n",
                        coord(sx(x)),
                        coord(sy(y)),
                        color
                    ));
                }
            }
            SeriesStyle::Segments => {
                for pair in finite.chunks_exact(2) {
                    svg.push_str(&format!(
                        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" \
                         stroke-width=\"1.4\"/>\n",
                        coord(sx(pair[0].0)),
                        coord(sy(pair[0].1)),
                        coord(sx(pair[1].0)),
                        coord(sy(pair[1].1)),
                        color
                    ));
                }
            }
        }
    }

    let legend_x = WIDTH - MARGIN_R - 170.0;
    for (i, series) in spec.series.iter().enumerate() {
        if series.label.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        let y = MARGIN_T + 16.0 + 18.0 * i as f64;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            coord(legend_x),
            coord(y - 10.0),
            color
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>\n",
            coord(legend_x + 18.0),
            coord(y),
            escape_text(&series.label)
        ));
    }

    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering_is_deterministic_and_self_contained() {
        let mut spec = PlotSpec::new("t", "x", "y");
        spec.series.push(Series::new(
            "s",
            vec![(0.0, 1.0), (1.0, 2.0), (2.0, 0.5)],
            SeriesStyle::Line,
        ));
        let a = render_svg(&spec);
        let b = render_svg(&spec);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(!a.contains("http://") || a.contains("http://www.w3.org/2000/svg"));
        assert!(!a.contains("href"));
    }

    #[test]
    fn degenerate_ranges_still_render() {
        let mut spec = PlotSpec::new("t", "x", "y");
        spec.series.push(Series::new(
            "s",
            vec![(1.0, 3.0), (1.0, 3.0)],
            SeriesStyle::Dots,
        ));
        let svg = render_svg(&spec);
        assert!(svg.contains("circle"));
        assert!(!svg.contains("NaN"));
    }
}
