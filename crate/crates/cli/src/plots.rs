//! Deterministic SVG charts: fixed 640x480 canvas, fixed tick layout, all
//! coordinates printed with fixed precision so identical inputs produce
//! byte-identical files.

use std::path::Path;

use anyhow::{bail, Context, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 50.0;

struct Canvas {
    body: String,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

impl Canvas {
    fn new(title: &str, x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Canvas {
        let mut body = String::new();
        body.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
        ));
        body.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        body.push_str(&format!(
            "<text x=\"{}\" y=\"20\" font-family=\"monospace\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n",
            WIDTH / 2.0
        ));
        Canvas {
            body,
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }

    fn axes(&mut self, x_label: &str, y_label: &str) {
        let x0 = MARGIN_LEFT;
        let x1 = WIDTH - MARGIN_RIGHT;
        let y0 = HEIGHT - MARGIN_BOTTOM;
        let y1 = MARGIN_TOP;
        self.body.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
        ));
        // five fixed ticks per axis
        for i in 0..=5 {
            let fx = self.x_min + (self.x_max - self.x_min) * i as f64 / 5.0;
            let fy = self.y_min + (self.y_max - self.y_min) * i as f64 / 5.0;
            let px = self.px(fx);
            let py = self.py(fy);
            self.body.push_str(&format!(
                "<line x1=\"{}\" y1=\"{y0}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
                fmt(px),
                fmt(px),
                y0 + 5.0
            ));
            self.body.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
                fmt(px),
                y0 + 18.0,
                fmt(fx)
            ));
            self.body.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{x0}\" y2=\"{}\" stroke=\"black\"/>\n",
                x0 - 5.0,
                fmt(py),
                fmt(py)
            ));
            self.body.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
                x0 - 8.0,
                fmt(py + 3.0),
                fmt(fy)
            ));
        }
        self.body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>\n",
            (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
            HEIGHT - 12.0
        ));
        self.body.push_str(&format!(
            "<text x=\"14\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{y_label}</text>\n",
            (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
            (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0
        ));
    }

    fn polyline(&mut self, points: &[(f64, f64)], color: &str, class: &str) {
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt(self.px(x)), fmt(self.py(y))))
            .collect();
        self.body.push_str(&format!(
            "<polyline class=\"{class}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
    }

    fn bar(&mut self, x_lo: f64, x_hi: f64, y: f64, color: &str) {
        let px0 = self.px(x_lo);
        let px1 = self.px(x_hi);
        let py = self.py(y);
        let base = self.py(self.y_min);
        self.body.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\" fill-opacity=\"0.6\" stroke=\"black\" stroke-width=\"0.5\"/>\n",
            fmt(px0),
            fmt(py),
            fmt(px1 - px0),
            fmt(base - py)
        ));
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

/// Utility-coverage curve with the oracle bound overlaid.
pub fn curve_svg(coverage: &[f64], utility: &[f64], bound: &[f64], title: &str) -> Result<String> {
    if coverage.is_empty() {
        bail!("refusing to plot an empty curve");
    }
    let y_min = utility
        .iter()
        .chain(bound)
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .min(0.0);
    let mut canvas = Canvas::new(title, 0.0, 1.0, y_min, 1.0);
    canvas.axes("coverage", "utility");
    let curve_pts: Vec<(f64, f64)> = coverage.iter().cloned().zip(utility.iter().cloned()).collect();
    let bound_pts: Vec<(f64, f64)> = coverage.iter().cloned().zip(bound.iter().cloned()).collect();
    canvas.polyline(&bound_pts, "#888888", "bound");
    canvas.polyline(&curve_pts, "#1f77b4", "curve");
    Ok(canvas.finish())
}

/// Reliability diagram: per-bin accuracy bars against the diagonal.
pub fn reliability_svg(points: &[(f64, f64, usize)], bins: usize, title: &str) -> Result<String> {
    if bins == 0 {
        bail!("refusing to plot a reliability diagram with zero bins");
    }
    let mut canvas = Canvas::new(title, 0.0, 1.0, 0.0, 1.0);
    canvas.axes("confidence", "accuracy");
    canvas.polyline(&[(0.0, 0.0), (1.0, 1.0)], "#888888", "diagonal");
    for &(mean_conf, accuracy, bin) in points {
        let lo = bin as f64 / bins as f64;
        let hi = (bin + 1) as f64 / bins as f64;
        canvas.bar(lo, hi, accuracy, "#1f77b4");
        let px = canvas.px(mean_conf);
        let py = canvas.py(accuracy);
        canvas.body.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"#d62728\"/>\n",
            fmt(px),
            fmt(py)
        ));
    }
    Ok(canvas.finish())
}

/// Histogram of confidence scores on [lo, hi].
pub fn histogram_svg(values: &[f64], bins: usize, title: &str) -> Result<String> {
    if values.is_empty() || bins == 0 {
        bail!("refusing to plot an empty histogram");
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo == hi { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let peak = counts.iter().cloned().max().unwrap_or(1).max(1) as f64;
    let mut canvas = Canvas::new(title, lo, hi, 0.0, peak / values.len() as f64);
    canvas.axes("score", "fraction");
    for (b, &count) in counts.iter().enumerate() {
        let x_lo = lo + (hi - lo) * b as f64 / bins as f64;
        let x_hi = lo + (hi - lo) * (b + 1) as f64 / bins as f64;
        canvas.bar(x_lo, x_hi, count as f64 / values.len() as f64, "#2ca02c");
    }
    Ok(canvas.finish())
}

pub fn write_svg(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_inputs_are_refused() {
        assert!(curve_svg(&[], &[], &[], "t").is_err());
        assert!(histogram_svg(&[], 10, "t").is_err());
        assert!(reliability_svg(&[], 0, "t").is_err());
    }

    #[test]
    fn same_input_same_bytes() {
        let cov = [0.5, 1.0];
        let util = [1.0, 0.8];
        let bound = [1.0, 0.9];
        let a = curve_svg(&cov, &util, &bound, "t").unwrap();
        let b = curve_svg(&cov, &util, &bound, "t").unwrap();
        assert_eq!(a, b);
        assert!(a.contains("class=\"curve\"") && a.contains("class=\"bound\""));
    }
}
