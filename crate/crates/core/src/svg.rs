//! Minimal SVG charts: axes with ticks, polylines, and scatter points.
//!
//! Output is a pure function of the input, so identical data renders to
//! identical bytes.

use std::fmt::Write;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Points,
    Dashed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
    /// Palette color by series index when `None`.
    pub color: Option<String>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, mark: Mark) -> Self {
        Series { label: label.into(), points, mark, color: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: f64,
    pub height: f64,
    pub series: Vec<Series>,
    /// Draws the reference line `y = x` across the visible range.
    pub identity_line: bool,
}

impl Plot {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Plot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            width: 640.0,
            height: 420.0,
            series: Vec::new(),
            identity_line: false,
        }
    }

    pub fn with_series(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let pts = self.series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if x0 > x1 {
            return ((0.0, 1.0), (0.0, 1.0));
        }
        (pad(x0, x1), pad(y0, y1))
    }

    pub fn render(&self) -> String {
        let (w, h) = (self.width, self.height);
        let (ml, mr, mt, mb) = (70.0, 150.0, 36.0, 50.0);
        let (pw, ph) = (w - ml - mr, h - mt - mb);
        let ((x0, x1), (y0, y1)) = self.bounds();
        let xt = ticks(x0, x1, 6);
        let yt = ticks(y0, y1, 6);
        let (x0, x1) = (x0.min(xt[0]), x1.max(*xt.last().expect("ticks")));
        let (y0, y1) = (y0.min(yt[0]), y1.max(*yt.last().expect("ticks")));
        let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

        let mut o = String::new();
        let _ = writeln!(
            o,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(o, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            o,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            ml + pw / 2.0,
            esc(&self.title)
        );
        for &t in &xt {
            let x = sx(t);
            let _ = writeln!(o, r##"<line x1="{x:.2}" y1="{mt}" x2="{x:.2}" y2="{:.2}" stroke="#eee"/>"##, mt + ph);
            let _ = writeln!(
                o,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                mt + ph + 16.0,
                fmt_tick(t)
            );
        }
        for &t in &yt {
            let y = sy(t);
            let _ = writeln!(o, r##"<line x1="{ml}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#eee"/>"##, ml + pw);
            let _ =
                writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, ml - 6.0, y + 4.0, fmt_tick(t));
        }
        let _ = writeln!(o, r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        let _ = writeln!(
            o,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            ml + pw / 2.0,
            h - 12.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            o,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            mt + ph / 2.0,
            mt + ph / 2.0,
            esc(&self.y_label)
        );
        if self.identity_line {
            let (a, b) = (x0.max(y0), x1.min(y1));
            if a < b {
                let _ = writeln!(
                    o,
                    r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
                    sx(a),
                    sy(a),
                    sx(b),
                    sy(b)
                );
            }
        }
        for (i, s) in self.series.iter().enumerate() {
            let color = s.color.clone().unwrap_or_else(|| PALETTE[i % PALETTE.len()].to_string());
            let pts: Vec<(f64, f64)> =
                s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).map(|&(x, y)| (sx(x), sy(y))).collect();
            match s.mark {
                Mark::Points => {
                    for (x, y) in &pts {
                        let _ = writeln!(o, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
                    }
                }
                Mark::Line | Mark::Dashed => {
                    let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    let dash = if s.mark == Mark::Dashed { r#" stroke-dasharray="6 4""# } else { "" };
                    let _ = writeln!(
                        o,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                        path.join(" ")
                    );
                }
            }
            let ly = mt + 10.0 + 18.0 * i as f64;
            let lx = ml + pw + 12.0;
            let _ = writeln!(o, r#"<rect x="{lx:.2}" y="{:.2}" width="12" height="12" fill="{color}"/>"#, ly - 9.0);
            let _ = writeln!(o, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 18.0, esc(&s.label));
        }
        o.push_str("</svg>\n");
        o
    }
}

fn pad(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let m = 0.04 * (hi - lo);
        (lo - m, hi + m)
    } else {
        let m = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - m, hi + m)
    }
}

/// Round tick values covering `[lo, hi]` with spacing 1, 2 or 5 × 10ⁿ.
pub fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let start = (lo / step).floor() as i64;
    let end = (hi / step).ceil() as i64;
    (start..=end).map(|i| i as f64 * step).collect()
}

fn fmt_tick(t: f64) -> String {
    if t == 0.0 {
        return "0".into();
    }
    let a = t.abs();
    if !(1e-3..1e5).contains(&a) {
        return format!("{t:.1e}");
    }
    let s = format!("{t:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_range() {
        let t = ticks(-0.37, 2.9, 6);
        assert!(t[0] <= -0.37 && *t.last().unwrap() >= 2.9);
        assert_eq!(t, vec![-1.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(ticks(0.0, 1.0, 5), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
    }

    #[test]
    fn render_is_deterministic_and_escaped() {
        let p = Plot::new("a < b", "x", "y")
            .with_series(Series::new("line", vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN)], Mark::Line))
            .with_series(Series::new("pts", vec![(0.5, 0.5)], Mark::Points));
        let a = p.render();
        assert_eq!(a, p.render());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("a &lt; b"));
        assert!(!a.contains("NaN"));
        assert_eq!(a.matches("<circle").count(), 1);
    }

    #[test]
    fn empty_plot_renders() {
        assert!(Plot::new("t", "x", "y").render().contains("</svg>"));
    }
}
