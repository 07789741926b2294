//! Minimal self-contained SVG output.

use std::io::Write;

use crate::error::Result;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Points colored on a blue-to-red ramp by `value`.
pub struct ScatterPlot {
    pub title: String,
    pub points: Vec<(f64, f64)>,
    pub values: Vec<f64>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Frame {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = (f64::INFINITY, f64::NEG_INFINITY);
        for (px, py) in points.filter(|(a, b)| a.is_finite() && b.is_finite()) {
            x = (x.0.min(px), x.1.max(px));
            y = (y.0.min(py), y.1.max(py));
        }
        let pad = |(lo, hi): (f64, f64)| {
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        Frame { x: pad(x), y: pad(y) }
    }

    fn map(&self, (px, py): (f64, f64)) -> (f64, f64) {
        let sx = MARGIN + (px - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN);
        let sy = HEIGHT - MARGIN - (py - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN);
        (sx, sy)
    }

    fn axes(&self, w: &mut impl Write, title: &str, x_label: &str, y_label: &str) -> Result<()> {
        let (x0, y0) = (MARGIN, HEIGHT - MARGIN);
        writeln!(
            w,
            r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#,
            WIDTH - MARGIN
        )?;
        writeln!(w, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN}" stroke="black"/>"#)?;
        writeln!(
            w,
            r#"<text x="{}" y="30" text-anchor="middle" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        )?;
        writeln!(
            w,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 15.0,
            escape(x_label)
        )?;
        writeln!(
            w,
            r#"<text x="15" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 15 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(y_label)
        )?;
        for (value, anchor, x, y) in [
            (self.x.0, "start", x0, y0 + 15.0),
            (self.x.1, "end", WIDTH - MARGIN, y0 + 15.0),
            (self.y.0, "end", x0 - 5.0, y0),
            (self.y.1, "end", x0 - 5.0, MARGIN + 4.0),
        ] {
            writeln!(
                w,
                r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="10">{}</text>"#,
                tick(value)
            )?;
        }
        Ok(())
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(w: &mut impl Write) -> Result<()> {
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )?;
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    Ok(())
}

impl LinePlot {
    pub fn write(&self, mut w: impl Write) -> Result<()> {
        let frame = Frame::fit(self.series.iter().flat_map(|s| s.points.iter().copied()));
        header(&mut w)?;
        frame.axes(&mut w, &self.title, &self.x_label, &self.y_label)?;
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let path: Vec<String> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&p| {
                    let (x, y) = frame.map(p);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            writeln!(
                w,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            )?;
            writeln!(
                w,
                r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
                WIDTH - MARGIN - 150.0,
                MARGIN + 15.0 * (k as f64 + 1.0),
                escape(&s.label)
            )?;
        }
        writeln!(w, "</svg>")?;
        Ok(())
    }
}

impl ScatterPlot {
    pub fn write(&self, mut w: impl Write) -> Result<()> {
        let frame = Frame::fit(self.points.iter().copied());
        let (lo, hi) = self
            .values
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        header(&mut w)?;
        frame.axes(&mut w, &self.title, "x0", "x1")?;
        for (&p, &v) in self.points.iter().zip(&self.values) {
            let (x, y) = frame.map(p);
            let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            let red = (255.0 * t).round() as u8;
            let blue = 255 - red;
            writeln!(
                w,
                r##"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="#{red:02x}30{blue:02x}"/>"##
            )?;
        }
        writeln!(w, "</svg>")?;
        Ok(())
    }
}
