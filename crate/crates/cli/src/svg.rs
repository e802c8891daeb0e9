//! Minimal static SVG emission: framed axes, polylines, filled bands, and
//! histogram cells. No external renderer; every plot is one self-contained
//! file.

use std::fmt::Write;

pub const BLUE: &str = "#1f6fb2";
pub const ORANGE: &str = "#c05a1f";
pub const GRAY: &str = "#444444";

pub struct Figure {
    width: f64,
    height: f64,
    body: String,
}

impl Figure {
    pub fn new(width: f64, height: f64) -> Self {
        let mut body = String::new();
        let _ = write!(
            body,
            "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>"
        );
        Figure {
            width,
            height,
            body,
        }
    }

    pub fn push(&mut self, element: &str) {
        self.body.push_str(element);
        self.body.push('\n');
    }

    pub fn comment(&mut self, text: &str) {
        // SVG comments may not contain "--".
        let safe = text.replace("--", "- -");
        self.push(&format!("<!-- {safe} -->"));
    }

    pub fn text(&mut self, x: f64, y: f64, s: &str, size: f64, anchor: &str) {
        self.push(&format!(
            "<text x=\"{x:.1}\" y=\"{y:.1}\" font-family=\"monospace\" font-size=\"{size}\" \
             fill=\"#222\" text-anchor=\"{anchor}\">{}</text>",
            escape(s)
        ));
    }

    /// Text rotated 90 degrees counterclockwise about its own anchor.
    pub fn vtext(&mut self, x: f64, y: f64, s: &str, size: f64) {
        self.push(&format!(
            "<text x=\"{x:.1}\" y=\"{y:.1}\" font-family=\"monospace\" font-size=\"{size}\" \
             fill=\"#222\" text-anchor=\"middle\" transform=\"rotate(-90 {x:.1} {y:.1})\">{}</text>",
            escape(s)
        ));
    }

    pub fn render(&self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
             viewBox=\"0 0 {w} {h}\">\n{body}</svg>\n",
            w = self.width,
            h = self.height,
            body = self.body
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One panel: a pixel rectangle mapped to data coordinates (y grows upward).
pub struct Axes {
    px: f64,
    py: f64,
    pw: f64,
    ph: f64,
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Axes {
    pub fn new(px: f64, py: f64, pw: f64, ph: f64, x: (f64, f64), y: (f64, f64)) -> Self {
        let (x_lo, x_hi) = pad_degenerate(x);
        let (y_lo, y_hi) = pad_degenerate(y);
        Axes {
            px,
            py,
            pw,
            ph,
            x_lo,
            x_hi,
            y_lo,
            y_hi,
        }
    }

    fn sx(&self, x: f64) -> f64 {
        self.px + (x - self.x_lo) / (self.x_hi - self.x_lo) * self.pw
    }

    fn sy(&self, y: f64) -> f64 {
        self.py + self.ph - (y - self.y_lo) / (self.y_hi - self.y_lo) * self.ph
    }

    /// Border, tick marks with labels, optional axis titles.
    pub fn frame(&self, fig: &mut Figure, title: &str, xlabel: &str, ylabel: &str) {
        fig.push(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" \
             fill=\"none\" stroke=\"#222\" stroke-width=\"1\"/>",
            self.px, self.py, self.pw, self.ph
        ));
        for i in 0..5 {
            let f = i as f64 / 4.0;
            let xv = self.x_lo + f * (self.x_hi - self.x_lo);
            let yv = self.y_lo + f * (self.y_hi - self.y_lo);
            let sx = self.sx(xv);
            let sy = self.sy(yv);
            fig.push(&format!(
                "<line x1=\"{sx:.1}\" y1=\"{:.1}\" x2=\"{sx:.1}\" y2=\"{:.1}\" stroke=\"#222\"/>",
                self.py + self.ph,
                self.py + self.ph + 4.0
            ));
            fig.text(sx, self.py + self.ph + 16.0, &fmt_tick(xv), 10.0, "middle");
            fig.push(&format!(
                "<line x1=\"{:.1}\" y1=\"{sy:.1}\" x2=\"{:.1}\" y2=\"{sy:.1}\" stroke=\"#222\"/>",
                self.px - 4.0,
                self.px
            ));
            fig.text(self.px - 7.0, sy + 3.5, &fmt_tick(yv), 10.0, "end");
        }
        if !title.is_empty() {
            fig.text(self.px + self.pw / 2.0, self.py - 8.0, title, 12.0, "middle");
        }
        if !xlabel.is_empty() {
            fig.text(
                self.px + self.pw / 2.0,
                self.py + self.ph + 32.0,
                xlabel,
                11.0,
                "middle",
            );
        }
        if !ylabel.is_empty() {
            fig.vtext(self.px - 46.0, self.py + self.ph / 2.0, ylabel, 11.0);
        }
    }

    pub fn polyline(
        &self,
        fig: &mut Figure,
        pts: &[(f64, f64)],
        color: &str,
        width: f64,
        dash: Option<&str>,
    ) {
        if pts.len() < 2 {
            return;
        }
        let mut d = String::new();
        for &(x, y) in pts {
            let _ = write!(d, "{:.2},{:.2} ", self.sx(x), self.sy(y));
        }
        let dash = dash.map_or(String::new(), |p| format!(" stroke-dasharray=\"{p}\""));
        fig.push(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" \
             stroke-width=\"{width}\"{dash}/>",
            d.trim_end()
        ));
    }

    /// Filled region between the lower and upper curves over shared x values.
    pub fn band(&self, fig: &mut Figure, xs: &[f64], lo: &[f64], hi: &[f64], color: &str) {
        if xs.len() < 2 {
            return;
        }
        let mut d = String::new();
        for (x, y) in xs.iter().zip(hi) {
            let _ = write!(d, "{:.2},{:.2} ", self.sx(*x), self.sy(*y));
        }
        for (x, y) in xs.iter().rev().zip(lo.iter().rev()) {
            let _ = write!(d, "{:.2},{:.2} ", self.sx(*x), self.sy(*y));
        }
        fig.push(&format!(
            "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.25\" stroke=\"none\"/>",
            d.trim_end()
        ));
    }

    /// One heatmap cell covering `[x0,x1] x [y0,y1]`, shaded by `weight` in
    /// [0, 1].
    pub fn cell(&self, fig: &mut Figure, x0: f64, x1: f64, y0: f64, y1: f64, weight: f64) {
        if weight <= 0.0 {
            return;
        }
        let sx = self.sx(x0);
        let sy = self.sy(y1);
        fig.push(&format!(
            "<rect x=\"{sx:.2}\" y=\"{sy:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
             fill=\"{BLUE}\" fill-opacity=\"{:.3}\"/>",
            self.sx(x1) - sx,
            self.sy(y0) - sy,
            weight.clamp(0.0, 1.0)
        ));
    }

    /// Vertical histogram bar from the panel floor.
    pub fn bar(&self, fig: &mut Figure, x0: f64, x1: f64, height: f64) {
        let sx = self.sx(x0);
        let sy = self.sy(height);
        fig.push(&format!(
            "<rect x=\"{sx:.2}\" y=\"{sy:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
             fill=\"{BLUE}\" fill-opacity=\"0.6\"/>",
            self.sx(x1) - sx,
            self.sy(self.y_lo.max(0.0)) - sy
        ));
    }
}

/// Finite min/max of a value stream, with a fallback unit interval when the
/// stream is empty or entirely non-finite.
pub fn data_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if lo > hi {
        (0.0, 1.0)
    } else {
        (lo, hi)
    }
}

/// Widen a range by 5% on each side; degenerate ranges get a unit pad.
pub fn padded(range: (f64, f64)) -> (f64, f64) {
    let (lo, hi) = range;
    let span = hi - lo;
    if span <= 0.0 {
        return pad_degenerate(range);
    }
    (lo - 0.05 * span, hi + 0.05 * span)
}

fn pad_degenerate((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 0.5 } else { lo.abs() * 0.1 + 1e-12 };
        (lo - pad, hi + pad)
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        return format!("{v:.1e}");
    }
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}
