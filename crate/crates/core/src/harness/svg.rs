use std::fmt::Write;

use super::{EigenRow, TraceSeries};
use crate::error::{Error, Result};
use crate::loadmodels::Family;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    pub title: String,
}

impl Default for PlotStyle {
    fn default() -> Self {
        PlotStyle {
            width: 720.0,
            height: 480.0,
            margin: 60.0,
            title: String::new(),
        }
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    st: PlotStyle,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let w = self.st.width - 2.0 * self.st.margin;
        self.st.margin + (x - self.x0) / (self.x1 - self.x0) * w
    }

    fn py(&self, y: f64) -> f64 {
        let h = self.st.height - 2.0 * self.st.margin;
        self.st.height - self.st.margin - (y - self.y0) / (self.y1 - self.y0) * h
    }

    fn open(&self, svg: &mut String, x_label: &str, y_label: &str) {
        let (w, h, m) = (self.st.width, self.st.height, self.st.margin);
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            w - 2.0 * m,
            h - 2.0 * m
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = self.x0 + f * (self.x1 - self.x0);
            let yv = self.y0 + f * (self.y1 - self.y0);
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                self.px(xv),
                h - m + 16.0,
                tick(xv)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                m - 6.0,
                self.py(yv) + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#, w / 2.0, h - 14.0);
        let _ = writeln!(
            svg,
            r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{y_label}</text>"#,
            h / 2.0,
            h / 2.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text>"#,
            w / 2.0,
            m / 2.0,
            escape(&self.st.title)
        );
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = 0.05 * lo.abs().max(1e-6);
        (lo - pad, hi + pad)
    }
}

/// Red for ZIP, blue for ZI-E, darker as `x` grows.
fn family_color(f: Family, x: f64) -> String {
    let light = (200.0 * (1.0 - x.clamp(0.0, 1.0))).round() as u8;
    match f {
        Family::Zip => format!("rgb(255,{light},{light})"),
        Family::ZiE => format!("rgb({light},{light},255)"),
    }
}

/// Complex-plane scatter. The imaginary axis is symmetric about zero, so a
/// conjugate pair lands mirror-imaged. Reference modes are drawn as squares.
pub fn emit_eigen_map(rows: &[EigenRow], style: &PlotStyle) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("no eigenvalues to plot".into()));
    }
    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.re), b.max(r.re)));
    let (x0, x1) = span(lo.min(0.0), hi.max(0.0));
    let ymax = rows.iter().fold(0.0f64, |m, r| m.max(r.im.abs())).max(1e-6) * 1.05;
    let fr = Frame {
        x0,
        x1,
        y0: -ymax,
        y1: ymax,
        st: style.clone(),
    };
    let mut svg = String::new();
    fr.open(&mut svg, "Re λ (1/s)", "Im λ (rad/s)");
    let _ = writeln!(
        svg,
        r##"<line x1="{:.2}" y1="{m:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
        fr.px(0.0),
        fr.px(0.0),
        style.height - style.margin,
        m = style.margin
    );
    for r in rows {
        let (cx, cy) = (fr.px(r.re), fr.py(r.im));
        if r.is_reference_mode {
            let _ = writeln!(
                svg,
                r#"<rect class="marker reference" x="{:.2}" y="{:.2}" width="8" height="8" fill="none" stroke="black" stroke-width="1.5"/>"#,
                cx - 4.0,
                cy - 4.0
            );
        } else {
            let _ = writeln!(
                svg,
                r#"<circle class="marker" cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{}" stroke="black" stroke-width="0.3"/>"#,
                family_color(r.family, r.x)
            );
        }
    }
    let mut ly = style.margin + 14.0;
    for f in [Family::Zip, Family::ZiE] {
        if rows.iter().any(|r| r.family == f) {
            let lx = style.width - style.margin - 110.0;
            let _ = writeln!(
                svg,
                r#"<circle cx="{lx:.2}" cy="{:.2}" r="4" fill="{}"/><text x="{:.2}" y="{:.2}">{} (darker = larger x)</text>"#,
                ly - 4.0,
                family_color(f, 1.0),
                lx + 8.0,
                ly,
                f.label()
            );
            ly += 16.0;
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

const MAX_POINTS: usize = 4000;

/// Time traces on shared axes with one legend entry per series. Diverged
/// runs are dashed and flagged in the legend.
pub fn emit_traces(series: &[TraceSeries], style: &PlotStyle) -> Result<String> {
    if series.iter().all(|s| s.t.is_empty()) {
        return Err(Error::EmptyInput("no samples to plot".into()));
    }
    let fold = |f: fn(&TraceSeries) -> &Vec<f64>| {
        series
            .iter()
            .flat_map(|s| f(s).iter().copied().filter(|v| v.is_finite()))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    };
    let (t0, t1) = fold(|s| &s.t);
    let (y0, y1) = fold(|s| &s.y);
    let (t0, t1) = if t1 > t0 { (t0, t1) } else { span(t0, t1) };
    let (y0, y1) = span(y0, y1);
    let fr = Frame {
        x0: t0,
        x1: t1,
        y0,
        y1,
        st: style.clone(),
    };
    let mut svg = String::new();
    fr.open(&mut svg, "t (s)", "magnitude (pu)");
    const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let stride = s.t.len().div_ceil(MAX_POINTS).max(1);
        let mut pts = String::new();
        let n = s.t.len().min(s.y.len());
        for j in (0..n).step_by(stride).chain(n.checked_sub(1).filter(|l| l % stride != 0)) {
            if s.y[j].is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", fr.px(s.t[j]), fr.py(s.y[j]));
            }
        }
        let dash = if s.diverged { r#" stroke-dasharray="6 3""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<polyline class="trace" points="{}" fill="none" stroke="{color}" stroke-width="1.2"{dash}/>"#,
            pts.trim_end()
        );
        let ly = style.margin + 14.0 + 16.0 * k as f64;
        let lx = style.width - style.margin - 150.0;
        let label = if s.diverged {
            format!("{} (diverged)", s.label)
        } else {
            s.label.clone()
        };
        let _ = writeln!(
            svg,
            r#"<line class="legend" x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.2}" y="{ly:.2}">{}</text>"#,
            ly - 4.0,
            lx + 20.0,
            ly - 4.0,
            lx + 26.0,
            escape(&label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
