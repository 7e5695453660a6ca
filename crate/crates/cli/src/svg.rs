//! Minimal SVG charts: line plots with an optional error band, and grouped
//! bar charts. Output is plain text built in a fixed order, so identical
//! data gives identical bytes.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 360.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Half-width of the shaded band around `y`.
    pub band: Option<Vec<f64>>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

fn open(out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 15.0, escape(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

fn axes(out: &mut String, f: &Frame) {
    let (xa, xb, ya, yb) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(out, r#"<path d="M{xa} {ya} L{xa} {yb} L{xb} {yb}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let v = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let y = f.py(v);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{:.3}</text>"#, LEFT - 5.0, y + 4.0, v);
    }
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 14.0 * i as f64;
        let x = W - RIGHT - 150.0;
        let _ = writeln!(out, r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/>"#, y - 9.0, PALETTE[i % PALETTE.len()]);
        let _ = writeln!(out, r#"<text x="{}" y="{y}">{}</text>"#, x + 14.0, escape(name));
    }
}

pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let xs = series.iter().flat_map(|s| s.x.iter().copied());
    let (x0, x1) = span(xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max));
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for (i, y) in s.y.iter().enumerate() {
            let b = s.band.as_ref().map_or(0.0, |b| b[i]);
            lo = lo.min(y - b);
            hi = hi.max(y + b);
        }
    }
    let (y0, y1) = span(lo, hi);
    let f = Frame { x0, x1, y0, y1 };
    let mut out = String::new();
    open(&mut out, title, xlabel, ylabel);
    axes(&mut out, &f);
    for i in 0..=4 {
        let v = x0 + (x1 - x0) * i as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.2}" y="{}" text-anchor="middle">{:.3}</text>"#, f.px(v), H - BOTTOM + 16.0, v);
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if let Some(b) = &s.band {
            let mut d = String::new();
            for (j, (x, y)) in s.x.iter().zip(&s.y).enumerate() {
                let _ = write!(d, "{}{:.2} {:.2} ", if j == 0 { "M" } else { "L" }, f.px(*x), f.py(y + b[j]));
            }
            for (j, (x, y)) in s.x.iter().zip(&s.y).enumerate().rev() {
                let _ = write!(d, "L{:.2} {:.2} ", f.px(*x), f.py(y - b[j]));
            }
            let _ = writeln!(out, r#"<path d="{}Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, d);
        }
        let mut d = String::new();
        for (j, (x, y)) in s.x.iter().zip(&s.y).enumerate() {
            let _ = write!(d, "{}{:.2} {:.2} ", if j == 0 { "M" } else { "L" }, f.px(*x), f.py(*y));
        }
        let _ = writeln!(out, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.trim_end());
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// Bars grouped by category; `None` values are left out (drawn as a gap).
pub fn bar_chart(title: &str, ylabel: &str, categories: &[String], groups: &[(String, Vec<Option<f64>>)]) -> String {
    let values = groups.iter().flat_map(|g| g.1.iter().flatten().copied());
    let lo = values.clone().fold(0.0_f64, f64::min);
    let hi = values.fold(0.0_f64, f64::max);
    let (y0, y1) = span(lo, hi);
    let f = Frame { x0: 0.0, x1: categories.len().max(1) as f64, y0, y1 };
    let mut out = String::new();
    open(&mut out, title, "", ylabel);
    axes(&mut out, &f);
    let slot = (W - LEFT - RIGHT) / categories.len().max(1) as f64;
    let bar = slot * 0.8 / groups.len().max(1) as f64;
    for (c, name) in categories.iter().enumerate() {
        let x = LEFT + slot * (c as f64 + 0.5);
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{}" text-anchor="end" transform="rotate(-45 {x:.2} {})">{}</text>"#,
            H - BOTTOM + 14.0,
            H - BOTTOM + 14.0,
            escape(name)
        );
        for (g, (_, vals)) in groups.iter().enumerate() {
            let Some(v) = vals.get(c).copied().flatten() else { continue };
            let left = LEFT + slot * c as f64 + slot * 0.1 + bar * g as f64;
            let (top, bottom) = (f.py(v.max(0.0)), f.py(v.min(0.0)));
            let _ = writeln!(
                out,
                r#"<rect x="{left:.2}" y="{top:.2}" width="{bar:.2}" height="{:.2}" fill="{}"/>"#,
                bottom - top,
                PALETTE[g % PALETTE.len()]
            );
        }
    }
    let names: Vec<&str> = groups.iter().map(|g| g.0.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}
