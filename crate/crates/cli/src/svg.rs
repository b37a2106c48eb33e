//! Minimal SVG charts: line series, horizontal reference lines and grouped bars.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 48.0;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log10,
}

impl Scale {
    fn apply(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log10 => v.log10(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
    pub markers: bool,
}

#[derive(Debug, Clone)]
pub struct RefLine {
    pub label: String,
    pub color: &'static str,
    pub y: f64,
}

#[derive(Debug, Clone)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: Scale,
    pub series: Vec<Series>,
    pub ref_lines: Vec<RefLine>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * hi.abs().max(1.0) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Round numbers for `n` ticks over `[lo, hi]`.
fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let raw = (hi - lo) / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let stop = (hi / step).floor() as i64;
    (start..=stop).map(|i| i as f64 * step).collect()
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str, x_ticks: &[(f64, String)], y_ticks: &[f64]) {
    let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (top, bottom) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(out, r##"<path d="M{left},{top}V{bottom}H{right}" fill="none" stroke="#333"/>"##);
    for (x, label) in x_ticks {
        let px = f.px(*x);
        let _ = writeln!(out, r##"<line x1="{px:.2}" y1="{bottom}" x2="{px:.2}" y2="{}" stroke="#333"/>"##, bottom + 4.0);
        let _ = writeln!(out, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, bottom + 17.0, escape(label));
    }
    for &y in y_ticks {
        let py = f.py(y);
        let _ = writeln!(out, r##"<line x1="{}" y1="{py:.2}" x2="{left}" y2="{py:.2}" stroke="#333"/>"##, left - 4.0);
        let _ = writeln!(out, r##"<line x1="{left}" y1="{py:.2}" x2="{right}" y2="{py:.2}" stroke="#eee"/>"##);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, left - 7.0, py + 4.0, fmt_num(y));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (left + right) / 2.0, HEIGHT - 10.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (top + bottom) / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, entries: &[(&str, &str, bool)]) {
    let x = WIDTH - MARGIN_RIGHT + 12.0;
    for (i, (label, color, dashed)) in entries.iter().enumerate() {
        let y = MARGIN_TOP + 8.0 + 18.0 * i as f64;
        let dash = if *dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(out, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/>"#, x + 20.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, x + 26.0, y + 4.0, escape(label));
    }
}

impl LineChart {
    pub fn render(&self) -> String {
        let xs = self.series.iter().flat_map(|s| s.points.iter().map(|p| self.x_scale.apply(p.0)));
        let (xlo, xhi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let ys = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).chain(self.ref_lines.iter().map(|r| r.y));
        let (ylo, yhi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
        let (x0, x1) = padded(xlo, xhi);
        let (y0, y1) = padded(ylo, yhi);
        let f = Frame { x0, x1, y0, y1 };

        let x_ticks: Vec<(f64, String)> = match self.x_scale {
            Scale::Linear => ticks(x0, x1, 6).into_iter().map(|t| (t, fmt_num(t))).collect(),
            Scale::Log10 => (x0.ceil() as i64..=x1.floor() as i64).map(|e| (e as f64, format!("1e{e}"))).collect(),
        };
        let mut out = String::new();
        open(&mut out, &self.title);
        axes(&mut out, &f, &self.x_label, &self.y_label, &x_ticks, &ticks(y0, y1, 6));
        for r in &self.ref_lines {
            let py = f.py(r.y);
            let _ = writeln!(
                out,
                r#"<line x1="{MARGIN_LEFT}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="{}" stroke-dasharray="5,3"/>"#,
                WIDTH - MARGIN_RIGHT,
                r.color
            );
        }
        for s in &self.series {
            let pts: Vec<String> =
                s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", f.px(self.x_scale.apply(x)), f.py(y))).collect();
            let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#, pts.join(" "), s.color);
            if s.markers {
                for &(x, y) in &s.points {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                        f.px(self.x_scale.apply(x)),
                        f.py(y),
                        s.color
                    );
                }
            }
        }
        let entries: Vec<(&str, &str, bool)> = self
            .series
            .iter()
            .map(|s| (s.label.as_str(), s.color, false))
            .chain(self.ref_lines.iter().map(|r| (r.label.as_str(), r.color, true)))
            .collect();
        legend(&mut out, &entries);
        out.push_str("</svg>\n");
        out
    }
}

/// Groups of bars, one group per category, with an optional reference level per group.
#[derive(Debug, Clone)]
pub struct BarChart {
    pub title: String,
    pub y_label: String,
    /// `(category label, bar heights, reference level)`.
    pub groups: Vec<(String, Vec<f64>, Option<f64>)>,
}

impl BarChart {
    pub fn render(&self) -> String {
        let ymax = self
            .groups
            .iter()
            .flat_map(|(_, bars, r)| bars.iter().copied().chain(*r))
            .fold(0.0f64, f64::max)
            .max(1e-12);
        let f = Frame { x0: 0.0, x1: self.groups.len().max(1) as f64, y0: 0.0, y1: 1.1 * ymax };
        let mut out = String::new();
        open(&mut out, &self.title);
        let x_ticks: Vec<(f64, String)> =
            self.groups.iter().enumerate().map(|(i, (label, _, _))| (i as f64 + 0.5, label.clone())).collect();
        axes(&mut out, &f, "", &self.y_label, &x_ticks, &ticks(0.0, 1.1 * ymax, 5));
        for (i, (_, bars, reference)) in self.groups.iter().enumerate() {
            let slot = (f.px(1.0) - f.px(0.0)) * 0.8;
            let w = slot / bars.len().max(1) as f64;
            let left = f.px(i as f64 + 0.1);
            for (j, &h) in bars.iter().enumerate() {
                let (y, base) = (f.py(h), f.py(0.0));
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    left + j as f64 * w + 1.0,
                    (w - 2.0).max(1.0),
                    base - y,
                    color(i)
                );
            }
            if let Some(r) = reference {
                let py = f.py(*r);
                let _ = writeln!(
                    out,
                    r##"<line x1="{left:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#000" stroke-dasharray="4,2"/>"##,
                    left + slot
                );
            }
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_inside() {
        let t = ticks(0.03, 0.97, 5);
        assert_eq!(t, vec![0.2, 0.4, 0.6000000000000001, 0.8]);
        assert!(ticks(1.0, 2.0, 4).iter().all(|v| (1.0..=2.0).contains(v)));
    }

    #[test]
    fn line_chart_is_well_formed() {
        let chart = LineChart {
            title: "a < b".into(),
            x_label: "lambda".into(),
            y_label: "Q".into(),
            x_scale: Scale::Log10,
            series: vec![Series { label: "k=3".into(), color: color(0), points: vec![(10.0, 1.0), (1000.0, 2.0)], markers: true }],
            ref_lines: vec![RefLine { label: "threshold".into(), color: color(0), y: 3.0 }],
        };
        let svg = chart.render();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b"));
        assert!(svg.contains(">1e1<") && svg.contains(">1e3<"));
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn bar_chart_draws_every_bar() {
        let chart = BarChart {
            title: "peaks".into(),
            y_label: "mass".into(),
            groups: vec![("k=2".into(), vec![0.5, 0.5], Some(0.5)), ("k=3".into(), vec![0.33; 3], Some(1.0 / 3.0))],
        };
        let svg = chart.render();
        assert_eq!(svg.matches("<rect").count(), 1 + 5);
    }
}
