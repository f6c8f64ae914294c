//! Static SVG rendering of influence curves and the PC1 scatter.
//!
//! Each observation curve is a single `<path>`; axes, reference lines and
//! the regression lines use `<line>`, so a curve count is a path count.

use std::fmt::Write as _;

use crate::weighted::InfluenceCurve;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 56.0;

const FAINT: &str = "#9a9a9a";
const HIGHLIGHT: [&str; 6] = ["#c0392b", "#1f5fa8", "#1e8449", "#8e44ad", "#d35400", "#117a8b"];

/// Which quantity a curve plot shows on the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveScale {
    Lambda,
    Df,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Round-number tick positions covering [lo, hi].
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if !(1e-3..1e5).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let pad = |a: f64, b: f64| {
            if b > a {
                let m = 0.04 * (b - a);
                (a - m, b + m)
            } else {
                let m = a.abs().max(1.0) * 0.5;
                (a - m, b + m)
            }
        };
        let (y0, y1) = pad(y0, y1);
        let (x0, x1) = if x1 > x0 { (x0, x1) } else { pad(x0, x1) };
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn open_svg(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="Helvetica, Arial, sans-serif" font-size="12">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (top, bottom) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(
        out,
        r##"<g stroke="#333" stroke-width="1"><line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}"/></g>"##
    );
    out.push_str("<g fill=\"#333\">\n");
    for t in ticks(f.x0, f.x1, 8) {
        let x = f.px(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{bottom}" x2="{x:.2}" y2="{}" stroke="#333"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
            bottom + 5.0,
            bottom + 19.0,
            fmt_tick(t)
        );
    }
    for t in ticks(f.y0, f.y1, 6) {
        let y = f.py(t);
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="#333"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            left - 5.0,
            left - 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>
<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>
</g>"#,
        (left + right) / 2.0,
        HEIGHT - 14.0,
        escape(xlabel),
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(ylabel)
    );
}

fn path_data(f: &Frame, xs: &[f64], ys: &[f64]) -> String {
    let mut d = String::with_capacity(xs.len() * 16);
    for (k, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let _ = write!(d, "{}{:.2},{:.2}", if k == 0 { "M" } else { " L" }, f.px(x), f.py(y));
    }
    d
}

/// One curve per observation against the weight factor t, with the
/// highlighted observations (0-based) drawn bold and labelled, and a
/// vertical line at t = 1.
pub fn curves_svg(curves: &[InfluenceCurve], highlights: &[usize], scale: CurveScale, title: &str) -> String {
    let value = |c: &InfluenceCurve| -> Vec<f64> {
        match scale {
            CurveScale::Lambda => c.lambda_hat.clone(),
            CurveScale::Df => c.df_hat.clone(),
        }
    };
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for c in curves {
        for (&t, &v) in c.factors.iter().zip(value(c).iter()) {
            xmin = xmin.min(t);
            xmax = xmax.max(t);
            if v.is_finite() {
                ymin = ymin.min(v);
                ymax = ymax.max(v);
            }
        }
    }
    if !xmin.is_finite() {
        (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
    }
    let frame = Frame::new(xmin, xmax, ymin, ymax);
    let mut out = String::new();
    open_svg(&mut out, title);
    let ylabel = match scale {
        CurveScale::Lambda => "optimal penalty",
        CurveScale::Df => "effective degrees of freedom",
    };
    axes(&mut out, &frame, "weight relative to 1/n", ylabel);

    let x1 = frame.px(1.0);
    let _ = writeln!(
        out,
        r##"<line class="reference" x1="{x1:.2}" y1="{MARGIN_TOP}" x2="{x1:.2}" y2="{}" stroke="#555" stroke-width="1"/>"##,
        HEIGHT - MARGIN_BOTTOM
    );

    out.push_str("<g fill=\"none\">\n");
    for c in curves.iter().filter(|c| !highlights.contains(&c.observation)) {
        let d = path_data(&frame, &c.factors, &value(c));
        let _ = writeln!(
            out,
            r#"<path data-observation="{}" d="{d}" stroke="{FAINT}" stroke-width="0.8" stroke-opacity="0.7"/>"#,
            c.observation + 1
        );
    }
    for (rank, &h) in highlights.iter().enumerate() {
        if let Some(c) = curves.iter().find(|c| c.observation == h) {
            let ys = value(c);
            let d = path_data(&frame, &c.factors, &ys);
            let colour = HIGHLIGHT[rank % HIGHLIGHT.len()];
            let _ = writeln!(
                out,
                r#"<path data-observation="{}" class="highlight" d="{d}" stroke="{colour}" stroke-width="2.6"/>"#,
                c.observation + 1
            );
            if let (Some(&t), Some(&v)) = (c.factors.last(), ys.last()) {
                let _ = writeln!(
                    out,
                    r#"<text x="{:.2}" y="{:.2}" fill="{colour}" text-anchor="end" font-weight="bold">{}</text>"#,
                    frame.px(t) - 4.0,
                    frame.py(v) - 6.0,
                    c.observation + 1
                );
            }
        }
    }
    out.push_str("</g>\n</svg>\n");
    out
}

/// Outcome against first principal component scores, with the least
/// squares line (dashed) and the mean outcome (dotted).
pub fn pc_scatter_svg(scores: &[f64], outcome: &[f64], explained: f64, highlights: &[usize], title: &str) -> String {
    let n = scores.len().min(outcome.len());
    let fold = |v: &[f64]| {
        v.iter()
            .take(n)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
    };
    let (xmin, xmax) = fold(scores);
    let (ymin, ymax) = fold(outcome);
    let frame = if n > 0 { Frame::new(xmin, xmax, ymin, ymax) } else { Frame::new(0.0, 1.0, 0.0, 1.0) };

    let mut out = String::new();
    open_svg(&mut out, title);
    axes(&mut out, &frame, &format!("PC1 ({:.2}% of variance)", 100.0 * explained), "outcome");

    if n > 1 {
        let mx = scores[..n].iter().sum::<f64>() / n as f64;
        let my = outcome[..n].iter().sum::<f64>() / n as f64;
        let sxx: f64 = scores[..n].iter().map(|s| (s - mx) * (s - mx)).sum();
        let sxy: f64 = scores[..n].iter().zip(&outcome[..n]).map(|(s, y)| (s - mx) * (y - my)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let line = |x: f64| my + slope * (x - mx);
        let _ = writeln!(
            out,
            r##"<line class="regression" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#333" stroke-width="1.2" stroke-dasharray="6 4"/>
<line class="mean" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#333" stroke-width="1.2" stroke-dasharray="1.5 3"/>"##,
            frame.px(frame.x0),
            frame.py(line(frame.x0)),
            frame.px(frame.x1),
            frame.py(line(frame.x1)),
            frame.px(frame.x0),
            frame.py(my),
            frame.px(frame.x1),
            frame.py(my)
        );
    }

    out.push_str("<g>\n");
    for i in (0..n).filter(|i| !highlights.contains(i)) {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{FAINT}"/>"#,
            frame.px(scores[i]),
            frame.py(outcome[i])
        );
    }
    for (rank, &i) in highlights.iter().enumerate().filter(|(_, &i)| i < n) {
        let colour = HIGHLIGHT[rank % HIGHLIGHT.len()];
        let (cx, cy) = (frame.px(scores[i]), frame.py(outcome[i]));
        let _ = writeln!(
            out,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="5" fill="{colour}"/><text x="{:.2}" y="{:.2}" fill="{colour}" font-weight="bold">{}</text>"#,
            cx + 7.0,
            cy - 5.0,
            i + 1
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}
