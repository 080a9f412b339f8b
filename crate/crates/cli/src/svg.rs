//! Benefit-curve plots: bars for per-bin benefit, a line for cumulative benefit,
//! and markers for the current value, the peak, the proposal and its tolerances.

use std::fmt::Write;

use sdl_core::learner::report::{CurveRow, SummaryRow};

const W: f64 = 640.0;
const H: f64 = 360.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 44.0;

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }

    fn contains_x(&self, v: f64) -> bool {
        v >= self.x0 && v <= self.x1
    }
}

fn vline(out: &mut String, ax: &Axes, class: &str, v: f64, color: &str, dash: &str) {
    if !ax.contains_x(v) {
        return;
    }
    let x = ax.px(v);
    let _ = writeln!(
        out,
        r#"<line class="{class}" data-value="{v}" x1="{x:.2}" y1="{TOP:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="{dash}"/>"#,
        H - BOTTOM
    );
}

/// Peak of the cumulative curve, nearest the current value on ties (lower side first).
pub fn peak(rows: &[&CurveRow], origin: f64) -> Option<f64> {
    let best = rows.iter().map(|r| r.cumulative).fold(f64::NEG_INFINITY, f64::max);
    rows.iter()
        .filter(|r| r.cumulative == best)
        .min_by(|a, b| {
            (a.value - origin)
                .abs()
                .total_cmp(&(b.value - origin).abs())
                .then(a.bin.cmp(&b.bin))
        })
        .map(|r| r.value)
}

pub fn render_curve(s: &SummaryRow, rows: &[&CurveRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{LEFT}" y="20" font-size="13">{} (round {})</text>"#,
        s.param, s.round
    );
    if rows.is_empty() {
        let _ = writeln!(out, r#"<text class="empty" x="{LEFT}" y="{}">no bins</text>"#, H / 2.0);
        out.push_str("</svg>\n");
        return out;
    }

    let x0 = rows.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let x1 = rows.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
    let lo = rows.iter().flat_map(|r| [r.benefit, r.cumulative]).fold(0.0, f64::min);
    let hi = rows.iter().flat_map(|r| [r.benefit, r.cumulative]).fold(0.0, f64::max);
    let (y0, y1) = if hi > lo { (lo, hi) } else { (-1.0, 1.0) };
    let (x0, x1) = if x1 > x0 { (x0, x1) } else { (x0 - 1.0, x0 + 1.0) };
    let ax = Axes { x0, x1, y0, y1 };

    // axes and zero line
    let _ = writeln!(
        out,
        r##"<line class="zero" x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#888"/>"##,
        W - RIGHT,
        y = ax.py(0.0)
    );
    let _ = writeln!(
        out,
        r#"<text x="{LEFT:.2}" y="{:.2}">{x0}</text><text x="{:.2}" y="{:.2}" text-anchor="end">{x1}</text>"#,
        H - 16.0,
        W - RIGHT,
        H - 16.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y1}</text><text x="{:.2}" y="{:.2}" text-anchor="end">{y0}</text>"#,
        LEFT - 6.0,
        TOP + 4.0,
        LEFT - 6.0,
        H - BOTTOM
    );

    let bar = ((W - LEFT - RIGHT) / rows.len() as f64 * 0.8).max(1.0);
    out.push_str("<g class=\"benefit\" fill=\"#7fa7d9\">\n");
    for r in rows {
        let (ya, yb) = (ax.py(r.benefit.max(0.0)), ax.py(r.benefit.min(0.0)));
        let _ = writeln!(
            out,
            r#"<rect data-bin="{}" x="{:.2}" y="{ya:.2}" width="{bar:.2}" height="{:.2}"/>"#,
            r.bin,
            ax.px(r.value) - bar / 2.0,
            yb - ya
        );
    }
    out.push_str("</g>\n");

    let pts: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.2},{:.2}", ax.px(r.value), ax.py(r.cumulative)))
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline class="cumulative" fill="none" stroke="#c0392b" stroke-width="1.5" points="{}"/>"##,
        pts.join(" ")
    );

    let flat = rows.iter().all(|r| r.benefit == 0.0 && r.cumulative == 0.0);
    if flat {
        let _ = writeln!(
            out,
            r#"<text class="empty" x="{:.2}" y="{:.2}" text-anchor="middle">no defeasible events</text>"#,
            W / 2.0,
            TOP + 16.0
        );
    } else {
        let best = rows.iter().map(|r| r.cumulative).fold(f64::NEG_INFINITY, f64::max);
        if best > 0.0 {
            let y = ax.py(0.9 * best);
            let _ = writeln!(
                out,
                r##"<line class="threshold" data-value="{}" x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#c0392b" stroke-dasharray="2 3"/>"##,
                0.9 * best,
                W - RIGHT
            );
        }
        if let Some(p) = peak(rows, s.old_value) {
            vline(&mut out, &ax, "peak", p, "#c0392b", "none");
        }
    }
    vline(&mut out, &ax, "origin", s.old_value, "#222", "4 3");
    if s.applied {
        vline(&mut out, &ax, "proposed", s.new_value, "#27ae60", "none");
        vline(&mut out, &ax, "tolerance", s.new_value - s.new_tol_neg, "#16a085", "1 3");
        vline(&mut out, &ax, "tolerance", s.new_value + s.new_tol_pos, "#16a085", "1 3");
    }
    out.push_str("</svg>\n");
    out
}
