//! Minimal standalone SVG charts, 800x500.

use std::fmt::Write;

use super::histogram::HistogramPair;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = if self.x1 > self.x0 { self.x1 - self.x0 } else { 1.0 };
        MARGIN + (x - self.x0) / span * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        let span = if self.y1 > self.y0 { self.y1 - self.y0 } else { 1.0 };
        HEIGHT - MARGIN - (y - self.y0) / span * (HEIGHT - 2.0 * MARGIN)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(title: &str, frame: &Frame, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="30" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    writeln!(
        s,
        r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none"/>"#
    )
    .unwrap();
    for (v, anchor_x) in [(frame.x0, l), (frame.x1, r)] {
        writeln!(
            s,
            r#"<text x="{anchor_x}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{v:.3}</text>"#,
            b + 16.0
        )
        .unwrap();
    }
    for (v, anchor_y) in [(frame.y0, b), (frame.y1, t)] {
        writeln!(
            s,
            r#"<text x="{}" y="{anchor_y}" text-anchor="end" font-family="sans-serif" font-size="11">{v:.3}</text>"#,
            l - 6.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0,
        escape(x_label)
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 18 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    )
    .unwrap();
    s
}

fn legend(s: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 10.0 + 18.0 * i as f64;
        let x = WIDTH - MARGIN - 150.0;
        writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            y - 10.0,
            COLORS[i % COLORS.len()],
            x + 18.0,
            y,
            escape(name)
        )
        .unwrap();
    }
}

/// Polylines over `[0,1]`-valued series.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(&str, &[(f64, f64)])]) -> String {
    let xs = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0));
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let frame = Frame {
        x0: if x0.is_finite() { x0 } else { 0.0 },
        x1: if x1.is_finite() { x1 } else { 1.0 },
        y0: 0.0,
        y1: 1.0,
    };
    let mut s = open(title, &frame, x_label, y_label);
    for (i, (_, pts)) in series.iter().enumerate() {
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            path.join(" "),
            COLORS[i % COLORS.len()]
        )
        .unwrap();
    }
    legend(&mut s, &series.iter().map(|(n, _)| *n).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

/// Overlaid, semi-transparent bars for both distributions of a pair.
pub fn histogram_chart(title: &str, x_label: &str, pair: &HistogramPair) -> String {
    let max = pair
        .first
        .counts
        .iter()
        .chain(&pair.second.counts)
        .copied()
        .max()
        .unwrap_or(0)
        .max(1);
    let frame = Frame {
        x0: pair.first.lo,
        x1: pair.first.hi,
        y0: 0.0,
        y1: max as f64,
    };
    let mut s = open(title, &frame, x_label, "count");
    for (i, h) in [&pair.first, &pair.second].into_iter().enumerate() {
        let bins = h.counts.len().max(1) as f64;
        let bar = (WIDTH - 2.0 * MARGIN) / bins;
        for (b, &c) in h.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let top = frame.py(c as f64);
            writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" fill-opacity="0.5"/>"#,
                MARGIN + bar * b as f64,
                top,
                bar,
                HEIGHT - MARGIN - top,
                COLORS[i]
            )
            .unwrap();
        }
    }
    legend(&mut s, &[&pair.first_label, &pair.second_label]);
    s.push_str("</svg>\n");
    s
}
