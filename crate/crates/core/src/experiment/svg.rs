//! Dependency-free SVG rendering for the report charts.

use std::fmt::Write as _;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Linear map from data range onto the plot area.
#[derive(Debug, Clone, Copy)]
struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let (x_min, x_max) = padded_range(xs, 0.0);
        let (y_min, y_max) = padded_range(ys, 0.05);
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - TOP - BOTTOM)
    }
}

fn padded_range(values: impl Iterator<Item = f64>, pad: f64) -> (f64, f64) {
    let (mut lo, mut hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let span = hi - lo;
    (lo - pad * span, hi + pad * span)
}

/// Roughly `count` round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let raw = (hi - lo) / count as f64;
    let magnitude = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * magnitude)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * magnitude);
    let mut out = Vec::new();
    let mut t = (lo / step).ceil() * step;
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1e4 {
        format!("{:.0}k", v / 1e3)
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn open(out: &mut String, title: &str) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        (WIDTH - RIGHT + LEFT) / 2.0,
        escape(title)
    )
    .unwrap();
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str, x_ticks: bool) {
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    writeln!(out, r#"<g stroke="black" stroke-width="1">"#).unwrap();
    writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>"#).unwrap();
    writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#).unwrap();
    writeln!(out, "</g>").unwrap();
    for t in ticks(frame.y_min, frame.y_max, 6) {
        let y = frame.py(t);
        writeln!(
            out,
            r##"<line x1="{x0}" y1="{y:.1}" x2="{x1}" y2="{y:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            x0 - 6.0,
            y + 4.0,
            tick_label(t)
        )
        .unwrap();
    }
    if x_ticks {
        for t in ticks(frame.x_min, frame.x_max, 8) {
            let x = frame.px(t);
            writeln!(
                out,
                r#"<line x1="{x:.1}" y1="{y0}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                y0 + 5.0,
                y0 + 18.0,
                tick_label(t)
            )
            .unwrap();
        }
    }
    writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    )
    .unwrap();
}

fn legend(out: &mut String, entries: &[(String, &str)]) {
    for (i, (name, color)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let x = WIDTH - RIGHT + 15.0;
        writeln!(
            out,
            r#"<rect x="{x}" y="{:.1}" width="14" height="4" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            y - 2.0,
            x + 20.0,
            y + 4.0,
            escape(name)
        )
        .unwrap();
    }
}

/// One polyline per series.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    let all = series.iter().flat_map(|(_, pts)| pts.iter());
    let frame = Frame::new(all.clone().map(|p| p.0), all.map(|p| p.1));
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &frame, x_label, y_label, true);
    let mut entries = Vec::new();
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", frame.px(x), frame.py(y)))
            .collect();
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        )
        .unwrap();
        entries.push((name.clone(), color));
    }
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

/// Vertical bars with an optional dashed reference line.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)], reference: Option<f64>) -> String {
    let ys = bars
        .iter()
        .map(|b| b.1)
        .chain(reference)
        .chain(std::iter::once(0.0));
    let mut frame = Frame::new([0.0, bars.len().max(1) as f64].into_iter(), ys);
    frame.y_min = frame.y_min.min(0.0);
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &frame, "agent", y_label, false);
    let slot = (WIDTH - LEFT - RIGHT) / bars.len().max(1) as f64;
    for (i, (label, value)) in bars.iter().enumerate() {
        let x = LEFT + slot * (i as f64 + 0.2);
        let (top, bottom) = (frame.py(value.max(0.0)), frame.py(value.min(0.0)));
        writeln!(
            out,
            r#"<rect x="{x:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="{}"/><text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text><text x="{:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#,
            slot * 0.6,
            (bottom - top).max(0.5),
            PALETTE[i % PALETTE.len()],
            x + slot * 0.3,
            HEIGHT - BOTTOM + 18.0,
            escape(label),
            x + slot * 0.3,
            top - 5.0,
            value
        )
        .unwrap();
    }
    if let Some(r) = reference {
        let y = frame.py(r);
        writeln!(
            out,
            r#"<line x1="{LEFT}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="black" stroke-dasharray="6 4"/>"#,
            WIDTH - RIGHT
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

/// Hourly price as a step line with one colored marker per decision.
/// `markers` holds `(hour index, category)`; categories index `categories`.
pub fn step_chart(
    title: &str,
    prices: &[f64],
    markers: &[(usize, usize)],
    categories: &[(&str, &str)],
) -> String {
    let hours = prices.len();
    let frame = Frame::new([0.0, hours as f64].into_iter(), prices.iter().copied());
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &frame, "hour of day (UTC)", "price (cents/kWh)", true);
    let mut coords = Vec::with_capacity(2 * hours);
    for (h, &p) in prices.iter().enumerate() {
        coords.push(format!("{:.1},{:.1}", frame.px(h as f64), frame.py(p)));
        coords.push(format!("{:.1},{:.1}", frame.px(h as f64 + 1.0), frame.py(p)));
    }
    writeln!(
        out,
        r#"<polyline fill="none" stroke="black" stroke-width="2" points="{}"/>"#,
        coords.join(" ")
    )
    .unwrap();
    for &(h, c) in markers {
        let (_, color) = categories[c];
        writeln!(
            out,
            r#"<circle cx="{:.1}" cy="{:.1}" r="5" fill="{color}"/>"#,
            frame.px(h as f64 + 0.5),
            frame.py(prices[h])
        )
        .unwrap();
    }
    let entries: Vec<(String, &str)> = categories.iter().map(|(n, c)| (n.to_string(), *c)).collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}
