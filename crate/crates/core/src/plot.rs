//! Minimal self-contained SVG renderings: heatmap, line plot and scatter.
//! The CSV series are the data contract; these are for a quick look.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::matrix::ConsistencyMatrix;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Diverging blue-white-red scale on [-1, 1], white at 0.
pub fn diverging_color(v: f64) -> String {
    let t = v.clamp(-1.0, 1.0);
    let (r, g, b) = if t >= 0.0 {
        (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
    } else {
        (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

const NA_FILL: &str = "#9e9e9e";

pub fn heatmap_svg(m: &ConsistencyMatrix) -> String {
    let n = m.len();
    let cell = 18usize;
    let label_w = 10 + 7 * m.decider_ids.iter().map(|s| s.chars().count()).max().unwrap_or(0);
    let legend_h = 40;
    let w = label_w + n * cell + 20;
    let h = label_w + n * cell + legend_h + 20;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<title>error consistency: {}</title>"#, esc(&m.dataset_id));
    for (i, id) in m.decider_ids.iter().enumerate() {
        let y = label_w + i * cell + cell * 3 / 4;
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, label_w - 4, esc(id));
        let x = label_w + i * cell + cell * 3 / 4;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="start" transform="rotate(-90 {x} {})">{}</text>"#,
            label_w - 4,
            label_w - 4,
            esc(id)
        );
    }
    for i in 0..n {
        for j in 0..n {
            let fill = m.values[i][j].map_or_else(|| NA_FILL.to_owned(), diverging_color);
            let tip = m.values[i][j].map_or_else(|| "NA".to_owned(), |v| format!("{v:.3}"));
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="{fill}"><title>{} / {}: {tip}</title></rect>"#,
                label_w + j * cell,
                label_w + i * cell,
                esc(&m.decider_ids[i]),
                esc(&m.decider_ids[j])
            );
        }
    }
    // legend
    let ly = label_w + n * cell + 12;
    for k in 0..=20 {
        let v = -1.0 + k as f64 * 0.1;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{ly}" width="8" height="10" fill="{}"/>"#,
            label_w + k * 8,
            diverging_color(v)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}">-1</text>"#, label_w, ly + 24);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">0</text>"#, label_w + 84, ly + 24);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">1</text>"#, label_w + 168, ly + 24);
    let _ = writeln!(s, r##"<rect x="{}" y="{ly}" width="10" height="10" fill="{NA_FILL}"/>"##, label_w + 190);
    let _ = writeln!(s, r#"<text x="{}" y="{}">NA</text>"#, label_w + 204, ly + 9);
    s.push_str("</svg>\n");
    s
}

const PALETTE: [&str; 10] =
    ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

struct Frame {
    w: f64,
    h: f64,
    left: f64,
    top: f64,
}

impl Frame {
    fn x(&self, t: f64) -> f64 {
        self.left + t * self.w
    }
    fn y(&self, t: f64) -> f64 {
        self.top + (1.0 - t) * self.h
    }
}

fn axes(s: &mut String, f: &Frame, title: &str, xlabel: &str, ylabel: &str, y_range: (f64, f64)) {
    let _ = writeln!(s, r#"<text x="{}" y="16" text-anchor="middle">{}</text>"#, f.x(0.5), esc(title));
    let _ = writeln!(
        s,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        f.x(0.0),
        f.y(0.0),
        f.x(1.0),
        f.y(0.0)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        f.x(0.0),
        f.y(0.0),
        f.x(0.0),
        f.y(1.0)
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let v = y_range.0 + t * (y_range.1 - y_range.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, f.x(0.0) - 4.0, f.y(t) + 4.0);
    }
    let _ =
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, f.x(0.5), f.y(0.0) + 36.0, esc(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        f.y(0.5),
        f.y(0.5),
        esc(ylabel)
    );
}

/// One polyline per series over categorical x positions.
pub fn line_plot_svg(
    title: &str,
    x_labels: &[String],
    series: &BTreeMap<String, Vec<Option<f64>>>,
    y_label: &str,
    y_range: (f64, f64),
) -> String {
    let f = Frame { w: 420.0, h: 260.0, left: 60.0, top: 30.0 };
    let legend_x = f.left + f.w + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        legend_x + 180.0,
        f.top + f.h + 60.0
    );
    axes(&mut s, &f, title, "condition", y_label, y_range);
    let nx = x_labels.len().max(2) - 1;
    let xt = |i: usize| if x_labels.len() <= 1 { 0.5 } else { i as f64 / nx as f64 };
    for (i, l) in x_labels.iter().enumerate() {
        let _ =
            writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, f.x(xt(i)), f.y(0.0) + 16.0, esc(l));
    }
    let span = (y_range.1 - y_range.0).max(f64::EPSILON);
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = ys
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| format!("{:.2},{:.2}", f.x(xt(i)), f.y((v - y_range.0) / span))))
            .collect();
        let _ =
            writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = f.top + 14.0 * k as f64;
        let _ = writeln!(s, r#"<rect x="{legend_x}" y="{}" width="10" height="3" fill="{color}"/>"#, ly + 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, legend_x + 14.0, ly + 9.0, esc(name));
    }
    s.push_str("</svg>\n");
    s
}

/// Labelled points `(name, x, y)` with x in [0, 1].
pub fn scatter_svg(
    title: &str,
    points: &[(String, f64, f64)],
    x_label: &str,
    y_label: &str,
    y_range: (f64, f64),
) -> String {
    let f = Frame { w: 420.0, h: 300.0, left: 60.0, top: 30.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        f.left + f.w + 30.0,
        f.top + f.h + 60.0
    );
    axes(&mut s, &f, title, x_label, y_label, y_range);
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{t:.2}</text>"#, f.x(t), f.y(0.0) + 16.0);
    }
    let span = (y_range.1 - y_range.0).max(f64::EPSILON);
    for (name, x, y) in points {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="#1f77b4"><title>{}</title></circle>"##,
            f.x(x.clamp(0.0, 1.0)),
            f.y(((y - y_range.0) / span).clamp(0.0, 1.0)),
            esc(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
