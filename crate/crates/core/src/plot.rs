//! Static SVG scatter plots of 2D embeddings.

use std::fmt::Write;

use crate::embedding::Embedding2D;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 520.0;
const PLOT_LEFT: f64 = 50.0;
const PLOT_TOP: f64 = 40.0;
const PLOT_SIZE: f64 = 440.0;
const LEGEND_LEFT: f64 = 520.0;
const MARKER_RADIUS: f64 = 4.5;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Glyph {
    Circle,
    Square,
    TriangleUp,
    Diamond,
    TriangleDown,
    Cross,
}

const GLYPHS: [Glyph; 6] = [
    Glyph::Circle,
    Glyph::Square,
    Glyph::TriangleUp,
    Glyph::Diamond,
    Glyph::TriangleDown,
    Glyph::Cross,
];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn glyph(out: &mut String, g: Glyph, x: f64, y: f64, color: &str, class: &str, title: Option<&str>) {
    let r = MARKER_RADIUS;
    let class_attr = if class.is_empty() { String::new() } else { format!(" class=\"{class}\"") };
    let shape = match g {
        Glyph::Circle => format!("<circle{class_attr} cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"{r}\" fill=\"{color}\""),
        Glyph::Square => format!(
            "<rect{class_attr} x=\"{:.3}\" y=\"{:.3}\" width=\"{}\" height=\"{}\" fill=\"{color}\"",
            x - r,
            y - r,
            2.0 * r,
            2.0 * r
        ),
        _ => {
            let pts: Vec<(f64, f64)> = match g {
                Glyph::TriangleUp => vec![(x, y - r * 1.2), (x + r * 1.1, y + r * 0.8), (x - r * 1.1, y + r * 0.8)],
                Glyph::TriangleDown => vec![(x, y + r * 1.2), (x + r * 1.1, y - r * 0.8), (x - r * 1.1, y - r * 0.8)],
                Glyph::Diamond => vec![(x, y - r * 1.3), (x + r, y), (x, y + r * 1.3), (x - r, y)],
                _ => {
                    let a = r * 0.35;
                    vec![
                        (x - r, y - a),
                        (x - a, y - a),
                        (x - a, y - r),
                        (x + a, y - r),
                        (x + a, y - a),
                        (x + r, y - a),
                        (x + r, y + a),
                        (x + a, y + a),
                        (x + a, y + r),
                        (x - a, y + r),
                        (x - a, y + a),
                        (x - r, y + a),
                    ]
                }
            };
            let list: Vec<String> = pts.iter().map(|(px, py)| format!("{px:.3},{py:.3}")).collect();
            format!("<polygon{class_attr} points=\"{}\" fill=\"{color}\"", list.join(" "))
        }
    };
    out.push_str(&shape);
    match title {
        Some(t) => {
            let _ = writeln!(out, "><title>{}</title></{}>", escape(t), tag(g));
        }
        None => out.push_str("/>\n"),
    }
}

fn tag(g: Glyph) -> &'static str {
    match g {
        Glyph::Circle => "circle",
        Glyph::Square => "rect",
        _ => "polygon",
    }
}

/// Maps `[lo, hi]` plus a 5% margin on both sides onto `[0, 1]`. A
/// zero-width range is centered.
fn axis(values: impl Iterator<Item = f64>) -> impl Fn(f64) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let (lo, span) = if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi - lo + 2.0 * pad)
    } else {
        (lo - 0.5, 1.0)
    };
    move |v| (v - lo) / span
}

/// One marker per point, colored and shaped by label, with a legend of
/// the distinct labels in order of first appearance.
pub fn render_scatter(embedding: &Embedding2D, labels: &[String]) -> String {
    let n = embedding.n().min(labels.len());
    let mut classes: Vec<&str> = Vec::new();
    for l in &labels[..n] {
        if !classes.contains(&l.as_str()) {
            classes.push(l);
        }
    }
    let sx = axis((0..n).map(|i| embedding.coords.get(i, 0)));
    let sy = axis((0..n).map(|i| embedding.coords.get(i, 1)));

    let mut out = String::new();
    let _ = writeln!(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{} embedding of {}</text>",
        PLOT_LEFT + PLOT_SIZE / 2.0,
        embedding.method,
        embedding.source_variant
    );
    let _ = writeln!(
        out,
        "<rect x=\"{PLOT_LEFT}\" y=\"{PLOT_TOP}\" width=\"{PLOT_SIZE}\" height=\"{PLOT_SIZE}\" fill=\"none\" stroke=\"#444\"/>"
    );
    let _ = writeln!(out, "<g id=\"markers\" fill-opacity=\"0.85\">");
    for i in 0..n {
        let k = classes.iter().position(|c| *c == labels[i]).expect("collected");
        let x = PLOT_LEFT + sx(embedding.coords.get(i, 0)) * PLOT_SIZE;
        // SVG y grows downwards.
        let y = PLOT_TOP + (1.0 - sy(embedding.coords.get(i, 1))) * PLOT_SIZE;
        let title = embedding.instance_ids.get(i).map(String::as_str);
        glyph(&mut out, GLYPHS[k % GLYPHS.len()], x, y, PALETTE[k % PALETTE.len()], "marker", title);
    }
    out.push_str("</g>\n<g id=\"legend\" font-family=\"sans-serif\" font-size=\"13\">\n");
    for (k, name) in classes.iter().enumerate() {
        let y = PLOT_TOP + 12.0 + 22.0 * k as f64;
        out.push_str("<g class=\"legend-entry\">\n");
        glyph(&mut out, GLYPHS[k % GLYPHS.len()], LEGEND_LEFT, y, PALETTE[k % PALETTE.len()], "", None);
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\">{}</text>", LEGEND_LEFT + 12.0, y + 4.5, escape(name));
        out.push_str("</g>\n");
    }
    out.push_str("</g>\n</svg>\n");
    out
}
