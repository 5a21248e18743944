use std::fmt::Write as _;

use super::Explanation;

const STROKE: &str = "#d62728";
const FONT_SIZE: u32 = 14;

fn num(v: f64) -> String {
    let s = format!("{:.3}", (v * 1000.0).round() / 1000.0);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// SVG 1.1 overlay with one rectangle and label per evidence item.
///
/// Boxes are scaled from normalized coordinates to `width_px`×`height_px`;
/// stroke opacity is the item's saliency relative to the most salient one.
pub fn render_overlay_svg(e: &Explanation, width_px: u32, height_px: u32) -> String {
    let (w, h) = (f64::from(width_px.max(1)), f64::from(height_px.max(1)));
    let max_saliency = e.evidence.iter().map(|ev| ev.saliency).fold(0.0, f64::max);
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">",
        num(w),
        num(h),
        num(w),
        num(h)
    );
    for ev in &e.evidence {
        let b = &ev.detection.bbox;
        let (x, y) = (b.x1 * w, b.y1 * h);
        let opacity = if max_saliency > 0.0 { ev.saliency / max_saliency } else { 1.0 };
        let _ = writeln!(
            out,
            "  <rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"{STROKE}\" stroke-width=\"3\" stroke-opacity=\"{}\"/>",
            num(x),
            num(y),
            num(b.x2 * w - x),
            num(b.y2 * h - y),
            num(opacity)
        );
        let label = match &ev.entity_id {
            Some(id) => format!("{} [{}] {:.2}", ev.detection.label, id, ev.detection.confidence),
            None => format!("{} {:.2}", ev.detection.label, ev.detection.confidence),
        };
        let _ = writeln!(
            out,
            "  <text x=\"{}\" y=\"{}\" dominant-baseline=\"hanging\" font-family=\"sans-serif\" font-size=\"{FONT_SIZE}\" fill=\"{STROKE}\">{}</text>",
            num(x),
            num(y),
            escape(&label)
        );
    }
    out.push_str("</svg>\n");
    out
}
