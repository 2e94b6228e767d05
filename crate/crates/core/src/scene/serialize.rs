use std::fmt::Write;

use super::color::format_rgb;
use super::{LinearGradient, Paint, Scene, Subpath};

/// Number formatting used by the serializer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    /// Shortest decimal that parses back to the identical `f64`.
    #[default]
    RoundTrip,
    /// At most this many significant digits (smaller files, lossy).
    Significant(usize),
}

impl Precision {
    fn format(self, v: f64) -> String {
        let v = if v == 0.0 { 0.0 } else { v };
        match self {
            Precision::RoundTrip => format!("{v}"),
            Precision::Significant(digits) => {
                let digits = digits.max(1);
                if !v.is_finite() || v == 0.0 {
                    return "0".to_string();
                }
                let magnitude = v.abs().log10().floor() as i32;
                let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
                let s = format!("{v:.decimals$}");
                if s.contains('.') {
                    s.trim_end_matches('0').trim_end_matches('.').to_string()
                } else {
                    s
                }
            }
        }
    }
}

/// Writes the scene as SVG with exact round-trip precision.
pub fn serialize_svg(scene: &Scene) -> Vec<u8> {
    serialize_svg_with(scene, Precision::RoundTrip)
}

/// Writes the scene as SVG.
///
/// Every shape becomes one `<path>` whose `d` attribute carries all of its
/// subpaths; gradients are emitted in `<defs>` in user-space coordinates and no
/// `transform` attributes are written.
pub fn serialize_svg_with(scene: &Scene, precision: Precision) -> Vec<u8> {
    let f = |v: f64| precision.format(v);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = f(scene.width),
        h = f(scene.height)
    );

    let mut defs = String::new();
    let mut next_id = 0usize;
    let mut body = String::new();
    for shape in &scene.shapes {
        let mut attrs = String::new();
        write_paint(&mut attrs, &mut defs, &mut next_id, "fill", &shape.fill, &f);
        write_paint(&mut attrs, &mut defs, &mut next_id, "stroke", &shape.stroke, &f);
        let _ = write!(attrs, r#" stroke-width="{}""#, f(shape.stroke_width));
        if !shape.stroke.is_none() {
            attrs.push_str(r#" stroke-linejoin="round" stroke-linecap="round""#);
        }
        let mut d = String::new();
        for sp in &shape.subpaths {
            write_subpath(&mut d, sp, &f);
        }
        let _ = writeln!(body, r#"  <path d="{}"{attrs}/>"#, d.trim_end());
    }
    if !defs.is_empty() {
        let _ = writeln!(out, "  <defs>\n{defs}  </defs>");
    }
    out.push_str(&body);
    out.push_str("</svg>\n");
    out.into_bytes()
}

fn write_subpath(d: &mut String, sp: &Subpath, f: &impl Fn(f64) -> String) {
    if sp.points.is_empty() {
        return;
    }
    let p0 = sp.points[0];
    let _ = write!(d, "M{} {} ", f(p0.x), f(p0.y));
    for s in 0..sp.segment_count() {
        let [_, c1, c2, p] = sp.segment(s);
        let _ = write!(
            d,
            "C{} {} {} {} {} {} ",
            f(c1.x),
            f(c1.y),
            f(c2.x),
            f(c2.y),
            f(p.x),
            f(p.y)
        );
    }
    if sp.closed {
        d.push_str("Z ");
    }
}

fn write_paint(
    attrs: &mut String,
    defs: &mut String,
    next_id: &mut usize,
    name: &str,
    paint: &Paint,
    f: &impl Fn(f64) -> String,
) {
    match paint {
        Paint::None => {
            let _ = write!(attrs, r#" {name}="none""#);
        }
        Paint::Solid(c) => {
            let _ = write!(attrs, r#" {name}="{}""#, format_rgb(c, f));
            if c.a != 1.0 {
                let _ = write!(attrs, r#" {name}-opacity="{}""#, f(c.a));
            }
        }
        Paint::LinearGradient(g) => {
            let id = format!("lg{next_id}");
            *next_id += 1;
            write_gradient(defs, &id, g, f);
            let _ = write!(attrs, r#" {name}="url(#{id})""#);
        }
    }
}

fn write_gradient(defs: &mut String, id: &str, g: &LinearGradient, f: &impl Fn(f64) -> String) {
    let _ = writeln!(
        defs,
        r#"    <linearGradient id="{id}" gradientUnits="userSpaceOnUse" x1="{}" y1="{}" x2="{}" y2="{}">"#,
        f(g.start.x),
        f(g.start.y),
        f(g.end.x),
        f(g.end.y)
    );
    for stop in &g.stops {
        let _ = write!(
            defs,
            r#"      <stop offset="{}" stop-color="{}""#,
            f(stop.offset),
            format_rgb(&stop.color, f)
        );
        if stop.color.a != 1.0 {
            let _ = write!(defs, r#" stop-opacity="{}""#, f(stop.color.a));
        }
        defs.push_str("/>\n");
    }
    defs.push_str("    </linearGradient>\n");
}
