use std::str::FromStr;

use super::Rgba;

/// Parses a CSS/SVG color into straight RGBA with full floating-point precision.
///
/// `rgb()`/`rgba()` accept fractional numbers and percentages so colors written
/// by the serializer read back exactly; hex and named colors go through
/// `svgtypes`.
pub(crate) fn parse_color(text: &str) -> Option<Rgba> {
    let s = text.trim();
    let lower = s.to_ascii_lowercase();
    if let Some(body) = functional_body(&lower) {
        return parse_functional(body);
    }
    let c = svgtypes::Color::from_str(s).ok()?;
    Some(Rgba::new(
        f64::from(c.red) / 255.0,
        f64::from(c.green) / 255.0,
        f64::from(c.blue) / 255.0,
        f64::from(c.alpha) / 255.0,
    ))
}

fn functional_body(s: &str) -> Option<&str> {
    let rest = s.strip_prefix("rgba(").or_else(|| s.strip_prefix("rgb("))?;
    rest.strip_suffix(')')
}

fn parse_functional(body: &str) -> Option<Rgba> {
    let parts: Vec<&str> = body
        .split(|c: char| c == ',' || c == '/' || c.is_whitespace())
        .filter(|p| !p.is_empty())
        .collect();
    if parts.len() != 3 && parts.len() != 4 {
        return None;
    }
    let channel = |p: &str| -> Option<f64> {
        if let Some(pct) = p.strip_suffix('%') {
            Some(pct.parse::<f64>().ok()? / 100.0)
        } else {
            Some(p.parse::<f64>().ok()? / 255.0)
        }
    };
    let alpha = |p: &str| -> Option<f64> {
        if let Some(pct) = p.strip_suffix('%') {
            Some(pct.parse::<f64>().ok()? / 100.0)
        } else {
            p.parse::<f64>().ok()
        }
    };
    let r = channel(parts[0])?;
    let g = channel(parts[1])?;
    let b = channel(parts[2])?;
    let a = match parts.get(3) {
        Some(p) => alpha(p)?,
        None => 1.0,
    };
    Some(Rgba::new(r, g, b, a).clamped())
}

/// Writes the RGB part as `rgb(R, G, B)` on the 0..255 scale.
pub(crate) fn format_rgb(c: &Rgba, fmt: impl Fn(f64) -> String) -> String {
    format!(
        "rgb({},{},{})",
        fmt(to_byte_scale(c.r)),
        fmt(to_byte_scale(c.g)),
        fmt(to_byte_scale(c.b))
    )
}

/// `v · 255`, nudged by a few ulps when needed so that dividing by 255 gives `v` back.
fn to_byte_scale(v: f64) -> f64 {
    let x = v * 255.0;
    let (mut up, mut down) = (x, x);
    for _ in 0..4 {
        if up / 255.0 == v {
            return up;
        }
        if down / 255.0 == v {
            return down;
        }
        up = up.next_up();
        down = down.next_down();
    }
    x
}
