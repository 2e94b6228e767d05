use std::collections::HashMap;
use std::str::FromStr;

use roxmltree::{Document, Node, ParsingOptions};
use svgtypes::{Length, LengthUnit, SimplePathSegment, SimplifyingPathParser, ViewBox};
use thiserror::Error;

use super::color::parse_color;
use super::{GradientStop, LinearGradient, Paint, Point, Rgba, Scene, Shape, Subpath};

const SVG_NS: &str = "http://www.w3.org/2000/svg";
/// Cubic approximation constant for quarter-circle arcs.
const KAPPA: f64 = 0.552_284_749_830_793_4;

#[derive(Debug, Error)]
pub enum SvgError {
    #[error("malformed XML at line {line}, column {column}: {message}")]
    Xml {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("unsupported SVG feature <{tag}> at line {line}, column {column}")]
    Unsupported { tag: String, line: u32, column: u32 },
    #[error("cyclic reference between definitions: {}", cycle.join(" -> "))]
    Cycle { cycle: Vec<String> },
    #[error("invalid value {value:?} for attribute `{attribute}` on <{tag}> at line {line}")]
    InvalidAttribute {
        tag: String,
        attribute: String,
        value: String,
        line: u32,
    },
    #[error("reference to unknown or unusable element #{id} at line {line}")]
    BadReference { id: String, line: u32 },
    #[error("root element must be <svg>, found <{0}>")]
    NotSvg(String),
    #[error("document has no usable width/height or viewBox")]
    MissingDimensions,
    #[error("document is not valid UTF-8: {0}")]
    Encoding(#[from] std::str::Utf8Error),
}

/// Tags that are silently skipped: they carry no rendering.
const IGNORED_TAGS: &[&str] = &["title", "desc", "metadata"];

/// Parses a UTF-8 SVG document into a [`Scene`].
///
/// Gradient definitions are resolved through a topological order of their
/// `href` references, so a paint may refer to a gradient declared anywhere
/// in the file. Transforms and the viewBox mapping are flattened into
/// absolute coordinates, basic shapes become paths, and every path segment
/// is converted to a cubic Bézier.
pub fn parse_svg(document: &[u8]) -> Result<Scene, SvgError> {
    let text = std::str::from_utf8(document)?;
    let opts = ParsingOptions {
        allow_dtd: true,
        ..ParsingOptions::default()
    };
    let doc = Document::parse_with_options(text, opts).map_err(|e| {
        let pos = e.pos();
        SvgError::Xml {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "svg" {
        return Err(SvgError::NotSvg(root.tag_name().name().to_string()));
    }

    let ctx = Context::new(&doc)?;
    let (width, height, viewport) = dimensions(root)?;
    let gradients = ctx.resolve_gradients(width, height)?;

    let mut scene = Scene::new(width, height);
    let state = Inherited::root(viewport);
    ctx.walk_children(root, &state, &gradients, &mut scene.shapes)?;
    Ok(scene)
}

fn is_svg_element(node: &Node) -> bool {
    node.is_element()
        && matches!(node.tag_name().namespace(), None | Some(SVG_NS))
}

fn position(node: &Node) -> (u32, u32) {
    let pos = node.document().text_pos_at(node.range().start);
    (pos.row, pos.col)
}

fn line_of(node: &Node) -> u32 {
    position(node).0
}

fn unsupported(node: &Node) -> SvgError {
    let (line, column) = position(node);
    SvgError::Unsupported {
        tag: node.tag_name().name().to_string(),
        line,
        column,
    }
}

fn invalid(node: &Node, attribute: &str, value: &str) -> SvgError {
    SvgError::InvalidAttribute {
        tag: node.tag_name().name().to_string(),
        attribute: attribute.to_string(),
        value: value.to_string(),
        line: line_of(node),
    }
}

/// Reads a presentation property from the inline `style` (which wins) or the attribute.
fn property<'a>(node: &Node<'a, 'a>, name: &str) -> Option<&'a str> {
    if let Some(style) = node.attribute("style") {
        for decl in style.split(';') {
            if let Some((key, value)) = decl.split_once(':') {
                if key.trim() == name {
                    return Some(value.trim());
                }
            }
        }
    }
    node.attribute(name).map(str::trim)
}

fn parse_number_attr(node: &Node, name: &str, value: &str) -> Result<f64, SvgError> {
    let v = value.trim();
    let n = if let Some(p) = v.strip_suffix('%') {
        p.trim().parse::<f64>().map(|x| x / 100.0)
    } else {
        v.parse::<f64>()
    };
    n.ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| invalid(node, name, value))
}

/// Resolves a length to user units; percentages are taken against `reference`.
fn length_value(node: &Node, name: &str, value: &str, reference: f64) -> Result<f64, SvgError> {
    let len = Length::from_str(value.trim()).map_err(|_| invalid(node, name, value))?;
    let scale = match len.unit {
        LengthUnit::None | LengthUnit::Px => 1.0,
        LengthUnit::In => 96.0,
        LengthUnit::Cm => 96.0 / 2.54,
        LengthUnit::Mm => 96.0 / 25.4,
        LengthUnit::Pt => 4.0 / 3.0,
        LengthUnit::Pc => 16.0,
        LengthUnit::Em => 16.0,
        LengthUnit::Ex => 8.0,
        LengthUnit::Percent => reference / 100.0,
    };
    Ok(len.number * scale)
}

fn length_attr(node: &Node, name: &str, reference: f64) -> Result<Option<f64>, SvgError> {
    match node.attribute(name) {
        Some(v) => length_value(node, name, v, reference).map(Some),
        None => Ok(None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Affine([f64; 6]);

impl Affine {
    const IDENTITY: Affine = Affine([1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);

    fn then(self, inner: Affine) -> Affine {
        // self ∘ inner
        let [a, b, c, d, e, f] = self.0;
        let [a2, b2, c2, d2, e2, f2] = inner.0;
        Affine([
            a * a2 + c * b2,
            b * a2 + d * b2,
            a * c2 + c * d2,
            b * c2 + d * d2,
            a * e2 + c * f2 + e,
            b * e2 + d * f2 + f,
        ])
    }

    fn apply(&self, p: Point) -> Point {
        let [a, b, c, d, e, f] = self.0;
        Point::new(a * p.x + c * p.y + e, b * p.x + d * p.y + f)
    }

    fn det(&self) -> f64 {
        self.0[0] * self.0[3] - self.0[1] * self.0[2]
    }

    fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

fn transform_attr(node: &Node, name: &str) -> Result<Affine, SvgError> {
    match node.attribute(name) {
        None => Ok(Affine::IDENTITY),
        Some(v) => {
            let t = svgtypes::Transform::from_str(v).map_err(|_| invalid(node, name, v))?;
            Ok(Affine([t.a, t.b, t.c, t.d, t.e, t.f]))
        }
    }
}

fn dimensions(root: Node) -> Result<(f64, f64, Affine), SvgError> {
    let view_box = match root.attribute("viewBox") {
        Some(v) => Some(ViewBox::from_str(v).map_err(|_| invalid(&root, "viewBox", v))?),
        None => None,
    };
    let vb_w = view_box.map(|v| v.w);
    let vb_h = view_box.map(|v| v.h);
    let dim = |name: &str, fallback: Option<f64>| -> Result<Option<f64>, SvgError> {
        match root.attribute(name) {
            Some(v) if v.trim().ends_with('%') => Ok(fallback),
            Some(v) => length_value(&root, name, v, 0.0).map(Some),
            None => Ok(fallback),
        }
    };
    let width = dim("width", vb_w)?.ok_or(SvgError::MissingDimensions)?;
    let height = dim("height", vb_h)?.ok_or(SvgError::MissingDimensions)?;
    if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
        return Err(SvgError::MissingDimensions);
    }
    let viewport = match view_box {
        Some(vb) if vb.w > 0.0 && vb.h > 0.0 => {
            // preserveAspectRatio="xMidYMid meet"
            let s = (width / vb.w).min(height / vb.h);
            let tx = (width - vb.w * s) / 2.0 - vb.x * s;
            let ty = (height - vb.h * s) / 2.0 - vb.y * s;
            Affine([s, 0.0, 0.0, s, tx, ty])
        }
        _ => Affine::IDENTITY,
    };
    Ok((width, height, viewport))
}

#[derive(Debug, Clone)]
enum PaintSpec {
    None,
    Color(Rgba),
    CurrentColor,
    Url(String),
}

fn parse_paint(node: &Node, name: &str, value: &str) -> Result<Option<PaintSpec>, SvgError> {
    let v = value.trim();
    if v == "inherit" {
        return Ok(None);
    }
    if v == "none" {
        return Ok(Some(PaintSpec::None));
    }
    if v == "currentColor" {
        return Ok(Some(PaintSpec::CurrentColor));
    }
    if let Some(rest) = v.strip_prefix("url(") {
        let end = rest.find(')').ok_or_else(|| invalid(node, name, value))?;
        let id = rest[..end]
            .trim()
            .trim_matches(|c| c == '\'' || c == '"')
            .trim_start_matches('#');
        return Ok(Some(PaintSpec::Url(id.to_string())));
    }
    parse_color(v)
        .map(|c| Some(PaintSpec::Color(c)))
        .ok_or_else(|| invalid(node, name, value))
}

/// Style state inherited down the element tree.
#[derive(Debug, Clone)]
struct Inherited {
    ctm: Affine,
    fill: PaintSpec,
    stroke: PaintSpec,
    stroke_width: f64,
    fill_opacity: f64,
    stroke_opacity: f64,
    /// Product of the `opacity` of all ancestors (not itself inherited in SVG; folded here).
    opacity: f64,
    color: Rgba,
}

impl Inherited {
    fn root(viewport: Affine) -> Self {
        Self {
            ctm: viewport,
            fill: PaintSpec::Color(Rgba::BLACK),
            stroke: PaintSpec::None,
            stroke_width: 1.0,
            fill_opacity: 1.0,
            stroke_opacity: 1.0,
            opacity: 1.0,
            color: Rgba::BLACK,
        }
    }

    fn derive(&self, node: &Node) -> Result<Self, SvgError> {
        let mut s = self.clone();
        s.ctm = self.ctm.then(transform_attr(node, "transform")?);
        if let Some(v) = property(node, "color") {
            if let Some(c) = parse_color(v) {
                s.color = c;
            }
        }
        if let Some(v) = property(node, "fill") {
            if let Some(p) = parse_paint(node, "fill", v)? {
                s.fill = p;
            }
        }
        if let Some(v) = property(node, "stroke") {
            if let Some(p) = parse_paint(node, "stroke", v)? {
                s.stroke = p;
            }
        }
        if let Some(v) = property(node, "stroke-width") {
            if v != "inherit" {
                let w = length_value(node, "stroke-width", v, 0.0)?;
                if w < 0.0 {
                    return Err(invalid(node, "stroke-width", v));
                }
                s.stroke_width = w;
            }
        }
        for (name, slot) in [
            ("fill-opacity", &mut s.fill_opacity),
            ("stroke-opacity", &mut s.stroke_opacity),
        ] {
            if let Some(v) = property(node, name) {
                if v != "inherit" {
                    *slot = parse_number_attr(node, name, v)?.clamp(0.0, 1.0);
                }
            }
        }
        if let Some(v) = property(node, "opacity") {
            s.opacity *= parse_number_attr(node, "opacity", v)?.clamp(0.0, 1.0);
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum GradientUnits {
    UserSpace,
    BoundingBox,
}

/// A gradient after `href` inheritance, still in its own coordinate system.
#[derive(Debug, Clone)]
struct GradientTemplate {
    units: GradientUnits,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    transform: Affine,
    stops: Vec<GradientStop>,
}

struct Context<'a, 'input> {
    ids: HashMap<&'a str, Node<'a, 'input>>,
}

impl<'a, 'input> Context<'a, 'input> {
    fn new(doc: &'a Document<'input>) -> Result<Self, SvgError> {
        let mut ids = HashMap::new();
        for node in doc.descendants().filter(is_svg_element) {
            if let Some(id) = node.attribute("id") {
                ids.entry(id).or_insert(node);
            }
        }
        Ok(Self { ids })
    }

    fn href(node: &Node<'a, 'input>) -> Option<&'a str> {
        node.attribute(("http://www.w3.org/1999/xlink", "href"))
            .or_else(|| node.attribute("href"))
            .map(|h| h.trim().trim_start_matches('#'))
    }

    /// Orders all gradient definitions so every `href` target precedes its
    /// referrer, then resolves attribute inheritance in that order.
    fn resolve_gradients(
        &self,
        width: f64,
        height: f64,
    ) -> Result<HashMap<String, GradientTemplate>, SvgError> {
        let mut gradient_ids: Vec<&str> = self
            .ids
            .iter()
            .filter(|(_, n)| n.tag_name().name() == "linearGradient")
            .map(|(id, _)| *id)
            .collect();
        gradient_ids.sort_unstable();

        let order = self.topological_order(&gradient_ids)?;
        let mut resolved: HashMap<String, GradientTemplate> = HashMap::new();
        for id in order {
            let node = self.ids[id];
            let parent = Self::href(&node).and_then(|h| resolved.get(h)).cloned();
            let template = self.gradient_template(&node, parent, width, height)?;
            resolved.insert(id.to_string(), template);
        }
        Ok(resolved)
    }

    fn topological_order(&self, roots: &[&'a str]) -> Result<Vec<&'a str>, SvgError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Active,
            Done,
        }
        let mut marks: HashMap<&str, Mark> = HashMap::new();
        let mut order = Vec::new();
        for &root in roots {
            if marks.contains_key(root) {
                continue;
            }
            let mut path: Vec<&str> = Vec::new();
            let mut current = Some(root);
            // href chains have out-degree one, so the DFS is a walk.
            while let Some(id) = current {
                match marks.get(id) {
                    Some(Mark::Done) => break,
                    Some(Mark::Active) => {
                        let start = path.iter().position(|p| *p == id).unwrap_or(0);
                        let mut cycle: Vec<String> =
                            path[start..].iter().map(|s| s.to_string()).collect();
                        cycle.push(id.to_string());
                        return Err(SvgError::Cycle { cycle });
                    }
                    None => {}
                }
                let node = self.ids[id];
                let next = match Self::href(&node) {
                    Some(target) => match self.ids.get(target) {
                        Some(t) if t.tag_name().name() == "linearGradient" => Some(target),
                        Some(t) if t.tag_name().name() == "radialGradient" => {
                            return Err(unsupported(t))
                        }
                        _ => {
                            return Err(SvgError::BadReference {
                                id: target.to_string(),
                                line: line_of(&node),
                            })
                        }
                    },
                    None => None,
                };
                marks.insert(id, Mark::Active);
                path.push(id);
                current = next;
            }
            for id in path.into_iter().rev() {
                marks.insert(id, Mark::Done);
                order.push(id);
            }
        }
        Ok(order)
    }

    fn gradient_template(
        &self,
        node: &Node<'a, 'input>,
        parent: Option<GradientTemplate>,
        width: f64,
        height: f64,
    ) -> Result<GradientTemplate, SvgError> {
        let mut t = parent.unwrap_or(GradientTemplate {
            units: GradientUnits::BoundingBox,
            x1: 0.0,
            y1: 0.0,
            x2: 1.0,
            y2: 0.0,
            transform: Affine::IDENTITY,
            stops: Vec::new(),
        });
        if let Some(u) = node.attribute("gradientUnits") {
            t.units = match u.trim() {
                "userSpaceOnUse" => GradientUnits::UserSpace,
                "objectBoundingBox" => GradientUnits::BoundingBox,
                _ => return Err(invalid(node, "gradientUnits", u)),
            };
        }
        if let Some(s) = node.attribute("spreadMethod") {
            if s.trim() != "pad" {
                return Err(invalid(node, "spreadMethod", s));
            }
        }
        for (name, slot, reference) in [
            ("x1", &mut t.x1, width),
            ("y1", &mut t.y1, height),
            ("x2", &mut t.x2, width),
            ("y2", &mut t.y2, height),
        ] {
            if let Some(v) = node.attribute(name) {
                *slot = match t.units {
                    GradientUnits::BoundingBox => parse_number_attr(node, name, v)?,
                    GradientUnits::UserSpace => length_value(node, name, v, reference)?,
                };
            }
        }
        if node.attribute("gradientTransform").is_some() {
            t.transform = transform_attr(node, "gradientTransform")?;
        }
        let stops: Vec<Node> = node
            .children()
            .filter(|c| is_svg_element(c) && c.tag_name().name() == "stop")
            .collect();
        if !stops.is_empty() {
            t.stops.clear();
            let mut last = 0.0f64;
            for stop in stops {
                let offset = match stop.attribute("offset") {
                    Some(v) => parse_number_attr(&stop, "offset", v)?.clamp(0.0, 1.0),
                    None => 0.0,
                };
                let offset = offset.max(last);
                last = offset;
                let mut color = match property(&stop, "stop-color") {
                    Some(v) => parse_color(v).ok_or_else(|| invalid(&stop, "stop-color", v))?,
                    None => Rgba::BLACK,
                };
                if let Some(v) = property(&stop, "stop-opacity") {
                    color.a *= parse_number_attr(&stop, "stop-opacity", v)?.clamp(0.0, 1.0);
                }
                t.stops.push(GradientStop { offset, color });
            }
        }
        Ok(t)
    }

    fn walk_children(
        &self,
        node: Node<'a, 'input>,
        state: &Inherited,
        gradients: &HashMap<String, GradientTemplate>,
        out: &mut Vec<Shape>,
    ) -> Result<(), SvgError> {
        for child in node.children().filter(Node::is_element) {
            if !is_svg_element(&child) {
                continue;
            }
            let tag = child.tag_name().name();
            if IGNORED_TAGS.contains(&tag) {
                continue;
            }
            match tag {
                "defs" => self.check_defs(child)?,
                "linearGradient" => self.check_defs(child)?,
                "g" | "svg" => {
                    if property(&child, "display") == Some("none") {
                        continue;
                    }
                    let mut inner = state.derive(&child)?;
                    if tag == "svg" {
                        let x = length_attr(&child, "x", 0.0)?.unwrap_or(0.0);
                        let y = length_attr(&child, "y", 0.0)?.unwrap_or(0.0);
                        inner.ctm = inner.ctm.then(Affine([1.0, 0.0, 0.0, 1.0, x, y]));
                    }
                    self.walk_children(child, &inner, gradients, out)?;
                }
                "path" | "rect" | "circle" | "ellipse" | "line" | "polyline" | "polygon" => {
                    if property(&child, "display") == Some("none") {
                        continue;
                    }
                    let s = state.derive(&child)?;
                    if let Some(shape) = self.build_shape(&child, &s, gradients)? {
                        out.push(shape);
                    }
                }
                _ => return Err(unsupported(&child)),
            }
        }
        Ok(())
    }

    /// Definitions are not rendered, but unsupported content inside them is still rejected.
    fn check_defs(&self, node: Node<'a, 'input>) -> Result<(), SvgError> {
        for d in node.descendants().skip(1).filter(is_svg_element) {
            match d.tag_name().name() {
                "linearGradient" | "stop" | "defs" | "g" | "path" | "rect" | "circle"
                | "ellipse" | "line" | "polyline" | "polygon" => {}
                t if IGNORED_TAGS.contains(&t) => {}
                _ => return Err(unsupported(&d)),
            }
        }
        Ok(())
    }

    fn build_shape(
        &self,
        node: &Node<'a, 'input>,
        state: &Inherited,
        gradients: &HashMap<String, GradientTemplate>,
    ) -> Result<Option<Shape>, SvgError> {
        let local = element_geometry(node)?;
        if local.is_empty() {
            return Ok(None);
        }
        let bbox = bounding_box(&local);
        let fill = self.resolve_paint(
            node,
            &state.fill,
            state.fill_opacity * state.opacity,
            state,
            bbox,
            gradients,
        )?;
        let stroke = self.resolve_paint(
            node,
            &state.stroke,
            state.stroke_opacity * state.opacity,
            state,
            bbox,
            gradients,
        )?;
        let ctm = state.ctm;
        let subpaths = if ctm.is_identity() {
            local
        } else {
            local
                .into_iter()
                .map(|sp| Subpath {
                    points: sp.points.iter().map(|p| ctm.apply(*p)).collect(),
                    closed: sp.closed,
                })
                .collect()
        };
        let stroke_width = state.stroke_width * ctm.det().abs().sqrt();
        Ok(Some(Shape {
            subpaths,
            fill,
            stroke,
            stroke_width,
        }))
    }

    fn resolve_paint(
        &self,
        node: &Node<'a, 'input>,
        spec: &PaintSpec,
        opacity: f64,
        state: &Inherited,
        bbox: Option<[f64; 4]>,
        gradients: &HashMap<String, GradientTemplate>,
    ) -> Result<Paint, SvgError> {
        let with_alpha = |mut c: Rgba| {
            c.a *= opacity;
            c
        };
        Ok(match spec {
            PaintSpec::None => Paint::None,
            PaintSpec::Color(c) => Paint::Solid(with_alpha(*c)),
            PaintSpec::CurrentColor => Paint::Solid(with_alpha(state.color)),
            PaintSpec::Url(id) => {
                let Some(template) = gradients.get(id) else {
                    if let Some(target) = self.ids.get(id.as_str()) {
                        if target.tag_name().name() == "radialGradient"
                            || target.tag_name().name() == "pattern"
                        {
                            return Err(unsupported(target));
                        }
                    }
                    return Err(SvgError::BadReference {
                        id: id.clone(),
                        line: line_of(node),
                    });
                };
                realize_gradient(template, state.ctm, bbox, opacity)
            }
        })
    }
}

/// Maps a gradient template into absolute coordinates for one element.
fn realize_gradient(
    t: &GradientTemplate,
    ctm: Affine,
    bbox: Option<[f64; 4]>,
    opacity: f64,
) -> Paint {
    let mut stops: Vec<GradientStop> = t
        .stops
        .iter()
        .map(|s| GradientStop {
            offset: s.offset,
            color: Rgba { a: s.color.a * opacity, ..s.color },
        })
        .collect();
    match stops.len() {
        0 => return Paint::None,
        1 => return Paint::Solid(stops[0].color),
        _ => {}
    }
    let units = match t.units {
        GradientUnits::UserSpace => Affine::IDENTITY,
        GradientUnits::BoundingBox => match bbox {
            Some([x0, y0, x1, y1]) if x1 > x0 && y1 > y0 => {
                Affine([x1 - x0, 0.0, 0.0, y1 - y0, x0, y0])
            }
            // Zero-extent bounding box: the gradient is not rendered.
            _ => return Paint::None,
        },
    };
    let m = ctm.then(units).then(t.transform);
    let det = m.det();
    let gx = t.x2 - t.x1;
    let gy = t.y2 - t.y1;
    let len2 = gx * gx + gy * gy;
    if det.abs() < 1e-300 || len2 == 0.0 {
        let last = stops.pop().map(|s| s.color).unwrap_or(Rgba::BLACK);
        return Paint::Solid(last);
    }
    // t(p) = (M⁻¹p - g1)·g/|g|² is affine in p with gradient M⁻ᵀ g/|g|².
    let [a, b, c, d, _, _] = m.0;
    let (ux, uy) = (gx / len2, gy / len2);
    let ax = (d * ux - b * uy) / det;
    let ay = (-c * ux + a * uy) / det;
    let start = m.apply(Point::new(t.x1, t.y1));
    let end = if a == d && b == -c {
        // similarity: the mapped end point is exact
        m.apply(Point::new(t.x2, t.y2))
    } else {
        let norm2 = ax * ax + ay * ay;
        Point::new(start.x + ax / norm2, start.y + ay / norm2)
    };
    Paint::LinearGradient(LinearGradient { start, end, stops })
}

fn attr_f(node: &Node, name: &str) -> Result<f64, SvgError> {
    Ok(length_attr(node, name, 0.0)?.unwrap_or(0.0))
}

/// Builds the element's subpaths in its local coordinate system.
fn element_geometry(node: &Node) -> Result<Vec<Subpath>, SvgError> {
    let mut b = PathBuilder::default();
    match node.tag_name().name() {
        "path" => {
            let d = node.attribute("d").unwrap_or("");
            for seg in SimplifyingPathParser::from(d) {
                // An error ends the path at the last valid segment (SVG error handling).
                let Ok(seg) = seg else { break };
                match seg {
                    SimplePathSegment::MoveTo { x, y } => b.move_to(Point::new(x, y)),
                    SimplePathSegment::LineTo { x, y } => b.line_to(Point::new(x, y)),
                    SimplePathSegment::CurveTo {
                        x1,
                        y1,
                        x2,
                        y2,
                        x,
                        y,
                    } => b.cubic_to(Point::new(x1, y1), Point::new(x2, y2), Point::new(x, y)),
                    SimplePathSegment::Quadratic { x1, y1, x, y } => {
                        b.quad_to(Point::new(x1, y1), Point::new(x, y))
                    }
                    SimplePathSegment::ClosePath => b.close(),
                }
            }
        }
        "rect" => {
            let x = attr_f(node, "x")?;
            let y = attr_f(node, "y")?;
            let w = attr_f(node, "width")?;
            let h = attr_f(node, "height")?;
            if w <= 0.0 || h <= 0.0 {
                return Ok(Vec::new());
            }
            let rx_attr = length_attr(node, "rx", w)?;
            let ry_attr = length_attr(node, "ry", h)?;
            let (rx, ry) = match (rx_attr, ry_attr) {
                (Some(rx), Some(ry)) => (rx, ry),
                (Some(r), None) | (None, Some(r)) => (r, r),
                (None, None) => (0.0, 0.0),
            };
            let rx = rx.clamp(0.0, w / 2.0);
            let ry = ry.clamp(0.0, h / 2.0);
            if rx > 0.0 && ry > 0.0 {
                let (kx, ky) = (rx * KAPPA, ry * KAPPA);
                b.move_to(Point::new(x + rx, y));
                b.line_to(Point::new(x + w - rx, y));
                b.cubic_to(
                    Point::new(x + w - rx + kx, y),
                    Point::new(x + w, y + ry - ky),
                    Point::new(x + w, y + ry),
                );
                b.line_to(Point::new(x + w, y + h - ry));
                b.cubic_to(
                    Point::new(x + w, y + h - ry + ky),
                    Point::new(x + w - rx + kx, y + h),
                    Point::new(x + w - rx, y + h),
                );
                b.line_to(Point::new(x + rx, y + h));
                b.cubic_to(
                    Point::new(x + rx - kx, y + h),
                    Point::new(x, y + h - ry + ky),
                    Point::new(x, y + h - ry),
                );
                b.line_to(Point::new(x, y + ry));
                b.cubic_to(
                    Point::new(x, y + ry - ky),
                    Point::new(x + rx - kx, y),
                    Point::new(x + rx, y),
                );
            } else {
                b.move_to(Point::new(x, y));
                b.line_to(Point::new(x + w, y));
                b.line_to(Point::new(x + w, y + h));
                b.line_to(Point::new(x, y + h));
            }
            b.close();
        }
        "circle" | "ellipse" => {
            let cx = attr_f(node, "cx")?;
            let cy = attr_f(node, "cy")?;
            let (rx, ry) = if node.tag_name().name() == "circle" {
                let r = attr_f(node, "r")?;
                (r, r)
            } else {
                (attr_f(node, "rx")?, attr_f(node, "ry")?)
            };
            if rx <= 0.0 || ry <= 0.0 {
                return Ok(Vec::new());
            }
            let (kx, ky) = (rx * KAPPA, ry * KAPPA);
            b.move_to(Point::new(cx + rx, cy));
            b.cubic_to(
                Point::new(cx + rx, cy + ky),
                Point::new(cx + kx, cy + ry),
                Point::new(cx, cy + ry),
            );
            b.cubic_to(
                Point::new(cx - kx, cy + ry),
                Point::new(cx - rx, cy + ky),
                Point::new(cx - rx, cy),
            );
            b.cubic_to(
                Point::new(cx - rx, cy - ky),
                Point::new(cx - kx, cy - ry),
                Point::new(cx, cy - ry),
            );
            b.cubic_to(
                Point::new(cx + kx, cy - ry),
                Point::new(cx + rx, cy - ky),
                Point::new(cx + rx, cy),
            );
            b.close();
        }
        "line" => {
            b.move_to(Point::new(attr_f(node, "x1")?, attr_f(node, "y1")?));
            b.line_to(Point::new(attr_f(node, "x2")?, attr_f(node, "y2")?));
        }
        tag @ ("polyline" | "polygon") => {
            let pts = node.attribute("points").unwrap_or("");
            let mut first = true;
            for (x, y) in svgtypes::PointsParser::from(pts) {
                let p = Point::new(x, y);
                if first {
                    b.move_to(p);
                    first = false;
                } else {
                    b.line_to(p);
                }
            }
            if tag == "polygon" {
                b.close();
            }
        }
        _ => return Err(unsupported(node)),
    }
    Ok(b.finish())
}

/// Accumulates cubic subpaths from path commands.
#[derive(Default)]
struct PathBuilder {
    done: Vec<Subpath>,
    current: Vec<Point>,
}

impl PathBuilder {
    fn flush(&mut self, closed: bool) {
        let mut pts = std::mem::take(&mut self.current);
        if pts.len() < 4 {
            return;
        }
        if closed {
            // The final cubic ends on the start point, which the closed encoding leaves implicit.
            pts.pop();
        }
        self.done.push(Subpath {
            points: pts,
            closed,
        });
    }

    fn last(&self) -> Point {
        self.current.last().copied().unwrap_or_default()
    }

    fn move_to(&mut self, p: Point) {
        self.flush(false);
        self.current.push(p);
    }

    fn ensure_started(&mut self) {
        if self.current.is_empty() {
            let start = self
                .done
                .last()
                .map(|s| s.points[0])
                .unwrap_or_default();
            self.current.push(start);
        }
    }

    fn line_to(&mut self, p: Point) {
        self.ensure_started();
        let p0 = self.last();
        self.current.push(p0.lerp(p, 1.0 / 3.0));
        self.current.push(p0.lerp(p, 2.0 / 3.0));
        self.current.push(p);
    }

    fn quad_to(&mut self, c: Point, p: Point) {
        self.ensure_started();
        let p0 = self.last();
        self.current.push(p0.lerp(c, 2.0 / 3.0));
        self.current.push(p.lerp(c, 2.0 / 3.0));
        self.current.push(p);
    }

    fn cubic_to(&mut self, c1: Point, c2: Point, p: Point) {
        self.ensure_started();
        self.current.extend([c1, c2, p]);
    }

    fn close(&mut self) {
        if self.current.len() < 4 {
            self.current.clear();
            return;
        }
        let start = self.current[0];
        if self.last() != start {
            self.line_to(start);
        }
        self.flush(true);
    }

    fn finish(mut self) -> Vec<Subpath> {
        self.flush(false);
        self.done
    }
}

/// Tight axis-aligned bounds `[x0, y0, x1, y1]` of the cubic curves (not just their hulls).
fn bounding_box(subpaths: &[Subpath]) -> Option<[f64; 4]> {
    let mut bb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    let mut include = |p: Point| {
        bb[0] = bb[0].min(p.x);
        bb[1] = bb[1].min(p.y);
        bb[2] = bb[2].max(p.x);
        bb[3] = bb[3].max(p.y);
    };
    for sp in subpaths {
        for s in 0..sp.segment_count() {
            let seg = sp.segment(s);
            include(seg[0]);
            include(seg[3]);
            for t in cubic_extrema(&seg) {
                include(crate::raster::cubic_point(&seg, t));
            }
        }
    }
    bb[0].is_finite().then_some(bb)
}

fn cubic_extrema(seg: &[Point; 4]) -> Vec<f64> {
    let mut out = Vec::new();
    for axis in 0..2 {
        let v: [f64; 4] = seg.map(|p| if axis == 0 { p.x } else { p.y });
        // derivative / 3 = a t² + b t + c
        let a = -v[0] + 3.0 * v[1] - 3.0 * v[2] + v[3];
        let b = 2.0 * (v[0] - 2.0 * v[1] + v[2]);
        let c = v[1] - v[0];
        if a.abs() < 1e-12 {
            if b.abs() > 1e-12 {
                out.push(-c / b);
            }
        } else {
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                out.push((-b + sq) / (2.0 * a));
                out.push((-b - sq) / (2.0 * a));
            }
        }
    }
    out.retain(|t| *t > 0.0 && *t < 1.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Scene, SvgError> {
        parse_svg(s.as_bytes())
    }

    #[test]
    fn triangle_path_becomes_three_cubics() {
        let scene = parse(
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="20" height="20">
                <path d="M0 0 L10 0 L10 10 Z" fill="#000"/></svg>"##,
        )
        .unwrap();
        assert_eq!(scene.shapes.len(), 1);
        let shape = &scene.shapes[0];
        assert_eq!(shape.subpaths.len(), 1);
        let sp = &shape.subpaths[0];
        assert!(sp.closed);
        assert_eq!(sp.segment_count(), 3);
        assert_eq!(sp.points.len(), 9);
        assert_eq!(shape.fill, Paint::Solid(Rgba::BLACK));
        assert_eq!(shape.stroke, Paint::None);
        // elevated line control points sit at thirds
        assert!((sp.points[1].x - 10.0 / 3.0).abs() < 1e-12 && sp.points[1].y == 0.0);
    }

    #[test]
    fn gradient_declared_after_use() {
        let late = r##"<svg xmlns="http://www.w3.org/2000/svg" width="10" height="10">
            <rect width="10" height="10" fill="url(#g)"/>
            <defs><linearGradient id="g" x1="0" x2="1">
              <stop offset="0" stop-color="red"/><stop offset="1" stop-color="blue"/>
            </linearGradient></defs></svg>"##;
        let early = r##"<svg xmlns="http://www.w3.org/2000/svg" width="10" height="10">
            <defs><linearGradient id="g" x1="0" x2="1">
              <stop offset="0" stop-color="red"/><stop offset="1" stop-color="blue"/>
            </linearGradient></defs>
            <rect width="10" height="10" fill="url(#g)"/></svg>"##;
        let a = parse(late).unwrap();
        let b = parse(early).unwrap();
        assert_eq!(a, b);
        match &a.shapes[0].fill {
            Paint::LinearGradient(g) => {
                assert_eq!(g.start, Point::new(0.0, 0.0));
                assert!((g.end.x - 10.0).abs() < 1e-12 && g.end.y.abs() < 1e-12);
            }
            other => panic!("expected gradient, got {other:?}"),
        }
    }

    #[test]
    fn href_chain_inherits_stops_regardless_of_order() {
        let svg = r##"<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" width="10" height="10">
            <rect width="10" height="10" fill="url(#c)"/>
            <linearGradient id="c" xlink:href="#b" x2="0" y2="1"/>
            <linearGradient id="b" href="#a" gradientUnits="userSpaceOnUse"/>
            <linearGradient id="a"><stop offset="0" stop-color="#fff"/><stop offset="1" stop-color="#000"/></linearGradient>
            </svg>"##;
        let scene = parse(svg).unwrap();
        let Paint::LinearGradient(g) = &scene.shapes[0].fill else {
            panic!()
        };
        assert_eq!(g.stops.len(), 2);
        // userSpaceOnUse from b, vertical direction from c
        assert!((g.end.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn href_cycle_is_reported() {
        let svg = r##"<svg xmlns="http://www.w3.org/2000/svg" width="10" height="10">
            <linearGradient id="a" href="#b"/><linearGradient id="b" href="#a"/>
            <rect width="1" height="1" fill="url(#a)"/></svg>"##;
        match parse(svg) {
            Err(SvgError::Cycle { cycle }) => {
                assert!(cycle.contains(&"a".to_string()) && cycle.contains(&"b".to_string()));
                assert_eq!(cycle.first(), cycle.last());
            }
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_tags_are_named() {
        for tag in ["text", "image", "filter"] {
            let svg = format!(
                r#"<svg xmlns="http://www.w3.org/2000/svg" width="10" height="10"><{tag}/></svg>"#
            );
            match parse(&svg) {
                Err(SvgError::Unsupported { tag: t, .. }) => assert_eq!(t, tag),
                other => panic!("{tag}: {other:?}"),
            }
        }
        let radial = r#"<svg xmlns="http://www.w3.org/2000/svg" width="10" height="10">
            <defs><radialGradient id="r"/></defs></svg>"#;
        assert!(matches!(
            parse(radial),
            Err(SvgError::Unsupported { tag, .. }) if tag == "radialGradient"
        ));
    }

    #[test]
    fn malformed_xml_has_location() {
        let err = parse("<svg width='1' height='1'>\n<path d='M0 0'></svg>").unwrap_err();
        match err {
            SvgError::Xml { line, .. } => assert!(line >= 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn transforms_are_flattened() {
        let svg = r#"<svg xmlns="http://www.w3.org/2000/svg" width="100" height="100">
            <g transform="translate(10 20)"><g transform="scale(2)">
            <rect x="1" y="1" width="2" height="2" stroke="red" stroke-width="3"/></g></g></svg>"#;
        let s = parse(svg).unwrap();
        let sp = &s.shapes[0].subpaths[0];
        assert_eq!(sp.points[0], Point::new(12.0, 22.0));
        assert_eq!(sp.points[3], Point::new(16.0, 22.0));
        assert_eq!(s.shapes[0].stroke_width, 6.0);
    }

    #[test]
    fn opacity_folds_into_alpha() {
        let svg = r#"<svg xmlns="http://www.w3.org/2000/svg" width="10" height="10">
            <g opacity="0.5"><rect width="5" height="5" fill="blue" fill-opacity="0.5"
            style="stroke:#000;stroke-opacity:0.8" opacity="0.5"/></g></svg>"#;
        let s = parse(svg).unwrap();
        assert_eq!(s.shapes[0].fill, Paint::Solid(Rgba::new(0.0, 0.0, 1.0, 0.125)));
        assert_eq!(s.shapes[0].stroke, Paint::Solid(Rgba::new(0.0, 0.0, 0.0, 0.2)));
    }

    #[test]
    fn view_box_maps_to_pixels() {
        let svg = r#"<svg xmlns="http://www.w3.org/2000/svg" width="200" height="200" viewBox="0 0 100 100">
            <circle cx="50" cy="50" r="10"/></svg>"#;
        let s = parse(svg).unwrap();
        assert_eq!(s.width, 200.0);
        let sp = &s.shapes[0].subpaths[0];
        assert_eq!(sp.points[0], Point::new(120.0, 100.0));
        assert_eq!(sp.points.len(), 12);
    }

    #[test]
    fn multiple_subpaths_survive() {
        let svg = r#"<svg xmlns="http://www.w3.org/2000/svg" width="10" height="10">
            <path d="M0 0 h4 v4 z M5 5 h4 v4 z m1 1 q1 1 2 0"/></svg>"#;
        let s = parse(svg).unwrap();
        let sp = &s.shapes[0].subpaths;
        assert_eq!(sp.len(), 3);
        assert!(sp[0].closed && sp[1].closed && !sp[2].closed);
        assert_eq!(sp[2].points[0], Point::new(6.0, 6.0));
    }

    #[test]
    fn metadata_and_foreign_elements_are_skipped() {
        let svg = r#"<svg xmlns="http://www.w3.org/2000/svg" xmlns:x="urn:x" width="10" height="10">
            <title>t</title><x:thing/><rect width="1" height="1"/></svg>"#;
        assert_eq!(parse(svg).unwrap().shapes.len(), 1);
    }

    #[test]
    fn missing_dimensions() {
        let svg = r#"<svg xmlns="http://www.w3.org/2000/svg"><rect width="1" height="1"/></svg>"#;
        assert!(matches!(parse(svg), Err(SvgError::MissingDimensions)));
    }
}
