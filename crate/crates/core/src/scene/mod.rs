//! Editable vector scene: shapes made of cubic Bézier subpaths with solid or
//! linear-gradient paints.
//!
//! Scenes come from [`parse_svg`], are written back with [`serialize_svg`],
//! and expose their optimizable parameters through [`extract_params`] /
//! [`apply_params`].

mod color;
mod params;
mod parse;
mod serialize;

pub use params::{
    apply_params, apply_params_unclamped, extract_params, DimensionError, ParamGroups, ParamLayout,
    ShapeParamRange,
};
pub use parse::{parse_svg, SvgError};
pub use serialize::{serialize_svg, serialize_svg_with, Precision};

/// A 2D point in user units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }
}

/// Straight (non-premultiplied) RGBA color, every channel in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rgba {
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub a: f64,
}

impl Rgba {
    pub const BLACK: Rgba = Rgba::new(0.0, 0.0, 0.0, 1.0);
    pub const WHITE: Rgba = Rgba::new(1.0, 1.0, 1.0, 1.0);

    pub const fn new(r: f64, g: f64, b: f64, a: f64) -> Self {
        Self { r, g, b, a }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.r, self.g, self.b, self.a]
    }

    pub fn from_array(c: [f64; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub(crate) fn clamped(self) -> Self {
        let c = |v: f64| v.clamp(0.0, 1.0);
        Self::new(c(self.r), c(self.g), c(self.b), c(self.a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientStop {
    pub offset: f64,
    pub color: Rgba,
}

/// A linear gradient in absolute user-space coordinates with pad spreading.
///
/// The color at a point `p` is found from `t = (p - start)·(end - start) / |end - start|²`,
/// clamped to `[0, 1]` and interpolated between the surrounding stops.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGradient {
    pub start: Point,
    pub end: Point,
    pub stops: Vec<GradientStop>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Paint {
    #[default]
    None,
    Solid(Rgba),
    LinearGradient(LinearGradient),
}

impl Paint {
    pub fn is_none(&self) -> bool {
        matches!(self, Paint::None)
    }

    /// Number of RGBA channels this paint contributes to the color group.
    pub fn channel_count(&self) -> usize {
        match self {
            Paint::None => 0,
            Paint::Solid(_) => 4,
            Paint::LinearGradient(g) => 4 * g.stops.len(),
        }
    }
}

/// A chain of cubic Bézier segments.
///
/// Open subpaths hold `3k + 1` points for `k` segments. Closed subpaths hold
/// `3k` points: the last segment runs from point `3k - 3` through the two
/// trailing control points back to point 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Subpath {
    pub points: Vec<Point>,
    pub closed: bool,
}

impl Subpath {
    pub fn segment_count(&self) -> usize {
        if self.closed {
            self.points.len() / 3
        } else {
            self.points.len().saturating_sub(1) / 3
        }
    }

    /// Whether the point count matches the segment encoding with at least one segment.
    pub fn is_well_formed(&self) -> bool {
        let n = self.points.len();
        if self.closed {
            n >= 3 && n.is_multiple_of(3)
        } else {
            n >= 4 && n % 3 == 1
        }
    }

    /// Indices of the four control points of segment `seg`.
    pub fn segment_indices(&self, seg: usize) -> [usize; 4] {
        let n = self.points.len();
        let base = 3 * seg;
        [base, base + 1, base + 2, (base + 3) % n.max(1)]
    }

    pub fn segment(&self, seg: usize) -> [Point; 4] {
        self.segment_indices(seg).map(|i| self.points[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    pub subpaths: Vec<Subpath>,
    pub fill: Paint,
    pub stroke: Paint,
    pub stroke_width: f64,
}

/// The vector image: a canvas size and shapes in paint order.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: f64,
    pub height: f64,
    pub shapes: Vec<Shape>,
}

impl Scene {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            shapes: Vec::new(),
        }
    }

    /// Per-shape subpath point counts; the optimizer must never change this.
    pub fn topology(&self) -> Vec<Vec<usize>> {
        self.shapes
            .iter()
            .map(|s| s.subpaths.iter().map(|p| p.points.len()).collect())
            .collect()
    }

    /// Structural comparison with an absolute tolerance on every real field.
    pub fn approx_eq(&self, other: &Scene, tol: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= tol;
        let color_close = |a: &Rgba, b: &Rgba| {
            a.to_array()
                .iter()
                .zip(b.to_array().iter())
                .all(|(x, y)| close(*x, *y))
        };
        let pt_close = |a: &Point, b: &Point| close(a.x, b.x) && close(a.y, b.y);
        let paint_close = |a: &Paint, b: &Paint| match (a, b) {
            (Paint::None, Paint::None) => true,
            (Paint::Solid(x), Paint::Solid(y)) => color_close(x, y),
            (Paint::LinearGradient(x), Paint::LinearGradient(y)) => {
                pt_close(&x.start, &y.start)
                    && pt_close(&x.end, &y.end)
                    && x.stops.len() == y.stops.len()
                    && x.stops.iter().zip(&y.stops).all(|(s, t)| {
                        close(s.offset, t.offset) && color_close(&s.color, &t.color)
                    })
            }
            _ => false,
        };
        close(self.width, other.width)
            && close(self.height, other.height)
            && self.shapes.len() == other.shapes.len()
            && self.shapes.iter().zip(&other.shapes).all(|(a, b)| {
                close(a.stroke_width, b.stroke_width)
                    && paint_close(&a.fill, &b.fill)
                    && paint_close(&a.stroke, &b.stroke)
                    && a.subpaths.len() == b.subpaths.len()
                    && a.subpaths.iter().zip(&b.subpaths).all(|(p, q)| {
                        p.closed == q.closed
                            && p.points.len() == q.points.len()
                            && p.points.iter().zip(&q.points).all(|(u, v)| pt_close(u, v))
                    })
            })
    }
}
