use std::ops::Range;

use thiserror::Error;

use super::{Paint, Point, Rgba, Scene};

/// The three independently optimized parameter groups.
///
/// The same type carries gradients with respect to the groups.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamGroups {
    /// Interleaved `x, y` of every control point, shape by shape, subpath by subpath.
    pub points: Vec<f64>,
    /// RGBA channels: per shape the fill paint, then the stroke paint
    /// (one RGBA per solid paint, one per gradient stop).
    pub colors: Vec<f64>,
    /// One stroke width per shape.
    pub widths: Vec<f64>,
}

impl ParamGroups {
    pub fn zeros_like(layout: &ParamLayout) -> Self {
        Self {
            points: vec![0.0; layout.point_len],
            colors: vec![0.0; layout.color_len],
            widths: vec![0.0; layout.width_len],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len() + self.colors.len() + self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ParamGroups, scale: f64) {
        for (a, b) in [
            (&mut self.points, &other.points),
            (&mut self.colors, &other.colors),
            (&mut self.widths, &other.widths),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn groups(&self) -> [(&'static str, &[f64]); 3] {
        [
            ("points", &self.points),
            ("colors", &self.colors),
            ("widths", &self.widths),
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.groups()
            .iter()
            .all(|(_, g)| g.iter().all(|v| v.is_finite()))
    }
}

/// Where one shape's parameters live inside [`ParamGroups`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeParamRange {
    pub points: Range<usize>,
    pub fill_colors: Range<usize>,
    pub stroke_colors: Range<usize>,
    pub width: usize,
}

/// Bijective index map between a scene and its flattened parameter groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub shapes: Vec<ShapeParamRange>,
    pub point_len: usize,
    pub color_len: usize,
    pub width_len: usize,
}

impl ParamLayout {
    pub fn of(scene: &Scene) -> Self {
        let mut shapes = Vec::with_capacity(scene.shapes.len());
        let (mut p, mut c) = (0usize, 0usize);
        for (i, shape) in scene.shapes.iter().enumerate() {
            let n_pts: usize = shape.subpaths.iter().map(|s| s.points.len()).sum();
            let points = p..p + 2 * n_pts;
            p = points.end;
            let fill_colors = c..c + shape.fill.channel_count();
            c = fill_colors.end;
            let stroke_colors = c..c + shape.stroke.channel_count();
            c = stroke_colors.end;
            shapes.push(ShapeParamRange {
                points,
                fill_colors,
                stroke_colors,
                width: i,
            });
        }
        Self {
            point_len: p,
            color_len: c,
            width_len: scene.shapes.len(),
            shapes,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("parameter group `{group}` has length {actual}, scene expects {expected}")]
pub struct DimensionError {
    pub group: &'static str,
    pub expected: usize,
    pub actual: usize,
}

fn paint_channels(paint: &Paint, out: &mut Vec<f64>) {
    match paint {
        Paint::None => {}
        Paint::Solid(c) => out.extend(c.to_array()),
        Paint::LinearGradient(g) => {
            for stop in &g.stops {
                out.extend(stop.color.to_array());
            }
        }
    }
}

fn set_paint_channels(paint: &mut Paint, values: &[f64], clamp_values: bool) {
    let clamp = |c: &[f64]| {
        let color = Rgba::new(c[0], c[1], c[2], c[3]);
        if clamp_values {
            color.clamped()
        } else {
            color
        }
    };
    match paint {
        Paint::None => {}
        Paint::Solid(c) => *c = clamp(values),
        Paint::LinearGradient(g) => {
            for (stop, chunk) in g.stops.iter_mut().zip(values.chunks_exact(4)) {
                stop.color = clamp(chunk);
            }
        }
    }
}

/// Flattens the scene's points, colors and stroke widths into [`ParamGroups`].
pub fn extract_params(scene: &Scene) -> (ParamGroups, ParamLayout) {
    let layout = ParamLayout::of(scene);
    let mut groups = ParamGroups {
        points: Vec::with_capacity(layout.point_len),
        colors: Vec::with_capacity(layout.color_len),
        widths: Vec::with_capacity(layout.width_len),
    };
    for shape in &scene.shapes {
        for sp in &shape.subpaths {
            for p in &sp.points {
                groups.points.extend([p.x, p.y]);
            }
        }
        paint_channels(&shape.fill, &mut groups.colors);
        paint_channels(&shape.stroke, &mut groups.colors);
        groups.widths.push(shape.stroke_width);
    }
    (groups, layout)
}

/// Returns a copy of `scene` with parameters overwritten from `params`.
///
/// Colors are clamped to `[0, 1]` and widths to `[0, ∞)`.
pub fn apply_params(scene: &Scene, params: &ParamGroups) -> Result<Scene, DimensionError> {
    apply(scene, params, true)
}

/// Like [`apply_params`] but stores values as given, without clamping.
///
/// Finite-difference checks use this so probes just outside `[0, 1]` stay two-sided.
pub fn apply_params_unclamped(
    scene: &Scene,
    params: &ParamGroups,
) -> Result<Scene, DimensionError> {
    apply(scene, params, false)
}

fn apply(scene: &Scene, params: &ParamGroups, clamp: bool) -> Result<Scene, DimensionError> {
    let layout = ParamLayout::of(scene);
    for (group, expected, actual) in [
        ("points", layout.point_len, params.points.len()),
        ("colors", layout.color_len, params.colors.len()),
        ("widths", layout.width_len, params.widths.len()),
    ] {
        if expected != actual {
            return Err(DimensionError {
                group,
                expected,
                actual,
            });
        }
    }
    let mut out = scene.clone();
    for (shape, range) in out.shapes.iter_mut().zip(&layout.shapes) {
        let mut k = range.points.start;
        for sp in &mut shape.subpaths {
            for p in &mut sp.points {
                *p = Point::new(params.points[k], params.points[k + 1]);
                k += 2;
            }
        }
        set_paint_channels(&mut shape.fill, &params.colors[range.fill_colors.clone()], clamp);
        set_paint_channels(
            &mut shape.stroke,
            &params.colors[range.stroke_colors.clone()],
            clamp,
        );
        let w = params.widths[range.width];
        shape.stroke_width = if clamp { w.max(0.0) } else { w };
    }
    Ok(out)
}
