//! Differentiable rasterization of a [`Scene`].
//!
//! Coverage is a smoothstep ramp over the signed distance to the flattened
//! outline, evaluated at pixel centres, so every pixel is a smooth function of
//! the control points, colors, and stroke widths away from measure-zero sets.
//! Shapes composite source-over in document order (fill, then stroke) onto a
//! transparent canvas. [`render`] returns the image together with a
//! [`RenderTape`] whose [`RenderTape::backward`] maps a pixel gradient back to
//! the three parameter groups.

mod flatten;
mod geometry;
mod pixmap;
mod tape;

use rayon::prelude::*;
use thiserror::Error;

use crate::scene::{Paint, ParamLayout, Scene};
pub use flatten::{bernstein, cubic_point, FlattenPlan};
use geometry::{first_ctrl_indices, winding_at, GeomDeriv, PreparedShape};
pub use pixmap::{to_rgb, to_rgb_backward, RasterImage, RgbImage};
pub use tape::RenderTape;
use tape::{Entry, Layer, LayerKind, LayerPaint};

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("output size {width}x{height} is empty")]
    EmptyOutput { width: usize, height: usize },
    #[error("invalid render configuration: {0}")]
    Config(&'static str),
    #[error("render tape was already consumed by a backward pass")]
    TapeConsumed,
    #[error("gradient image is {actual:?}, rendered image is {expected:?}")]
    GradientShape {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("flatten plan does not match the scene topology")]
    PlanMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FillRule {
    #[default]
    NonZero,
    EvenOdd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub out_width: usize,
    pub out_height: usize,
    /// Maximum chord error of the Bézier flattening, in user units.
    pub flatten_tolerance: f64,
    /// Width of the coverage ramp across an edge, in pixels.
    pub aa_bandwidth: f64,
    pub fill_rule: FillRule,
    /// Background used when converting to RGB.
    pub background: [f64; 3],
}

impl RenderConfig {
    pub fn new(out_width: usize, out_height: usize) -> Self {
        Self {
            out_width,
            out_height,
            flatten_tolerance: 0.1,
            aa_bandwidth: 1.0,
            fill_rule: FillRule::NonZero,
            background: [1.0, 1.0, 1.0],
        }
    }

    /// Renders at the scene's native size.
    pub fn native(scene: &Scene) -> Self {
        Self::new(
            scene.width.round().max(1.0) as usize,
            scene.height.round().max(1.0) as usize,
        )
    }

    fn validate(&self) -> Result<(), RasterError> {
        if self.out_width == 0 || self.out_height == 0 {
            return Err(RasterError::EmptyOutput {
                width: self.out_width,
                height: self.out_height,
            });
        }
        if !(self.flatten_tolerance > 0.0) {
            return Err(RasterError::Config("flatten_tolerance must be positive"));
        }
        if !(self.aa_bandwidth > 0.0) {
            return Err(RasterError::Config("aa_bandwidth must be positive"));
        }
        Ok(())
    }
}

/// Rows per work item; fixed so reductions do not depend on the worker count.
const ROW_CHUNK: usize = 8;

/// Renders `scene`, returning the premultiplied image and its tape.
pub fn render(scene: &Scene, config: &RenderConfig) -> Result<(RasterImage, RenderTape), RasterError> {
    let plan = FlattenPlan::for_scene(scene, config.flatten_tolerance);
    render_with_plan(scene, config, &plan)
}

/// Renders with caller-supplied flattening breakpoints.
pub fn render_with_plan(
    scene: &Scene,
    config: &RenderConfig,
    plan: &FlattenPlan,
) -> Result<(RasterImage, RenderTape), RasterError> {
    render_impl(scene, config, plan, false)
}

/// Renders the outline image: fills become opaque black, strokes opaque white.
///
/// Paints are constants here, so the tape's color gradient is always zero.
pub fn render_contour(
    scene: &Scene,
    config: &RenderConfig,
) -> Result<(RasterImage, RenderTape), RasterError> {
    let plan = FlattenPlan::for_scene(scene, config.flatten_tolerance);
    render_contour_with_plan(scene, config, &plan)
}

pub fn render_contour_with_plan(
    scene: &Scene,
    config: &RenderConfig,
    plan: &FlattenPlan,
) -> Result<(RasterImage, RenderTape), RasterError> {
    render_impl(scene, config, plan, true)
}

fn render_impl(
    scene: &Scene,
    config: &RenderConfig,
    plan: &FlattenPlan,
    contour: bool,
) -> Result<(RasterImage, RenderTape), RasterError> {
    config.validate()?;
    if !plan.matches(scene) {
        return Err(RasterError::PlanMismatch);
    }
    let (w, h) = (config.out_width, config.out_height);
    let scale = [w as f64 / scene.width, h as f64 / scene.height];
    let width_scale = (scale[0] * scale[1]).sqrt();
    let first_ctrl = first_ctrl_indices(scene);
    let layout = ParamLayout::of(scene);

    let shapes: Vec<PreparedShape> = scene
        .shapes
        .iter()
        .zip(&plan.shapes)
        .zip(&first_ctrl)
        .map(|((shape, pieces), &fc)| {
            PreparedShape::new(
                shape,
                pieces,
                fc,
                scale,
                width_scale,
                config.aa_bandwidth,
                (w, h),
            )
        })
        .collect();

    let mut layers = Vec::new();
    for (i, shape) in scene.shapes.iter().enumerate() {
        let range = &layout.shapes[i];
        let prepared = &shapes[i];
        let fill_paint = layer_paint(&shape.fill, range.fill_colors.start, contour, false);
        if let Some(paint) = fill_paint {
            if !prepared.fill_bounds.is_empty() {
                layers.push(Layer {
                    shape: i,
                    kind: LayerKind::Fill,
                    paint,
                });
            }
        }
        let stroke_paint = layer_paint(&shape.stroke, range.stroke_colors.start, contour, true);
        if let Some(paint) = stroke_paint {
            if !prepared.stroke_bounds.is_empty() {
                layers.push(Layer {
                    shape: i,
                    kind: LayerKind::Stroke,
                    paint,
                });
            }
        }
    }

    let user_scale = [1.0 / scale[0], 1.0 / scale[1]];
    let chunks: Vec<(Vec<f64>, Vec<Vec<Entry>>, Vec<GeomDeriv>)> = (0..h.div_ceil(ROW_CHUNK))
        .into_par_iter()
        .map(|c| {
            let rows = c * ROW_CHUNK..((c + 1) * ROW_CHUNK).min(h);
            render_rows(rows, w, &shapes, &layers, config, user_scale)
        })
        .collect();

    let mut data = Vec::with_capacity(w * h * 4);
    let mut pixel_entries: Vec<Vec<Entry>> = Vec::with_capacity(w * h);
    let mut derivs = Vec::new();
    for (pixels, entries, d) in chunks {
        let base = derivs.len() as u32;
        data.extend(pixels);
        for mut list in entries {
            for e in &mut list {
                if e.deriv != u32::MAX {
                    e.deriv += base;
                }
            }
            pixel_entries.push(list);
        }
        derivs.extend(d);
    }
    let image = RasterImage {
        width: w,
        height: h,
        data,
    };
    let tape = RenderTape::new(
        image.width,
        image.height,
        layers,
        shapes,
        pixel_entries,
        derivs,
        scale,
        width_scale,
        user_scale,
        layout,
    );
    Ok((image, tape))
}

fn layer_paint(paint: &Paint, color_offset: usize, contour: bool, stroke: bool) -> Option<LayerPaint> {
    match paint {
        Paint::None => None,
        _ if contour => Some(LayerPaint::Constant(if stroke {
            [1.0, 1.0, 1.0, 1.0]
        } else {
            [0.0, 0.0, 0.0, 1.0]
        })),
        Paint::Solid(_) | Paint::LinearGradient(_) => Some(LayerPaint::Param {
            paint: paint.clone(),
            offset: color_offset,
        }),
    }
}

type RowOutput = (Vec<f64>, Vec<Vec<Entry>>, Vec<GeomDeriv>);

fn render_rows(
    rows: std::ops::Range<usize>,
    w: usize,
    shapes: &[PreparedShape],
    layers: &[Layer],
    config: &RenderConfig,
    user_scale: [f64; 2],
) -> RowOutput {
    let n_rows = rows.len();
    let mut pixels = vec![0.0; n_rows * w * 4];
    let mut entries: Vec<Vec<Entry>> = vec![Vec::new(); n_rows * w];
    let mut derivs = Vec::new();
    let mut crossings = Vec::new();
    let bw = config.aa_bandwidth;

    for (r, py) in rows.enumerate() {
        let yc = py as f64 + 0.5;
        for (li, layer) in layers.iter().enumerate() {
            let shape = &shapes[layer.shape];
            let bounds = match layer.kind {
                LayerKind::Fill => shape.fill_bounds,
                LayerKind::Stroke => shape.stroke_bounds,
            };
            if py < bounds.y0 || py >= bounds.y1 {
                continue;
            }
            if layer.kind == LayerKind::Fill {
                shape.row_crossings(yc, &mut crossings);
            }
            let mut winding = 0i32;
            let mut next_crossing = 0usize;
            for px in bounds.x0..bounds.x1 {
                let sample = match layer.kind {
                    LayerKind::Fill => {
                        let xc = px as f64 + 0.5;
                        while next_crossing < crossings.len() && crossings[next_crossing].0 < xc {
                            winding += crossings[next_crossing].1;
                            next_crossing += 1;
                        }
                        debug_assert_eq!(winding, winding_at(&crossings, xc));
                        shape.fill_sample(px, py, winding, config.fill_rule, bw)
                    }
                    LayerKind::Stroke => shape.stroke_sample(px, py, bw),
                };
                let sensitive = sample
                    .deriv
                    .is_some_and(|d| d.dcov_dq != [0.0, 0.0] || d.dcov_dhw != 0.0);
                if sample.coverage <= 0.0 && !sensitive {
                    continue;
                }
                let user = [
                    (px as f64 + 0.5) * user_scale[0],
                    (py as f64 + 0.5) * user_scale[1],
                ];
                let color = layer.paint.color_at(user).color;
                let alpha = color[3] * sample.coverage;
                let base = (r * w + px) * 4;
                let dst = &mut pixels[base..base + 4];
                for k in 0..3 {
                    dst[k] = color[k] * alpha + (1.0 - alpha) * dst[k];
                }
                dst[3] = alpha + (1.0 - alpha) * dst[3];
                let deriv = match sample.deriv {
                    Some(d) if sensitive => {
                        derivs.push(d);
                        derivs.len() as u32 - 1
                    }
                    _ => u32::MAX,
                };
                entries[r * w + px].push(Entry {
                    layer: li as u32,
                    coverage: sample.coverage,
                    deriv,
                });
            }
        }
    }
    (pixels, entries, derivs)
}
