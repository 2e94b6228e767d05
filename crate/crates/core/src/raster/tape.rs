use rayon::prelude::*;

use super::geometry::{GeomDeriv, PreparedShape};
use super::RasterError;
use crate::scene::{Paint, ParamGroups, ParamLayout};

const BACKWARD_ROW_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LayerKind {
    Fill,
    Stroke,
}

/// What a layer paints with.
#[derive(Debug, Clone)]
pub(crate) enum LayerPaint {
    /// A scene paint whose RGBA channels start at `offset` in the color group.
    Param { paint: Paint, offset: usize },
    /// A fixed color that receives no gradient.
    Constant([f64; 4]),
}

pub(crate) struct PaintSample {
    pub color: [f64; 4],
    /// Up to two `(color-group base index, weight)` pairs the color interpolates.
    pub stops: [(usize, f64); 2],
}

impl LayerPaint {
    pub fn color_at(&self, user: [f64; 2]) -> PaintSample {
        match self {
            LayerPaint::Constant(c) => PaintSample {
                color: *c,
                stops: [(usize::MAX, 0.0); 2],
            },
            LayerPaint::Param { paint, offset } => match paint {
                Paint::None => PaintSample {
                    color: [0.0; 4],
                    stops: [(usize::MAX, 0.0); 2],
                },
                Paint::Solid(c) => PaintSample {
                    color: c.to_array(),
                    stops: [(*offset, 1.0), (usize::MAX, 0.0)],
                },
                Paint::LinearGradient(g) => {
                    let dx = g.end.x - g.start.x;
                    let dy = g.end.y - g.start.y;
                    let len2 = dx * dx + dy * dy;
                    let t = if len2 > 0.0 {
                        (((user[0] - g.start.x) * dx + (user[1] - g.start.y) * dy) / len2)
                            .clamp(0.0, 1.0)
                    } else {
                        1.0
                    };
                    let n = g.stops.len();
                    let single = |i: usize| PaintSample {
                        color: g.stops[i].color.to_array(),
                        stops: [(offset + 4 * i, 1.0), (usize::MAX, 0.0)],
                    };
                    if t <= g.stops[0].offset {
                        return single(0);
                    }
                    if t >= g.stops[n - 1].offset {
                        return single(n - 1);
                    }
                    let i = g
                        .stops
                        .windows(2)
                        .position(|w| w[0].offset <= t && t < w[1].offset)
                        .unwrap_or(n - 2);
                    let (a, b) = (&g.stops[i], &g.stops[i + 1]);
                    let u = (t - a.offset) / (b.offset - a.offset);
                    let ca = a.color.to_array();
                    let cb = b.color.to_array();
                    let mut color = [0.0; 4];
                    for k in 0..4 {
                        color[k] = (1.0 - u) * ca[k] + u * cb[k];
                    }
                    PaintSample {
                        color,
                        stops: [(offset + 4 * i, 1.0 - u), (offset + 4 * (i + 1), u)],
                    }
                }
            },
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Layer {
    pub shape: usize,
    pub kind: LayerKind,
    pub paint: LayerPaint,
}

/// One layer's contribution at one pixel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Entry {
    pub layer: u32,
    pub coverage: f64,
    /// Index into the tape's derivative records, `u32::MAX` when coverage is locally constant.
    pub deriv: u32,
}

/// Record of a forward render sufficient for one backward pass.
pub struct RenderTape {
    width: usize,
    height: usize,
    layers: Vec<Layer>,
    shapes: Vec<PreparedShape>,
    vertex_offsets: Vec<usize>,
    entries: Option<Vec<Vec<Entry>>>,
    derivs: Vec<GeomDeriv>,
    scale: [f64; 2],
    width_scale: f64,
    user_scale: [f64; 2],
    layout: ParamLayout,
}

impl std::fmt::Debug for RenderTape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RenderTape")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("layers", &self.layers.len())
            .field("consumed", &self.entries.is_none())
            .finish()
    }
}

impl RenderTape {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        width: usize,
        height: usize,
        layers: Vec<Layer>,
        shapes: Vec<PreparedShape>,
        entries: Vec<Vec<Entry>>,
        derivs: Vec<GeomDeriv>,
        scale: [f64; 2],
        width_scale: f64,
        user_scale: [f64; 2],
        layout: ParamLayout,
    ) -> Self {
        let mut vertex_offsets = Vec::with_capacity(shapes.len() + 1);
        let mut acc = 0;
        for s in &shapes {
            vertex_offsets.push(acc);
            acc += s.vertices.len();
        }
        vertex_offsets.push(acc);
        Self {
            width,
            height,
            layers,
            shapes,
            vertex_offsets,
            entries: Some(entries),
            derivs,
            scale,
            width_scale,
            user_scale,
            layout,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    /// Back-propagates `loss_grad` (∂loss/∂pixel, `H×W×4` premultiplied RGBA)
    /// to the parameter groups. The tape can be consumed only once.
    pub fn backward(&mut self, loss_grad: &[f64]) -> Result<ParamGroups, RasterError> {
        let expected = self.width * self.height * 4;
        if loss_grad.len() != expected {
            return Err(RasterError::GradientShape {
                expected: (self.width, self.height),
                actual: (loss_grad.len() / 4 / self.height.max(1), self.height),
            });
        }
        let entries = self.entries.take().ok_or(RasterError::TapeConsumed)?;
        let n_vertices = *self.vertex_offsets.last().unwrap_or(&0);
        let w = self.width;

        let partials: Vec<(Vec<[f64; 2]>, Vec<f64>, Vec<f64>)> = (0..self
            .height
            .div_ceil(BACKWARD_ROW_CHUNK))
            .into_par_iter()
            .map(|c| {
                let rows = c * BACKWARD_ROW_CHUNK..((c + 1) * BACKWARD_ROW_CHUNK).min(self.height);
                let mut vgrad = vec![[0.0; 2]; n_vertices];
                let mut cgrad = vec![0.0; self.layout.color_len];
                let mut wgrad = vec![0.0; self.layout.width_len];
                let mut dst_stack: Vec<[f64; 4]> = Vec::new();
                for py in rows {
                    for px in 0..w {
                        let idx = py * w + px;
                        let list = &entries[idx];
                        if list.is_empty() {
                            continue;
                        }
                        let g0 = &loss_grad[idx * 4..idx * 4 + 4];
                        if g0.iter().all(|v| *v == 0.0) {
                            continue;
                        }
                        self.pixel_backward(
                            px,
                            py,
                            list,
                            [g0[0], g0[1], g0[2], g0[3]],
                            &mut dst_stack,
                            &mut vgrad,
                            &mut cgrad,
                            &mut wgrad,
                        );
                    }
                }
                (vgrad, cgrad, wgrad)
            })
            .collect();

        let mut vgrad = vec![[0.0; 2]; n_vertices];
        let mut grads = ParamGroups::zeros_like(&self.layout);
        for (v, c, wd) in partials {
            for (a, b) in vgrad.iter_mut().zip(&v) {
                a[0] += b[0];
                a[1] += b[1];
            }
            for (a, b) in grads.colors.iter_mut().zip(&c) {
                *a += b;
            }
            for (a, b) in grads.widths.iter_mut().zip(&wd) {
                *a += b;
            }
        }
        for (s, shape) in self.shapes.iter().enumerate() {
            let off = self.vertex_offsets[s];
            for (k, v) in shape.vertices.iter().enumerate() {
                let g = vgrad[off + k];
                if g == [0.0, 0.0] {
                    continue;
                }
                for j in 0..4 {
                    let ci = v.ctrl[j] as usize;
                    grads.points[2 * ci] += v.weights[j] * self.scale[0] * g[0];
                    grads.points[2 * ci + 1] += v.weights[j] * self.scale[1] * g[1];
                }
            }
        }
        Ok(grads)
    }

    #[allow(clippy::too_many_arguments)]
    fn pixel_backward(
        &self,
        px: usize,
        py: usize,
        list: &[Entry],
        mut g: [f64; 4],
        dst_stack: &mut Vec<[f64; 4]>,
        vgrad: &mut [[f64; 2]],
        cgrad: &mut [f64],
        wgrad: &mut [f64],
    ) {
        let user = [
            (px as f64 + 0.5) * self.user_scale[0],
            (py as f64 + 0.5) * self.user_scale[1],
        ];
        // replay the compositing to recover each layer's backdrop
        dst_stack.clear();
        let mut dst = [0.0; 4];
        for e in list {
            dst_stack.push(dst);
            let c = self.layers[e.layer as usize].paint.color_at(user).color;
            let alpha = c[3] * e.coverage;
            for k in 0..3 {
                dst[k] = c[k] * alpha + (1.0 - alpha) * dst[k];
            }
            dst[3] = alpha + (1.0 - alpha) * dst[3];
        }
        for (e, d) in list.iter().zip(dst_stack.iter()).rev() {
            let layer = &self.layers[e.layer as usize];
            let sample = layer.paint.color_at(user);
            let c = sample.color;
            let alpha = c[3] * e.coverage;
            // out = src + (1 - src_a)·dst, src = (c·alpha, alpha)
            let g_src_a = g[3] - (g[0] * d[0] + g[1] * d[1] + g[2] * d[2] + g[3] * d[3]);
            let g_alpha = g_src_a + g[0] * c[0] + g[1] * c[1] + g[2] * c[2];
            let g_cov = g_alpha * c[3];
            if sample.stops[0].0 != usize::MAX {
                let gc = [
                    g[0] * alpha,
                    g[1] * alpha,
                    g[2] * alpha,
                    g_alpha * e.coverage,
                ];
                for (base, weight) in sample.stops {
                    if base == usize::MAX || weight == 0.0 {
                        continue;
                    }
                    for k in 0..4 {
                        cgrad[base + k] += weight * gc[k];
                    }
                }
            }
            if e.deriv != u32::MAX && g_cov != 0.0 {
                let dv = self.derivs[e.deriv as usize];
                let shape = &self.shapes[layer.shape];
                let edges = match layer.kind {
                    super::tape::LayerKind::Fill => &shape.fill_edges,
                    super::tape::LayerKind::Stroke => &shape.stroke_edges,
                };
                let edge = edges[dv.edge as usize];
                let off = self.vertex_offsets[layer.shape];
                let gq = [g_cov * dv.dcov_dq[0], g_cov * dv.dcov_dq[1]];
                let a = &mut vgrad[off + edge[0] as usize];
                a[0] += (1.0 - dv.t) * gq[0];
                a[1] += (1.0 - dv.t) * gq[1];
                let b = &mut vgrad[off + edge[1] as usize];
                b[0] += dv.t * gq[0];
                b[1] += dv.t * gq[1];
                if dv.dcov_dhw != 0.0 {
                    wgrad[layer.shape] += g_cov * dv.dcov_dhw * 0.5 * self.width_scale;
                }
            }
            let keep = 1.0 - alpha;
            for v in &mut g {
                *v *= keep;
            }
        }
    }
}
