//! Prepared per-shape geometry and signed-distance coverage queries.

use super::flatten::{flatten_subpath, FlatSubpath, Vertex};
use super::FillRule;
use crate::scene::{Scene, Shape};

const TILE: usize = 8;
/// Subpaths with less enclosed area (px²) than this contribute nothing to the fill.
const MIN_FILL_AREA: f64 = 1e-9;

/// Smoothstep ramp of width `bw` centred at zero: 0 below `-bw/2`, 1 above `bw/2`.
#[inline]
pub(crate) fn ramp(d: f64, bw: f64) -> f64 {
    let u = (d / bw + 0.5).clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

#[inline]
pub(crate) fn ramp_deriv(d: f64, bw: f64) -> f64 {
    let u = d / bw + 0.5;
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        6.0 * u * (1.0 - u) / bw
    }
}

/// Edge lists binned into pixel tiles; each edge lands in every tile its
/// margin-expanded bounding box touches.
#[derive(Debug, Default)]
pub(crate) struct TileIndex {
    x0: usize,
    y0: usize,
    nx: usize,
    ny: usize,
    offsets: Vec<u32>,
    edges: Vec<u32>,
}

impl TileIndex {
    fn build(
        vertices: &[Vertex],
        edges: &[[u32; 2]],
        margin: f64,
        bounds: PixelBounds,
    ) -> TileIndex {
        if bounds.is_empty() || edges.is_empty() {
            return TileIndex::default();
        }
        let x0 = bounds.x0 / TILE;
        let y0 = bounds.y0 / TILE;
        let nx = (bounds.x1 - 1) / TILE + 1 - x0;
        let ny = (bounds.y1 - 1) / TILE + 1 - y0;
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); nx * ny];
        for (k, e) in edges.iter().enumerate() {
            let a = vertices[e[0] as usize].pos;
            let b = vertices[e[1] as usize].pos;
            // pixel centres sit at +0.5, so tile t covers centres in [t*TILE+0.5, (t+1)*TILE-0.5]
            let lo_x = (a[0].min(b[0]) - margin - 0.5).floor();
            let hi_x = (a[0].max(b[0]) + margin - 0.5).ceil();
            let lo_y = (a[1].min(b[1]) - margin - 0.5).floor();
            let hi_y = (a[1].max(b[1]) + margin - 0.5).ceil();
            let tx0 = clamp_tile(lo_x, x0, nx);
            let tx1 = clamp_tile(hi_x, x0, nx);
            let ty0 = clamp_tile(lo_y, y0, ny);
            let ty1 = clamp_tile(hi_y, y0, ny);
            for ty in ty0..=ty1 {
                for tx in tx0..=tx1 {
                    buckets[ty * nx + tx].push(k as u32);
                }
            }
        }
        let mut offsets = Vec::with_capacity(buckets.len() + 1);
        let mut flat = Vec::new();
        offsets.push(0);
        for b in buckets {
            flat.extend(b);
            offsets.push(flat.len() as u32);
        }
        TileIndex {
            x0,
            y0,
            nx,
            ny,
            offsets,
            edges: flat,
        }
    }

    fn candidates(&self, px: usize, py: usize) -> &[u32] {
        let tx = px / TILE;
        let ty = py / TILE;
        if tx < self.x0 || ty < self.y0 || tx - self.x0 >= self.nx || ty - self.y0 >= self.ny {
            return &[];
        }
        let i = (ty - self.y0) * self.nx + (tx - self.x0);
        &self.edges[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }
}

fn clamp_tile(pixel: f64, origin: usize, n: usize) -> usize {
    let t = (pixel.max(0.0) as usize) / TILE;
    t.clamp(origin, origin + n - 1) - origin
}

/// Half-open pixel rectangle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct PixelBounds {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelBounds {
    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    /// Pixels whose centre lies within `margin` of the box spanned by `pts`.
    fn around(pts: impl Iterator<Item = [f64; 2]>, margin: f64, w: usize, h: usize) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in pts {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if !(lo[0].is_finite() && hi[0].is_finite() && lo[1].is_finite() && hi[1].is_finite()) {
            return Self::default();
        }
        let first = |v: f64, n: usize| ((v - margin - 0.5).floor().max(0.0) as usize).min(n);
        let last = |v: f64, n: usize| ((v + margin - 0.5).ceil().max(-1.0) + 1.0).min(n as f64) as usize;
        Self {
            x0: first(lo[0], w),
            y0: first(lo[1], h),
            x1: last(hi[0], w),
            y1: last(hi[1], h),
        }
    }
}

/// Geometric sensitivity of one coverage sample, recorded for the backward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct GeomDeriv {
    /// Edge index within the layer's edge list.
    pub edge: u32,
    /// Closest-point parameter on the edge.
    pub t: f64,
    /// `∂coverage/∂q` for the closest point `q` (pixel units).
    pub dcov_dq: [f64; 2],
    /// `∂coverage/∂(half stroke width in pixels)`; zero for fills.
    pub dcov_dhw: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Sample {
    pub coverage: f64,
    pub deriv: Option<GeomDeriv>,
}

/// Flattened, binned geometry of one shape in pixel space.
#[derive(Debug)]
pub(crate) struct PreparedShape {
    pub vertices: Vec<Vertex>,
    pub fill_edges: Vec<[u32; 2]>,
    pub stroke_edges: Vec<[u32; 2]>,
    pub fill_bounds: PixelBounds,
    pub stroke_bounds: PixelBounds,
    fill_tiles: TileIndex,
    stroke_tiles: TileIndex,
    pub half_width: f64,
}

impl PreparedShape {
    pub fn new(
        shape: &Shape,
        pieces: &[Vec<u16>],
        first_ctrl: u32,
        scale: [f64; 2],
        width_scale: f64,
        bandwidth: f64,
        image: (usize, usize),
    ) -> Self {
        let mut vertices = Vec::new();
        let mut subpaths: Vec<FlatSubpath> = Vec::new();
        let mut ctrl = first_ctrl;
        for (sp, pc) in shape.subpaths.iter().zip(pieces) {
            if sp.is_well_formed() {
                subpaths.push(flatten_subpath(sp, pc, ctrl, scale, &mut vertices));
            }
            ctrl += sp.points.len() as u32;
        }

        let mut fill_edges = Vec::new();
        let mut stroke_edges = Vec::new();
        for sp in &subpaths {
            let (s, n) = (sp.start, sp.len);
            if n < 2 {
                continue;
            }
            let ring: Vec<[u32; 2]> = (0..n).map(|i| [s + i, s + (i + 1) % n]).collect();
            let area: f64 = ring
                .iter()
                .map(|e| {
                    let a = vertices[e[0] as usize].pos;
                    let b = vertices[e[1] as usize].pos;
                    a[0] * b[1] - b[0] * a[1]
                })
                .sum::<f64>()
                * 0.5;
            if area.abs() > MIN_FILL_AREA {
                fill_edges.extend_from_slice(&ring);
            }
            if sp.closed {
                stroke_edges.extend_from_slice(&ring);
            } else {
                stroke_edges.extend_from_slice(&ring[..n as usize - 1]);
            }
        }

        let half_width = 0.5 * shape.stroke_width * width_scale;
        let (w, h) = image;
        let fill_margin = 0.5 * bandwidth;
        let stroke_margin = half_width.abs() + 0.5 * bandwidth;
        let fill_bounds = if fill_edges.is_empty() {
            PixelBounds::default()
        } else {
            PixelBounds::around(vertices.iter().map(|v| v.pos), fill_margin, w, h)
        };
        let stroke_bounds = if stroke_edges.is_empty() {
            PixelBounds::default()
        } else {
            PixelBounds::around(vertices.iter().map(|v| v.pos), stroke_margin, w, h)
        };
        let fill_tiles = TileIndex::build(&vertices, &fill_edges, fill_margin, fill_bounds);
        let stroke_tiles =
            TileIndex::build(&vertices, &stroke_edges, stroke_margin, stroke_bounds);
        Self {
            vertices,
            fill_edges,
            stroke_edges,
            fill_bounds,
            stroke_bounds,
            fill_tiles,
            stroke_tiles,
            half_width,
        }
    }

    /// Signed crossings of the fill outline with the horizontal line `y`, sorted by x.
    pub fn row_crossings(&self, y: f64, out: &mut Vec<(f64, i32)>) {
        out.clear();
        for e in &self.fill_edges {
            let a = self.vertices[e[0] as usize].pos;
            let b = self.vertices[e[1] as usize].pos;
            if (a[1] <= y) != (b[1] <= y) {
                let x = a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                out.push((x, if b[1] > a[1] { 1 } else { -1 }));
            }
        }
        out.sort_by(|p, q| p.0.total_cmp(&q.0));
    }

    fn nearest(
        &self,
        edges: &[[u32; 2]],
        tiles: &TileIndex,
        px: usize,
        py: usize,
        p: [f64; 2],
    ) -> Option<(u32, f64, f64, [f64; 2])> {
        let mut best: Option<(u32, f64, f64, [f64; 2])> = None;
        for &k in tiles.candidates(px, py) {
            let e = edges[k as usize];
            let a = self.vertices[e[0] as usize].pos;
            let b = self.vertices[e[1] as usize].pos;
            let ab = [b[0] - a[0], b[1] - a[1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let t = if len2 > 0.0 {
                (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
            let d2 = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
            if best.is_none_or(|b| d2 < b.1) {
                best = Some((k, d2, t, q));
            }
        }
        best.map(|(k, d2, t, q)| (k, d2.sqrt(), t, q))
    }

    /// Fill coverage at pixel `(px, py)` given the winding number there.
    pub fn fill_sample(
        &self,
        px: usize,
        py: usize,
        winding: i32,
        rule: FillRule,
        bandwidth: f64,
    ) -> Sample {
        let inside = match rule {
            FillRule::NonZero => winding != 0,
            FillRule::EvenOdd => winding % 2 != 0,
        };
        let p = [px as f64 + 0.5, py as f64 + 0.5];
        let near = self
            .nearest(&self.fill_edges, &self.fill_tiles, px, py, p)
            .filter(|n| n.1 < 0.5 * bandwidth);
        let Some((edge, dist, t, q)) = near else {
            return Sample {
                coverage: if inside { 1.0 } else { 0.0 },
                deriv: None,
            };
        };
        let sign = if inside { 1.0 } else { -1.0 };
        let d = sign * dist;
        let coverage = ramp(d, bandwidth);
        let slope = ramp_deriv(d, bandwidth) * sign;
        let dcov_dq = unit_scaled(q, p, dist, slope);
        Sample {
            coverage,
            deriv: Some(GeomDeriv {
                edge,
                t,
                dcov_dq,
                dcov_dhw: 0.0,
            }),
        }
    }

    /// Stroke coverage: the distance band `[-hw, hw]` around the outline, prefiltered by the ramp.
    pub fn stroke_sample(&self, px: usize, py: usize, bandwidth: f64) -> Sample {
        let hw = self.half_width;
        let p = [px as f64 + 0.5, py as f64 + 0.5];
        let near = self
            .nearest(&self.stroke_edges, &self.stroke_tiles, px, py, p)
            .filter(|n| n.1 < hw.abs() + 0.5 * bandwidth);
        let Some((edge, dist, t, q)) = near else {
            return Sample {
                coverage: 0.0,
                deriv: None,
            };
        };
        let coverage = ramp(hw - dist, bandwidth) - ramp(-hw - dist, bandwidth);
        let d_outer = ramp_deriv(hw - dist, bandwidth);
        let d_inner = ramp_deriv(-hw - dist, bandwidth);
        let dcov_ddist = -d_outer + d_inner;
        let dcov_dhw = d_outer + d_inner;
        Sample {
            coverage,
            deriv: Some(GeomDeriv {
                edge,
                t,
                dcov_dq: unit_scaled(q, p, dist, dcov_ddist),
                dcov_dhw,
            }),
        }
    }
}

/// `scale · (q - p)/|q - p|`, i.e. `scale · ∂dist/∂q`; zero when the point lies on the outline.
fn unit_scaled(q: [f64; 2], p: [f64; 2], dist: f64, scale: f64) -> [f64; 2] {
    if dist > 0.0 && scale != 0.0 {
        [scale * (q[0] - p[0]) / dist, scale * (q[1] - p[1]) / dist]
    } else {
        [0.0, 0.0]
    }
}

/// Winding number at `x` from a sorted crossing list (crossings strictly left of `x`).
pub(crate) fn winding_at(crossings: &[(f64, i32)], x: f64) -> i32 {
    crossings
        .iter()
        .take_while(|c| c.0 < x)
        .map(|c| c.1)
        .sum()
}

/// Global control-point index of each shape's first point.
pub(crate) fn first_ctrl_indices(scene: &Scene) -> Vec<u32> {
    let mut acc = 0u32;
    scene
        .shapes
        .iter()
        .map(|s| {
            let first = acc;
            acc += s.subpaths.iter().map(|p| p.points.len() as u32).sum::<u32>();
            first
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_is_smooth_and_centred() {
        assert_eq!(ramp(0.0, 1.0), 0.5);
        assert_eq!(ramp(-0.5, 1.0), 0.0);
        assert_eq!(ramp(0.5, 1.0), 1.0);
        let h = 1e-6;
        for d in [-0.4, -0.1, 0.0, 0.2, 0.45] {
            let fd = (ramp(d + h, 1.0) - ramp(d - h, 1.0)) / (2.0 * h);
            assert!((fd - ramp_deriv(d, 1.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn winding_counts_left_crossings() {
        let c = [(1.0, 1), (3.0, -1), (5.0, 1), (7.0, -1)];
        assert_eq!(winding_at(&c, 0.5), 0);
        assert_eq!(winding_at(&c, 2.0), 1);
        assert_eq!(winding_at(&c, 4.0), 0);
        assert_eq!(winding_at(&c, 6.0), 1);
    }
}
