//! Bézier flattening with frozen breakpoints.
//!
//! Every flattened vertex is a fixed Bernstein combination of four control
//! points, so vertex positions are linear in the control points and the
//! backward pass can push vertex gradients straight back to them.

use crate::scene::{Point, Scene, Subpath};

/// Upper bound on the pieces a single cubic is split into.
const MAX_PIECES: usize = 256;

/// Per-segment subdivision counts for every subpath of every shape.
///
/// Computing the plan once and reusing it keeps the flattening breakpoints
/// fixed while the control points move, which is what the analytic gradient
/// assumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlattenPlan {
    pub(crate) shapes: Vec<Vec<Vec<u16>>>,
}

impl FlattenPlan {
    /// Chooses subdivision counts so the chord error stays below `tolerance` user units.
    pub fn for_scene(scene: &Scene, tolerance: f64) -> Self {
        let shapes = scene
            .shapes
            .iter()
            .map(|shape| {
                shape
                    .subpaths
                    .iter()
                    .map(|sp| {
                        (0..sp.segment_count())
                            .map(|s| pieces_for(&sp.segment(s), tolerance) as u16)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { shapes }
    }

    /// Whether the plan was made for a scene with this topology.
    pub fn matches(&self, scene: &Scene) -> bool {
        self.shapes.len() == scene.shapes.len()
            && self.shapes.iter().zip(&scene.shapes).all(|(p, s)| {
                p.len() == s.subpaths.len()
                    && p.iter()
                        .zip(&s.subpaths)
                        .all(|(q, sp)| q.len() == sp.segment_count())
            })
    }
}

/// Wang's bound for a cubic: `n = ceil(sqrt(3/4 · max‖Δ²P‖ / tol))`.
fn pieces_for(seg: &[Point; 4], tolerance: f64) -> usize {
    let dd = |a: Point, b: Point, c: Point| {
        let x = a.x - 2.0 * b.x + c.x;
        let y = a.y - 2.0 * b.y + c.y;
        (x * x + y * y).sqrt()
    };
    let m = dd(seg[0], seg[1], seg[2]).max(dd(seg[1], seg[2], seg[3]));
    let n = (0.75 * m / tolerance).sqrt().ceil();
    if n.is_finite() {
        (n as usize).clamp(1, MAX_PIECES)
    } else {
        MAX_PIECES
    }
}

pub fn bernstein(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    [s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t]
}

/// Point on a cubic at parameter `t`.
pub fn cubic_point(seg: &[Point; 4], t: f64) -> Point {
    let w = bernstein(t);
    Point::new(
        w.iter().zip(seg).map(|(w, p)| w * p.x).sum(),
        w.iter().zip(seg).map(|(w, p)| w * p.y).sum(),
    )
}

/// A flattened vertex in pixel space and how it depends on control points.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Vertex {
    pub pos: [f64; 2],
    /// Global control-point indices (index into the points group divided by 2).
    pub ctrl: [u32; 4],
    pub weights: [f64; 4],
}

/// One flattened subpath: a contiguous vertex range.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FlatSubpath {
    pub start: u32,
    pub len: u32,
    pub closed: bool,
}

/// Flattens one subpath, appending vertices. `first_ctrl` is the global index of its point 0.
pub(crate) fn flatten_subpath(
    sp: &Subpath,
    pieces: &[u16],
    first_ctrl: u32,
    scale: [f64; 2],
    out: &mut Vec<Vertex>,
) -> FlatSubpath {
    let start = out.len() as u32;
    let segs = sp.segment_count();
    for s in 0..segs {
        let idx = sp.segment_indices(s);
        let ctrl = idx.map(|i| first_ctrl + i as u32);
        let pts = sp.segment(s);
        let n = pieces.get(s).copied().unwrap_or(1).max(1) as usize;
        let last_piece = !sp.closed && s + 1 == segs;
        let count = if last_piece { n + 1 } else { n };
        for i in 0..count {
            let t = i as f64 / n as f64;
            let weights = bernstein(t);
            let p = cubic_point(&pts, t);
            out.push(Vertex {
                pos: [p.x * scale[0], p.y * scale[1]],
                ctrl,
                weights,
            });
        }
    }
    FlatSubpath {
        start,
        len: out.len() as u32 - start,
        closed: sp.closed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_segments_use_one_piece() {
        let seg = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(3.0, 0.0),
        ];
        assert_eq!(pieces_for(&seg, 0.1), 1);
    }

    #[test]
    fn chord_error_within_tolerance() {
        let seg = [
            Point::new(0.0, 0.0),
            Point::new(0.0, 40.0),
            Point::new(60.0, 40.0),
            Point::new(60.0, 0.0),
        ];
        let tol = 0.1;
        let n = pieces_for(&seg, tol);
        // sample the true curve densely and measure distance to the chord of its piece
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let (t0, t1) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
            let a = cubic_point(&seg, t0);
            let b = cubic_point(&seg, t1);
            for k in 1..20 {
                let t = t0 + (t1 - t0) * k as f64 / 20.0;
                let p = cubic_point(&seg, t);
                let u = k as f64 / 20.0;
                let q = a.lerp(b, u);
                worst = worst.max(((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt());
            }
        }
        assert!(worst <= tol, "worst {worst} with {n} pieces");
    }

    #[test]
    fn closed_subpath_vertex_count() {
        let sp = Subpath {
            points: (0..6).map(|i| Point::new(i as f64, 0.0)).collect(),
            closed: true,
        };
        let mut out = Vec::new();
        let flat = flatten_subpath(&sp, &[3, 2], 10, [1.0, 1.0], &mut out);
        assert_eq!(flat.len, 5);
        // the last segment wraps to control point 0
        assert_eq!(out[3].ctrl, [13, 14, 15, 10]);
    }
}
