//! Seeded random scenes for tests, benchmarks and demos.

use std::f64::consts::TAU;

use rand::Rng;

use crate::scene::{GradientStop, LinearGradient, Paint, Point, Rgba, Scene, Shape, Subpath};

#[derive(Debug, Clone, PartialEq)]
pub struct BlobOptions {
    pub shapes: usize,
    /// Cubic segments per closed outline.
    pub segments: usize,
    /// Probability that a fill is a two-stop linear gradient.
    pub gradient_prob: f64,
    /// Probability that a shape has no stroke.
    pub no_stroke_prob: f64,
    pub min_alpha: f64,
}

impl Default for BlobOptions {
    fn default() -> Self {
        Self {
            shapes: 2,
            segments: 4,
            gradient_prob: 0.3,
            no_stroke_prob: 0.2,
            min_alpha: 0.4,
        }
    }
}

fn color(rng: &mut impl Rng, min_alpha: f64) -> Rgba {
    Rgba::new(
        rng.gen_range(0.05..0.95),
        rng.gen_range(0.05..0.95),
        rng.gen_range(0.05..0.95),
        rng.gen_range(min_alpha..0.95),
    )
}

/// A closed star-shaped outline around `c` with smooth joins.
pub fn blob(rng: &mut impl Rng, c: Point, radius: f64, segments: usize) -> Subpath {
    let k = segments.max(2);
    let anchors: Vec<(Point, f64)> = (0..k)
        .map(|i| {
            let a = TAU * (i as f64 + rng.gen_range(-0.2..0.2)) / k as f64;
            let r = radius * rng.gen_range(0.6..1.0);
            (Point::new(c.x + r * a.cos(), c.y + r * a.sin()), a)
        })
        .collect();
    let handle = |r: f64| 4.0 / 3.0 * (TAU / (4.0 * k as f64)).tan() * r;
    let mut points = Vec::with_capacity(3 * k);
    for i in 0..k {
        let (p, a) = anchors[i];
        let (q, b) = anchors[(i + 1) % k];
        let hp = handle(((p.x - c.x).powi(2) + (p.y - c.y).powi(2)).sqrt());
        let hq = handle(((q.x - c.x).powi(2) + (q.y - c.y).powi(2)).sqrt());
        points.push(p);
        points.push(Point::new(p.x - hp * a.sin(), p.y + hp * a.cos()));
        points.push(Point::new(q.x + hq * b.sin(), q.y - hq * b.cos()));
    }
    Subpath {
        points,
        closed: true,
    }
}

/// Random overlapping blobs inside a `width × height` viewport.
pub fn random_blobs(rng: &mut impl Rng, width: f64, height: f64, opts: &BlobOptions) -> Scene {
    let mut scene = Scene::new(width, height);
    let m = width.min(height);
    for _ in 0..opts.shapes {
        let radius = m * rng.gen_range(0.15..0.35);
        let c = Point::new(
            rng.gen_range(0.3 * width..0.7 * width),
            rng.gen_range(0.3 * height..0.7 * height),
        );
        let subpath = blob(rng, c, radius, opts.segments);
        let fill = if rng.gen_bool(opts.gradient_prob) {
            Paint::LinearGradient(LinearGradient {
                start: Point::new(c.x - radius, c.y - radius * rng.gen_range(-0.5..0.5)),
                end: Point::new(c.x + radius, c.y + radius * rng.gen_range(-0.5..0.5)),
                stops: vec![
                    GradientStop {
                        offset: 0.0,
                        color: color(rng, opts.min_alpha),
                    },
                    GradientStop {
                        offset: 1.0,
                        color: color(rng, opts.min_alpha),
                    },
                ],
            })
        } else {
            Paint::Solid(color(rng, opts.min_alpha))
        };
        let stroke = if rng.gen_bool(opts.no_stroke_prob) {
            Paint::None
        } else {
            Paint::Solid(color(rng, opts.min_alpha))
        };
        scene.shapes.push(Shape {
            subpaths: vec![subpath],
            fill,
            stroke,
            stroke_width: rng.gen_range(1.0..4.0),
        });
    }
    scene
}
