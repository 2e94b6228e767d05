//! Style transfer for vector graphics.
//!
//! An SVG is parsed into a [`scene::Scene`] of cubic Bézier shapes, rendered by
//! a differentiable rasterizer, scored against a style image with a learned
//! perceptual distance plus a contour term, and optimized with Adam directly in
//! the space of control points, colors and stroke widths.

pub mod raster;
pub mod scene;
pub mod engine;
pub mod features;
pub mod gradcheck;
pub mod loss;
pub mod synth;
